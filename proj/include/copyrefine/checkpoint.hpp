#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "copyrefine/nn.hpp"
#include "copyrefine/tensor.hpp"

namespace copyrefine {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary layout, all integers and doubles little-endian:
///   8 bytes  magic "CPRFCKPT"
///   u32      format version (1)
///   u64      metadata length, then that many bytes of UTF-8 JSON
///   u32      parameter count; per parameter:
///              u32 name length, name bytes, u32 rows, u32 cols, rows*cols f64 values
///   u8       1 if optimizer state follows, else 0; when present:
///              i64 step count, f64 learning rate, then for each parameter in
///              order its first-moment values followed by its second-moment values
struct CheckpointData {
  std::string metadata;
  std::vector<std::pair<std::string, Tensor>> params;
  bool has_optimizer = false;
  long steps = 0;
  double lr = 0.0;
  std::vector<Tensor> first_moments;
  std::vector<Tensor> second_moments;
};

inline constexpr unsigned kCheckpointVersion = 1;

void write_checkpoint(std::ostream& out, const std::string& metadata, const ParameterSet& params, Adam* optimizer);
void write_checkpoint(const std::string& path, const std::string& metadata, const ParameterSet& params, Adam* optimizer);
CheckpointData read_checkpoint(std::istream& in);
CheckpointData read_checkpoint(const std::string& path);

/// Copies values by name; every parameter in `params` must be present with a matching shape.
void restore_parameters(const CheckpointData& data, ParameterSet& params);
void restore_optimizer(const CheckpointData& data, Adam& optimizer);

}  // namespace copyrefine
