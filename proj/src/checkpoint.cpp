#include "copyrefine/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace copyrefine {

namespace {

constexpr char kMagic[8] = {'C', 'P', 'R', 'F', 'C', 'K', 'P', 'T'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(bytes, 4);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void put_tensor_values(std::ostream& out, const Tensor& t) {
  for (double v : t.data) put_f64(out, v);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw CheckpointError("truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) throw CheckpointError("truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > (1ull << 32)) throw CheckpointError("implausible length in checkpoint");
  std::string s(static_cast<std::size_t>(n), '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n))) throw CheckpointError("truncated checkpoint");
  return s;
}

Tensor get_tensor(std::istream& in, int rows, int cols) {
  Tensor t(rows, cols);
  for (auto& v : t.data) v = get_f64(in);
  return t;
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::string& metadata, const ParameterSet& params, Adam* optimizer) {
  out.write(kMagic, 8);
  put_u32(out, kCheckpointVersion);
  put_u64(out, metadata.size());
  out.write(metadata.data(), static_cast<std::streamsize>(metadata.size()));
  put_u32(out, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.value.rows));
    put_u32(out, static_cast<std::uint32_t>(p.value.cols));
    put_tensor_values(out, p.value);
  }
  out.put(optimizer ? 1 : 0);
  if (optimizer) {
    put_u64(out, static_cast<std::uint64_t>(optimizer->steps()));
    put_f64(out, optimizer->lr());
    for (std::size_t i = 0; i < params.size(); ++i) {
      put_tensor_values(out, optimizer->first_moments()[i]);
      put_tensor_values(out, optimizer->second_moments()[i]);
    }
  }
  if (!out) throw CheckpointError("failed writing checkpoint");
}

void write_checkpoint(const std::string& path, const std::string& metadata, const ParameterSet& params, Adam* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path + " for writing");
  write_checkpoint(out, metadata, params, optimizer);
}

CheckpointData read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) throw CheckpointError("not a checkpoint file");
  if (get_u32(in) != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  CheckpointData data;
  data.metadata = get_bytes(in, get_u64(in));
  const std::uint32_t count = get_u32(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get_u32(in));
    const int rows = static_cast<int>(get_u32(in));
    const int cols = static_cast<int>(get_u32(in));
    data.params.emplace_back(std::move(name), get_tensor(in, rows, cols));
  }
  const int flag = in.get();
  if (flag == std::char_traits<char>::eof()) throw CheckpointError("truncated checkpoint");
  data.has_optimizer = flag == 1;
  if (data.has_optimizer) {
    data.steps = static_cast<long>(get_u64(in));
    data.lr = get_f64(in);
    for (const auto& [name, t] : data.params) {
      data.first_moments.push_back(get_tensor(in, t.rows, t.cols));
      data.second_moments.push_back(get_tensor(in, t.rows, t.cols));
    }
  }
  return data;
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path);
  return read_checkpoint(in);
}

void restore_parameters(const CheckpointData& data, ParameterSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    const Tensor* found = nullptr;
    for (const auto& [name, t] : data.params) {
      if (name == p.name) found = &t;
    }
    if (!found) throw CheckpointError("checkpoint lacks parameter " + p.name);
    if (!found->same_shape(p.value)) throw CheckpointError("shape mismatch for parameter " + p.name);
    p.value = *found;
  }
}

void restore_optimizer(const CheckpointData& data, Adam& optimizer) {
  if (!data.has_optimizer) throw CheckpointError("checkpoint has no optimizer state");
  if (data.first_moments.size() != optimizer.first_moments().size()) throw CheckpointError("optimizer state size mismatch");
  for (std::size_t i = 0; i < data.first_moments.size(); ++i) {
    if (!data.first_moments[i].same_shape(optimizer.first_moments()[i])) throw CheckpointError("optimizer state shape mismatch");
    optimizer.first_moments()[i] = data.first_moments[i];
    optimizer.second_moments()[i] = data.second_moments[i];
  }
  optimizer.set_steps(data.steps);
  optimizer.set_lr(data.lr);
}

}  // namespace copyrefine
