#pragma once

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "copyrefine/molgraph.hpp"

namespace copyrefine {

class LengthMismatchError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class UnclassifiedAtomError : public MoleculeError {
 public:
  using MoleculeError::MoleculeError;
};

inline constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
inline constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

/// 64-bit FNV-1a over the little-endian bytes of each value.
std::uint64_t fnv1a(std::span<const std::int64_t> values, std::uint64_t seed = kFnvOffset);

struct Fingerprint {
  int nbits = 2048;
  int radius = 2;
  /// Sorted, unique, each < nbits.
  std::vector<int> bits;
};

/// Unfolded environment identifiers for rounds 0..radius, one per atom per round.
std::vector<std::uint64_t> morgan_identifiers(const MolecularGraph& graph, int radius);
Fingerprint morgan_fingerprint(const MolecularGraph& graph, int radius = 2, int nbits = 2048);

/// |A n B| / |A u B|; 1 when both are empty.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

/// Atom type per heavy atom.
std::vector<std::string> crippen_types(const MolecularGraph& graph);
/// Type shared by every hydrogen on `atom`; empty when it has none.
std::string crippen_hydrogen_type(const MolecularGraph& graph, int atom);
/// Throws UnclassifiedAtomError for types missing from the table.
double crippen_contribution(const std::string& type);
double crippen_logp(const MolecularGraph& graph);

/// Max over rings of max(0, size - 6).
int ring_penalty(const MolecularGraph& graph);
/// 0.1 per ring sharing two or more atoms with another ring, 0.05 per atom with four or more heavy neighbours.
double sa_proxy(const MolecularGraph& graph);

struct PenalizedLogP {
  double logp = 0.0;
  int ring_penalty = 0;
  double sa_proxy = 0.0;
  double value = 0.0;
};
PenalizedLogP penalized_logp_terms(const MolecularGraph& graph);
double penalized_logp(const MolecularGraph& graph);

struct QedDescriptors {
  double mw = 0.0;
  double alogp = 0.0;
  int hba = 0;
  int hbd = 0;
  int rotb = 0;
  int arom = 0;
};

QedDescriptors qed_descriptors(const MolecularGraph& graph);
/// Desirability of one descriptor ("MW", "ALOGP", "HBA", "HBD", "ROTB", "AROM"), clamped to [0, 1].
double desirability(const std::string& descriptor, double x);
/// Unweighted geometric mean; 0 if any term is 0.
double geometric_mean(std::span<const double> desirabilities);
double qed_like(const MolecularGraph& graph);

class PropertyOracle {
 public:
  virtual ~PropertyOracle() = default;
  virtual std::string name() const = 0;
  virtual double evaluate(const MolecularGraph& graph) const = 0;
  virtual double min_value() const { return -std::numeric_limits<double>::infinity(); }
  virtual double max_value() const { return std::numeric_limits<double>::infinity(); }
};

/// "logp" (penalized), "crippen", "qed" or "drd2" (fragment-count stand-in, not a bioactivity model).
/// Throws std::invalid_argument for other names.
std::unique_ptr<PropertyOracle> make_oracle(const std::string& name);
std::vector<std::string> oracle_names();

/// 1 - exp(-(aromatic rings + basic amine N) / 3), in [0, 1).
double drd2_standin(const MolecularGraph& graph);

}  // namespace copyrefine
