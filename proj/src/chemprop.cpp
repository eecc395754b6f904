#include "copyrefine/chemprop.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <string_view>

namespace copyrefine {

namespace tables {
extern const std::string_view kCrippenTsv;
extern const std::string_view kQedLikeTsv;
}  // namespace tables

std::uint64_t fnv1a(std::span<const std::int64_t> values, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (std::int64_t v : values) {
    auto u = static_cast<std::uint64_t>(v);
    for (int byte = 0; byte < 8; ++byte) {
      h ^= (u >> (8 * byte)) & 0xffU;
      h *= kFnvPrime;
    }
  }
  return h;
}

// ---------------------------------------------------------------- fingerprints

std::vector<std::uint64_t> morgan_identifiers(const MolecularGraph& g, int radius) {
  if (radius < 0) throw std::invalid_argument("radius must be non-negative");
  const int n = g.num_atoms();
  std::vector<std::uint64_t> current(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Atom& a = g.atom(i);
    const std::int64_t inv[] = {atomic_number(a.element), g.degree(i), a.formal_charge, a.explicit_hydrogens,
                                g.atom_in_ring(i) ? 1 : 0};
    current[static_cast<std::size_t>(i)] = fnv1a(inv);
  }
  std::vector<std::uint64_t> all(current);
  for (int round = 1; round <= radius; ++round) {
    std::vector<std::uint64_t> next(current.size());
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<std::int64_t, std::uint64_t>> env;
      for (const auto& nb : g.neighbors(i)) {
        env.emplace_back(static_cast<std::int64_t>(g.bond(nb.bond).order), current[static_cast<std::size_t>(nb.atom)]);
      }
      std::sort(env.begin(), env.end());
      std::vector<std::int64_t> words{round, static_cast<std::int64_t>(current[static_cast<std::size_t>(i)])};
      for (const auto& [order, id] : env) {
        words.push_back(order);
        words.push_back(static_cast<std::int64_t>(id));
      }
      next[static_cast<std::size_t>(i)] = fnv1a(words);
    }
    current = std::move(next);
    all.insert(all.end(), current.begin(), current.end());
  }
  return all;
}

Fingerprint morgan_fingerprint(const MolecularGraph& g, int radius, int nbits) {
  if (nbits < 1) throw std::invalid_argument("nbits must be positive");
  Fingerprint fp;
  fp.nbits = nbits;
  fp.radius = radius;
  for (std::uint64_t id : morgan_identifiers(g, radius)) fp.bits.push_back(static_cast<int>(id % static_cast<std::uint64_t>(nbits)));
  std::sort(fp.bits.begin(), fp.bits.end());
  fp.bits.erase(std::unique(fp.bits.begin(), fp.bits.end()), fp.bits.end());
  return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
  if (a.nbits != b.nbits) throw LengthMismatchError("fingerprint lengths differ");
  if (a.bits.empty() && b.bits.empty()) return 1.0;
  std::vector<int> common;
  std::set_intersection(a.bits.begin(), a.bits.end(), b.bits.begin(), b.bits.end(), std::back_inserter(common));
  const std::size_t uni = a.bits.size() + b.bits.size() - common.size();
  return static_cast<double>(common.size()) / static_cast<double>(uni);
}

// ---------------------------------------------------------------- Crippen typing

namespace {

using Pred = std::function<bool(const MolecularGraph&, int)>;

// Bond constraint of a pattern edge; Default accepts single or aromatic.
enum class B { Default, Single, Double, Triple, Aromatic };

struct Pat {
  Pred pred;
  std::vector<std::pair<B, Pat>> kids;
};

bool bond_ok(B b, BondOrder o) {
  switch (b) {
    case B::Default: return o == BondOrder::Single || o == BondOrder::Aromatic;
    case B::Single: return o == BondOrder::Single;
    case B::Double: return o == BondOrder::Double;
    case B::Triple: return o == BondOrder::Triple;
    case B::Aromatic: return o == BondOrder::Aromatic;
  }
  return false;
}

bool match(const MolecularGraph& g, int atom, const Pat& p, std::vector<int>& used);

bool match_kids(const MolecularGraph& g, int atom, const Pat& p, std::size_t k, std::vector<int>& used) {
  if (k == p.kids.size()) return true;
  for (const auto& nb : g.neighbors(atom)) {
    if (!bond_ok(p.kids[k].first, g.bond(nb.bond).order)) continue;
    const std::size_t save = used.size();
    if (match(g, nb.atom, p.kids[k].second, used) && match_kids(g, atom, p, k + 1, used)) return true;
    used.resize(save);
  }
  return false;
}

bool match(const MolecularGraph& g, int atom, const Pat& p, std::vector<int>& used) {
  if (std::find(used.begin(), used.end(), atom) != used.end() || !p.pred(g, atom)) return false;
  const std::size_t save = used.size();
  used.push_back(atom);
  if (match_kids(g, atom, p, 0, used)) return true;
  used.resize(save);
  return false;
}

bool matches(const MolecularGraph& g, int atom, const Pat& p) {
  std::vector<int> used;
  return match(g, atom, p, used);
}

// Atom predicates. Lower-case names take aromatic atoms, upper-case aliphatic.
Pred el(Element e) {
  return [e](const MolecularGraph& g, int i) { return g.atom(i).element == e; };
}
Pred ali(Element e) {
  return [e](const MolecularGraph& g, int i) { return g.atom(i).element == e && !g.atom(i).aromatic; };
}
Pred aro(Element e) {
  return [e](const MolecularGraph& g, int i) { return g.atom(i).element == e && g.atom(i).aromatic; };
}
const Pred kAli = [](const MolecularGraph& g, int i) { return !g.atom(i).aromatic; };
const Pred kAro = [](const MolecularGraph& g, int i) { return g.atom(i).aromatic; };
const Pred kHeavy = [](const MolecularGraph&, int) { return true; };

Pred all(std::vector<Pred> ps) {
  return [ps = std::move(ps)](const MolecularGraph& g, int i) {
    return std::all_of(ps.begin(), ps.end(), [&](const Pred& p) { return p(g, i); });
  };
}
Pred any(std::vector<Pred> ps) {
  return [ps = std::move(ps)](const MolecularGraph& g, int i) {
    return std::any_of(ps.begin(), ps.end(), [&](const Pred& p) { return p(g, i); });
  };
}
Pred no(Pred p) {
  return [p = std::move(p)](const MolecularGraph& g, int i) { return !p(g, i); };
}
Pred h(int n) {
  return [n](const MolecularGraph& g, int i) { return g.atom(i).explicit_hydrogens == n; };
}
Pred x(int n) {
  return [n](const MolecularGraph& g, int i) { return g.degree(i) + g.atom(i).explicit_hydrogens == n; };
}
Pred charge0() {
  return [](const MolecularGraph& g, int i) { return g.atom(i).formal_charge == 0; };
}
Pred positive() {
  return [](const MolecularGraph& g, int i) { return g.atom(i).formal_charge > 0; };
}
Pred negative() {
  return [](const MolecularGraph& g, int i) { return g.atom(i).formal_charge < 0; };
}
Pred charge(int c) {
  return [c](const MolecularGraph& g, int i) { return g.atom(i).formal_charge == c; };
}

bool is_halogen(Element e) { return e == Element::F || e == Element::Cl || e == Element::Br || e == Element::I; }

const Pred kHalogen = [](const MolecularGraph& g, int i) { return is_halogen(g.atom(i).element); };

Pat leaf(Pred p) { return {std::move(p), {}}; }
std::pair<B, Pat> kid(B b, Pred p) { return {b, leaf(std::move(p))}; }
std::pair<B, Pat> kid(Pred p) { return {B::Default, leaf(std::move(p))}; }

struct Rule {
  std::string type;
  Pat pattern;
};

std::vector<Rule> heavy_rules() {
  using E = Element;
  const Pred C = ali(E::C), c = aro(E::C);
  const Pred N = ali(E::N), O = ali(E::O), S = ali(E::S), P = ali(E::P);
  // [N,O,P,S,F,Cl,Br,I]
  const Pred het = any({N, O, P, S, kHalogen});
  const Pred A = kAli, a = kAro, any_heavy = kHeavy;
  auto star = [](Pred center, std::vector<std::pair<B, Pat>> kids) { return Pat{std::move(center), std::move(kids)}; };

  std::vector<Rule> r;
  r.push_back({"C1", star(all({C, h(4)}), {})});
  r.push_back({"C1", star(all({C, h(3)}), {kid(C)})});
  r.push_back({"C1", star(all({C, h(2)}), {kid(C), kid(C)})});
  r.push_back({"C2", star(all({C, h(1)}), {kid(C), kid(C), kid(C)})});
  r.push_back({"C2", star(C, {kid(C), kid(C), kid(C), kid(C)})});
  r.push_back({"C3", star(all({C, h(3)}), {kid(het)})});
  r.push_back({"C3", star(all({C, h(2), x(4)}), {kid(het), kid(A)})});
  r.push_back({"C4", star(all({C, h(1), x(4)}), {kid(het), kid(A), kid(A)})});
  r.push_back({"C4", star(all({C, h(0), x(4)}), {kid(het), kid(A), kid(A), kid(A)})});
  r.push_back({"C5", star(C, {kid(B::Double, all({no(C), A}))})});
  r.push_back({"C6", star(all({C, h(2)}), {kid(B::Double, C)})});
  r.push_back({"C6", star(all({C, h(1)}), {kid(B::Double, C), kid(A)})});
  r.push_back({"C6", star(all({C, h(0)}), {kid(B::Double, C), kid(A), kid(A)})});
  r.push_back({"C6", star(C, {kid(B::Double, C), kid(B::Double, C)})});
  r.push_back({"C7", star(all({C, x(2)}), {kid(B::Triple, A)})});
  r.push_back({"C8", star(all({C, h(3)}), {kid(c)})});
  r.push_back({"C9", star(all({C, h(3)}), {kid(a)})});
  r.push_back({"C10", star(all({C, h(2), x(4)}), {kid(a)})});
  r.push_back({"C11", star(all({C, h(1), x(4)}), {kid(a)})});
  r.push_back({"C12", star(all({C, h(0), x(4)}), {kid(a)})});
  r.push_back({"C13", star(all({c, h(0)}), {kid(B::Single, all({A, no(C), no(N), no(O), no(S), no(kHalogen)}))})});
  r.push_back({"C14", star(c, {kid(el(E::F))})});
  r.push_back({"C15", star(c, {kid(el(E::Cl))})});
  r.push_back({"C16", star(c, {kid(el(E::Br))})});
  r.push_back({"C17", star(c, {kid(el(E::I))})});
  r.push_back({"C18", star(all({c, h(1)}), {})});
  r.push_back({"C19", star(c, {kid(B::Aromatic, a), kid(B::Aromatic, a), kid(B::Aromatic, a)})});
  r.push_back({"C20", star(c, {kid(B::Aromatic, a), kid(B::Aromatic, a), kid(B::Single, a)})});
  r.push_back({"C21", star(c, {kid(B::Aromatic, a), kid(B::Aromatic, a), kid(B::Single, C)})});
  r.push_back({"C22", star(c, {kid(B::Aromatic, a), kid(B::Aromatic, a), kid(B::Single, N)})});
  r.push_back({"C23", star(c, {kid(B::Aromatic, a), kid(B::Aromatic, a), kid(B::Single, O)})});
  r.push_back({"C24", star(c, {kid(B::Aromatic, a), kid(B::Aromatic, a), kid(B::Single, S)})});
  r.push_back({"C25", star(c, {kid(B::Aromatic, a), kid(B::Aromatic, a), kid(B::Double, any({C, N, O}))})});
  r.push_back({"C26", star(C, {kid(B::Double, C), kid(a), kid(A)})});
  r.push_back({"C26", star(C, {kid(B::Double, C), kid(c), kid(a)})});
  r.push_back({"C26", star(all({C, h(1)}), {kid(B::Double, C), kid(a)})});
  r.push_back({"C26", star(C, {kid(B::Double, c)})});
  r.push_back({"C27", star(all({C, x(4)}), {kid(all({A, no(C), no(N), no(O), no(P), no(S), no(kHalogen)}))})});
  r.push_back({"CS", star(el(E::C), {})});

  r.push_back({"N1", star(all({N, h(2), charge0()}), {kid(A)})});
  r.push_back({"N2", star(all({N, h(1), charge0()}), {kid(A), kid(A)})});
  r.push_back({"N3", star(all({N, h(2), charge0()}), {kid(a)})});
  r.push_back({"N4", star(all({N, h(1), charge0()}), {kid(any_heavy), kid(a)})});
  r.push_back({"N5", star(all({N, h(1), charge0()}), {kid(B::Double, any_heavy)})});
  r.push_back({"N6", star(all({N, charge0()}), {kid(B::Double, any_heavy), kid(any_heavy)})});
  r.push_back({"N7", star(all({N, charge0()}), {kid(A), kid(A), kid(A)})});
  r.push_back({"N8", star(all({N, charge0()}), {kid(a), kid(any_heavy), kid(A)})});
  r.push_back({"N8", star(all({N, charge0()}), {kid(a), kid(a), kid(a)})});
  r.push_back({"N9", star(all({N, charge0()}), {kid(B::Triple, A)})});
  r.push_back({"N10", star(all({N, any({h(1), h(2), h(3)}), positive()}), {})});
  r.push_back({"N11", star(all({aro(E::N), charge0()}), {})});
  r.push_back({"N12", star(all({aro(E::N), positive()}), {})});
  r.push_back({"N13", star(all({N, h(0), positive()}), {kid(A), kid(A), kid(A), kid(A)})});
  r.push_back({"N13", star(all({N, h(0), positive()}), {kid(B::Double, A), kid(A), kid(any_heavy)})});
  r.push_back({"N13", star(all({N, h(0), positive()}), {kid(B::Double, el(E::C)), kid(B::Double, el(E::N))})});
  r.push_back({"N14", star(all({N, positive()}), {kid(B::Triple, A)})});
  r.push_back({"N14", star(all({N, negative()}), {})});
  r.push_back({"N14", star(all({N, positive()}), {kid(B::Double, all({N, negative()})), kid(B::Double, N)})});
  r.push_back({"NS", star(el(E::N), {})});

  r.push_back({"O1", star(aro(E::O), {})});
  r.push_back({"O2", star(all({O, any({h(1), h(2)})}), {})});
  r.push_back({"O3", star(O, {kid(A), kid(A)})});
  r.push_back({"O4", star(O, {kid(a), kid(any_heavy)})});
  r.push_back({"O5", star(O, {kid(B::Double, any({el(E::N), el(E::O)}))})});
  r.push_back({"O5", star(all({O, x(1), negative()}), {kid(el(E::N))})});
  r.push_back({"O6", star(all({O, x(1), negative()}), {kid(el(E::S))})});
  r.push_back({"O6", star(all({O, charge0()}), {kid(B::Double, all({el(E::S), charge0()}))})});
  r.push_back({"O12", star(all({O, charge(-1)}), {{B::Default, Pat{C, {kid(B::Double, O)}}}})});
  r.push_back({"O7", star(all({O, x(1), negative()}), {kid(all({no(N), no(S)}))})});
  r.push_back({"O8", star(O, {kid(B::Double, c)})});
  r.push_back({"O9", star(O, {{B::Double, Pat{all({C, h(1)}), {kid(C)}}}})});
  r.push_back({"O9", star(O, {{B::Double, Pat{C, {kid(C), kid(A)}}}})});
  r.push_back({"O9", star(O, {{B::Double, Pat{all({C, h(1)}), {kid(any({N, O}))}}}})});
  r.push_back({"O9", star(O, {kid(B::Double, all({C, h(2)}))})});
  r.push_back({"O9", star(O, {{B::Double, Pat{all({C, x(2)}), {kid(B::Double, O)}}}})});
  r.push_back({"O10", star(O, {{B::Double, Pat{all({C, h(1)}), {kid(c)}}}})});
  r.push_back({"O10", star(O, {{B::Double, Pat{C, {kid(any({C, c})), kid(a)}}}})});
  r.push_back({"O10", star(O, {{B::Double, Pat{C, {kid(c), kid(A)}}}})});
  r.push_back({"O11", star(O, {{B::Double, Pat{C, {kid(no(el(E::C))), kid(no(el(E::C)))}}}})});
  r.push_back({"OS", star(el(E::O), {})});

  r.push_back({"F", star(all({el(E::F), charge0()}), {})});
  r.push_back({"Cl", star(all({el(E::Cl), charge0()}), {})});
  r.push_back({"Br", star(all({el(E::Br), charge0()}), {})});
  r.push_back({"I", star(all({el(E::I), charge0()}), {})});
  r.push_back({"Hal", star(all({kHalogen, negative()}), {})});
  r.push_back({"Hal", star(all({el(E::I), positive()}), {})});

  r.push_back({"P", star(el(E::P), {})});
  r.push_back({"S2", star(all({S, no(charge0())}), {})});
  r.push_back({"S2", star(all({S, charge0()}), {kid(B::Double, any({N, O, P, S}))})});
  r.push_back({"S1", star(S, {})});
  r.push_back({"S3", star(aro(E::S), {})});
  r.push_back({"Me1", star(el(E::B), {})});
  return r;
}

const std::vector<Rule>& rules() {
  static const std::vector<Rule> r = heavy_rules();
  return r;
}

std::map<std::string, double> parse_crippen_table() {
  std::map<std::string, double> out;
  std::istringstream in{std::string(tables::kCrippenTsv)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string type;
    double value = 0.0;
    if (!(row >> type >> value)) throw std::runtime_error("malformed Crippen table row: " + line);
    out[type] = value;
  }
  return out;
}

const std::map<std::string, double>& crippen_table() {
  static const std::map<std::string, double> table = parse_crippen_table();
  return table;
}

}  // namespace

std::vector<std::string> crippen_types(const MolecularGraph& g) {
  std::vector<std::string> out;
  for (int i = 0; i < g.num_atoms(); ++i) {
    std::string type;
    for (const auto& rule : rules()) {
      if (matches(g, i, rule.pattern)) {
        type = rule.type;
        break;
      }
    }
    if (type.empty()) throw UnclassifiedAtomError("no Crippen type for atom " + std::to_string(i));
    out.push_back(std::move(type));
  }
  return out;
}

std::string crippen_hydrogen_type(const MolecularGraph& g, int i) {
  const Atom& p = g.atom(i);
  if (p.explicit_hydrogens == 0) return {};
  if (p.element == Element::C) return "H1";
  const bool aliphatic_o = p.element == Element::O && !p.aromatic;
  auto default_nbs = [&](auto pred) {
    for (const auto& nb : g.neighbors(i)) {
      if (bond_ok(B::Default, g.bond(nb.bond).order) && pred(nb.atom)) return true;
    }
    return false;
  };
  auto aliphatic = [&](int j, Element e) { return g.atom(j).element == e && !g.atom(j).aromatic; };
  if (aliphatic_o) {
    if (default_nbs([&](int j) {
          return (aliphatic(j, Element::C) && g.degree(j) + g.atom(j).explicit_hydrogens == 4) ||
                 (g.atom(j).element == Element::C && g.atom(j).aromatic);
        })) {
      return "H2";
    }
    // another hydrogen also counts as a neighbour outside C, N, O, S
    if (p.explicit_hydrogens >= 2 || default_nbs([&](int j) {
          return !aliphatic(j, Element::C) && !aliphatic(j, Element::N) && !aliphatic(j, Element::O) &&
                 !aliphatic(j, Element::S);
        })) {
      return "H2";
    }
  }
  // [nH] hydrogens type as H3 in the published values, so aromaticity is ignored here
  const bool c_n_o = p.element == Element::C || p.element == Element::N || p.element == Element::O;
  if (!c_n_o) return "H2";
  if (p.element == Element::N) return "H3";
  // aliphatic O from here on
  if (default_nbs([&](int j) { return g.atom(j).element == Element::N; })) return "H3";
  if (default_nbs([&](int j) {
        if (!aliphatic(j, Element::C)) return false;
        for (const auto& nb : g.neighbors(j)) {
          if (nb.atom == i || g.bond(nb.bond).order != BondOrder::Double) continue;
          const Atom& q = g.atom(nb.atom);
          if (q.element == Element::C || q.element == Element::N || aliphatic(nb.atom, Element::O) ||
              aliphatic(nb.atom, Element::S)) {
            return true;
          }
        }
        return false;
      })) {
    return "H4";
  }
  if (default_nbs([&](int j) { return aliphatic(j, Element::O) || aliphatic(j, Element::S); })) return "H4";
  return "HS";
}

double crippen_contribution(const std::string& type) {
  const auto& table = crippen_table();
  const auto it = table.find(type);
  if (it == table.end()) throw UnclassifiedAtomError("Crippen type " + type + " missing from the table");
  return it->second;
}

double crippen_logp(const MolecularGraph& g) {
  const auto types = crippen_types(g);
  double total = 0.0;
  for (int i = 0; i < g.num_atoms(); ++i) {
    total += crippen_contribution(types[static_cast<std::size_t>(i)]);
    const int nh = g.atom(i).explicit_hydrogens;
    if (nh > 0) total += nh * crippen_contribution(crippen_hydrogen_type(g, i));
  }
  return total;
}

// ---------------------------------------------------------------- penalized logP

int ring_penalty(const MolecularGraph& g) {
  int worst = 0;
  for (const auto& ring : g.rings()) worst = std::max(worst, static_cast<int>(ring.size()) - 6);
  return worst;
}

double sa_proxy(const MolecularGraph& g) {
  const auto& rings = g.rings();
  int fused = 0;
  for (std::size_t i = 0; i < rings.size(); ++i) {
    for (std::size_t j = 0; j < rings.size(); ++j) {
      if (i == j) continue;
      int shared = 0;
      for (int a : rings[i]) shared += std::count(rings[j].begin(), rings[j].end(), a) > 0;
      if (shared >= 2) {
        ++fused;
        break;
      }
    }
  }
  int crowded = 0;
  for (int i = 0; i < g.num_atoms(); ++i) crowded += g.degree(i) >= 4;
  return 0.1 * fused + 0.05 * crowded;
}

PenalizedLogP penalized_logp_terms(const MolecularGraph& g) {
  PenalizedLogP p;
  p.logp = crippen_logp(g);
  p.ring_penalty = ring_penalty(g);
  p.sa_proxy = sa_proxy(g);
  p.value = p.logp - p.ring_penalty - p.sa_proxy;
  return p;
}

double penalized_logp(const MolecularGraph& g) { return penalized_logp_terms(g).value; }

// ---------------------------------------------------------------- QED-like

namespace {

struct Ads {
  double a, b, c, d, e, f, dmax;
};

std::map<std::string, Ads> parse_qed_table() {
  std::map<std::string, Ads> out;
  std::istringstream in{std::string(tables::kQedLikeTsv)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream row(line);
    std::string name;
    Ads p{};
    if (!(row >> name >> p.a >> p.b >> p.c >> p.d >> p.e >> p.f >> p.dmax)) {
      throw std::runtime_error("malformed desirability row: " + line);
    }
    out[name] = p;
  }
  return out;
}

const std::map<std::string, Ads>& qed_table() {
  static const std::map<std::string, Ads> table = parse_qed_table();
  return table;
}

constexpr double kHydrogenMass = 1.008;

}  // namespace

QedDescriptors qed_descriptors(const MolecularGraph& g) {
  QedDescriptors d;
  d.alogp = crippen_logp(g);
  for (int i = 0; i < g.num_atoms(); ++i) {
    const Atom& a = g.atom(i);
    d.mw += atomic_mass(a.element) + a.explicit_hydrogens * kHydrogenMass;
    if (a.element == Element::N || a.element == Element::O) {
      ++d.hba;
      if (a.explicit_hydrogens > 0) ++d.hbd;
    }
  }
  auto has_triple = [&](int i) {
    for (const auto& nb : g.neighbors(i)) {
      if (g.bond(nb.bond).order == BondOrder::Triple) return true;
    }
    return false;
  };
  for (int b = 0; b < g.num_bonds(); ++b) {
    const Bond& bond = g.bond(b);
    if (bond.order != BondOrder::Single || g.bond_in_ring(b)) continue;
    if (g.degree(bond.begin) < 2 || g.degree(bond.end) < 2) continue;
    if (has_triple(bond.begin) || has_triple(bond.end)) continue;
    ++d.rotb;
  }
  for (const auto& ring : g.rings()) {
    d.arom += std::all_of(ring.begin(), ring.end(), [&](int a) { return g.atom(a).aromatic; });
  }
  return d;
}

double desirability(const std::string& descriptor, double x) {
  const auto& table = qed_table();
  const auto it = table.find(descriptor);
  if (it == table.end()) throw std::invalid_argument("unknown descriptor " + descriptor);
  const Ads& p = it->second;
  const double e1 = 1.0 + std::exp(-(x - p.c + p.d / 2.0) / p.e);
  const double e2 = 1.0 + std::exp(-(x - p.c - p.d / 2.0) / p.f);
  const double v = (p.a + p.b / e1 * (1.0 - 1.0 / e2)) / p.dmax;
  return std::clamp(v, 0.0, 1.0);
}

double geometric_mean(std::span<const double> ds) {
  if (ds.empty()) throw std::invalid_argument("geometric mean of nothing");
  double log_sum = 0.0;
  for (double d : ds) {
    if (d < 0.0 || d > 1.0) throw std::invalid_argument("desirability outside [0, 1]");
    if (d == 0.0) return 0.0;
    log_sum += std::log(d);
  }
  return std::exp(log_sum / static_cast<double>(ds.size()));
}

double qed_like(const MolecularGraph& g) {
  const QedDescriptors d = qed_descriptors(g);
  const double ds[] = {desirability("MW", d.mw),     desirability("ALOGP", d.alogp), desirability("HBA", d.hba),
                       desirability("HBD", d.hbd),   desirability("ROTB", d.rotb),   desirability("AROM", d.arom)};
  return geometric_mean(ds);
}

// ---------------------------------------------------------------- oracles

double drd2_standin(const MolecularGraph& g) {
  const QedDescriptors d = qed_descriptors(g);
  int basic = 0;
  for (int i = 0; i < g.num_atoms(); ++i) {
    const Atom& a = g.atom(i);
    if (a.element != Element::N || a.aromatic || a.formal_charge != 0) continue;
    bool saturated = true;
    for (const auto& nb : g.neighbors(i)) {
      if (g.bond(nb.bond).order != BondOrder::Single) saturated = false;
      for (const auto& nb2 : g.neighbors(nb.atom)) {
        const Atom& q = g.atom(nb2.atom);
        if (g.bond(nb2.bond).order == BondOrder::Double && (q.element == Element::O || q.element == Element::S)) saturated = false;
      }
      if (g.atom(nb.atom).aromatic) saturated = false;
    }
    basic += saturated;
  }
  return 1.0 - std::exp(-static_cast<double>(d.arom + basic) / 3.0);
}

namespace {

class FunctionOracle : public PropertyOracle {
 public:
  FunctionOracle(std::string name, double (*fn)(const MolecularGraph&), double lo, double hi)
      : name_(std::move(name)), fn_(fn), lo_(lo), hi_(hi) {}
  std::string name() const override { return name_; }
  double evaluate(const MolecularGraph& graph) const override { return fn_(graph); }
  double min_value() const override { return lo_; }
  double max_value() const override { return hi_; }

 private:
  std::string name_;
  double (*fn_)(const MolecularGraph&);
  double lo_, hi_;
};

}  // namespace

std::vector<std::string> oracle_names() { return {"crippen", "drd2", "logp", "qed"}; }

std::unique_ptr<PropertyOracle> make_oracle(const std::string& name) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (name == "logp") return std::make_unique<FunctionOracle>(name, &penalized_logp, -inf, inf);
  if (name == "crippen") return std::make_unique<FunctionOracle>(name, &crippen_logp, -inf, inf);
  if (name == "qed") return std::make_unique<FunctionOracle>(name, &qed_like, 0.0, 1.0);
  if (name == "drd2") return std::make_unique<FunctionOracle>(name, &drd2_standin, 0.0, 1.0);
  throw std::invalid_argument("unknown property oracle '" + name + "'");
}

}  // namespace copyrefine
