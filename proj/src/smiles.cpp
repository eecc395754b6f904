#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <set>
#include <tuple>

#include "copyrefine/molgraph.hpp"

namespace copyrefine {

namespace {

struct PendingRing {
  int atom;
  std::optional<BondOrder> order;
};

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view text) : text_(text) {}

  MolecularGraph parse() {
    if (text_.empty()) throw SmilesSyntaxError("empty SMILES", 0);
    int prev = -1;
    std::vector<int> branches;
    std::optional<BondOrder> pending;
    std::map<int, PendingRing> open_rings;

    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (static_cast<unsigned char>(c) > 127) throw SmilesSyntaxError("non-ASCII character", pos_);
      if (c == '[' || std::isalpha(static_cast<unsigned char>(c))) {
        const int atom = c == '[' ? parse_bracket_atom() : parse_organic_atom();
        if (prev >= 0) add_bond(prev, atom, pending);
        pending.reset();
        prev = atom;
      } else if (c == '(') {
        if (prev < 0 || pending) throw SmilesSyntaxError("branch without a preceding atom", pos_);
        branches.push_back(prev);
        ++pos_;
      } else if (c == ')') {
        if (branches.empty()) throw SmilesSyntaxError("unmatched ')'", pos_);
        if (pending) throw SmilesSyntaxError("bond symbol before ')'", pos_);
        prev = branches.back();
        branches.pop_back();
        ++pos_;
      } else if (c == '-' || c == '=' || c == '#' || c == ':' || c == '/' || c == '\\') {
        if (prev < 0 || pending) throw SmilesSyntaxError("misplaced bond symbol", pos_);
        pending = c == '=' ? BondOrder::Double
                  : c == '#' ? BondOrder::Triple
                  : c == ':' ? BondOrder::Aromatic
                             : BondOrder::Single;
        ++pos_;
      } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
        if (prev < 0) throw SmilesSyntaxError("ring closure without a preceding atom", pos_);
        const std::size_t at = pos_;
        const int number = parse_ring_number();
        auto it = open_rings.find(number);
        if (it == open_rings.end()) {
          open_rings[number] = {prev, pending};
        } else {
          std::optional<BondOrder> order = it->second.order;
          if (pending) {
            if (order && *order != *pending) throw SmilesSyntaxError("conflicting ring-closure bonds", at);
            order = pending;
          }
          if (it->second.atom == prev) throw SmilesSyntaxError("ring closure to the same atom", at);
          add_bond(it->second.atom, prev, order);
          open_rings.erase(it);
        }
        pending.reset();
      } else if (c == '.') {
        throw UnsupportedFeatureError("disconnected SMILES ('.') are not supported");
      } else if (c == '*') {
        throw UnsupportedFeatureError("wildcard atoms are not supported");
      } else if (c == '$') {
        throw UnsupportedFeatureError("quadruple bonds are not supported");
      } else {
        throw SmilesSyntaxError(std::string("unexpected character '") + c + "'", pos_);
      }
    }
    if (!branches.empty()) throw SmilesSyntaxError("unmatched '('", text_.size());
    if (!open_rings.empty()) throw SmilesSyntaxError("unclosed ring bond", text_.size());
    if (pending) throw SmilesSyntaxError("dangling bond symbol", text_.size());

    return build_molecule(std::move(atoms_), std::move(bonds_));
  }

 private:
  void add_bond(int a, int b, std::optional<BondOrder> order) {
    for (const auto& bond : bonds_) {
      if ((bond.begin == a && bond.end == b) || (bond.begin == b && bond.end == a)) {
        throw SmilesSyntaxError("duplicate bond", pos_);
      }
    }
    BondOrder o = BondOrder::Single;
    if (order) {
      o = *order;
    } else if (atoms_[static_cast<std::size_t>(a)].aromatic && atoms_[static_cast<std::size_t>(b)].aromatic) {
      o = BondOrder::Aromatic;
    }
    bonds_.push_back({a, b, o});
  }

  int parse_ring_number() {
    if (text_[pos_] == '%') {
      if (pos_ + 2 >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
          !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
        throw SmilesSyntaxError("'%' must be followed by two digits", pos_);
      }
      const int number = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
      pos_ += 3;
      return number;
    }
    return text_[pos_++] - '0';
  }

  int push_atom(Atom atom) {
    atoms_.push_back(atom);
    return static_cast<int>(atoms_.size()) - 1;
  }

  int parse_organic_atom() {
    const std::size_t at = pos_;
    const char c = text_[pos_];
    Atom atom;
    auto next_is = [&](char ch) { return pos_ + 1 < text_.size() && text_[pos_ + 1] == ch; };
    if (c == 'C' && next_is('l')) {
      atom.element = Element::Cl;
      pos_ += 2;
      return push_atom(atom);
    }
    if (c == 'B' && next_is('r')) {
      atom.element = Element::Br;
      pos_ += 2;
      return push_atom(atom);
    }
    ++pos_;
    switch (c) {
      case 'B': atom.element = Element::B; break;
      case 'C': atom.element = Element::C; break;
      case 'N': atom.element = Element::N; break;
      case 'O': atom.element = Element::O; break;
      case 'P': atom.element = Element::P; break;
      case 'S': atom.element = Element::S; break;
      case 'F': atom.element = Element::F; break;
      case 'I': atom.element = Element::I; break;
      case 'b': atom.element = Element::B; atom.aromatic = true; break;
      case 'c': atom.element = Element::C; atom.aromatic = true; break;
      case 'n': atom.element = Element::N; atom.aromatic = true; break;
      case 'o': atom.element = Element::O; atom.aromatic = true; break;
      case 'p': atom.element = Element::P; atom.aromatic = true; break;
      case 's': atom.element = Element::S; atom.aromatic = true; break;
      default:
        throw SmilesSyntaxError(std::string("unknown organic-subset atom '") + c + "'", at);
    }
    return push_atom(atom);
  }

  int parse_bracket_atom() {
    const std::size_t open = pos_++;
    auto peek = [&]() -> char { return pos_ < text_.size() ? text_[pos_] : '\0'; };
    while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;  // isotope, ignored

    Atom atom;
    atom.fixed_hydrogens = true;
    std::string symbol;
    const char first = peek();
    if (std::isupper(static_cast<unsigned char>(first))) {
      symbol.push_back(first);
      ++pos_;
      while (std::islower(static_cast<unsigned char>(peek()))) symbol.push_back(text_[pos_++]);
    } else if (std::islower(static_cast<unsigned char>(first))) {
      symbol.push_back(first);
      ++pos_;
      while (std::islower(static_cast<unsigned char>(peek()))) symbol.push_back(text_[pos_++]);
      atom.aromatic = true;
    } else if (first == '*') {
      throw UnsupportedFeatureError("wildcard atoms are not supported");
    } else {
      throw SmilesSyntaxError("bracket atom without an element symbol", pos_);
    }
    if (atom.aromatic) {
      if (symbol.size() != 1 || std::string_view("bcnops").find(symbol[0]) == std::string_view::npos) {
        throw UnsupportedFeatureError("unsupported aromatic atom '" + symbol + "'");
      }
      symbol[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(symbol[0])));
    }
    const auto element = element_from_symbol(symbol);
    if (!element) throw UnsupportedFeatureError("unsupported element '" + symbol + "'");
    atom.element = *element;

    if (peek() == '@') {  // chirality, parsed and ignored
      ++pos_;
      if (peek() == '@') ++pos_;
      while (std::isupper(static_cast<unsigned char>(peek())) && peek() != 'H') ++pos_;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    }
    if (peek() == 'H') {
      ++pos_;
      int h = 1;
      if (std::isdigit(static_cast<unsigned char>(peek()))) h = text_[pos_++] - '0';
      atom.explicit_hydrogens = h;
    }
    if (peek() == '+' || peek() == '-') {
      const char sign = text_[pos_++];
      int magnitude = 1;
      if (std::isdigit(static_cast<unsigned char>(peek()))) {
        magnitude = text_[pos_++] - '0';
      } else {
        while (peek() == sign) {
          ++magnitude;
          ++pos_;
        }
      }
      atom.formal_charge = sign == '+' ? magnitude : -magnitude;
    }
    if (peek() == ':') {  // atom class, ignored
      ++pos_;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    }
    if (peek() != ']') throw SmilesSyntaxError("unterminated bracket atom", open);
    ++pos_;
    return push_atom(atom);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  std::vector<Atom> atoms_;
  std::vector<Bond> bonds_;
};

// ---------------------------------------------------------------------------
// Writer

std::string atom_token(const MolecularGraph& g, int i) {
  const Atom& a = g.atom(i);
  std::string symbol(element_symbol(a.element));
  if (a.aromatic) symbol[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(symbol[0])));
  bool bare = a.formal_charge == 0;
  if (bare && a.fixed_hydrogens) {
    // Re-derive what the parser would assign to a bare atom here.
    std::vector<std::vector<Neighbor>> adjacency(static_cast<std::size_t>(g.num_atoms()));
    for (const auto& nb : g.neighbors(i)) adjacency[static_cast<std::size_t>(i)].push_back(nb);
    auto atoms = g.atoms();
    atoms[static_cast<std::size_t>(i)].explicit_hydrogens = 0;
    const auto h = default_hydrogens(atoms, g.bonds(), adjacency, i);
    bare = h && *h == a.explicit_hydrogens;
  }
  if (bare) return symbol;
  std::string out = "[" + symbol;
  if (a.explicit_hydrogens > 0) {
    out += "H";
    if (a.explicit_hydrogens > 1) out += std::to_string(a.explicit_hydrogens);
  }
  if (a.formal_charge != 0) {
    out += a.formal_charge > 0 ? "+" : "-";
    if (std::abs(a.formal_charge) > 1) out += std::to_string(std::abs(a.formal_charge));
  }
  return out + "]";
}

std::string bond_token(const MolecularGraph& g, const Bond& b) {
  const bool both_aromatic = g.atom(b.begin).aromatic && g.atom(b.end).aromatic;
  switch (b.order) {
    case BondOrder::Single:
      return both_aromatic ? "-" : "";
    case BondOrder::Double:
      return "=";
    case BondOrder::Triple:
      return "#";
    case BondOrder::Aromatic:
      return both_aromatic ? "" : ":";
  }
  return "";
}

std::string ring_label(int digit) {
  if (digit < 10) return std::to_string(digit);
  return "%" + std::to_string(digit);
}

/// Emits SMILES by DFS from the lowest-ranked atom, visiting neighbours by rank.
std::string emit(const MolecularGraph& g, const std::vector<int>& rank, std::vector<int>* order = nullptr) {
  const int n = g.num_atoms();
  if (n == 0) return "";
  std::vector<std::vector<Neighbor>> ordered(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto nbs = g.neighbors(i);
    ordered[static_cast<std::size_t>(i)].assign(nbs.begin(), nbs.end());
    std::sort(ordered[static_cast<std::size_t>(i)].begin(), ordered[static_cast<std::size_t>(i)].end(),
              [&](const Neighbor& x, const Neighbor& y) {
                return rank[static_cast<std::size_t>(x.atom)] < rank[static_cast<std::size_t>(y.atom)];
              });
  }
  int start = 0;
  for (int i = 1; i < n; ++i) {
    if (rank[static_cast<std::size_t>(i)] < rank[static_cast<std::size_t>(start)]) start = i;
  }

  // Pass 1: spanning tree and ring-closure bonds.
  std::vector<bool> visited(static_cast<std::size_t>(n), false);
  std::vector<bool> bond_used(static_cast<std::size_t>(g.num_bonds()), false);
  std::vector<std::vector<int>> children(static_cast<std::size_t>(n));
  std::vector<std::vector<int>> opens(static_cast<std::size_t>(n));   // bond ids opened at atom
  std::vector<std::vector<int>> closes(static_cast<std::size_t>(n));  // bond ids closed at atom
  std::vector<int> parent_bond(static_cast<std::size_t>(n), -1);
  std::function<void(int)> visit = [&](int u) {
    visited[static_cast<std::size_t>(u)] = true;
    for (const auto& nb : ordered[static_cast<std::size_t>(u)]) {
      if (bond_used[static_cast<std::size_t>(nb.bond)]) continue;
      bond_used[static_cast<std::size_t>(nb.bond)] = true;
      if (visited[static_cast<std::size_t>(nb.atom)]) {
        opens[static_cast<std::size_t>(nb.atom)].push_back(nb.bond);
        closes[static_cast<std::size_t>(u)].push_back(nb.bond);
      } else {
        children[static_cast<std::size_t>(u)].push_back(nb.atom);
        parent_bond[static_cast<std::size_t>(nb.atom)] = nb.bond;
        visit(nb.atom);
      }
    }
  };
  visit(start);

  // Pass 2: text.
  std::string out;
  std::map<int, int> digit_of_bond;
  std::set<int> free_digits;
  for (int d = 1; d < 100; ++d) free_digits.insert(d);
  std::function<void(int)> write = [&](int u) {
    if (order) order->push_back(u);
    out += atom_token(g, u);
    for (int b : closes[static_cast<std::size_t>(u)]) {
      const int d = digit_of_bond.at(b);
      out += ring_label(d);
      free_digits.insert(d);
    }
    for (int b : opens[static_cast<std::size_t>(u)]) {
      const int d = *free_digits.begin();
      free_digits.erase(free_digits.begin());
      digit_of_bond[b] = d;
      out += bond_token(g, g.bond(b)) + ring_label(d);
    }
    const auto& kids = children[static_cast<std::size_t>(u)];
    for (std::size_t k = 0; k < kids.size(); ++k) {
      const bool branch = k + 1 < kids.size();
      if (branch) out += "(";
      out += bond_token(g, g.bond(parent_bond[static_cast<std::size_t>(kids[k])]));
      write(kids[k]);
      if (branch) out += ")";
    }
  };
  write(start);
  return out;
}

// ---------------------------------------------------------------------------
// Canonical ranking: invariant refinement plus exhaustive tie breaking, keeping
// the lexicographically smallest string over all tie-break leaves.

constexpr int kCanonicalLeafCap = 2000;

std::vector<int> densify(const std::vector<std::vector<long>>& keys) {
  std::vector<std::vector<long>> sorted = keys;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<int> rank(keys.size());
  for (std::size_t i = 0; i < keys.size(); ++i) {
    rank[i] = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), keys[i]) - sorted.begin());
  }
  return rank;
}

int count_classes(const std::vector<int>& rank) {
  return rank.empty() ? 0 : *std::max_element(rank.begin(), rank.end()) + 1;
}

std::vector<int> refine(const MolecularGraph& g, std::vector<int> rank) {
  int classes = count_classes(rank);
  while (true) {
    std::vector<std::vector<long>> keys(rank.size());
    for (int i = 0; i < g.num_atoms(); ++i) {
      auto& key = keys[static_cast<std::size_t>(i)];
      key.push_back(rank[static_cast<std::size_t>(i)]);
      std::vector<long> nbrs;
      for (const auto& nb : g.neighbors(i)) {
        nbrs.push_back(static_cast<long>(rank[static_cast<std::size_t>(nb.atom)]) * 8 +
                       static_cast<long>(g.bond(nb.bond).order));
      }
      std::sort(nbrs.begin(), nbrs.end());
      key.insert(key.end(), nbrs.begin(), nbrs.end());
    }
    rank = densify(keys);
    const int now = count_classes(rank);
    if (now == classes) return rank;
    classes = now;
  }
}

void search(const MolecularGraph& g, const std::vector<int>& marks, std::vector<int> rank, std::string& best,
            int& leaves) {
  rank = refine(g, std::move(rank));
  const int n = g.num_atoms();
  if (count_classes(rank) == n) {
    ++leaves;
    std::vector<int> order;
    std::string s = emit(g, rank, &order);
    if (!marks.empty()) {
      s += "|";
      for (int atom : order) s += std::to_string(marks[static_cast<std::size_t>(atom)]) + ",";
    }
    if (best.empty() || s < best) best = std::move(s);
    return;
  }
  // First tied class (lowest rank value with more than one member).
  std::vector<int> size(static_cast<std::size_t>(n), 0);
  for (int r : rank) ++size[static_cast<std::size_t>(r)];
  int target = 0;
  while (size[static_cast<std::size_t>(target)] < 2) ++target;
  for (int i = 0; i < n; ++i) {
    if (rank[static_cast<std::size_t>(i)] != target) continue;
    if (leaves >= kCanonicalLeafCap && !best.empty()) return;
    std::vector<int> split(rank.size());
    for (std::size_t k = 0; k < rank.size(); ++k) split[k] = rank[k] * 2 + 1;
    split[static_cast<std::size_t>(i)] -= 1;
    search(g, marks, densify([&] {
             std::vector<std::vector<long>> keys;
             for (int v : split) keys.push_back({v});
             return keys;
           }()),
           best, leaves);
  }
}

}  // namespace

MolecularGraph parse_smiles(std::string_view text) { return SmilesParser(text).parse(); }

std::string write_smiles(const MolecularGraph& graph, const WriteOptions& options) {
  const int n = graph.num_atoms();
  if (!options.canonical) {
    std::vector<int> rank(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) rank[static_cast<std::size_t>(i)] = i;
    return emit(graph, rank);
  }
  std::vector<std::vector<long>> keys(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const Atom& a = graph.atom(i);
    keys[static_cast<std::size_t>(i)] = {
        options.atom_marks.empty() ? 0L : static_cast<long>(options.atom_marks[static_cast<std::size_t>(i)]),
        static_cast<long>(atomic_number(a.element)),
        a.aromatic ? 1L : 0L,
        static_cast<long>(a.formal_charge),
        static_cast<long>(a.explicit_hydrogens),
        a.fixed_hydrogens ? 1L : 0L,
        static_cast<long>(graph.degree(i))};
  }
  std::string best;
  int leaves = 0;
  search(graph, options.atom_marks, densify(keys), best, leaves);
  return best;
}

std::string canonical_smiles(const MolecularGraph& graph) {
  WriteOptions options;
  options.canonical = true;
  return write_smiles(graph, options);
}

}  // namespace copyrefine
