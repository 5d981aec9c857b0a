// molgraph.cpp

#include "cog/molgraph.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <deque>
#include <map>
#include <numeric>
#include <tuple>

namespace cog {

namespace {

struct ElementInfo {
    Element element;
    std::string_view symbol;
    int z;
    std::array<int, 3> valences;
    int n_valences;
};

constexpr std::array<ElementInfo, 10> kElements{{
    {Element::B, "B", 5, {3, 0, 0}, 1},
    {Element::C, "C", 6, {4, 0, 0}, 1},
    {Element::N, "N", 7, {3, 0, 0}, 1},
    {Element::O, "O", 8, {2, 0, 0}, 1},
    {Element::P, "P", 15, {3, 5, 0}, 2},
    {Element::S, "S", 16, {2, 4, 6}, 3},
    {Element::F, "F", 9, {1, 0, 0}, 1},
    {Element::Cl, "Cl", 17, {1, 0, 0}, 1},
    {Element::Br, "Br", 35, {1, 0, 0}, 1},
    {Element::I, "I", 53, {1, 0, 0}, 1},
}};

const ElementInfo& info(Element e) { return kElements[static_cast<std::size_t>(e)]; }

int bond_valence(BondOrder o) { return o == BondOrder::Aromatic ? 1 : static_cast<int>(o); }

bool can_be_aromatic(Element e) {
    return e == Element::B || e == Element::C || e == Element::N || e == Element::O ||
           e == Element::P || e == Element::S;
}

// Every supported element belongs to the SMILES organic subset.
bool organic_subset(Element) { return true; }

}  // namespace

std::string_view element_symbol(Element e) { return info(e).symbol; }
int atomic_number(Element e) { return info(e).z; }

std::optional<Element> element_from_symbol(std::string_view sym) {
    for (const auto& i : kElements) {
        if (i.symbol == sym) return i.element;
    }
    return std::nullopt;
}

std::span<const int> standard_valences(Element e) {
    const auto& i = info(e);
    return {i.valences.data(), static_cast<std::size_t>(i.n_valences)};
}

// ---------------------------------------------------------------------------
// MolGraph

MolGraph::MolGraph(std::vector<Atom> atoms, std::vector<Bond> bonds)
    : atoms_(std::move(atoms)), bonds_(std::move(bonds)) {
    const int n = static_cast<int>(atoms_.size());
    if (atoms_.size() > kMaxAtoms) {
        throw MolGraphError("molecule has " + std::to_string(n) + " atoms, limit is " +
                            std::to_string(kMaxAtoms));
    }
    adjacency_.assign(atoms_.size(), {});
    for (std::size_t bi = 0; bi < bonds_.size(); ++bi) {
        auto& b = bonds_[bi];
        if (b.a < 0 || b.b < 0 || b.a >= n || b.b >= n) throw MolGraphError("bond endpoint out of range");
        if (b.a == b.b) throw MolGraphError("self bond on atom " + std::to_string(b.a));
        for (int other_bond : adjacency_[static_cast<std::size_t>(b.a)]) {
            if (bonds_[static_cast<std::size_t>(other_bond)].other(b.a) == b.b) {
                throw MolGraphError("duplicate bond " + std::to_string(b.a) + "-" + std::to_string(b.b));
            }
        }
        adjacency_[static_cast<std::size_t>(b.a)].push_back(static_cast<int>(bi));
        adjacency_[static_cast<std::size_t>(b.b)].push_back(static_cast<int>(bi));
    }
    // connectivity
    if (n > 0) {
        std::vector<bool> seen(atoms_.size(), false);
        std::vector<int> stack{0};
        seen[0] = true;
        int count = 1;
        while (!stack.empty()) {
            int u = stack.back();
            stack.pop_back();
            for (int bi : adjacency_[static_cast<std::size_t>(u)]) {
                int v = bonds_[static_cast<std::size_t>(bi)].other(u);
                if (!seen[static_cast<std::size_t>(v)]) {
                    seen[static_cast<std::size_t>(v)] = true;
                    ++count;
                    stack.push_back(v);
                }
            }
        }
        if (count != n) throw MolGraphError("molecular graph is not connected");
    }

    // A bond is a ring bond iff its endpoints stay connected without it.
    bond_in_ring_.assign(bonds_.size(), false);
    atom_in_ring_.assign(atoms_.size(), false);
    std::vector<int> dist(atoms_.size());
    std::vector<int> parent_bond(atoms_.size());
    std::vector<std::vector<int>> candidates;
    for (std::size_t skip = 0; skip < bonds_.size(); ++skip) {
        const int src = bonds_[skip].a;
        const int dst = bonds_[skip].b;
        std::fill(dist.begin(), dist.end(), -1);
        std::deque<int> queue{src};
        dist[static_cast<std::size_t>(src)] = 0;
        while (!queue.empty() && dist[static_cast<std::size_t>(dst)] < 0) {
            int u = queue.front();
            queue.pop_front();
            for (int bi : adjacency_[static_cast<std::size_t>(u)]) {
                if (static_cast<std::size_t>(bi) == skip) continue;
                int v = bonds_[static_cast<std::size_t>(bi)].other(u);
                if (dist[static_cast<std::size_t>(v)] < 0) {
                    dist[static_cast<std::size_t>(v)] = dist[static_cast<std::size_t>(u)] + 1;
                    parent_bond[static_cast<std::size_t>(v)] = bi;
                    queue.push_back(v);
                }
            }
        }
        if (dist[static_cast<std::size_t>(dst)] < 0) continue;
        bond_in_ring_[skip] = true;
        // shortest cycle through this bond, as a bond list
        std::vector<int> cycle{static_cast<int>(skip)};
        for (int v = dst; v != src;) {
            int bi = parent_bond[static_cast<std::size_t>(v)];
            cycle.push_back(bi);
            v = bonds_[static_cast<std::size_t>(bi)].other(v);
        }
        std::sort(cycle.begin(), cycle.end());
        candidates.push_back(std::move(cycle));
    }
    for (std::size_t bi = 0; bi < bonds_.size(); ++bi) {
        if (bond_in_ring_[bi]) {
            atom_in_ring_[static_cast<std::size_t>(bonds_[bi].a)] = true;
            atom_in_ring_[static_cast<std::size_t>(bonds_[bi].b)] = true;
        }
    }

    // Smallest set of smallest rings: shortest candidates first, kept when
    // independent over GF(2) of the ones already chosen.
    std::sort(candidates.begin(), candidates.end(), [](const auto& x, const auto& y) {
        return x.size() != y.size() ? x.size() < y.size() : x < y;
    });
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    const std::size_t words = (bonds_.size() + 63) / 64;
    const std::size_t cyclomatic = bonds_.size() + 1 - atoms_.size();
    std::vector<std::vector<std::uint64_t>> basis;  // reduced rows
    std::vector<int> pivots;
    for (const auto& cyc : candidates) {
        if (rings_.size() >= cyclomatic) break;
        std::vector<std::uint64_t> row(words, 0);
        for (int bi : cyc) row[static_cast<std::size_t>(bi) / 64] |= 1ULL << (bi % 64);
        for (std::size_t k = 0; k < basis.size(); ++k) {
            const int p = pivots[k];
            if (row[static_cast<std::size_t>(p) / 64] >> (p % 64) & 1ULL) {
                for (std::size_t w = 0; w < words; ++w) row[w] ^= basis[k][w];
            }
        }
        int pivot = -1;
        for (std::size_t w = 0; w < words && pivot < 0; ++w) {
            if (row[w]) pivot = static_cast<int>(w * 64) + __builtin_ctzll(row[w]);
        }
        if (pivot < 0) continue;
        basis.push_back(row);
        pivots.push_back(pivot);
        // ring as an ordered atom cycle
        std::vector<int> ring;
        std::vector<bool> used(cyc.size(), false);
        int start = bonds_[static_cast<std::size_t>(cyc[0])].a;
        int cur = bonds_[static_cast<std::size_t>(cyc[0])].b;
        used[0] = true;
        ring.push_back(start);
        while (cur != start) {
            ring.push_back(cur);
            for (std::size_t k = 0; k < cyc.size(); ++k) {
                if (used[k]) continue;
                const auto& b = bonds_[static_cast<std::size_t>(cyc[k])];
                if (b.a == cur || b.b == cur) {
                    used[k] = true;
                    cur = b.other(cur);
                    break;
                }
            }
        }
        rings_.push_back(std::move(ring));
    }
}

std::optional<int> MolGraph::bond_between(int i, int j) const {
    for (int bi : incident(i)) {
        if (bonds_[static_cast<std::size_t>(bi)].other(i) == j) return bi;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// SMILES reader

std::string_view to_string(SmilesErrorKind kind) {
    switch (kind) {
        case SmilesErrorKind::EmptyInput: return "EmptyInput";
        case SmilesErrorKind::UnknownElement: return "UnknownElement";
        case SmilesErrorKind::UnbalancedParenthesis: return "UnbalancedParenthesis";
        case SmilesErrorKind::UnbalancedRingClosure: return "UnbalancedRingClosure";
        case SmilesErrorKind::UnexpectedCharacter: return "UnexpectedCharacter";
        case SmilesErrorKind::InvalidGraph: return "InvalidGraph";
    }
    return "?";
}

SmilesError::SmilesError(SmilesErrorKind kind, std::size_t offset, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + " at offset " + std::to_string(offset) + ": " +
                         detail),
      kind_(kind),
      offset_(offset) {}

int implicit_hydrogens(Element e, bool aromatic, int bond_order_sum, int aromatic_bonds) {
    if (aromatic) {
        if (e == Element::C) return std::max(0, 3 - bond_order_sum);
        return 0;
    }
    (void)aromatic_bonds;
    for (int v : standard_valences(e)) {
        if (v >= bond_order_sum) return v - bond_order_sum;
    }
    return 0;
}

namespace {

class SmilesReader {
public:
    explicit SmilesReader(std::string_view s) : s_(s) {}

    MolGraph run() {
        if (s_.empty()) throw SmilesError(SmilesErrorKind::EmptyInput, 0, "empty SMILES");
        while (pos_ < s_.size()) {
            const char ch = s_[pos_];
            if (static_cast<unsigned char>(ch) > 127) {
                throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "non-ASCII byte");
            }
            if (ch == '(') {
                if (prev_ < 0) throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "branch before any atom");
                if (pending_) throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "bond symbol before branch");
                branches_.push_back({prev_, pos_});
                ++pos_;
            } else if (ch == ')') {
                if (branches_.empty()) {
                    throw SmilesError(SmilesErrorKind::UnbalancedParenthesis, pos_, "')' without matching '('");
                }
                if (pending_) throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "dangling bond symbol");
                prev_ = branches_.back().first;
                branches_.pop_back();
                ++pos_;
            } else if (ch == '-' || ch == '=' || ch == '#' || ch == ':') {
                if (pending_) throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "two bond symbols in a row");
                pending_ = ch == '-' ? BondOrder::Single
                         : ch == '=' ? BondOrder::Double
                         : ch == '#' ? BondOrder::Triple
                                     : BondOrder::Aromatic;
                ++pos_;
            } else if (ch >= '1' && ch <= '9') {
                ring_closure(ch - '0');
                ++pos_;
            } else if (ch == '[') {
                bracket_atom();
            } else if (std::isalpha(static_cast<unsigned char>(ch))) {
                organic_atom();
            } else {
                throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_,
                                  std::string("unsupported character '") + ch + "'");
            }
        }
        if (!branches_.empty()) {
            throw SmilesError(SmilesErrorKind::UnbalancedParenthesis, branches_.back().second, "unclosed '('");
        }
        for (const auto& [digit, open] : open_rings_) {
            (void)digit;
            throw SmilesError(SmilesErrorKind::UnbalancedRingClosure, open.offset,
                              "ring bond " + std::to_string(digit) + " never closed");
        }
        if (pending_) throw SmilesError(SmilesErrorKind::UnexpectedCharacter, s_.size(), "dangling bond symbol");

        // resolve implicit hydrogens
        std::vector<int> order_sum(atoms_.size(), 0), arom(atoms_.size(), 0);
        for (const auto& b : bonds_) {
            for (int x : {b.a, b.b}) {
                order_sum[static_cast<std::size_t>(x)] += bond_valence(b.order);
                if (b.order == BondOrder::Aromatic) ++arom[static_cast<std::size_t>(x)];
            }
        }
        for (std::size_t i = 0; i < atoms_.size(); ++i) {
            if (!bracketed_[i]) {
                atoms_[i].explicit_h =
                    implicit_hydrogens(atoms_[i].element, atoms_[i].aromatic, order_sum[i], arom[i]);
            }
        }
        try {
            return MolGraph(std::move(atoms_), std::move(bonds_));
        } catch (const MolGraphError& e) {
            throw SmilesError(SmilesErrorKind::InvalidGraph, s_.size(), e.what());
        }
    }

private:
    struct OpenRing {
        int atom;
        std::optional<BondOrder> order;
        std::size_t offset;
    };

    void add_atom(Atom atom, bool bracketed, std::size_t offset) {
        if (atoms_.size() >= kMaxAtoms) {
            throw SmilesError(SmilesErrorKind::InvalidGraph, offset, "more than 64 atoms");
        }
        const int idx = static_cast<int>(atoms_.size());
        atoms_.push_back(atom);
        bracketed_.push_back(bracketed);
        if (prev_ >= 0) {
            add_bond(prev_, idx, pending_);
        }
        pending_.reset();
        prev_ = idx;
    }

    void add_bond(int a, int b, std::optional<BondOrder> order) {
        BondOrder o = order.value_or(
            atoms_[static_cast<std::size_t>(a)].aromatic && atoms_[static_cast<std::size_t>(b)].aromatic
                ? BondOrder::Aromatic
                : BondOrder::Single);
        bonds_.push_back({a, b, o});
    }

    void ring_closure(int digit) {
        if (prev_ < 0) throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "ring bond before any atom");
        auto it = open_rings_.find(digit);
        if (it == open_rings_.end()) {
            open_rings_[digit] = {prev_, pending_, pos_};
        } else {
            const OpenRing open = it->second;
            open_rings_.erase(it);
            if (open.order && pending_ && *open.order != *pending_) {
                throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "conflicting ring bond orders");
            }
            if (open.atom == prev_) {
                throw SmilesError(SmilesErrorKind::UnbalancedRingClosure, pos_, "ring bond closes on its own atom");
            }
            add_bond(open.atom, prev_, pending_ ? pending_ : open.order);
        }
        pending_.reset();
    }

    void organic_atom() {
        const std::size_t start = pos_;
        const char ch = s_[pos_];
        Atom atom;
        if (ch == 'C' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'l') {
            atom.element = Element::Cl;
            pos_ += 2;
        } else if (ch == 'B' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'r') {
            atom.element = Element::Br;
            pos_ += 2;
        } else {
            static constexpr std::string_view kUpper = "BCNOPSFI";
            static constexpr std::string_view kLower = "bcnops";
            if (kUpper.find(ch) != std::string_view::npos) {
                atom.element = *element_from_symbol(std::string_view(&s_[pos_], 1));
            } else if (kLower.find(ch) != std::string_view::npos) {
                const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
                atom.element = *element_from_symbol(std::string_view(&up, 1));
                atom.aromatic = true;
            } else {
                throw SmilesError(SmilesErrorKind::UnknownElement, pos_,
                                  std::string("unknown element '") + ch + "'");
            }
            ++pos_;
        }
        add_atom(atom, false, start);
    }

    void bracket_atom() {
        const std::size_t start = pos_;
        const std::size_t close = s_.find(']', pos_);
        if (close == std::string_view::npos) {
            throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "unterminated bracket atom");
        }
        ++pos_;
        if (pos_ < close && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
            throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "isotopes are not supported");
        }
        Atom atom;
        const std::size_t sym_start = pos_;
        if (pos_ < close && std::islower(static_cast<unsigned char>(s_[pos_]))) {
            const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(s_[pos_])));
            auto e = element_from_symbol(std::string_view(&up, 1));
            if (!e || !can_be_aromatic(*e)) {
                throw SmilesError(SmilesErrorKind::UnknownElement, sym_start, "unknown aromatic element");
            }
            atom.element = *e;
            atom.aromatic = true;
            ++pos_;
        } else if (pos_ < close && std::isupper(static_cast<unsigned char>(s_[pos_]))) {
            std::size_t len = 1;
            if (pos_ + 1 < close && std::islower(static_cast<unsigned char>(s_[pos_ + 1]))) len = 2;
            auto e = element_from_symbol(s_.substr(pos_, len));
            if (!e && len == 2) {
                len = 1;
                e = element_from_symbol(s_.substr(pos_, 1));
            }
            if (!e) {
                throw SmilesError(SmilesErrorKind::UnknownElement, sym_start,
                                  "unknown element '" + std::string(s_.substr(pos_, len)) + "'");
            }
            atom.element = *e;
            pos_ += len;
        } else {
            throw SmilesError(SmilesErrorKind::UnknownElement, sym_start, "missing element symbol");
        }
        if (pos_ < close && s_[pos_] == '@') {
            throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "stereo centres are not supported");
        }
        if (pos_ < close && s_[pos_] == 'H') {
            ++pos_;
            int h = 1;
            if (pos_ < close && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                h = s_[pos_] - '0';
                ++pos_;
            }
            atom.explicit_h = h;
        }
        if (pos_ < close && (s_[pos_] == '+' || s_[pos_] == '-')) {
            const char sign = s_[pos_];
            int magnitude = 1;
            ++pos_;
            if (pos_ < close && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
                magnitude = s_[pos_] - '0';
                ++pos_;
            } else {
                while (pos_ < close && s_[pos_] == sign) {
                    ++magnitude;
                    ++pos_;
                }
            }
            atom.formal_charge = sign == '+' ? magnitude : -magnitude;
        }
        if (pos_ != close) {
            throw SmilesError(SmilesErrorKind::UnexpectedCharacter, pos_, "unsupported bracket atom content");
        }
        pos_ = close + 1;
        add_atom(atom, true, start);
    }

    std::string_view s_;
    std::size_t pos_ = 0;
    int prev_ = -1;
    std::optional<BondOrder> pending_;
    std::vector<std::pair<int, std::size_t>> branches_;
    std::map<int, OpenRing> open_rings_;
    std::vector<Atom> atoms_;
    std::vector<bool> bracketed_;
    std::vector<Bond> bonds_;
};

}  // namespace

MolGraph parse_smiles(std::string_view smiles) { return SmilesReader(smiles).run(); }

// ---------------------------------------------------------------------------
// SMILES writer

namespace {

std::string atom_text(const MolGraph& g, int i) {
    const Atom& a = g.atoms()[static_cast<std::size_t>(i)];
    int sum = 0, arom = 0;
    for (int bi : g.incident(i)) {
        const auto o = g.bonds()[static_cast<std::size_t>(bi)].order;
        sum += bond_valence(o);
        if (o == BondOrder::Aromatic) ++arom;
    }
    std::string sym(element_symbol(a.element));
    if (a.aromatic) sym[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(sym[0])));
    const bool bare_ok = organic_subset(a.element) && (!a.aromatic || can_be_aromatic(a.element)) &&
                         a.formal_charge == 0 &&
                         a.explicit_h == implicit_hydrogens(a.element, a.aromatic, sum, arom);
    if (bare_ok) return sym;
    std::string out = "[" + sym;
    if (a.explicit_h > 0) {
        out += "H";
        if (a.explicit_h > 1) out += std::to_string(a.explicit_h);
    }
    if (a.formal_charge != 0) {
        out += a.formal_charge > 0 ? "+" : "-";
        if (std::abs(a.formal_charge) > 1) out += std::to_string(std::abs(a.formal_charge));
    }
    return out + "]";
}

std::string bond_text(const MolGraph& g, const Bond& b) {
    const bool both_arom =
        g.atoms()[static_cast<std::size_t>(b.a)].aromatic && g.atoms()[static_cast<std::size_t>(b.b)].aromatic;
    switch (b.order) {
        case BondOrder::Single: return both_arom ? "-" : "";
        case BondOrder::Double: return "=";
        case BondOrder::Triple: return "#";
        case BondOrder::Aromatic: return both_arom ? "" : ":";
    }
    return "";
}

class SmilesWriter {
public:
    SmilesWriter(const MolGraph& g, std::span<const int> order) : g_(g) {
        const std::size_t n = g.atom_count();
        rank_.resize(n);
        if (order.empty()) {
            std::iota(rank_.begin(), rank_.end(), 0);
            root_ = 0;
        } else {
            if (order.size() != n) throw std::invalid_argument("write_smiles: order size mismatch");
            for (std::size_t k = 0; k < n; ++k) rank_[static_cast<std::size_t>(order[k])] = static_cast<int>(k);
            root_ = order[0];
        }
        closures_.assign(n, {});
        children_.assign(n, {});
        classified_.assign(g.bond_count(), false);
        visited_.assign(n, false);
        digit_of_bond_.assign(g.bond_count(), 0);
    }

    std::string run() {
        if (g_.atom_count() == 0) return "";
        plan(root_, -1);
        std::string out;
        emit(root_, out);
        return out;
    }

private:
    std::vector<int> sorted_incident(int u) const {
        std::vector<int> inc = g_.incident(u);
        std::sort(inc.begin(), inc.end(), [&](int x, int y) {
            return rank_[static_cast<std::size_t>(g_.bonds()[static_cast<std::size_t>(x)].other(u))] <
                   rank_[static_cast<std::size_t>(g_.bonds()[static_cast<std::size_t>(y)].other(u))];
        });
        return inc;
    }

    void plan(int u, int parent_bond) {
        visited_[static_cast<std::size_t>(u)] = true;
        for (int bi : sorted_incident(u)) {
            if (bi == parent_bond || classified_[static_cast<std::size_t>(bi)]) continue;
            classified_[static_cast<std::size_t>(bi)] = true;
            const int v = g_.bonds()[static_cast<std::size_t>(bi)].other(u);
            if (!visited_[static_cast<std::size_t>(v)]) {
                children_[static_cast<std::size_t>(u)].push_back(bi);
                plan(v, bi);
            } else {
                closures_[static_cast<std::size_t>(v)].push_back(bi);
                closures_[static_cast<std::size_t>(u)].push_back(bi);
            }
        }
    }

    void emit(int u, std::string& out) {
        out += atom_text(g_, u);
        for (int bi : closures_[static_cast<std::size_t>(u)]) {
            const Bond& b = g_.bonds()[static_cast<std::size_t>(bi)];
            int& digit = digit_of_bond_[static_cast<std::size_t>(bi)];
            if (digit == 0) {
                digit = 1;
                while (digit <= 9 && used_digits_[static_cast<std::size_t>(digit)]) ++digit;
                if (digit > 9) throw std::runtime_error("write_smiles: more than 9 open ring bonds");
                used_digits_[static_cast<std::size_t>(digit)] = true;
                out += bond_text(g_, b);
                out += static_cast<char>('0' + digit);
            } else {
                out += static_cast<char>('0' + digit);
                used_digits_[static_cast<std::size_t>(digit)] = false;
            }
        }
        const auto& kids = children_[static_cast<std::size_t>(u)];
        for (std::size_t k = 0; k < kids.size(); ++k) {
            const Bond& b = g_.bonds()[static_cast<std::size_t>(kids[k])];
            const bool branch = k + 1 < kids.size();
            if (branch) out += "(";
            out += bond_text(g_, b);
            emit(b.other(u), out);
            if (branch) out += ")";
        }
    }

    const MolGraph& g_;
    std::vector<int> rank_;
    int root_ = 0;
    std::vector<std::vector<int>> closures_;
    std::vector<std::vector<int>> children_;
    std::vector<bool> classified_;
    std::vector<bool> visited_;
    std::vector<int> digit_of_bond_;
    std::array<bool, 10> used_digits_{};
};

}  // namespace

std::string write_smiles(const MolGraph& g, std::span<const int> order) { return SmilesWriter(g, order).run(); }

// ---------------------------------------------------------------------------
// Validation

bool validate(const MolGraph& g) {
    for (std::size_t i = 0; i < g.atom_count(); ++i) {
        const Atom& a = g.atoms()[i];
        if (a.explicit_h < 0) return false;
        int sum = 0, arom = 0;
        for (int bi : g.incident(static_cast<int>(i))) {
            const auto o = g.bonds()[static_cast<std::size_t>(bi)].order;
            sum += bond_valence(o);
            if (o == BondOrder::Aromatic) ++arom;
        }
        const int total = sum + a.explicit_h;
        const int q = std::abs(a.formal_charge);
        auto allowed = [&](int v) {
            for (int base : standard_valences(a.element)) {
                if (v == base + q || (base - q >= 0 && v == base - q)) return true;
            }
            return false;
        };
        if (!a.aromatic) {
            if (arom > 0 || !allowed(total)) return false;
            continue;
        }
        if (!can_be_aromatic(a.element) || arom < 2) return false;
        bool on_ring = false;
        for (const auto& ring : g.rings()) {
            if ((ring.size() == 5 || ring.size() == 6) &&
                std::find(ring.begin(), ring.end(), static_cast<int>(i)) != ring.end()) {
                on_ring = true;
                break;
            }
        }
        if (!on_ring) return false;
        // Aromatic carbon (and boron) contributes one pi bond; heteroatoms may
        // be pyridine-like (pi bond) or pyrrole-like (lone pair).
        const bool carbon_like = a.element == Element::C || a.element == Element::B;
        if (carbon_like ? !allowed(total + 1) : !(allowed(total) || allowed(total + 1))) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Canonical form

namespace {

std::int64_t atom_invariant(const Atom& a) {
    return (static_cast<std::int64_t>(atomic_number(a.element)) << 24) |
           (static_cast<std::int64_t>(a.aromatic) << 20) |
           (static_cast<std::int64_t>(a.formal_charge + 8) << 12) | (static_cast<std::int64_t>(a.explicit_h) << 4);
}

using Ranks = std::vector<int>;

int count_classes(const Ranks& r) {
    std::vector<int> s(r);
    std::sort(s.begin(), s.end());
    return static_cast<int>(std::unique(s.begin(), s.end()) - s.begin());
}

/// Rank = number of atoms with a strictly smaller key.
Ranks ranks_from_keys(const std::vector<std::vector<std::int64_t>>& keys) {
    const std::size_t n = keys.size();
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int x, int y) { return keys[static_cast<std::size_t>(x)] < keys[static_cast<std::size_t>(y)]; });
    Ranks r(n);
    for (std::size_t k = 0; k < n; ++k) {
        if (k > 0 && keys[static_cast<std::size_t>(idx[k])] == keys[static_cast<std::size_t>(idx[k - 1])]) {
            r[static_cast<std::size_t>(idx[k])] = r[static_cast<std::size_t>(idx[k - 1])];
        } else {
            r[static_cast<std::size_t>(idx[k])] = static_cast<int>(k);
        }
    }
    return r;
}

void refine(const MolGraph& g, Ranks& ranks) {
    int classes = count_classes(ranks);
    while (true) {
        std::vector<std::vector<std::int64_t>> keys(g.atom_count());
        for (std::size_t i = 0; i < g.atom_count(); ++i) {
            auto& key = keys[i];
            key.push_back(ranks[i]);
            std::vector<std::int64_t> nb;
            for (int bi : g.incident(static_cast<int>(i))) {
                const Bond& b = g.bonds()[static_cast<std::size_t>(bi)];
                nb.push_back(static_cast<std::int64_t>(ranks[static_cast<std::size_t>(b.other(static_cast<int>(i)))]) * 8 +
                             static_cast<int>(b.order));
            }
            std::sort(nb.begin(), nb.end());
            key.insert(key.end(), nb.begin(), nb.end());
        }
        ranks = ranks_from_keys(keys);
        const int now = count_classes(ranks);
        if (now == classes) return;
        classes = now;
    }
}

std::vector<std::int64_t> encode(const MolGraph& g, const Ranks& ranks) {
    // ranks are a permutation here: position of each atom
    const std::size_t n = g.atom_count();
    std::vector<int> order(n);
    for (std::size_t i = 0; i < n; ++i) order[static_cast<std::size_t>(ranks[i])] = static_cast<int>(i);
    std::vector<std::int64_t> code;
    code.reserve(1 + n + g.bond_count());
    code.push_back(static_cast<std::int64_t>(n));
    for (int atom : order) code.push_back(atom_invariant(g.atoms()[static_cast<std::size_t>(atom)]));
    std::vector<std::int64_t> bonds;
    for (const Bond& b : g.bonds()) {
        std::int64_t x = ranks[static_cast<std::size_t>(b.a)], y = ranks[static_cast<std::size_t>(b.b)];
        if (x > y) std::swap(x, y);
        bonds.push_back((x << 16) | (y << 4) | static_cast<int>(b.order));
    }
    std::sort(bonds.begin(), bonds.end());
    code.insert(code.end(), bonds.begin(), bonds.end());
    return code;
}

void search(const MolGraph& g, Ranks ranks, std::vector<std::int64_t>& best_code, Ranks& best_ranks) {
    refine(g, ranks);
    const std::size_t n = g.atom_count();
    // first non-singleton class (smallest rank value)
    std::vector<int> count(n, 0);
    for (int r : ranks) ++count[static_cast<std::size_t>(r)];
    int target = -1;
    for (std::size_t r = 0; r < n; ++r) {
        if (count[r] > 1) {
            target = static_cast<int>(r);
            break;
        }
    }
    if (target < 0) {
        auto code = encode(g, ranks);
        if (best_code.empty() || code < best_code) {
            best_code = std::move(code);
            best_ranks = ranks;
        }
        return;
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (ranks[i] != target) continue;
        Ranks child = ranks;
        for (std::size_t j = 0; j < n; ++j) {
            if (ranks[j] == target && j != i) child[j] = target + 1;
        }
        search(g, std::move(child), best_code, best_ranks);
    }
}

std::pair<std::vector<std::int64_t>, Ranks> canonicalize(const MolGraph& g) {
    std::vector<std::vector<std::int64_t>> keys(g.atom_count());
    for (std::size_t i = 0; i < g.atom_count(); ++i) {
        keys[i] = {atom_invariant(g.atoms()[i]), g.degree(static_cast<int>(i))};
    }
    std::vector<std::int64_t> best_code;
    Ranks best_ranks;
    if (g.atom_count() == 0) return {{0}, {}};
    search(g, ranks_from_keys(keys), best_code, best_ranks);
    return {best_code, best_ranks};
}

}  // namespace

std::vector<int> canonical_order(const MolGraph& g) {
    if (g.atom_count() > kMaxAtoms) throw SizeLimitExceeded("canonical_order: more than 64 atoms");
    auto [code, ranks] = canonicalize(g);
    std::vector<int> order(g.atom_count());
    for (std::size_t i = 0; i < ranks.size(); ++i) order[static_cast<std::size_t>(ranks[i])] = static_cast<int>(i);
    return order;
}

std::vector<std::int64_t> canonical_code(const MolGraph& g) {
    if (g.atom_count() > kMaxAtoms) throw SizeLimitExceeded("canonical_code: more than 64 atoms");
    return canonicalize(g).first;
}

bool is_isomorphic(const MolGraph& a, const MolGraph& b) {
    if (a.atom_count() > kMaxAtoms || b.atom_count() > kMaxAtoms) {
        throw SizeLimitExceeded("is_isomorphic: graphs are limited to 64 atoms");
    }
    if (a.atom_count() != b.atom_count() || a.bond_count() != b.bond_count()) return false;
    return canonical_code(a) == canonical_code(b);
}

MolGraph permute_atoms(const MolGraph& g, std::span<const int> perm) {
    const std::size_t n = g.atom_count();
    if (perm.size() != n) throw std::invalid_argument("permute_atoms: permutation size mismatch");
    std::vector<int> new_index(n);
    std::vector<Atom> atoms(n);
    for (std::size_t k = 0; k < n; ++k) {
        new_index[static_cast<std::size_t>(perm[k])] = static_cast<int>(k);
        atoms[k] = g.atoms()[static_cast<std::size_t>(perm[k])];
    }
    std::vector<Bond> bonds;
    bonds.reserve(g.bond_count());
    for (const Bond& b : g.bonds()) {
        bonds.push_back({new_index[static_cast<std::size_t>(b.a)], new_index[static_cast<std::size_t>(b.b)], b.order});
    }
    return MolGraph(std::move(atoms), std::move(bonds));
}

}  // namespace cog
