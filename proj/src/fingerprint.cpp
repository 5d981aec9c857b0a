// fingerprint.cpp

#include "cog/fingerprint.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <climits>
#include <map>
#include <optional>
#include <sstream>
#include <unordered_set>

#include "cog/resources_data.hpp"

namespace cog {

// ---------------------------------------------------------------------------
// Pattern internals

namespace {

enum class PrimKind { Element, AtomicNum, Any, Aromatic, Aliphatic, HCount, Degree, Ring, Charge, Recursive };

struct Expr {
    enum class Op { Prim, Not, And, Or } op = Op::Prim;
    PrimKind kind = PrimKind::Any;
    int value = 0;
    int aromatic = -1;  // for Element: -1 either, 0 aliphatic, 1 aromatic
    std::shared_ptr<const Pattern> sub;
    std::vector<Expr> children;
};

enum class BondKind { Single, Double, Triple, Aromatic, Any, Default };

struct PBond {
    int a;
    int b;
    BondKind kind;
};

}  // namespace

struct Pattern::Impl {
    std::vector<Expr> atoms;
    std::vector<PBond> bonds;
    std::vector<std::vector<int>> adjacency;  // pattern bond indices per atom
    std::vector<int> anchor;                  // an earlier neighbour for each atom, or -1
};

namespace {

int total_h(const Atom& a) { return a.explicit_h; }

bool eval(const Expr& e, const MolGraph& g, int i) {
    switch (e.op) {
        case Expr::Op::Not: return !eval(e.children[0], g, i);
        case Expr::Op::And:
            for (const auto& c : e.children) {
                if (!eval(c, g, i)) return false;
            }
            return true;
        case Expr::Op::Or:
            for (const auto& c : e.children) {
                if (eval(c, g, i)) return true;
            }
            return false;
        case Expr::Op::Prim: break;
    }
    const Atom& a = g.atoms()[static_cast<std::size_t>(i)];
    switch (e.kind) {
        case PrimKind::Element:
            return atomic_number(a.element) == e.value && (e.aromatic < 0 || static_cast<int>(a.aromatic) == e.aromatic);
        case PrimKind::AtomicNum: return atomic_number(a.element) == e.value;
        case PrimKind::Any: return true;
        case PrimKind::Aromatic: return a.aromatic;
        case PrimKind::Aliphatic: return !a.aromatic;
        case PrimKind::HCount: return total_h(a) == e.value;
        case PrimKind::Degree: return g.degree(i) == e.value;
        case PrimKind::Ring: return g.in_ring(i);
        case PrimKind::Charge: return a.formal_charge == e.value;
        case PrimKind::Recursive: return e.sub->matches_at(g, i);
    }
    return false;
}

bool bond_ok(BondKind k, BondOrder o) {
    switch (k) {
        case BondKind::Single: return o == BondOrder::Single;
        case BondKind::Double: return o == BondOrder::Double;
        case BondKind::Triple: return o == BondOrder::Triple;
        case BondKind::Aromatic: return o == BondOrder::Aromatic;
        case BondKind::Any: return true;
        case BondKind::Default: return o == BondOrder::Single || o == BondOrder::Aromatic;
    }
    return false;
}

Expr prim(PrimKind k, int value = 0, int aromatic = -1) {
    Expr e;
    e.kind = k;
    e.value = value;
    e.aromatic = aromatic;
    return e;
}

Expr combine(Expr::Op op, std::vector<Expr> parts) {
    if (parts.size() == 1) return std::move(parts[0]);
    Expr e;
    e.op = op;
    e.children = std::move(parts);
    return e;
}

class PatternParser {
public:
    PatternParser(std::string_view s, Pattern::Impl& out) : s_(s), out_(out) {}

    void run() {
        if (s_.empty()) fail("empty pattern");
        while (pos_ < s_.size()) {
            const char ch = s_[pos_];
            if (ch == '(') {
                if (prev_ < 0) fail("branch before atom");
                stack_.push_back(prev_);
                ++pos_;
            } else if (ch == ')') {
                if (stack_.empty()) fail("unbalanced ')'");
                prev_ = stack_.back();
                stack_.pop_back();
                ++pos_;
            } else if (ch == '-' || ch == '=' || ch == '#' || ch == ':' || ch == '~') {
                pending_ = ch == '-' ? BondKind::Single
                         : ch == '=' ? BondKind::Double
                         : ch == '#' ? BondKind::Triple
                         : ch == ':' ? BondKind::Aromatic
                                     : BondKind::Any;
                ++pos_;
            } else if (ch >= '1' && ch <= '9') {
                const int d = ch - '0';
                auto it = rings_.find(d);
                if (it == rings_.end()) {
                    rings_[d] = {prev_, pending_};
                } else {
                    add_bond(it->second.first, prev_, pending_ != BondKind::Default ? pending_ : it->second.second);
                    rings_.erase(it);
                }
                pending_ = BondKind::Default;
                ++pos_;
            } else if (ch == '[') {
                const std::size_t close = find_close();
                const std::string_view body = s_.substr(pos_ + 1, close - pos_ - 1);
                pos_ = close + 1;
                std::size_t p = 0;
                Expr e = parse_low_and(body, p);
                if (p != body.size()) fail("trailing characters in bracket atom");
                add_atom(std::move(e));
            } else {
                add_atom(organic());
            }
        }
        if (!stack_.empty() || !rings_.empty()) fail("unclosed branch or ring");
    }

private:
    [[noreturn]] void fail(const std::string& why) const {
        throw PatternError("pattern '" + std::string(s_) + "': " + why);
    }

    std::size_t find_close() const {
        int depth = 0;
        for (std::size_t k = pos_; k < s_.size(); ++k) {
            if (s_[k] == '[') ++depth;
            if (s_[k] == ']' && --depth == 0) return k;
        }
        fail("unterminated '['");
    }

    Expr organic() {
        const char ch = s_[pos_];
        if (ch == '*' || ch == 'a' || ch == 'A') {
            ++pos_;
            return prim(ch == '*' ? PrimKind::Any : ch == 'a' ? PrimKind::Aromatic : PrimKind::Aliphatic);
        }
        if (s_.substr(pos_, 2) == "Cl" || s_.substr(pos_, 2) == "Br") {
            auto e = element_from_symbol(s_.substr(pos_, 2));
            pos_ += 2;
            return prim(PrimKind::Element, atomic_number(*e), 0);
        }
        static constexpr std::string_view kUpper = "BCNOPSFI";
        static constexpr std::string_view kLower = "bcnops";
        if (kUpper.find(ch) != std::string_view::npos) {
            ++pos_;
            return prim(PrimKind::Element, atomic_number(*element_from_symbol(std::string_view(&ch, 1))), 0);
        }
        if (kLower.find(ch) != std::string_view::npos) {
            const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            ++pos_;
            return prim(PrimKind::Element, atomic_number(*element_from_symbol(std::string_view(&up, 1))), 1);
        }
        fail(std::string("unexpected character '") + ch + "'");
    }

    void add_atom(Expr e) {
        const int idx = static_cast<int>(out_.atoms.size());
        out_.atoms.push_back(std::move(e));
        out_.adjacency.emplace_back();
        out_.anchor.push_back(prev_);
        if (prev_ >= 0) add_bond(prev_, idx, pending_);
        pending_ = BondKind::Default;
        prev_ = idx;
    }

    void add_bond(int a, int b, BondKind k) {
        const int bi = static_cast<int>(out_.bonds.size());
        out_.bonds.push_back({a, b, k});
        out_.adjacency[static_cast<std::size_t>(a)].push_back(bi);
        out_.adjacency[static_cast<std::size_t>(b)].push_back(bi);
    }

    // bracket expression grammar: low_and := or (';' or)* ; or := and (',' and)* ;
    // and := unary ('&'? unary)* ; unary := '!' unary | primitive
    Expr parse_low_and(std::string_view b, std::size_t& p) {
        std::vector<Expr> parts{parse_or(b, p)};
        while (p < b.size() && b[p] == ';') {
            ++p;
            parts.push_back(parse_or(b, p));
        }
        return combine(Expr::Op::And, std::move(parts));
    }

    Expr parse_or(std::string_view b, std::size_t& p) {
        std::vector<Expr> parts{parse_and(b, p)};
        while (p < b.size() && b[p] == ',') {
            ++p;
            parts.push_back(parse_and(b, p));
        }
        return combine(Expr::Op::Or, std::move(parts));
    }

    Expr parse_and(std::string_view b, std::size_t& p) {
        std::vector<Expr> parts{parse_unary(b, p)};
        while (p < b.size() && b[p] != ',' && b[p] != ';') {
            if (b[p] == '&') ++p;
            parts.push_back(parse_unary(b, p));
        }
        return combine(Expr::Op::And, std::move(parts));
    }

    Expr parse_unary(std::string_view b, std::size_t& p) {
        if (p >= b.size()) fail("truncated bracket expression");
        if (b[p] == '!') {
            ++p;
            Expr e;
            e.op = Expr::Op::Not;
            e.children.push_back(parse_unary(b, p));
            return e;
        }
        return parse_primitive(b, p);
    }

    static int read_int(std::string_view b, std::size_t& p, int fallback) {
        int v = 0;
        auto [ptr, ec] = std::from_chars(b.data() + p, b.data() + b.size(), v);
        if (ec != std::errc()) return fallback;
        p = static_cast<std::size_t>(ptr - b.data());
        return v;
    }

    Expr parse_primitive(std::string_view b, std::size_t& p) {
        const char ch = b[p];
        if (ch == '$') {
            if (p + 1 >= b.size() || b[p + 1] != '(') fail("expected '(' after '$'");
            int depth = 0;
            std::size_t k = p + 1;
            for (; k < b.size(); ++k) {
                if (b[k] == '(') ++depth;
                if (b[k] == ')' && --depth == 0) break;
            }
            if (k >= b.size()) fail("unterminated $(...)");
            Expr e = prim(PrimKind::Recursive);
            e.sub = std::make_shared<const Pattern>(b.substr(p + 2, k - p - 2));
            p = k + 1;
            return e;
        }
        if (ch == '*') {
            ++p;
            return prim(PrimKind::Any);
        }
        if (ch == '#') {
            ++p;
            const int z = read_int(b, p, -1);
            if (z < 0) fail("expected atomic number after '#'");
            return prim(PrimKind::AtomicNum, z);
        }
        if (ch == '+' || ch == '-') {
            ++p;
            const int mag = read_int(b, p, 1);
            return prim(PrimKind::Charge, ch == '+' ? mag : -mag);
        }
        if (ch == 'H') {
            ++p;
            return prim(PrimKind::HCount, read_int(b, p, 1));
        }
        if (ch == 'D') {
            ++p;
            return prim(PrimKind::Degree, read_int(b, p, 1));
        }
        if (ch == 'R') {
            ++p;
            return prim(PrimKind::Ring);
        }
        if (ch == 'a') {
            ++p;
            return prim(PrimKind::Aromatic);
        }
        if (ch == 'A') {
            ++p;
            return prim(PrimKind::Aliphatic);
        }
        if (std::isupper(static_cast<unsigned char>(ch))) {
            if (p + 1 < b.size() && std::islower(static_cast<unsigned char>(b[p + 1]))) {
                if (auto e = element_from_symbol(b.substr(p, 2))) {
                    p += 2;
                    return prim(PrimKind::Element, atomic_number(*e), 0);
                }
            }
            if (auto e = element_from_symbol(b.substr(p, 1))) {
                ++p;
                return prim(PrimKind::Element, atomic_number(*e), 0);
            }
        }
        if (std::islower(static_cast<unsigned char>(ch))) {
            const char up = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
            if (auto e = element_from_symbol(std::string_view(&up, 1))) {
                ++p;
                return prim(PrimKind::Element, atomic_number(*e), 1);
            }
        }
        fail(std::string("unknown primitive '") + ch + "'");
    }

    std::string_view s_;
    Pattern::Impl& out_;
    std::size_t pos_ = 0;
    int prev_ = -1;
    BondKind pending_ = BondKind::Default;
    std::vector<int> stack_;
    std::map<int, std::pair<int, BondKind>> rings_;
};

// Backtracking embedding search. `visit` is called with the atom mask of each
// complete embedding and returns false to stop the search.
template <class Visit>
void embed(const Pattern::Impl& p, const MolGraph& g, int fixed_root, Visit&& visit) {
    const std::size_t n = p.atoms.size();
    std::vector<int> map(n, -1);
    std::uint64_t used = 0;
    bool stop = false;
    auto rec = [&](auto&& self, std::size_t k) -> void {
        if (stop) return;
        if (k == n) {
            if (!visit(used)) stop = true;
            return;
        }
        auto try_atom = [&](int cand) {
            if ((used >> cand) & 1ULL) return;
            if (!eval(p.atoms[k], g, cand)) return;
            for (int bi : p.adjacency[k]) {
                const PBond& pb = p.bonds[static_cast<std::size_t>(bi)];
                const int other = pb.a == static_cast<int>(k) ? pb.b : pb.a;
                if (static_cast<std::size_t>(other) >= k) continue;
                auto gb = g.bond_between(cand, map[static_cast<std::size_t>(other)]);
                if (!gb || !bond_ok(pb.kind, g.bonds()[static_cast<std::size_t>(*gb)].order)) return;
            }
            map[k] = cand;
            used |= 1ULL << cand;
            self(self, k + 1);
            used &= ~(1ULL << cand);
            map[k] = -1;
        };
        if (k == 0 && fixed_root >= 0) {
            try_atom(fixed_root);
        } else if (p.anchor[k] >= 0) {
            const int host = map[static_cast<std::size_t>(p.anchor[k])];
            for (int gbi : g.incident(host)) {
                try_atom(g.bonds()[static_cast<std::size_t>(gbi)].other(host));
                if (stop) return;
            }
        } else {
            for (int cand = 0; cand < static_cast<int>(g.atom_count()); ++cand) {
                try_atom(cand);
                if (stop) return;
            }
        }
    };
    rec(rec, 0);
}

std::uint32_t fnv1a(std::string_view s) {
    std::uint32_t h = 2166136261u;
    for (unsigned char c : s) {
        h ^= c;
        h *= 16777619u;
    }
    return h;
}

}  // namespace

Pattern::Pattern(std::string_view text) : text_(text), impl_(std::make_unique<Impl>()) {
    PatternParser(text, *impl_).run();
    for (std::size_t k = 1; k < impl_->atoms.size(); ++k) {
        if (impl_->anchor[k] < 0) throw PatternError("pattern '" + text_ + "' is not connected");
    }
}
Pattern::~Pattern() = default;
Pattern::Pattern(Pattern&&) noexcept = default;
Pattern& Pattern::operator=(Pattern&&) noexcept = default;

std::size_t Pattern::atom_count() const { return impl_->atoms.size(); }

int Pattern::count_matches(const MolGraph& g) const {
    std::unordered_set<std::uint64_t> sets;
    embed(*impl_, g, -1, [&](std::uint64_t mask) {
        sets.insert(mask);
        return true;
    });
    return static_cast<int>(sets.size());
}

bool Pattern::matches(const MolGraph& g) const {
    bool found = false;
    embed(*impl_, g, -1, [&](std::uint64_t) {
        found = true;
        return false;
    });
    return found;
}

bool Pattern::matches_at(const MolGraph& g, int atom) const {
    bool found = false;
    embed(*impl_, g, atom, [&](std::uint64_t) {
        found = true;
        return false;
    });
    return found;
}

// ---------------------------------------------------------------------------
// Ring predicates

bool ring_predicate(std::string_view name, const MolGraph& g, std::size_t ring_index) {
    const auto& ring = g.rings().at(ring_index);
    auto all = [&](auto pred) { return std::all_of(ring.begin(), ring.end(), pred); };
    auto any = [&](auto pred) { return std::any_of(ring.begin(), ring.end(), pred); };
    auto el = [&](int i) { return g.atoms()[static_cast<std::size_t>(i)].element; };
    if (name == "any") return true;
    if (name == "size5") return ring.size() == 5;
    if (name == "size6") return ring.size() == 6;
    if (name == "aromatic") return all([&](int i) { return g.atoms()[static_cast<std::size_t>(i)].aromatic; });
    if (name == "aliphatic") return !any([&](int i) { return g.atoms()[static_cast<std::size_t>(i)].aromatic; });
    if (name == "hetero") return any([&](int i) { return el(i) != Element::C; });
    if (name == "carbon_only") return all([&](int i) { return el(i) == Element::C; });
    if (name == "nhetero") return any([&](int i) { return el(i) == Element::N; });
    if (name == "ohetero") return any([&](int i) { return el(i) == Element::O; });
    if (name == "shetero") return any([&](int i) { return el(i) == Element::S; });
    if (name == "fused") {
        auto bonds_of = [&](const std::vector<int>& r) {
            std::vector<int> out;
            for (std::size_t k = 0; k < r.size(); ++k) {
                out.push_back(*g.bond_between(r[k], r[(k + 1) % r.size()]));
            }
            std::sort(out.begin(), out.end());
            return out;
        };
        const auto mine = bonds_of(ring);
        for (std::size_t other = 0; other < g.rings().size(); ++other) {
            if (other == ring_index) continue;
            const auto theirs = bonds_of(g.rings()[other]);
            std::vector<int> common;
            std::set_intersection(mine.begin(), mine.end(), theirs.begin(), theirs.end(), std::back_inserter(common));
            if (!common.empty()) return true;
        }
        return false;
    }
    throw PatternError("unknown ring predicate '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// KeySet

KeySet KeySet::parse(std::string_view catalog) {
    KeySet ks;
    std::istringstream in{std::string(catalog)};
    std::string line;
    int line_no = 0;
    auto split = [](const std::string& l) {
        std::vector<std::string> out;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = l.find('\t', start);
            out.push_back(l.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        return out;
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto f = split(line);
        const std::string where = "catalog line " + std::to_string(line_no);
        if (f[0] == "version") {
            if (f.size() != 2) throw PatternError(where + ": malformed version line");
            ks.version_ = f[1];
            continue;
        }
        // <bit> <id> <kind> <arg> <min> <description>
        if (f.size() != 6) throw PatternError(where + ": expected 6 tab-separated fields");
        const int bit = std::stoi(f[0]);
        if (bit != static_cast<int>(ks.keys_.size())) throw PatternError(where + ": bit numbers must be consecutive");
        if (ks.keys_.size() >= 64) throw PatternError(where + ": more than 64 keys");
        KeyDef def{f[1], f[2], f[3], std::stoi(f[4]), f[5]};
        for (const auto& k : ks.keys_) {
            if (k.id == def.id) throw PatternError(where + ": duplicate key id " + def.id);
        }
        if (def.kind == "count") {
            ks.patterns_.push_back(std::make_shared<const Pattern>(def.arg));
        } else if (def.kind == "ring") {
            // validate the predicate name against an empty ring list
            static const MolGraph probe = parse_smiles("C1CC1");
            ring_predicate(def.arg, probe, 0);
            ks.patterns_.push_back(nullptr);
        } else {
            throw PatternError(where + ": unknown key kind '" + def.kind + "'");
        }
        ks.keys_.push_back(std::move(def));
    }
    if (ks.version_.empty()) throw PatternError("catalog has no version line");
    ks.tag_ = fnv1a(ks.version_);
    return ks;
}

const KeySet& KeySet::v1() {
    static const KeySet ks = parse(resources::cog_keys_64_v1_txt);
    return ks;
}

std::size_t KeySet::index_of(std::string_view id) const {
    for (std::size_t i = 0; i < keys_.size(); ++i) {
        if (keys_[i].id == id) return i;
    }
    throw std::out_of_range("no key named " + std::string(id));
}

bool KeySet::evaluate(std::size_t i, const MolGraph& g) const {
    const KeyDef& k = keys_.at(i);
    if (patterns_[i]) {
        if (k.min_count <= 1) return patterns_[i]->matches(g);
        return patterns_[i]->count_matches(g) >= k.min_count;
    }
    int n = 0;
    for (std::size_t r = 0; r < g.rings().size(); ++r) n += ring_predicate(k.arg, g, r);
    return n >= k.min_count;
}

Fingerprint KeySet::fingerprint(const MolGraph& g) const {
    if (!validate(g)) throw InvalidMolecule("fingerprint requires a valid molecule");
    Fingerprint fp;
    fp.keyset_tag = tag_;
    for (std::size_t i = 0; i < keys_.size(); ++i) {
        if (evaluate(i, g)) fp.bits |= 1ULL << i;
    }
    return fp;
}

double tanimoto(const Fingerprint& a, const Fingerprint& b) {
    if (a.keyset_tag != b.keyset_tag) throw KeySetMismatch("fingerprints come from different key sets");
    const int uni = __builtin_popcountll(a.bits | b.bits);
    if (uni == 0) return 1.0;
    return static_cast<double>(__builtin_popcountll(a.bits & b.bits)) / uni;
}

}  // namespace cog
