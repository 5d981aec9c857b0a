// fingerprint.hpp
// Substructure key fingerprints over molecular graphs and Tanimoto similarity.
//
// Keys come from a line-oriented catalog (resources/cog_keys_64_v1.txt). Each
// key is one of
//   count <pattern> <min>    at least <min> distinct atom sets match <pattern>
//   ring <predicate> <min>   at least <min> rings (smallest set) satisfy <predicate>
// Patterns use a small SMARTS dialect, see Pattern.
#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cog/molgraph.hpp"

namespace cog {

class PatternError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Small SMARTS subset. Atoms: organic symbols (uppercase aliphatic,
/// lowercase aromatic), '*', or bracket expressions built from element
/// symbols, #n, *, a, A, H<n>, D<n>, R, +<n>/-<n>, $(pattern), combined with
/// '!' (not), '&' or juxtaposition (and), ',' (or), ';' (low-precedence and).
/// Bonds: - = # : ~ ; an unwritten bond means single or aromatic. Branches and
/// ring closures as in SMILES.
class Pattern {
public:
    explicit Pattern(std::string_view text);
    ~Pattern();
    Pattern(Pattern&&) noexcept;
    Pattern& operator=(Pattern&&) noexcept;

    const std::string& text() const { return text_; }
    std::size_t atom_count() const;

    /// Number of distinct matched atom sets.
    int count_matches(const MolGraph& g) const;
    bool matches(const MolGraph& g) const;
    /// True if some embedding maps pattern atom 0 onto `atom`.
    bool matches_at(const MolGraph& g, int atom) const;

    struct Impl;

private:
    std::string text_;
    std::unique_ptr<Impl> impl_;
};

struct KeyDef {
    std::string id;
    std::string kind;   // "count" or "ring"
    std::string arg;    // pattern text or ring predicate
    int min_count = 1;
    std::string description;
};

class KeySetMismatch : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidMolecule : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Fingerprint {
    std::uint64_t bits = 0;
    std::uint32_t keyset_tag = 0;  // identifies the catalog version

    bool test(std::size_t i) const { return (bits >> i) & 1ULL; }
    int popcount() const { return __builtin_popcountll(bits); }
    friend bool operator==(const Fingerprint&, const Fingerprint&) = default;
};

class KeySet {
public:
    /// Parses catalog text. Throws PatternError on malformed lines, duplicate
    /// ids, unknown ring predicates or more than 64 keys.
    static KeySet parse(std::string_view catalog);
    /// The built-in CoG-Keys-64 v1 catalog.
    static const KeySet& v1();

    const std::string& version() const { return version_; }
    std::uint32_t tag() const { return tag_; }
    std::size_t size() const { return keys_.size(); }
    const KeyDef& key(std::size_t i) const { return keys_[i]; }
    std::size_t index_of(std::string_view id) const;

    bool evaluate(std::size_t i, const MolGraph& g) const;

    /// Throws InvalidMolecule if validate(g) is false.
    Fingerprint fingerprint(const MolGraph& g) const;

private:
    std::string version_;
    std::uint32_t tag_ = 0;
    std::vector<KeyDef> keys_;
    std::vector<std::shared_ptr<const Pattern>> patterns_;  // null for ring keys
};

inline Fingerprint fingerprint(const MolGraph& g) { return KeySet::v1().fingerprint(g); }

/// |a & b| / |a | b|; two empty fingerprints have similarity 1.
double tanimoto(const Fingerprint& a, const Fingerprint& b);

/// Ring predicates usable in "ring" keys.
bool ring_predicate(std::string_view name, const MolGraph& g, std::size_t ring_index);

}  // namespace cog
