// molgraph.hpp
// Molecular graphs: SMILES parsing and writing, valence validation, ring
// perception and canonical-form isomorphism.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cog {

inline constexpr std::size_t kMaxAtoms = 64;

enum class Element : std::uint8_t { B, C, N, O, P, S, F, Cl, Br, I };

std::string_view element_symbol(Element e);
int atomic_number(Element e);
std::optional<Element> element_from_symbol(std::string_view sym);
/// Allowed neutral valences, ascending.
std::span<const int> standard_valences(Element e);

enum class BondOrder : std::uint8_t { Single = 1, Double = 2, Triple = 3, Aromatic = 4 };

struct Atom {
    Element element = Element::C;
    bool aromatic = false;
    int formal_charge = 0;
    int explicit_h = 0;

    friend bool operator==(const Atom&, const Atom&) = default;
};

struct Bond {
    int a = 0;
    int b = 0;
    BondOrder order = BondOrder::Single;

    int other(int atom) const { return atom == a ? b : a; }
    friend bool operator==(const Bond&, const Bond&) = default;
};

class MolGraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Immutable after construction. Atoms are heavy atoms only; hydrogens are
/// carried as per-atom counts. Rings (smallest set of smallest rings) are
/// computed once at construction.
class MolGraph {
public:
    MolGraph() = default;
    /// Throws MolGraphError when the graph is disconnected, has duplicate or
    /// self bonds, out-of-range endpoints, or exceeds kMaxAtoms.
    MolGraph(std::vector<Atom> atoms, std::vector<Bond> bonds);

    const std::vector<Atom>& atoms() const { return atoms_; }
    const std::vector<Bond>& bonds() const { return bonds_; }
    const std::vector<std::vector<int>>& rings() const { return rings_; }
    std::size_t atom_count() const { return atoms_.size(); }
    std::size_t bond_count() const { return bonds_.size(); }

    /// Bond indices incident on atom i.
    const std::vector<int>& incident(int i) const { return adjacency_[static_cast<std::size_t>(i)]; }
    int degree(int i) const { return static_cast<int>(incident(i).size()); }
    std::optional<int> bond_between(int i, int j) const;
    bool in_ring(int i) const { return atom_in_ring_[static_cast<std::size_t>(i)]; }
    bool bond_in_ring(int bond_index) const { return bond_in_ring_[static_cast<std::size_t>(bond_index)]; }

    friend bool operator==(const MolGraph& x, const MolGraph& y) {
        return x.atoms_ == y.atoms_ && x.bonds_ == y.bonds_;
    }

private:
    std::vector<Atom> atoms_;
    std::vector<Bond> bonds_;
    std::vector<std::vector<int>> adjacency_;
    std::vector<std::vector<int>> rings_;
    std::vector<bool> atom_in_ring_;
    std::vector<bool> bond_in_ring_;
};

// ---------------------------------------------------------------------------
// SMILES

enum class SmilesErrorKind {
    EmptyInput,
    UnknownElement,
    UnbalancedParenthesis,
    UnbalancedRingClosure,
    UnexpectedCharacter,
    InvalidGraph,
};

std::string_view to_string(SmilesErrorKind kind);

class SmilesError : public std::runtime_error {
public:
    SmilesError(SmilesErrorKind kind, std::size_t offset, const std::string& detail);
    SmilesErrorKind kind() const { return kind_; }
    /// Byte offset into the input where the problem was detected.
    std::size_t offset() const { return offset_; }

private:
    SmilesErrorKind kind_;
    std::size_t offset_;
};

/// Parses the supported SMILES subset: organic-subset and bracket atoms
/// (element, H count, charge), aromatic lowercase atoms, branches, ring
/// closures 1-9 and bond symbols - = # :. Implicit hydrogens on
/// organic-subset atoms are resolved to explicit counts.
MolGraph parse_smiles(std::string_view smiles);

/// Writes a SMILES string. The traversal starts at order[0] and visits
/// neighbours by their position in `order`; an empty order means index order.
/// Reparsing the result yields a graph isomorphic to `g`.
std::string write_smiles(const MolGraph& g, std::span<const int> order = {});

/// Hydrogen count a SMILES reader assigns to an unbracketed atom given the
/// bonds it participates in.
int implicit_hydrogens(Element e, bool aromatic, int bond_order_sum, int aromatic_bonds);

// ---------------------------------------------------------------------------
// Validation and isomorphism

/// Valence and aromaticity check. Total function.
bool validate(const MolGraph& g);

/// Canonical labelling: canonical_order[k] is the atom placed at position k.
std::vector<int> canonical_order(const MolGraph& g);

/// Label-independent encoding of the graph; equal iff the graphs are
/// isomorphic (element, aromaticity, charge, H count and bond order preserved).
std::vector<std::int64_t> canonical_code(const MolGraph& g);

class SizeLimitExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Throws SizeLimitExceeded if either graph has more than kMaxAtoms atoms.
bool is_isomorphic(const MolGraph& a, const MolGraph& b);

/// Returns a copy with atoms renumbered: new index k holds old atom perm[k].
MolGraph permute_atoms(const MolGraph& g, std::span<const int> perm);

}  // namespace cog
