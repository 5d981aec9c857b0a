// codec.hpp
// Motif-dictionary latent space: structured molecule descriptions (MotifSpec),
// their assembly into molecular graphs, and an additive latent encoding with a
// greedy pursuit decoder. Also the bag-of-components text encoder.
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cog/molgraph.hpp"
#include "cog/rng.hpp"

namespace cog {

using Latent = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Vocabulary. Tokens are numbered scaffolds first, then groups, then modifiers.

enum class Granularity { Large, Medium, Small };

inline constexpr std::array<std::string_view, 8> kScaffoldNames = {
    "benzene", "pyridine", "pyrimidine", "naphthalene", "cyclohexane", "furan", "pyrrole", "thiophene"};
inline constexpr std::array<std::string_view, 9> kGroupNames = {
    "nitro", "phosphate", "amide", "hydroxyl", "methyl", "carboxyl", "amine", "nitrile", "sulfonyl"};
inline constexpr std::array<std::string_view, 4> kModifierNames = {"fluorine", "chlorine", "bromine", "iodine"};

inline constexpr int kNumScaffolds = static_cast<int>(kScaffoldNames.size());
inline constexpr int kNumGroups = static_cast<int>(kGroupNames.size());
inline constexpr int kNumModifiers = static_cast<int>(kModifierNames.size());
inline constexpr int kVocabSize = kNumScaffolds + kNumGroups + kNumModifiers;
inline constexpr int kMaxGroups = 3;
inline constexpr int kMaxModifiers = 3;

class UnknownComponentToken : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string_view token_name(int token);
/// Throws UnknownComponentToken.
int token_index(std::string_view name);
Granularity token_granularity(int token);
inline int scaffold_token(int s) { return s; }
inline int group_token(int g) { return kNumScaffolds + g; }
inline int modifier_token(int m) { return kNumScaffolds + kNumGroups + m; }

/// Number of substitutable ring positions on each scaffold.
int scaffold_sites(int scaffold);

/// Token multiplicities, indexed by token.
using Bag = std::array<int, kVocabSize>;

// ---------------------------------------------------------------------------

struct MotifSpec {
    int scaffold = 0;
    std::vector<int> groups;     // group indices (0..kNumGroups), sorted
    std::vector<int> modifiers;  // modifier indices (0..kNumModifiers), sorted

    Bag bag() const;
    /// Token list with multiplicity, ascending.
    std::vector<int> tokens() const;
    std::size_t substituent_count() const { return groups.size() + modifiers.size(); }
    /// Multiset limits and site capacity.
    bool well_formed() const;
    std::string to_string() const;

    static MotifSpec from_bag(const Bag& bag);

    friend bool operator==(const MotifSpec&, const MotifSpec&) = default;
};

class NoFreeAttachmentSite : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidMotifSpec : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Every well-formed spec, in a fixed order (scaffold, group multiset,
/// modifier multiset, each lexicographic).
const std::vector<MotifSpec>& enumerate_grammar();

/// Deterministic assembly: scaffold template, then groups in vocabulary order,
/// then modifiers, each bonded to the lowest-numbered free site. Throws
/// NoFreeAttachmentSite when the scaffold runs out of sites and
/// InvalidMotifSpec for out-of-range indices or multiset overflow.
MolGraph realize(const MotifSpec& spec);

/// SMILES of the scaffold template and the substituent fragments (attachment
/// atom first).
std::string_view scaffold_smiles(int scaffold);
std::string_view group_smiles(int group);
std::string_view modifier_smiles(int modifier);

// ---------------------------------------------------------------------------

struct CodecConfig {
    int dim = 32;
    double sigma = 0.05;
    double theta = 0.4;
    double max_coherence = 0.3;
    std::uint64_t seed = 20240531;
};

class Dictionary {
public:
    /// Seeded Gaussian draws, unit-normalised, each redrawn until its absolute
    /// inner product with every earlier vector is at most max_coherence.
    explicit Dictionary(const CodecConfig& config = {});

    const CodecConfig& config() const { return config_; }
    int dim() const { return config_.dim; }
    double sigma() const { return config_.sigma; }

    /// d x V matrix, column k is the embedding of token k.
    const Eigen::MatrixXd& embeddings() const { return E_; }
    Eigen::VectorXd vector(int token) const { return E_.col(token); }
    double max_abs_inner_product() const;

    /// Least-squares dictionary coefficients of g (length V).
    Eigen::VectorXd coefficients(const Latent& g) const { return pinv_ * g; }

    /// Deterministic part of encode: sum of the component embeddings.
    Latent mean(const MotifSpec& spec) const;
    Latent mean(const Bag& bag) const;
    /// mean(spec) + sigma * eta, eta standard normal drawn from rng.
    Latent encode(const MotifSpec& spec, Rng& rng) const;

    /// Greedy pursuit: the scaffold with the largest coefficient (ties go to
    /// vocabulary order), then groups and modifiers one at a time while the
    /// residual reduction 2 r_k - 1 exceeds theta and the multiset limits
    /// and site count allow. Always returns a well-formed spec.
    MotifSpec decode(const Latent& g) const;

    /// Text-side: W * bag, with W of shape d x V.
    static Eigen::MatrixXd identity_text_map(int dim);

    /// Versioned text serialisation. deserialize regenerates the vectors from
    /// the recorded seed and rejects files whose stored values disagree.
    std::string serialize() const;
    static Dictionary deserialize(std::string_view text);

private:
    CodecConfig config_;
    Eigen::MatrixXd E_;
    Eigen::MatrixXd pinv_;
};

/// Token counts as a length-V vector.
Eigen::VectorXd bag_vector(std::span<const int> tokens);
/// c = W * bag. Empty token list gives the zero vector.
Latent encode_text(std::span<const int> tokens, const Eigen::MatrixXd& W);
/// Same, from token names; throws UnknownComponentToken.
Latent encode_text(std::span<const std::string> tokens, const Eigen::MatrixXd& W);

}  // namespace cog
