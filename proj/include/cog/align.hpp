// align.hpp
// Contrastive post-alignment of the text-side map W against frozen molecule
// latents (one-directional InfoNCE with in-batch negatives).
#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "cog/errors.hpp"

namespace cog {

class DegenerateEmbedding : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class InvalidBatch : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// One molecule latent g and the bag-of-components vector of its text.
struct AlignPair {
    Eigen::VectorXd latent;
    Eigen::VectorXd bag;
};

struct AlignModel {
    Eigen::MatrixXd W;  // latent dim x bag dim
    double tau = 0.1;
    std::uint64_t seed = 0;

    Eigen::VectorXd encode(const Eigen::VectorXd& bag) const { return W * bag; }

    /// Text format "cog-align v1" with seed, tau, vocabulary hash and W.
    std::string serialize() const;
    /// Rejects a vocabulary hash that differs from the compiled vocabulary.
    static AlignModel deserialize(std::string_view text);
};

/// FNV-1a over the vocabulary token names, in order.
std::uint64_t vocab_hash();

struct LossAndGrad {
    double loss = 0;
    Eigen::MatrixXd grad;  // dL/dW
};

/// L = -(1/|B|) sum_i log softmax_j(cos(g_i, W b_j) / tau)[i], with the
/// analytic gradient w.r.t. W. Throws InvalidBatch for |B| < 2 and
/// DegenerateEmbedding when some g_i or c_i has norm below 1e-12.
LossAndGrad contrastive_loss(const AlignModel& model, std::span<const AlignPair> batch);

struct AlignConfig {
    double learning_rate = 0.05;
    int epochs = 200;
    int batch_size = 32;  // <= 0 means full batch
    double tau = 0.1;
    std::uint64_t seed = 7;
    double init_scale = 0.1;  // W starts as init_scale * N(0, 1)
};

/// Plain minibatch gradient descent on W; the latents are never touched.
/// Batches come from a seeded shuffle each epoch. epoch_losses, if given,
/// receives the mean batch loss of every epoch. Throws NonFiniteLoss and
/// InvalidBatch (fewer than 10 pairs).
AlignModel train_alignment(std::span<const AlignPair> data, const AlignConfig& config,
                           std::vector<double>* epoch_losses = nullptr);

/// Same, starting from a given model (its tau is kept).
AlignModel train_alignment(std::span<const AlignPair> data, AlignModel init, const AlignConfig& config,
                           std::vector<double>* epoch_losses = nullptr);

/// Fraction of pairs whose text embedding has its own latent as the
/// cosine-nearest latent among all pairs (ties count as misses).
double retrieval_top1(const AlignModel& model, std::span<const AlignPair> data);

}  // namespace cog
