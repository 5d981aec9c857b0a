// diffusion.hpp
// Latent diffusion: noise schedule, forward noising, the closed-form
// mixture-posterior denoiser, a small learned epsilon-predictor and the
// ancestral sampler. Latents are processed in column batches (d x K).
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "cog/codec.hpp"
#include "cog/errors.hpp"
#include "cog/rng.hpp"

namespace cog {

class StepOutOfRange : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

class EmptyConditionSet : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------------------

enum class ScheduleKind { Cosine, Linear };

struct ScheduleConfig {
    int steps = 200;
    ScheduleKind kind = ScheduleKind::Cosine;
    double cosine_offset = 0.008;
    double beta_max = 0.999;
    double linear_beta_start = 1e-4;
    double linear_beta_end = 0.02;
};

class Schedule {
public:
    /// Cosine: alpha_bar(t) = f(t)/f(0), f(t) = cos^2((t/S + s)/(1 + s) * pi/2),
    /// with each beta clipped to beta_max. Linear: betas evenly spaced.
    explicit Schedule(const ScheduleConfig& config = {});

    int steps() const { return steps_; }
    /// t in [0, S]; alpha_bar(0) = 1. Throws StepOutOfRange.
    double alpha_bar(int t) const;
    /// t in [1, S].
    double beta(int t) const;
    const std::vector<double>& alpha_bars() const { return alpha_bar_; }

private:
    int steps_;
    std::vector<double> alpha_bar_;
};

/// sqrt(ab_t) g0 + sqrt(1 - ab_t) eps. Throws StepOutOfRange.
Latent forward_noise(const Schedule& schedule, const Latent& g0, int t, const Latent& eps);

// ---------------------------------------------------------------------------

/// What a denoiser is conditioned on: the requested components (used by the
/// oracle to form its prompt-consistent set) and their text embedding
/// c = W * bag (used by the learned network).
struct Condition {
    Bag components{};
    Latent embedding;

    static Condition from_bag(const Bag& bag, const Eigen::MatrixXd& text_map);
    bool empty() const;
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    /// Predicted noise for each column of z at step t (0 <= t <= S).
    virtual Eigen::MatrixXd predict_eps(const Eigen::MatrixXd& z, int t, const Condition& cond) const = 0;
    virtual const Schedule& schedule() const = 0;
    virtual int latent_dim() const = 0;
};

// ---------------------------------------------------------------------------
// Closed-form posterior under a Gaussian mixture prior.

struct MixturePosterior {
    Eigen::MatrixXd mean;             // E[g0 | z], d x K
    Eigen::MatrixXd responsibilities;  // n x K, columns sum to 1
};

/// Generic mixture {N(mu_i, sigma^2 I)} with log prior weights, observed
/// through z = sqrt(ab) g0 + sqrt(1 - ab) eps. Responsibilities use
/// log-sum-exp. ab must lie in (0, 1]. Throws EmptyConditionSet when no
/// component has finite weight.
MixturePosterior mixture_posterior(const Eigen::MatrixXd& means, const Eigen::VectorXd& log_weights, double sigma,
                                   double alpha_bar, const Eigen::MatrixXd& z);

/// eps-hat = (z - sqrt(ab) E[g0|z]) / sqrt(1 - ab); zero at ab = 1.
Eigen::MatrixXd eps_from_mean(const Eigen::MatrixXd& z, const Eigen::MatrixXd& mean, double alpha_bar);

enum class OracleWeighting {
    Uniform,      // every spec in S(c) equally likely
    Contrastive,  // weight proportional to exp(cos(c, mu_i) / tau) within S(c)
};

struct OracleConfig {
    OracleWeighting weighting = OracleWeighting::Uniform;
    double tau = 0.1;
};

/// Bayes denoiser for the codec prior restricted to S(c): grammar specs
/// whose component multiset contains every condition component. Mixture
/// noise scale is the dictionary's sigma. Evaluates likelihoods through the
/// dictionary factorisation in single precision, so cost is linear in
/// |S(c)| with a 21-wide inner dimension.
class OracleDenoiser final : public Denoiser {
public:
    OracleDenoiser(const Dictionary& dict, const Schedule& schedule, const OracleConfig& config = {});

    Eigen::MatrixXd predict_eps(const Eigen::MatrixXd& z, int t, const Condition& cond) const override;
    const Schedule& schedule() const override { return schedule_; }
    int latent_dim() const override { return dict_.dim(); }

    /// Indices into enumerate_grammar() of S(c). Throws EmptyConditionSet.
    std::vector<int> consistent_specs(const Bag& components) const;
    /// Posterior over S(c) (responsibility rows follow consistent_specs).
    MixturePosterior posterior(const Eigen::MatrixXd& z, int t, const Condition& cond) const;

private:
    struct Resolved;
    std::shared_ptr<const Resolved> resolve(const Condition& cond) const;
    Eigen::MatrixXf responsibilities_f(const Resolved& r, const Eigen::MatrixXd& z, int t) const;
    Eigen::MatrixXd mean_from(const Resolved& r, const Eigen::MatrixXf& resp, const Eigen::MatrixXd& z, int t) const;

    const Dictionary& dict_;
    Schedule schedule_;
    OracleConfig config_;
    Eigen::MatrixXd counts_;  // specs x V
    Eigen::VectorXd norm2_;   // |mu_i|^2
    // last resolved condition; sampling asks for the same one every step
    mutable std::mutex cache_mutex_;
    mutable std::shared_ptr<const Resolved> cache_;
};

// ---------------------------------------------------------------------------
// Learned epsilon-predictor: input [z, time features, c] -> tanh -> tanh -> eps.

struct DenoiserNetConfig {
    int hidden = 128;
    int time_features = 16;  // sin/cos pairs at geometric frequencies
    double learning_rate = 2e-3;
    int epochs = 60;
    int batch_size = 128;
    int draws_per_example = 4;   // (t, eps) draws per pair per epoch
    double condition_dropout = 0.1;  // share of examples trained with c = 0
    std::uint64_t seed = 11;
};

struct DenoiserExample {
    Latent g0;
    Latent condition;  // text embedding c
};

class LearnedDenoiser final : public Denoiser {
public:
    LearnedDenoiser(const Schedule& schedule, int latent_dim, int cond_dim, const DenoiserNetConfig& config);

    Eigen::MatrixXd predict_eps(const Eigen::MatrixXd& z, int t, const Condition& cond) const override;
    const Schedule& schedule() const override { return schedule_; }

    /// Batched forward pass with per-column steps and conditions.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& z, std::span<const int> t, const Eigen::MatrixXd& c) const;
    Eigen::MatrixXd time_features(std::span<const int> t) const;

    /// Parameters flattened in a fixed order (W1, b1, W2, b2, W3, b3).
    Eigen::VectorXd parameters() const;
    void set_parameters(const Eigen::VectorXd& p);
    std::size_t parameter_count() const;

    /// Mean over columns of |eps - net(z, t, c)|^2 (summed over coordinates),
    /// and its gradient w.r.t. parameters() by backpropagation.
    double loss_and_grad(const Eigen::MatrixXd& z, std::span<const int> t, const Eigen::MatrixXd& c,
                         const Eigen::MatrixXd& eps, Eigen::VectorXd* grad) const;

    int latent_dim() const override { return d_; }
    int cond_dim() const { return m_; }
    const DenoiserNetConfig& config() const { return config_; }

    /// "cog-denoiser v1" text with config, seed and weights.
    std::string serialize() const;
    static LearnedDenoiser deserialize(std::string_view text, const Schedule& schedule);

private:
    Schedule schedule_;
    int d_, m_;
    DenoiserNetConfig config_;
    Eigen::MatrixXd W1_, W2_, W3_;
    Eigen::VectorXd b1_, b2_, b3_;
};

/// Adam on the eps-MSE objective with t uniform on [1, S]. Deterministic
/// given config.seed. epoch_losses, if given, receives the mean training
/// loss per epoch. Throws NonFiniteLoss.
LearnedDenoiser train_denoiser(std::span<const DenoiserExample> data, const Schedule& schedule,
                               const DenoiserNetConfig& config, std::vector<double>* epoch_losses = nullptr);

// ---------------------------------------------------------------------------

enum class Variance {
    Posterior,      // DDPM with the posterior variance beta-tilde
    Deterministic,  // DDIM with eta = 0
};

struct SamplerConfig {
    Variance variance = Variance::Posterior;
};

/// Called after each reverse step with the new step index and the current
/// clean-latent estimate x0-hat (d x K).
using StepObserver = std::function<void(int t, const Eigen::MatrixXd& x0_hat)>;

/// Ancestral sampling for K independent chains, one Rng per column. With
/// `init` (d x K) the columns are re-noised to t_start via forward_noise
/// using each chain's own Rng; otherwise chains start from N(0, I) at
/// t_start. Returns the final latents. t_start = 0 returns init unchanged.
Eigen::MatrixXd sample(const Denoiser& denoiser, const Condition& cond, int t_start, const Eigen::MatrixXd* init,
                       std::span<Rng> rngs, const SamplerConfig& config = {}, const StepObserver& observer = {});

/// Single-chain convenience wrapper.
Latent sample_one(const Denoiser& denoiser, const Condition& cond, int t_start, const Latent* init, Rng& rng,
                  const SamplerConfig& config = {});

}  // namespace cog
