// diffusion.cpp

#include "cog/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <sstream>

namespace cog {

// ---------------------------------------------------------------------------
// Schedule

Schedule::Schedule(const ScheduleConfig& config) : steps_(config.steps) {
    if (steps_ < 1) throw std::invalid_argument("schedule needs at least one step");
    alpha_bar_.assign(static_cast<std::size_t>(steps_) + 1, 1.0);
    const double S = steps_;
    auto f = [&](double t) {
        const double x = (t / S + config.cosine_offset) / (1.0 + config.cosine_offset) * std::numbers::pi / 2;
        return std::cos(x) * std::cos(x);
    };
    for (int t = 1; t <= steps_; ++t) {
        double beta;
        if (config.kind == ScheduleKind::Cosine) {
            beta = 1.0 - f(t) / f(t - 1);
        } else {
            beta = steps_ == 1 ? config.linear_beta_start
                               : config.linear_beta_start +
                                     (config.linear_beta_end - config.linear_beta_start) * (t - 1) / (S - 1);
        }
        beta = std::clamp(beta, 0.0, config.beta_max);
        alpha_bar_[static_cast<std::size_t>(t)] = alpha_bar_[static_cast<std::size_t>(t) - 1] * (1.0 - beta);
    }
}

double Schedule::alpha_bar(int t) const {
    if (t < 0 || t > steps_) throw StepOutOfRange("step " + std::to_string(t) + " outside [0, " + std::to_string(steps_) + "]");
    return alpha_bar_[static_cast<std::size_t>(t)];
}

double Schedule::beta(int t) const {
    if (t < 1 || t > steps_) throw StepOutOfRange("beta index " + std::to_string(t) + " outside [1, " + std::to_string(steps_) + "]");
    return 1.0 - alpha_bar_[static_cast<std::size_t>(t)] / alpha_bar_[static_cast<std::size_t>(t) - 1];
}

Latent forward_noise(const Schedule& schedule, const Latent& g0, int t, const Latent& eps) {
    const double ab = schedule.alpha_bar(t);
    return std::sqrt(ab) * g0 + std::sqrt(1.0 - ab) * eps;
}

// ---------------------------------------------------------------------------
// Conditions

Condition Condition::from_bag(const Bag& bag, const Eigen::MatrixXd& text_map) {
    Condition c;
    c.components = bag;
    Eigen::VectorXd b(kVocabSize);
    for (int k = 0; k < kVocabSize; ++k) b[k] = bag[static_cast<std::size_t>(k)];
    c.embedding = text_map * b;
    return c;
}

bool Condition::empty() const {
    return std::all_of(components.begin(), components.end(), [](int n) { return n == 0; });
}

// ---------------------------------------------------------------------------
// Mixture posterior

namespace {

// Column-wise softmax of logits in place; columns whose maximum is -inf are
// left as NaN and reported by the caller.
void softmax_columns(Eigen::MatrixXd& L) {
    for (Eigen::Index k = 0; k < L.cols(); ++k) {
        auto col = L.col(k);
        const double mx = col.maxCoeff();
        col = (col.array() - mx).exp().matrix();
        col /= col.sum();
    }
}

}  // namespace

MixturePosterior mixture_posterior(const Eigen::MatrixXd& means, const Eigen::VectorXd& log_weights, double sigma,
                                   double alpha_bar, const Eigen::MatrixXd& z) {
    const Eigen::Index n = means.cols();
    if (n == 0 || log_weights.size() != n || !(log_weights.maxCoeff() > -std::numeric_limits<double>::infinity())) {
        throw EmptyConditionSet("mixture has no component with finite weight");
    }
    if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw std::invalid_argument("alpha_bar must lie in (0, 1]");
    const double sab = std::sqrt(alpha_bar);
    const double v = alpha_bar * sigma * sigma + (1.0 - alpha_bar);
    MixturePosterior out;
    Eigen::MatrixXd L(n, z.cols());
    for (Eigen::Index k = 0; k < z.cols(); ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            L(i, k) = log_weights[i] - (z.col(k) - sab * means.col(i)).squaredNorm() / (2.0 * v);
        }
    }
    softmax_columns(L);
    // E[g0 | z, i] = mu_i + (sigma^2 sqrt(ab) / v) (z - sqrt(ab) mu_i)
    const double gain = v > 0 ? sigma * sigma * sab / v : 0.0;
    const Eigen::MatrixXd mubar = means * L;
    out.mean = (1.0 - gain * sab) * mubar + gain * z;
    out.responsibilities = std::move(L);
    return out;
}

Eigen::MatrixXd eps_from_mean(const Eigen::MatrixXd& z, const Eigen::MatrixXd& mean, double alpha_bar) {
    if (alpha_bar >= 1.0) return Eigen::MatrixXd::Zero(z.rows(), z.cols());
    return (z - std::sqrt(alpha_bar) * mean) / std::sqrt(1.0 - alpha_bar);
}

// ---------------------------------------------------------------------------
// Oracle

struct OracleDenoiser::Resolved {
    Bag key{};
    Latent embedding;
    std::vector<int> index;
    Eigen::MatrixXf counts;  // |S| x V
    Eigen::VectorXf norm2;
    Eigen::VectorXf log_weight;
};

OracleDenoiser::OracleDenoiser(const Dictionary& dict, const Schedule& schedule, const OracleConfig& config)
    : dict_(dict), schedule_(schedule), config_(config) {
    const auto& all = enumerate_grammar();
    counts_.resize(static_cast<Eigen::Index>(all.size()), kVocabSize);
    norm2_.resize(static_cast<Eigen::Index>(all.size()));
    for (std::size_t i = 0; i < all.size(); ++i) {
        const Bag b = all[i].bag();
        for (int k = 0; k < kVocabSize; ++k) counts_(static_cast<Eigen::Index>(i), k) = b[static_cast<std::size_t>(k)];
        norm2_[static_cast<Eigen::Index>(i)] = dict.mean(b).squaredNorm();
    }
}

std::vector<int> OracleDenoiser::consistent_specs(const Bag& components) const {
    std::vector<int> out;
    for (Eigen::Index i = 0; i < counts_.rows(); ++i) {
        bool ok = true;
        for (int k = 0; k < kVocabSize && ok; ++k) ok = counts_(i, k) >= components[static_cast<std::size_t>(k)];
        if (ok) out.push_back(static_cast<int>(i));
    }
    if (out.empty()) throw EmptyConditionSet("no grammar spec contains the condition components");
    return out;
}

std::shared_ptr<const OracleDenoiser::Resolved> OracleDenoiser::resolve(const Condition& cond) const {
    const bool weighted = config_.weighting == OracleWeighting::Contrastive;
    {
        std::lock_guard lock(cache_mutex_);
        if (cache_ && cache_->key == cond.components &&
            (!weighted || (cache_->embedding.size() == cond.embedding.size() && cache_->embedding == cond.embedding))) {
            return cache_;
        }
    }
    auto made = std::make_shared<Resolved>();
    Resolved& r = *made;
    r.key = cond.components;
    if (weighted) r.embedding = cond.embedding;
    r.index = consistent_specs(cond.components);
    const auto n = static_cast<Eigen::Index>(r.index.size());
    r.counts.resize(n, kVocabSize);
    r.norm2.resize(n);
    r.log_weight = Eigen::VectorXf::Zero(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto i = r.index[static_cast<std::size_t>(j)];
        r.counts.row(j) = counts_.row(i).cast<float>();
        r.norm2[j] = static_cast<float>(norm2_[i]);
    }
    if (weighted && cond.embedding.size() == dict_.dim() && cond.embedding.norm() > 1e-12) {
        const Eigen::VectorXd proj = dict_.embeddings().transpose() * (cond.embedding / cond.embedding.norm());
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto i = r.index[static_cast<std::size_t>(j)];
            r.log_weight[j] = static_cast<float>(counts_.row(i).dot(proj) / std::sqrt(norm2_[i]) / config_.tau);
        }
    }
    std::lock_guard lock(cache_mutex_);
    cache_ = made;
    return made;
}

Eigen::MatrixXf OracleDenoiser::responsibilities_f(const Resolved& r, const Eigen::MatrixXd& z, int t) const {
    const double ab = schedule_.alpha_bar(t);
    const double sigma = dict_.sigma();
    const double v = ab * sigma * sigma + (1.0 - ab);

    // |z - sqrt(ab) mu_i|^2 = |z|^2 - 2 sqrt(ab) n_i.(E^T z) + ab |mu_i|^2; the
    // first term is common to every component and drops out of the softmax.
    // Single precision keeps the two |S| x K products and the exponentials
    // cheap; logits carry an absolute error of about 1e-3 nats.
    const Eigen::MatrixXf dots = ((std::sqrt(ab) / v) * (dict_.embeddings().transpose() * z)).cast<float>();
    Eigen::MatrixXf L(r.counts.rows(), z.cols());
    L.noalias() = r.counts * dots;
    L.colwise() += r.log_weight - static_cast<float>(ab / (2.0 * v)) * r.norm2;
    for (Eigen::Index k = 0; k < L.cols(); ++k) {
        auto col = L.col(k);
        const float mx = col.maxCoeff();
        col = (col.array() - mx).exp().matrix();
        col /= col.sum();
    }
    return L;
}

Eigen::MatrixXd OracleDenoiser::mean_from(const Resolved& r, const Eigen::MatrixXf& resp, const Eigen::MatrixXd& z,
                                          int t) const {
    const double ab = schedule_.alpha_bar(t);
    const double sigma = dict_.sigma();
    const double sab = std::sqrt(ab);
    const double v = ab * sigma * sigma + (1.0 - ab);
    const double gain = v > 0 ? sigma * sigma * sab / v : 0.0;
    Eigen::MatrixXf expected(kVocabSize, z.cols());
    expected.noalias() = r.counts.transpose() * resp;
    const Eigen::MatrixXd mubar = dict_.embeddings() * expected.cast<double>();
    return (1.0 - gain * sab) * mubar + gain * z;
}

MixturePosterior OracleDenoiser::posterior(const Eigen::MatrixXd& z, int t, const Condition& cond) const {
    const auto resolved = resolve(cond);
    const Eigen::MatrixXf resp = responsibilities_f(*resolved, z, t);
    MixturePosterior out;
    out.mean = mean_from(*resolved, resp, z, t);
    out.responsibilities = resp.cast<double>();
    for (Eigen::Index k = 0; k < z.cols(); ++k) out.responsibilities.col(k) /= out.responsibilities.col(k).sum();
    return out;
}

Eigen::MatrixXd OracleDenoiser::predict_eps(const Eigen::MatrixXd& z, int t, const Condition& cond) const {
    if (t == 0) {
        schedule_.alpha_bar(0);
        return Eigen::MatrixXd::Zero(z.rows(), z.cols());
    }
    const auto resolved = resolve(cond);
    const Eigen::MatrixXd mean = mean_from(*resolved, responsibilities_f(*resolved, z, t), z, t);
    return eps_from_mean(z, mean, schedule_.alpha_bar(t));
}

// ---------------------------------------------------------------------------
// Learned denoiser

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void fill_normal(Eigen::MatrixXd& m, double scale, Rng& rng) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = scale * rng.normal();
    }
}

}  // namespace

LearnedDenoiser::LearnedDenoiser(const Schedule& schedule, int latent_dim, int cond_dim,
                                 const DenoiserNetConfig& config)
    : schedule_(schedule), d_(latent_dim), m_(cond_dim), config_(config) {
    if (config.time_features % 2 != 0 || config.time_features < 2) {
        throw std::invalid_argument("time_features must be a positive even number");
    }
    const int in = d_ + config.time_features + m_;
    const int h = config.hidden;
    Rng rng(derive_seed(config.seed, 0));
    W1_.resize(h, in);
    W2_.resize(h, h);
    W3_.resize(d_, h);
    fill_normal(W1_, 1.0 / std::sqrt(in), rng);
    fill_normal(W2_, 1.0 / std::sqrt(h), rng);
    fill_normal(W3_, 0.1 / std::sqrt(h), rng);
    b1_ = Eigen::VectorXd::Zero(h);
    b2_ = Eigen::VectorXd::Zero(h);
    b3_ = Eigen::VectorXd::Zero(d_);
}

Eigen::MatrixXd LearnedDenoiser::time_features(std::span<const int> t) const {
    const int half = config_.time_features / 2;
    Eigen::MatrixXd f(config_.time_features, static_cast<Eigen::Index>(t.size()));
    for (std::size_t k = 0; k < t.size(); ++k) {
        const double x = static_cast<double>(t[k]) / schedule_.steps();
        for (int j = 0; j < half; ++j) {
            // periods from 4 schedule lengths down to a few steps
            const double w = std::numbers::pi / 2 * std::pow(2.0, j * 7.0 / std::max(1, half - 1));
            f(j, static_cast<Eigen::Index>(k)) = std::sin(w * x);
            f(half + j, static_cast<Eigen::Index>(k)) = std::cos(w * x);
        }
    }
    return f;
}

namespace {

struct Activations {
    Eigen::MatrixXd x, h1, h2, out;
};

}  // namespace

static Activations run_forward(const Eigen::MatrixXd& W1, const Eigen::VectorXd& b1, const Eigen::MatrixXd& W2,
                               const Eigen::VectorXd& b2, const Eigen::MatrixXd& W3, const Eigen::VectorXd& b3,
                               Eigen::MatrixXd x) {
    Activations a;
    a.x = std::move(x);
    a.h1 = ((W1 * a.x).colwise() + b1).array().tanh().matrix();
    a.h2 = ((W2 * a.h1).colwise() + b2).array().tanh().matrix();
    a.out = (W3 * a.h2).colwise() + b3;
    return a;
}

Eigen::MatrixXd LearnedDenoiser::forward(const Eigen::MatrixXd& z, std::span<const int> t,
                                         const Eigen::MatrixXd& c) const {
    const Eigen::Index K = z.cols();
    if (static_cast<Eigen::Index>(t.size()) != K || c.cols() != K || z.rows() != d_ || c.rows() != m_) {
        throw std::invalid_argument("denoiser input shapes disagree");
    }
    Eigen::MatrixXd x(d_ + config_.time_features + m_, K);
    x.topRows(d_) = z;
    x.middleRows(d_, config_.time_features) = time_features(t);
    x.bottomRows(m_) = c;
    return run_forward(W1_, b1_, W2_, b2_, W3_, b3_, std::move(x)).out;
}

Eigen::MatrixXd LearnedDenoiser::predict_eps(const Eigen::MatrixXd& z, int t, const Condition& cond) const {
    schedule_.alpha_bar(t);
    if (t == 0) return Eigen::MatrixXd::Zero(z.rows(), z.cols());
    std::vector<int> ts(static_cast<std::size_t>(z.cols()), t);
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m_, z.cols());
    if (cond.embedding.size() == m_) c.colwise() = cond.embedding;
    return forward(z, ts, c);
}

std::size_t LearnedDenoiser::parameter_count() const {
    return static_cast<std::size_t>(W1_.size() + b1_.size() + W2_.size() + b2_.size() + W3_.size() + b3_.size());
}

Eigen::VectorXd LearnedDenoiser::parameters() const {
    Eigen::VectorXd p(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index o = 0;
    auto put = [&](const auto& m) {
        p.segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        o += m.size();
    };
    put(W1_);
    put(b1_);
    put(W2_);
    put(b2_);
    put(W3_);
    put(b3_);
    return p;
}

void LearnedDenoiser::set_parameters(const Eigen::VectorXd& p) {
    if (p.size() != static_cast<Eigen::Index>(parameter_count())) throw std::invalid_argument("parameter count mismatch");
    Eigen::Index o = 0;
    auto get = [&](auto& m) {
        Eigen::Map<Eigen::VectorXd>(m.data(), m.size()) = p.segment(o, m.size());
        o += m.size();
    };
    get(W1_);
    get(b1_);
    get(W2_);
    get(b2_);
    get(W3_);
    get(b3_);
}

double LearnedDenoiser::loss_and_grad(const Eigen::MatrixXd& z, std::span<const int> t, const Eigen::MatrixXd& c,
                                      const Eigen::MatrixXd& eps, Eigen::VectorXd* grad) const {
    const Eigen::Index K = z.cols();
    Eigen::MatrixXd x(d_ + config_.time_features + m_, K);
    x.topRows(d_) = z;
    x.middleRows(d_, config_.time_features) = time_features(t);
    x.bottomRows(m_) = c;
    const Activations a = run_forward(W1_, b1_, W2_, b2_, W3_, b3_, std::move(x));
    const Eigen::MatrixXd diff = a.out - eps;
    const double loss = diff.squaredNorm() / static_cast<double>(K);
    if (!grad) return loss;

    const Eigen::MatrixXd d_out = (2.0 / static_cast<double>(K)) * diff;
    const Eigen::MatrixXd gW3 = d_out * a.h2.transpose();
    const Eigen::VectorXd gb3 = d_out.rowwise().sum();
    const Eigen::MatrixXd d_h2 = ((W3_.transpose() * d_out).array() * (1.0 - a.h2.array().square())).matrix();
    const Eigen::MatrixXd gW2 = d_h2 * a.h1.transpose();
    const Eigen::VectorXd gb2 = d_h2.rowwise().sum();
    const Eigen::MatrixXd d_h1 = ((W2_.transpose() * d_h2).array() * (1.0 - a.h1.array().square())).matrix();
    const Eigen::MatrixXd gW1 = d_h1 * a.x.transpose();
    const Eigen::VectorXd gb1 = d_h1.rowwise().sum();

    grad->resize(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index o = 0;
    auto put = [&](const auto& m) {
        grad->segment(o, m.size()) = Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
        o += m.size();
    };
    put(gW1);
    put(gb1);
    put(gW2);
    put(gb2);
    put(gW3);
    put(gb3);
    return loss;
}

std::string LearnedDenoiser::serialize() const {
    std::ostringstream out;
    out << "cog-denoiser v1\n";
    out << "dims " << d_ << " " << m_ << " " << config_.hidden << " " << config_.time_features << "\n";
    out << "seed " << config_.seed << "\n";
    out << "steps " << schedule_.steps() << "\n";
    const Eigen::VectorXd p = parameters();
    out << "params " << p.size() << "\n";
    for (Eigen::Index i = 0; i < p.size(); ++i) out << fmt(p[i]) << "\n";
    return out.str();
}

LearnedDenoiser LearnedDenoiser::deserialize(std::string_view text, const Schedule& schedule) {
    std::istringstream in{std::string(text)};
    std::string magic, version, key;
    in >> magic >> version;
    if (magic != "cog-denoiser" || version != "v1") throw std::runtime_error("not a cog-denoiser v1 file");
    DenoiserNetConfig cfg;
    int d = 0, m = 0, steps = 0;
    Eigen::Index n = 0;
    in >> key >> d >> m >> cfg.hidden >> cfg.time_features;
    if (key != "dims") throw std::runtime_error("denoiser file: expected dims");
    in >> key >> cfg.seed;
    if (key != "seed") throw std::runtime_error("denoiser file: expected seed");
    in >> key >> steps;
    if (key != "steps") throw std::runtime_error("denoiser file: expected steps");
    if (steps != schedule.steps()) throw std::runtime_error("denoiser file was trained for a different schedule");
    in >> key >> n;
    if (key != "params" || !in) throw std::runtime_error("denoiser file: expected params");
    LearnedDenoiser net(schedule, d, m, cfg);
    if (n != static_cast<Eigen::Index>(net.parameter_count())) throw std::runtime_error("denoiser file: size mismatch");
    Eigen::VectorXd p(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (!(in >> p[i])) throw std::runtime_error("denoiser file: truncated parameters");
    }
    net.set_parameters(p);
    return net;
}

LearnedDenoiser train_denoiser(std::span<const DenoiserExample> data, const Schedule& schedule,
                               const DenoiserNetConfig& config, std::vector<double>* epoch_losses) {
    if (data.empty()) throw std::invalid_argument("train_denoiser needs data");
    const int d = static_cast<int>(data.front().g0.size());
    const int m = static_cast<int>(data.front().condition.size());
    LearnedDenoiser net(schedule, d, m, config);
    Rng rng(derive_seed(config.seed, 1));

    Eigen::VectorXd p = net.parameters();
    Eigen::VectorXd mom = Eigen::VectorXd::Zero(p.size()), var = Eigen::VectorXd::Zero(p.size());
    const double b1 = 0.9, b2 = 0.999, adam_eps = 1e-8;
    long step = 0;

    const std::size_t total = data.size() * static_cast<std::size_t>(std::max(1, config.draws_per_example));
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i % data.size();
    const auto bs = static_cast<std::size_t>(std::max(1, config.batch_size));
    const long total_steps = static_cast<long>(config.epochs) * static_cast<long>((total + bs - 1) / bs);
    if (epoch_losses) epoch_losses->clear();

    Eigen::MatrixXd z, c, eps;
    std::vector<int> ts;
    Eigen::VectorXd grad;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double sum = 0;
        long batches = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            const auto K = static_cast<Eigen::Index>(end - start);
            z.resize(d, K);
            c.resize(m, K);
            eps.resize(d, K);
            ts.resize(static_cast<std::size_t>(K));
            for (Eigen::Index k = 0; k < K; ++k) {
                const auto& ex = data[order[start + static_cast<std::size_t>(k)]];
                const int t = rng.uniform_int(1, schedule.steps());
                ts[static_cast<std::size_t>(k)] = t;
                eps.col(k) = rng.normal_vector(d);
                z.col(k) = forward_noise(schedule, ex.g0, t, eps.col(k));
                if (rng.uniform() < config.condition_dropout) c.col(k).setZero();
                else c.col(k) = ex.condition;
            }
            const double loss = net.loss_and_grad(z, ts, c, eps, &grad);
            if (!std::isfinite(loss) || !grad.allFinite()) {
                throw NonFiniteLoss("denoiser loss became non-finite at epoch " + std::to_string(epoch));
            }
            ++step;
            // cosine decay to 5% of the base rate
            const double progress = static_cast<double>(step) / static_cast<double>(std::max(1L, total_steps));
            const double lr = config.learning_rate * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
            mom = b1 * mom + (1 - b1) * grad;
            var = b2 * var + (1 - b2) * grad.cwiseAbs2();
            const double c1 = 1 - std::pow(b1, static_cast<double>(step));
            const double c2 = 1 - std::pow(b2, static_cast<double>(step));
            p.array() -= lr * (mom.array() / c1) / ((var.array() / c2).sqrt() + adam_eps);
            net.set_parameters(p);
            sum += loss;
            ++batches;
        }
        if (epoch_losses) epoch_losses->push_back(sum / static_cast<double>(std::max(1L, batches)));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Sampler

Eigen::MatrixXd sample(const Denoiser& denoiser, const Condition& cond, int t_start, const Eigen::MatrixXd* init,
                       std::span<Rng> rngs, const SamplerConfig& config, const StepObserver& observer) {
    const Schedule& sch = denoiser.schedule();
    sch.alpha_bar(t_start);
    const auto K = static_cast<Eigen::Index>(rngs.size());
    const Eigen::Index d = denoiser.latent_dim();
    if (init && (init->cols() != K || init->rows() != d)) throw std::invalid_argument("init has the wrong shape");
    if (t_start == 0) {
        if (init) return *init;
        return Eigen::MatrixXd::Zero(d, K);
    }
    Eigen::MatrixXd z(d, K);
    for (Eigen::Index k = 0; k < K; ++k) {
        Rng& r = rngs[static_cast<std::size_t>(k)];
        const Eigen::VectorXd e = r.normal_vector(d);
        z.col(k) = init ? forward_noise(sch, init->col(k), t_start, e) : e;
    }

    for (int t = t_start; t >= 1; --t) {
        const double ab = sch.alpha_bar(t);
        const double ab_prev = sch.alpha_bar(t - 1);
        const Eigen::MatrixXd eps = denoiser.predict_eps(z, t, cond);
        const Eigen::MatrixXd x0 = (z - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
        if (config.variance == Variance::Deterministic) {
            z = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
        } else {
            const double beta = 1.0 - ab / ab_prev;
            const double c0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
            const double ct = std::sqrt(1.0 - beta) * (1.0 - ab_prev) / (1.0 - ab);
            const double var = beta * (1.0 - ab_prev) / (1.0 - ab);
            z = c0 * x0 + ct * z;
            if (var > 0) {
                const double sd = std::sqrt(var);
                for (Eigen::Index k = 0; k < K; ++k) z.col(k) += sd * rngs[static_cast<std::size_t>(k)].normal_vector(d);
            }
        }
        if (observer) observer(t - 1, x0);
    }
    return z;
}

Latent sample_one(const Denoiser& denoiser, const Condition& cond, int t_start, const Latent* init, Rng& rng,
                  const SamplerConfig& config) {
    Eigen::MatrixXd init_m;
    if (init) init_m = *init;
    return sample(denoiser, cond, t_start, init ? &init_m : nullptr, std::span<Rng>(&rng, 1), config).col(0);
}

}  // namespace cog
