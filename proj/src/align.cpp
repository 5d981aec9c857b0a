// align.cpp

#include "cog/align.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "cog/codec.hpp"
#include "cog/rng.hpp"

namespace cog {

namespace {

constexpr double kMinNorm = 1e-12;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace

std::uint64_t vocab_hash() {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int k = 0; k < kVocabSize; ++k) {
        for (char ch : token_name(k)) {
            h ^= static_cast<unsigned char>(ch);
            h *= 0x100000001b3ULL;
        }
        h ^= 0xff;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string AlignModel::serialize() const {
    std::ostringstream out;
    out << "cog-align v1\n";
    out << "seed " << seed << "\n";
    out << "tau " << fmt(tau) << "\n";
    out << "vocab " << vocab_hash() << "\n";
    out << "shape " << W.rows() << " " << W.cols() << "\n";
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
        for (Eigen::Index c = 0; c < W.cols(); ++c) out << (c ? " " : "") << fmt(W(r, c));
        out << "\n";
    }
    return out.str();
}

AlignModel AlignModel::deserialize(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string magic, version, key;
    in >> magic >> version;
    if (magic != "cog-align" || version != "v1") throw std::runtime_error("not a cog-align v1 file");
    AlignModel m;
    std::uint64_t hash = 0;
    Eigen::Index rows = 0, cols = 0;
    in >> key >> m.seed;
    if (key != "seed") throw std::runtime_error("align file: expected seed");
    in >> key >> m.tau;
    if (key != "tau") throw std::runtime_error("align file: expected tau");
    in >> key >> hash;
    if (key != "vocab") throw std::runtime_error("align file: expected vocab");
    if (hash != vocab_hash()) throw std::runtime_error("align file was written for a different vocabulary");
    in >> key >> rows >> cols;
    if (key != "shape" || !in || rows <= 0 || cols <= 0) throw std::runtime_error("align file: bad shape");
    m.W.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            if (!(in >> m.W(r, c))) throw std::runtime_error("align file: truncated matrix");
        }
    }
    if (!(m.tau > 0) || !m.W.allFinite()) throw std::runtime_error("align file: invalid values");
    return m;
}

LossAndGrad contrastive_loss(const AlignModel& model, std::span<const AlignPair> batch) {
    const auto B = static_cast<Eigen::Index>(batch.size());
    if (B < 2) throw InvalidBatch("contrastive batch needs at least two pairs");
    const Eigen::Index d = model.W.rows();

    Eigen::MatrixXd G(d, B), C(d, B), Bags(model.W.cols(), B);
    Eigen::VectorXd gn(B), cn(B);
    for (Eigen::Index i = 0; i < B; ++i) {
        const auto& p = batch[static_cast<std::size_t>(i)];
        Bags.col(i) = p.bag;
        C.col(i) = model.W * p.bag;
        gn[i] = p.latent.norm();
        cn[i] = C.col(i).norm();
        if (!(gn[i] >= kMinNorm) || !(cn[i] >= kMinNorm)) {
            throw DegenerateEmbedding("embedding norm below 1e-12 at batch index " + std::to_string(i));
        }
        G.col(i) = p.latent / gn[i];
        C.col(i) /= cn[i];
    }
    const Eigen::MatrixXd cos = G.transpose() * C;  // rows: molecules, cols: texts
    const Eigen::MatrixXd logits = cos / model.tau;

    LossAndGrad out;
    Eigen::MatrixXd dlogits(B, B);
    for (Eigen::Index i = 0; i < B; ++i) {
        const double mx = logits.row(i).maxCoeff();
        const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
        const double z = e.sum();
        out.loss += -(logits(i, i) - mx - std::log(z));
        dlogits.row(i) = e / z;
        dlogits(i, i) -= 1.0;
    }
    out.loss /= static_cast<double>(B);
    dlogits /= static_cast<double>(B);

    // cos_ij = ghat_i . chat_j;  d cos_ij / d c_j = (ghat_i - cos_ij chat_j) / |c_j|
    const Eigen::MatrixXd dcos = dlogits / model.tau;
    Eigen::MatrixXd dC(d, B);
    for (Eigen::Index j = 0; j < B; ++j) {
        const double w = dcos.col(j).dot(cos.col(j));
        dC.col(j) = (G * dcos.col(j) - w * C.col(j)) / cn[j];
    }
    out.grad = dC * Bags.transpose();
    return out;
}

AlignModel train_alignment(std::span<const AlignPair> data, AlignModel model, const AlignConfig& config,
                           std::vector<double>* epoch_losses) {
    if (data.size() < 10) throw InvalidBatch("alignment needs at least 10 pairs");
    const std::size_t bs =
        config.batch_size <= 0 ? data.size() : std::min(data.size(), static_cast<std::size_t>(config.batch_size));
    Rng rng(derive_seed(config.seed, 1));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<AlignPair> batch;
    if (epoch_losses) epoch_losses->clear();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with our own RNG so the order is portable
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }
        double total = 0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(order.size(), start + bs);
            if (end - start < 2) continue;
            batch.clear();
            for (std::size_t k = start; k < end; ++k) batch.push_back(data[order[k]]);
            const LossAndGrad lg = contrastive_loss(model, batch);
            if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
                throw NonFiniteLoss("alignment loss became non-finite at epoch " + std::to_string(epoch) +
                                    ", batch starting at " + std::to_string(start) + " (|W| = " +
                                    fmt(model.W.norm()) + ")");
            }
            model.W -= config.learning_rate * lg.grad;
            if (!model.W.allFinite()) {
                throw NonFiniteLoss("alignment weights became non-finite at epoch " + std::to_string(epoch));
            }
            total += lg.loss;
            ++batches;
        }
        if (epoch_losses) epoch_losses->push_back(total / std::max(1, batches));
    }
    return model;
}

AlignModel train_alignment(std::span<const AlignPair> data, const AlignConfig& config,
                           std::vector<double>* epoch_losses) {
    if (data.empty()) throw InvalidBatch("alignment needs at least 10 pairs");
    AlignModel init;
    init.tau = config.tau;
    init.seed = config.seed;
    const Eigen::Index d = data.front().latent.size();
    const Eigen::Index m = data.front().bag.size();
    Rng rng(derive_seed(config.seed, 0));
    init.W.resize(d, m);
    for (Eigen::Index c = 0; c < m; ++c) {
        for (Eigen::Index r = 0; r < d; ++r) init.W(r, c) = config.init_scale * rng.normal();
    }
    return train_alignment(data, std::move(init), config, epoch_losses);
}

double retrieval_top1(const AlignModel& model, std::span<const AlignPair> data) {
    if (data.empty()) return 0.0;
    const auto n = static_cast<Eigen::Index>(data.size());
    Eigen::MatrixXd G(model.W.rows(), n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& g = data[static_cast<std::size_t>(j)].latent;
        G.col(j) = g / std::max(g.norm(), kMinNorm);
    }
    int hits = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd c = model.encode(data[static_cast<std::size_t>(i)].bag);
        const Eigen::VectorXd sims = G.transpose() * c;
        bool best = true;
        for (Eigen::Index j = 0; j < n && best; ++j) {
            if (j != i && sims[j] >= sims[i]) best = false;
        }
        hits += best;
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace cog
