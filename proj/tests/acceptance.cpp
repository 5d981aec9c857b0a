// Acceptance run: one PASS/FAIL line per criterion.
//
// Exit status is 0 when every criterion passes. Criteria named with
// --expect-fail N are documented as unattainable with this model: they are
// still run and printed, and the exit status requires them to fail (an
// unexpected pass is reported so the list does not go stale).

#include <chrono>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include "cog/harness.hpp"
#include "oracles.hpp"

using namespace cog;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const Dictionary& dict() {
    static const Dictionary d{};
    return d;
}

const Schedule& sched() {
    static const Schedule s{};
    return s;
}

Outcome c1_validity() {
    const auto t0 = Clock::now();
    Rng rng(101);
    int failures = 0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const Latent g = rng.normal_vector(dict().dim()) * (0.5 + 3.0 * rng.uniform());
        try {
            failures += !validate(realize(dict().decode(g)));
        } catch (const std::exception&) {
            ++failures;
        }
    }
    const double secs = seconds_since(t0);
    return {failures == 0 && secs <= 60, fmt("%d failures / %d latents (need 0), %.1f s (limit 60 s)", failures, n, secs)};
}

Outcome c2_roundtrip() {
    const auto t0 = Clock::now();
    int mismatches = 0;
    const auto& all = enumerate_grammar();
    for (const auto& s : all) mismatches += !(dict().decode(dict().mean(s)) == s);
    const double secs = seconds_since(t0);
    return {mismatches == 0 && secs <= 120,
            fmt("%d mismatches over %zu specs at sigma=0 (need 0), %.1f s (limit 120 s)", mismatches, all.size(), secs)};
}

Outcome c3_fingerprint_invariance() {
    std::mt19937_64 rng(303);
    int fp_violations = 0, iso_violations = 0;
    for (int i = 0; i < 1000; ++i) {
        const MolGraph g = oracle::random_valid_graph(rng, 8);
        const auto ref = fingerprint(g);
        for (int k = 0; k < 8; ++k) {
            const auto s = write_smiles(g, oracle::random_permutation(rng, g.atom_count()));
            fp_violations += !(fingerprint(parse_smiles(s)) == ref);
        }
    }
    for (int i = 0; i < 1000; ++i) {
        const MolGraph a = oracle::random_valid_graph(rng, 8);
        const MolGraph b = i % 2 == 0 ? permute_atoms(a, oracle::random_permutation(rng, a.atom_count()))
                                      : oracle::random_valid_graph(rng, 8);
        iso_violations += is_isomorphic(a, b) != oracle::brute_force_isomorphic(a, b);
    }
    return {fp_violations == 0 && iso_violations == 0,
            fmt("%d fingerprint violations over 1000 graphs x 8 orderings, %d isomorphism disagreements over 1000 "
                "pairs (need 0)",
                fp_violations, iso_violations)};
}

Outcome c4_metrics() {
    std::mt19937_64 rng(404);
    double worst = 0;
    int order_violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 40);
        const std::uint64_t ref = rng() & 0xFFFFFF;
        std::vector<ScoredSample> s;
        std::vector<oracle::RawSample> o;
        for (int i = 0; i < n; ++i) {
            std::uint64_t gen = ref;
            const int flips = static_cast<int>(rng() % 8);
            for (int k = 0; k < flips; ++k) gen ^= 1ULL << (rng() % 24);
            const bool valid = rng() % 8 != 0;
            ScoredSample x;
            x.valid = valid;
            x.generated.bits = gen;
            x.reference.bits = ref;
            s.push_back(x);
            o.push_back({valid, gen, ref});
        }
        const auto r = base_proportions(std::span<const ScoredSample>(s));
        const auto b = oracle::brute_force_metrics(o);
        for (double d : {r.p_val - b.p_val, r.p_base - b.p_base, r.p_qual - b.p_qual, r.p_dist - b.p_dist,
                         r.bqi - b.bqi, r.q_cov - b.q_cov, r.q_nov - b.q_nov}) {
            worst = std::max(worst, std::abs(d));
        }
        order_violations += r.p_qual > r.p_base;
    }
    return {worst <= 1e-12 && order_violations == 0,
            fmt("max |diff| %.2e over 100 sets (limit 1e-12), %d cases with p_qual > p_base", worst, order_violations)};
}

Outcome c5_posterior() {
    std::mt19937_64 gen(505);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 1 + trial % 5;
        Eigen::MatrixXd mu(2, n);
        for (int i = 0; i < n; ++i) mu.col(i) << 2.5 + normal(gen), 2.5 + normal(gen);
        std::vector<double> w(static_cast<std::size_t>(n));
        for (auto& x : w) x = 0.2 + unit(gen);
        Eigen::VectorXd lw(n);
        for (int i = 0; i < n; ++i) lw[i] = std::log(w[static_cast<std::size_t>(i)]);
        const double sigma = 0.3 + 0.4 * unit(gen);
        const double ab = 0.3 + 0.5 * unit(gen);
        Eigen::MatrixXd z(2, 1);
        z.col(0) = std::sqrt(ab) * mu.col(trial % n) + std::sqrt(1 - ab) * Eigen::Vector2d(normal(gen), normal(gen));
        const auto exact = mixture_posterior(mu, lw, sigma, ab, z);
        const Eigen::VectorXd mc = oracle::mc_posterior_mean(mu, w, sigma, ab, z.col(0), 100000, gen);
        worst = std::max(worst, (exact.mean.col(0) - mc).norm() / mc.norm());
    }
    return {worst <= 1e-2, fmt("max relative error %.2e over 20 mixtures (limit 1e-2)", worst)};
}

Outcome c6_gradients() {
    Rng rng(606);
    double worst_align = 0;
    for (int point = 0; point < 6; ++point) {
        AlignModel m;
        m.W = Eigen::MatrixXd(6, 5);
        for (Eigen::Index i = 0; i < m.W.size(); ++i) m.W.data()[i] = rng.normal();
        m.tau = 0.1 + 0.5 * rng.uniform();
        std::vector<AlignPair> b;
        for (int i = 0; i < 7; ++i) b.push_back({rng.normal_vector(6), rng.normal_vector(5)});
        const Eigen::MatrixXd analytic = contrastive_loss(m, b).grad;
        Eigen::MatrixXd numeric(m.W.rows(), m.W.cols());
        const double h = 1e-6;
        for (Eigen::Index i = 0; i < m.W.size(); ++i) {
            const double keep = m.W.data()[i];
            m.W.data()[i] = keep + h;
            const double up = contrastive_loss(m, b).loss;
            m.W.data()[i] = keep - h;
            const double down = contrastive_loss(m, b).loss;
            m.W.data()[i] = keep;
            numeric.data()[i] = (up - down) / (2 * h);
        }
        worst_align = std::max(worst_align, (analytic - numeric).norm() / numeric.norm());
    }
    double worst_net = 0;
    for (int point = 0; point < 6; ++point) {
        DenoiserNetConfig cfg;
        cfg.hidden = 12;
        cfg.time_features = 4;
        cfg.seed = 600 + static_cast<std::uint64_t>(point);
        LearnedDenoiser net(sched(), 6, 5, cfg);
        Eigen::VectorXd p = net.parameters();
        for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += 0.3 * rng.normal();
        net.set_parameters(p);
        const int K = 7;
        Eigen::MatrixXd z(6, K), c(5, K), e(6, K);
        std::vector<int> ts;
        for (int k = 0; k < K; ++k) {
            z.col(k) = rng.normal_vector(6);
            c.col(k) = rng.normal_vector(5);
            e.col(k) = rng.normal_vector(6);
            ts.push_back(rng.uniform_int(1, sched().steps()));
        }
        Eigen::VectorXd analytic;
        net.loss_and_grad(z, ts, c, e, &analytic);
        Eigen::VectorXd numeric(p.size());
        const double h = 1e-5;
        for (Eigen::Index i = 0; i < p.size(); ++i) {
            Eigen::VectorXd q = p;
            q[i] += h;
            net.set_parameters(q);
            const double up = net.loss_and_grad(z, ts, c, e, nullptr);
            q[i] -= 2 * h;
            net.set_parameters(q);
            const double down = net.loss_and_grad(z, ts, c, e, nullptr);
            numeric[i] = (up - down) / (2 * h);
        }
        net.set_parameters(p);
        worst_net = std::max(worst_net, (analytic - numeric).norm() / numeric.norm());
    }
    return {worst_align <= 1e-4 && worst_net <= 1e-3,
            fmt("contrastive max rel %.2e (limit 1e-4), denoiser max rel %.2e (limit 1e-3), 6 points each",
                worst_align, worst_net)};
}

Outcome c7_alignment() {
    const auto t0 = Clock::now();
    Rng rng(707);
    const auto& all = enumerate_grammar();
    std::set<int> used;
    std::vector<AlignPair> data;
    while (data.size() < 100) {
        const int k = rng.uniform_int(0, static_cast<int>(all.size()) - 1);
        if (!used.insert(k).second) continue;
        const auto& s = all[static_cast<std::size_t>(k)];
        data.push_back({dict().encode(s, rng), bag_vector(s.tokens())});
    }
    const AlignModel m = train_alignment(data, AlignConfig{});
    const double top1 = retrieval_top1(m, data);
    const double secs = seconds_since(t0);
    return {top1 >= 0.9 && secs <= 60,
            fmt("top-1 retrieval %.2f on 100 pairs (need >= 0.90, chance 0.01), %.1f s (limit 60 s)", top1, secs)};
}

Outcome c8_strategy_order() {
    const auto t0 = Clock::now();
    const RunConfig cfg;  // 200 prompts, K = 20, 3 runs, oracle denoiser
    DatasetConfig dc = cfg.dataset;
    dc.count = cfg.prompts;
    const auto result = run_bench(gen_dataset(dc), cfg);
    const double secs = seconds_since(t0);
    std::map<Strategy, MetricsSummary> by;
    for (const auto& s : result.strategies) by[s.strategy] = s.summary;
    const auto& os = by.at(Strategy::OneShot);
    const auto& c2f = by.at(Strategy::CoarseToFine);
    const auto& f2c = by.at(Strategy::FineToCoarse);
    const auto& nc = by.at(Strategy::NonCumulative);
    const bool order = c2f.mean.bqi > os.mean.bqi && os.mean.bqi > f2c.mean.bqi;
    const bool separated = c2f.mean.bqi - c2f.stddev.bqi > f2c.mean.bqi + f2c.stddev.bqi;
    const bool nc_below = nc.mean.bqi < c2f.mean.bqi;
    return {order && separated && nc_below && secs <= 600,
            fmt("BQI C2F %.2f±%.2f, OneShot %.2f±%.2f, F2C %.2f±%.2f, NC %.2f±%.2f; C2F>OS>F2C %s, C2F/F2C "
                "separated %s, NC<C2F %s, %.0f s (limit 600 s)",
                100 * c2f.mean.bqi, 100 * c2f.stddev.bqi, 100 * os.mean.bqi, 100 * os.stddev.bqi, 100 * f2c.mean.bqi,
                100 * f2c.stddev.bqi, 100 * nc.mean.bqi, 100 * nc.stddev.bqi, order ? "yes" : "no",
                separated ? "yes" : "no", nc_below ? "yes" : "no", secs)};
}

Outcome c9_retention() {
    RunConfig cfg;
    const Pipeline pipe(cfg);
    DatasetConfig dc;
    dc.count = 1000;
    dc.seed = 909;
    const auto data = gen_dataset(dc);
    long kept = 0, total = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        const StagePlan p = plan(data[i].segments, Strategy::CoarseToFine, 0.2);
        const ChainResult r = run_chain(p, pipe.context(cfg), derive_seed(909, i));
        for (std::size_t k = 1; k < r.stage_specs.size(); ++k) {
            ++total;
            kept += r.stage_specs[k].scaffold == r.stage_specs[k - 1].scaffold;
        }
    }
    const double rate = static_cast<double>(kept) / static_cast<double>(total);
    return {rate >= 0.95, fmt("CoarseToFine scaffold kept in %ld/%ld stage transitions over 1000 chains at rho=0.2 "
                              "(%.4f, need >= 0.95)",
                              kept, total, rate)};
}

Outcome c10_trajectory() {
    RunConfig cfg;
    const Pipeline pipe(cfg);
    DatasetConfig dc;
    dc.count = 500;
    dc.seed = 1010;
    dc.min_groups = dc.max_groups = 1;
    dc.min_modifiers = dc.max_modifiers = 1;
    const auto data = gen_dataset(dc);
    int ok = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        ok += trace_run(data[i].prompt, Strategy::CoarseToFine, cfg, derive_seed(1010, i), pipe)
                  .scaffold_before_modifiers();
    }
    const double rate = ok / 500.0;
    return {rate >= 0.8, fmt("scaffold keys first at or before modifier keys in %d/500 traces (%.3f, need >= 0.80)",
                             ok, rate)};
}

Outcome c11_parity() {
    const auto t0 = Clock::now();
    const ParityResult r = denoiser_parity(ParityConfig{}, dict(), sched());
    const double secs = seconds_since(t0);
    return {r.ratio() <= 1.1 && secs <= 300,
            fmt("held-out eps-MSE learned %.4f vs oracle %.4f, ratio %.3f (limit 1.1), %.0f s (limit 300 s)",
                r.learned_mse, r.oracle_mse, r.ratio(), secs)};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> expect_fail, only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--expect-fail") == 0 && i + 1 < argc) {
            expect_fail.insert(std::atoi(argv[++i]));
        } else if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            only.insert(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: acceptance [--only N]... [--expect-fail N]...\n");
            return 2;
        }
    }
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"validity invariance", c1_validity},
        {"codec round trip", c2_roundtrip},
        {"fingerprint invariance", c3_fingerprint_invariance},
        {"metrics oracle equivalence", c4_metrics},
        {"oracle denoiser vs Monte Carlo", c5_posterior},
        {"gradient checks", c6_gradients},
        {"alignment efficacy", c7_alignment},
        {"strategy ordering", c8_strategy_order},
        {"warm-start retention", c9_retention},
        {"trajectory ordering", c10_trajectory},
        {"learned denoiser parity", c11_parity},
    };
    int unexpected = 0, passed = 0, run = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(id)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        ++run;
        passed += o.pass;
        const bool known = expect_fail.count(id) > 0;
        const char* note = "";
        if (o.pass && known) note = " [unexpected pass]";
        if (!o.pass && known) note = " [known failure, documented]";
        unexpected += o.pass == known;
        std::printf("%s C%d %s: %s%s\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first, o.detail.c_str(), note);
        std::fflush(stdout);
    }
    std::printf("%d/%d criteria passed\n", passed, run);
    return unexpected == 0 ? 0 : 1;
}
