// metrics.cpp

#include "cog/metrics.hpp"

#include <cmath>

namespace cog {

EvalSample EvalSample::make(MolGraph generated, MolGraph reference) {
    const bool ok = validate(generated);
    return {std::move(generated), std::move(reference), ok};
}

ScoredSample score(const EvalSample& s) {
    ScoredSample out;
    out.valid = s.valid;
    out.reference = fingerprint(s.reference);
    if (s.valid) out.generated = fingerprint(s.generated);
    return out;
}

MetricsReport base_proportions(std::span<const ScoredSample> samples, const Thresholds& th) {
    if (samples.empty()) throw EmptySampleSet("base_proportions: no samples");
    std::size_t n_val = 0, n_base = 0, n_qual = 0;
    std::vector<const Fingerprint*> base;
    for (const auto& s : samples) {
        if (!s.valid) continue;
        ++n_val;
        const double f = tanimoto(s.generated, s.reference);
        if (f > th.lower) {
            ++n_base;
            base.push_back(&s.generated);
            if (f < th.upper) ++n_qual;
        }
    }
    double p_dist = 0.0;
    if (base.size() >= 2) {
        double sum = 0.0;
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < base.size(); ++i) {
            for (std::size_t j = i + 1; j < base.size(); ++j) {
                sum += 1.0 - tanimoto(*base[i], *base[j]);
                ++pairs;
            }
        }
        p_dist = sum / static_cast<double>(pairs);
    }
    const double n = static_cast<double>(samples.size());
    return composite(static_cast<double>(n_val) / n, static_cast<double>(n_base) / n, static_cast<double>(n_qual) / n,
                     p_dist);
}

MetricsReport base_proportions(std::span<const EvalSample> samples, const Thresholds& th) {
    std::vector<ScoredSample> scored;
    scored.reserve(samples.size());
    for (const auto& s : samples) scored.push_back(score(s));
    return base_proportions(std::span<const ScoredSample>(scored), th);
}

MetricsReport composite(double p_val, double p_base, double p_qual, double p_dist) {
    MetricsReport r;
    r.p_val = p_val;
    r.p_base = p_base;
    r.p_qual = p_qual;
    r.p_dist = p_dist;
    r.bqi = (p_val + p_base + p_dist + p_qual) / 4.0;
    r.q_cov = p_val * p_qual;
    r.q_nov = p_qual * p_dist;
    return r;
}

namespace {

template <class Op>
MetricsReport fieldwise(const MetricsReport& a, const MetricsReport& b, Op op) {
    return {op(a.p_val, b.p_val), op(a.p_base, b.p_base), op(a.p_qual, b.p_qual), op(a.p_dist, b.p_dist),
            op(a.bqi, b.bqi),     op(a.q_cov, b.q_cov),   op(a.q_nov, b.q_nov)};
}

}  // namespace

MetricsReport aggregate(std::span<const MetricsReport> per_prompt) {
    if (per_prompt.empty()) throw EmptyInput("aggregate: no reports");
    MetricsReport sum{};
    for (const auto& r : per_prompt) sum = fieldwise(sum, r, [](double x, double y) { return x + y; });
    const double n = static_cast<double>(per_prompt.size());
    return fieldwise(sum, sum, [n](double x, double) { return x / n; });
}

MetricsSummary summarize_runs(std::span<const MetricsReport> runs) {
    MetricsSummary s;
    s.mean = aggregate(runs);
    s.runs = static_cast<int>(runs.size());
    if (runs.size() < 2) return s;
    MetricsReport ss{};
    for (const auto& r : runs) {
        ss = fieldwise(ss, fieldwise(r, s.mean, [](double x, double m) { return (x - m) * (x - m); }),
                       [](double x, double y) { return x + y; });
    }
    const double denom = static_cast<double>(runs.size() - 1);
    s.stddev = fieldwise(ss, ss, [denom](double x, double) { return std::sqrt(x / denom); });
    return s;
}

}  // namespace cog
