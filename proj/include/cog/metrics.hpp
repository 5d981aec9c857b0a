// metrics.hpp
// Fidelity/diversity proportions and composite scores for generated molecules.
#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "cog/fingerprint.hpp"
#include "cog/molgraph.hpp"

namespace cog {

class EmptySampleSet : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EmptyInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct EvalSample {
    MolGraph generated;
    MolGraph reference;
    bool valid = false;

    /// Fills `valid` from validate(generated).
    static EvalSample make(MolGraph generated, MolGraph reference);
};

/// Fingerprint-level sample; `generated` is meaningless when !valid.
struct ScoredSample {
    bool valid = false;
    Fingerprint generated;
    Fingerprint reference;
};

ScoredSample score(const EvalSample& s);

// Fidelity thresholds: base set f > lower, qualified f in (lower, upper).
struct Thresholds {
    double lower = 0.5;
    double upper = 0.8;
};

struct MetricsReport {
    double p_val = 0;
    double p_base = 0;
    double p_qual = 0;
    double p_dist = 0;
    double bqi = 0;
    double q_cov = 0;
    double q_nov = 0;
};

/// Returns a report with the four proportions set and composites filled in.
/// Invalid samples count against p_val and never enter the fidelity sets.
/// p_dist averages 1 - f over unordered pairs of the base set and is 0 when
/// fewer than two samples pass. Throws EmptySampleSet.
MetricsReport base_proportions(std::span<const ScoredSample> samples, const Thresholds& th = {});
MetricsReport base_proportions(std::span<const EvalSample> samples, const Thresholds& th = {});

/// bqi = mean of the four proportions, q_cov = p_val*p_qual, q_nov = p_qual*p_dist.
MetricsReport composite(double p_val, double p_base, double p_qual, double p_dist);

/// Field-wise unweighted mean. Throws EmptyInput.
MetricsReport aggregate(std::span<const MetricsReport> per_prompt);

/// Field-wise mean and sample standard deviation across independent runs
/// (std is 0 for a single run). Throws EmptyInput.
struct MetricsSummary {
    MetricsReport mean;
    MetricsReport stddev;
    int runs = 0;
};
MetricsSummary summarize_runs(std::span<const MetricsReport> runs);

/// Visits the seven fields in declaration order with their column names.
template <class F>
void for_each_field(const MetricsReport& r, F&& f) {
    f("p_val", r.p_val);
    f("p_base", r.p_base);
    f("p_qual", r.p_qual);
    f("p_dist", r.p_dist);
    f("bqi", r.bqi);
    f("q_cov", r.q_cov);
    f("q_nov", r.q_nov);
}

}  // namespace cog
