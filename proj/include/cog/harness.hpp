// harness.hpp
// Synthetic prompt datasets, strategy benchmarks, trajectory traces and the
// reporting around them.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cog/align.hpp"
#include "cog/codec.hpp"
#include "cog/cogengine.hpp"
#include "cog/diffusion.hpp"
#include "cog/metrics.hpp"

namespace cog {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The report recomputed from the raw sample log disagrees with the one
/// about to be written.
class VerificationFailed : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Datasets

struct DatasetConfig {
    std::uint64_t seed = 2024;
    int count = 200;
    int min_groups = 1;
    int max_groups = 2;
    int min_modifiers = 0;
    int max_modifiers = 2;
};

struct DatasetRecord {
    MotifSpec spec;
    std::string prompt;
    std::vector<PromptSegment> segments;
    MolGraph reference;
};

/// Surface prompt for a spec. Each component class has four phrasings and
/// the choice is drawn from rng.
std::string render_prompt(const MotifSpec& spec, Rng& rng);

/// Record i draws its spec uniformly from the grammar specs within the
/// group and modifier limits, and its phrasing, from
/// Rng(derive_seed(seed, i)). Throws ConfigError for empty ranges.
std::vector<DatasetRecord> gen_dataset(const DatasetConfig& config);

/// One JSON object per line: index, spec, prompt, reference SMILES.
void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records);
/// Reads write_dataset output (or any lines with a "prompt" field; the spec
/// is then recovered by segmentation). Throws ConfigError.
std::vector<DatasetRecord> read_dataset(std::istream& in);

// ---------------------------------------------------------------------------
// Run configuration (JSON, schema_version 1)

enum class DenoiserKind { Oracle, Learned };

struct RunConfig {
    std::uint64_t seed = 7;
    int prompts = 200;
    int samples_per_prompt = 20;
    int runs = 3;
    std::vector<Strategy> strategies{kAllStrategies.begin(), kAllStrategies.end()};
    double rho = 0.2;
    DatasetConfig dataset{};
    ScheduleConfig schedule{};
    CodecConfig codec{};
    DenoiserKind denoiser = DenoiserKind::Oracle;
    OracleConfig oracle{};
    std::string denoiser_weights;  // LearnedDenoiser file, for DenoiserKind::Learned
    std::string align_weights;     // AlignModel file; empty means the identity text map
    SamplerConfig sampler{};
    Thresholds thresholds{};
    int checkpoint_every = 10;  // trace checkpoints: steps divisible by this
    int threads = 0;            // 0 = hardware concurrency

    static constexpr int kSchemaVersion = 1;

    /// Unknown keys and a different schema_version throw ConfigError.
    static RunConfig from_json(std::string_view text);
    std::string to_json() const;
    /// Throws ConfigError.
    void validate() const;
};

RunConfig load_config(const std::string& path);

/// Dictionary, schedule, denoiser and alignment built from a RunConfig.
struct Pipeline {
    Dictionary dictionary;
    Schedule schedule;
    AlignModel align;
    std::unique_ptr<Denoiser> denoiser;

    explicit Pipeline(const RunConfig& config);
    // the denoiser refers to the dictionary member
    Pipeline(const Pipeline&) = delete;
    Pipeline& operator=(const Pipeline&) = delete;
    ChainContext context(const RunConfig& config) const;
};

// ---------------------------------------------------------------------------
// Benchmarks

/// One generated sample. Seeds follow
///   derive_seed(derive_seed(derive_seed(config.seed, run), prompt), sample)
/// and are shared across strategies (common random numbers).
struct SampleRecord {
    int run = 0;
    int prompt = 0;
    Strategy strategy = Strategy::OneShot;
    int sample = 0;
    std::uint64_t seed = 0;
    std::string spec;
    std::string smiles;
    bool valid = false;
    std::uint64_t generated_fp = 0;
    std::uint64_t reference_fp = 0;
    double fidelity = 0;
    // scaffold of each stage's decoded latent, in stage order
    std::vector<int> stage_scaffolds;
};

struct StrategyResult {
    Strategy strategy = Strategy::OneShot;
    std::vector<MetricsReport> per_run;  // unweighted mean over prompts
    MetricsSummary summary;
};

struct BenchResult {
    std::vector<StrategyResult> strategies;
    std::vector<SampleRecord> samples;  // ordered by run, strategy, prompt, sample
};

struct BenchOptions {
    std::ostream* raw_log = nullptr;  // JSONL, written after each completed run
};

/// Every strategy in config.strategies on every record, runs x K samples per
/// prompt. Runs verify_report before returning.
BenchResult run_bench(const std::vector<DatasetRecord>& dataset, const RunConfig& config,
                      const BenchOptions& options = {});

/// Independent recomputation of every report from the sample log; throws
/// VerificationFailed on any field differing by more than 1e-12.
void verify_report(const BenchResult& result, const Thresholds& thresholds, int prompts);

void write_csv(std::ostream& out, const BenchResult& result);
/// Table with mean ± std in percent, one row per strategy.
void write_markdown(std::ostream& out, const BenchResult& result);
void write_sample_log(std::ostream& out, const std::vector<SampleRecord>& samples);
std::string sample_to_json(const SampleRecord& s);

/// Fraction of stage transitions (over all chains and stages) that keep the
/// previous stage's scaffold. Returns 1 when no sample has two stages.
double scaffold_retention(const std::vector<SampleRecord>& samples);

// ---------------------------------------------------------------------------
// Traces

struct ComponentAppearance {
    int token = 0;
    int count = 1;
    Granularity granularity = Granularity::Large;
    std::uint64_t keys = 0;  // fingerprint keys that mark the component
    int first_step = -1;     // global step of the first trace record showing it, -1 if never
};

struct TraceReport {
    std::string prompt;
    StagePlan plan;
    std::uint64_t seed = 0;
    int schedule_steps = 0;
    int total_steps = 0;
    std::vector<TraceRecord> records;
    std::vector<ComponentAppearance> components;  // one per distinct token of the prompt
    MotifSpec final_spec;
    std::string final_smiles;

    /// first_step of the scaffold <= first_step of every modifier (and every
    /// modifier does appear). True when the prompt has no modifier.
    bool scaffold_before_modifiers() const;
};

/// Trace checkpoints for a schedule: every step t < S with t % every == 0.
std::vector<int> checkpoint_steps(int steps, int every);

/// A component is shown at a record when the record's fingerprint holds all
/// of its keys: the scaffold's keys are those of the bare scaffold, a
/// substituent's are the keys it adds to the prompt scaffold. A substituent
/// that adds no key is matched on the decoded spec instead.
TraceReport trace_run(std::string_view prompt, Strategy strategy, const RunConfig& config, std::uint64_t seed,
                      const Pipeline& pipeline);

void write_trace_jsonl(std::ostream& out, const TraceReport& report);
/// One row per component: '.' before it first appears, '#' from then on,
/// '|' marks stage boundaries.
std::string ascii_timeline(const TraceReport& report, int width = 60);
std::string svg_timeline(const TraceReport& report);

// ---------------------------------------------------------------------------
// Learned-denoiser parity

struct ParityConfig {
    int train_specs = 20000;
    int eval_points = 2000;
    std::uint64_t seed = 5;
    DenoiserNetConfig net{};
};

struct ParityResult {
    double learned_mse = 0;
    double oracle_mse = 0;
    double train_seconds = 0;
    std::vector<double> epoch_losses;
    double ratio() const { return learned_mse / oracle_mse; }
};

/// Splits a seeded shuffle of the grammar into training specs and held-out
/// specs, trains the network on (encode(spec), full-bag condition) pairs,
/// then compares held-out eps-MSE of network and oracle on identical
/// (g0, t, eps) draws.
ParityResult denoiser_parity(const ParityConfig& config, const Dictionary& dict, const Schedule& schedule,
                             LearnedDenoiser* trained = nullptr);

}  // namespace cog
