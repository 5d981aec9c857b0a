// cogengine.hpp
// Prompt decomposition, staged plans and warm-started chain sampling.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cog/align.hpp"
#include "cog/codec.hpp"
#include "cog/diffusion.hpp"
#include "cog/fingerprint.hpp"

namespace cog {

class NoScaffoldFound : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class UnknownVocabulary : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// More than one scaffold, or more substituents than the grammar allows.
class ContradictoryPrompt : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class EmptySegments : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct PromptSegment {
    std::string text;
    std::vector<int> components;
    Granularity granularity = Granularity::Large;

    friend bool operator==(const PromptSegment&, const PromptSegment&) = default;
};

/// Rule-based parse: one segment per component mention (a numeral such as
/// "two" repeats the mention), ordered large, medium, small and by
/// vocabulary index within a class. Each segment's text is a short
/// stand-alone sentence for that component. Throws NoScaffoldFound,
/// UnknownVocabulary ("xyz group" with xyz outside the vocabulary) and
/// ContradictoryPrompt.
std::vector<PromptSegment> segment_prompt(std::string_view text);

/// Inverse of segmentation for a spec: the MotifSpec whose components are
/// exactly the segments' components. Throws ContradictoryPrompt if they do
/// not form a well-formed spec.
MotifSpec spec_from_segments(std::span<const PromptSegment> segments);

enum class Strategy { OneShot, CoarseToFine, FineToCoarse, NonCumulative };

inline constexpr std::array<Strategy, 4> kAllStrategies = {Strategy::OneShot, Strategy::CoarseToFine,
                                                           Strategy::FineToCoarse, Strategy::NonCumulative};

std::string_view strategy_name(Strategy s);
/// Accepts the names printed by strategy_name and the short forms
/// oneshot/c2f/f2c/noncumulative. Throws std::invalid_argument.
Strategy parse_strategy(std::string_view name);

struct Stage {
    Bag components{};
    double rho = 1.0;

    friend bool operator==(const Stage&, const Stage&) = default;
};

struct StagePlan {
    Strategy strategy = Strategy::OneShot;
    std::vector<Stage> stages;

    friend bool operator==(const StagePlan&, const StagePlan&) = default;
};

/// CoarseToFine accumulates segments in granularity order, FineToCoarse in
/// reverse order, NonCumulative conditions each stage on its own segment
/// only, OneShot is a single stage with everything. Stage 1 has rho = 1,
/// later stages the given warm-start fraction (or per-stage values, which
/// must cover every later stage). A one-segment prompt gives the same
/// single-stage plan for every strategy. Throws EmptySegments.
StagePlan plan(std::span<const PromptSegment> segments, Strategy strategy, double rho = 0.2,
               std::span<const double> per_stage_rho = {});

struct TraceRecord {
    int stage = 0;        // 0-based
    int step = 0;         // diffusion step index after the update
    int global_step = 0;  // count of reverse steps taken so far in the chain
    MotifSpec decoded;
    std::string smiles;
    std::uint64_t fingerprint = 0;
};

struct ChainResult {
    Latent latent;
    MotifSpec spec;
    MolGraph graph;
    std::vector<Latent> stage_latents;
    std::vector<MotifSpec> stage_specs;
    std::vector<TraceRecord> trace;  // empty unless checkpoints were requested
};

struct ChainContext {
    const Denoiser& denoiser;
    const Dictionary& dictionary;
    const AlignModel& align;
    SamplerConfig sampler{};
    /// Steps (within each stage) at which x0-hat is decoded into the trace.
    /// Step 0 is the end of a stage.
    std::vector<int> checkpoints{};
};

/// Runs len(seeds) independent chains in one batch. Stage 1 starts from
/// fresh noise at t = ceil(rho_1 S); each later stage re-noises the previous
/// stage's latent to ceil(rho_k S) and denoises under that stage's
/// condition, encoded through ctx.align. Chain k draws all of its noise
/// from Rng(seeds[k]), so a chain's result does not depend on which other
/// chains share its batch (beyond float rounding in the batched products).
std::vector<ChainResult> run_chains(const StagePlan& plan, const ChainContext& ctx,
                                    std::span<const std::uint64_t> seeds);
ChainResult run_chain(const StagePlan& plan, const ChainContext& ctx, std::uint64_t seed);

/// Start step for a warm-start fraction: ceil(rho * S), clamped to [0, S].
int start_step(double rho, int steps);

// ---------------------------------------------------------------------------
// Optional LLM segmentation through a chat-completions endpoint.

class EndpointUnreachable : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MalformedLLMResponse : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SegmentPromptVariant { Basic, Detailed, Reasoning };

struct LlmConfig {
    std::string base_url;  // e.g. http://localhost:8080/v1
    std::string api_key;
    std::string model;
    double timeout_seconds = 30.0;
    SegmentPromptVariant variant = SegmentPromptVariant::Reasoning;
    bool fallback = true;

    /// COG_LLM_BASE_URL, COG_LLM_API_KEY, COG_LLM_MODEL, COG_LLM_TIMEOUT.
    static LlmConfig from_env();
    bool configured() const { return !base_url.empty(); }
};

std::string_view segment_system_prompt(SegmentPromptVariant v);

struct LlmSegmentation {
    int count = 0;
    std::vector<std::string> cumulative;  // sentence k covers parts 1..k
    std::vector<std::string> reverse;     // basic/detailed prompts only: "C only", "BC"
    bool used_fallback = false;
    std::string warning;  // why the fallback was taken, if it was
};

/// Parses "Number: n" and the tab- or newline-separated cumulative
/// sentences after "Segmentations:". Throws MalformedLLMResponse.
LlmSegmentation parse_llm_segmentation(std::string_view reply);

/// Parses the four labelled outputs ("A only:", "AB:", "C only:", "BC:")
/// requested by the basic and detailed prompts. count is 3, cumulative holds
/// A and AB, reverse holds C and BC. Throws MalformedLLMResponse.
LlmSegmentation parse_llm_four_outputs(std::string_view reply);

/// Sends the system prompt and the description, parses the reply. On any
/// failure with fallback enabled, returns the rule-based segmentation with
/// cumulative sentences built from segment_prompt and logs a warning to
/// stderr; without fallback the EndpointUnreachable / MalformedLLMResponse
/// propagates. An unconfigured endpoint falls back immediately.
LlmSegmentation llm_segment(std::string_view text, const LlmConfig& config);

/// Cumulative sentences for the rule-based segmentation (coarse to fine).
LlmSegmentation rule_based_cumulative(std::string_view text);

}  // namespace cog
