// cogengine.cpp

#include "cog/cogengine.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <mutex>
#include <unordered_map>

namespace cog {

// ---------------------------------------------------------------------------
// Segmentation

namespace {

const std::unordered_map<std::string, int>& word_tokens() {
    static const std::unordered_map<std::string, int> m = [] {
        std::unordered_map<std::string, int> out;
        for (int k = 0; k < kVocabSize; ++k) out.emplace(std::string(token_name(k)), k);
        const std::pair<const char*, const char*> synonyms[] = {
            {"fluoro", "fluorine"}, {"chloro", "chlorine"}, {"bromo", "bromine"}, {"iodo", "iodine"},
            {"hydroxy", "hydroxyl"}, {"amino", "amine"},     {"cyano", "nitrile"}, {"carboxy", "carboxyl"},
            {"phospho", "phosphate"}, {"sulphonyl", "sulfonyl"}, {"carbamoyl", "amide"}};
        for (auto [alias, name] : synonyms) out.emplace(alias, token_index(name));
        return out;
    }();
    return m;
}

// nouns that follow a component name
bool class_noun(std::string_view w) {
    static const char* nouns[] = {"ring", "rings", "group", "groups", "substituent", "substituents", "atom",
                                  "atoms", "moiety", "core", "scaffold", "unit"};
    return std::find(std::begin(nouns), std::end(nouns), w) != std::end(nouns);
}

// words that may stand before a class noun without naming a component
bool filler(std::string_view w) {
    static const char* words[] = {"a",      "an",       "the",   "one",     "two",   "three", "functional",
                                  "additional", "another", "aromatic", "single", "second", "third", "each",
                                  "its",    "of",       "with",  "and",     "both",  "same",  "extra",
                                  "this",   "that",     "attached", "small", "large", "central", "main",
                                  "substituted", "has", "is", "are", "by", "on", "to", "in", "it"};
    return std::find(std::begin(words), std::end(words), w) != std::end(words);
}

int numeral(std::string_view w) {
    if (w == "two" || w == "2" || w == "di") return 2;
    if (w == "three" || w == "3" || w == "tri") return 3;
    return 1;
}

std::vector<std::string> words_of(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c)) {
            cur.push_back(static_cast<char>(std::tolower(c)));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

// vocabulary token for a word, also trying a plural "s"
int lookup(const std::string& w) {
    const auto& m = word_tokens();
    if (auto it = m.find(w); it != m.end()) return it->second;
    if (w.size() > 3 && w.back() == 's') {
        if (auto it = m.find(w.substr(0, w.size() - 1)); it != m.end()) return it->second;
    }
    return -1;
}

std::string article(std::string_view noun) {
    return std::string(std::string_view("aeiou").find(noun.front()) != std::string_view::npos ? "an " : "a ") +
           std::string(noun);
}

std::string segment_sentence(int token) {
    const std::string name(token_name(token));
    switch (token_granularity(token)) {
        case Granularity::Large:
            return "The molecule is made of " + article(name) + " ring.";
        case Granularity::Medium:
            return "The molecule contains " + article(name) + " group.";
        case Granularity::Small:
            break;
    }
    return "The molecule has " + article(name) + " substituent.";
}

int granularity_rank(Granularity g) { return static_cast<int>(g); }

}  // namespace

std::vector<PromptSegment> segment_prompt(std::string_view text) {
    const auto words = words_of(text);
    std::vector<int> tokens;
    for (std::size_t i = 0; i < words.size(); ++i) {
        const int tok = lookup(words[i]);
        if (tok >= 0) {
            const int times = i > 0 ? numeral(words[i - 1]) : 1;
            for (int r = 0; r < times; ++r) tokens.push_back(tok);
            continue;
        }
        if (i + 1 < words.size() && class_noun(words[i + 1]) && !filler(words[i]) && !class_noun(words[i])) {
            throw UnknownVocabulary("unknown component '" + words[i] + " " + words[i + 1] + "'");
        }
    }
    std::vector<PromptSegment> segs;
    for (int tok : tokens) segs.push_back({segment_sentence(tok), {tok}, token_granularity(tok)});
    std::stable_sort(segs.begin(), segs.end(), [](const PromptSegment& a, const PromptSegment& b) {
        if (a.granularity != b.granularity) return granularity_rank(a.granularity) < granularity_rank(b.granularity);
        return a.components.front() < b.components.front();
    });
    const auto scaffolds = std::count_if(segs.begin(), segs.end(),
                                         [](const PromptSegment& s) { return s.granularity == Granularity::Large; });
    if (scaffolds == 0) throw NoScaffoldFound("no scaffold named in prompt: " + std::string(text));
    spec_from_segments(segs);  // throws ContradictoryPrompt
    return segs;
}

MotifSpec spec_from_segments(std::span<const PromptSegment> segments) {
    Bag bag{};
    int scaffolds = 0;
    for (const auto& s : segments) {
        for (int tok : s.components) {
            ++bag[static_cast<std::size_t>(tok)];
            scaffolds += tok < kNumScaffolds;
        }
    }
    if (scaffolds != 1) throw ContradictoryPrompt("a prompt must name exactly one scaffold");
    MotifSpec spec = MotifSpec::from_bag(bag);
    if (!spec.well_formed()) throw ContradictoryPrompt("prompt asks for more substituents than fit: " + spec.to_string());
    return spec;
}

// ---------------------------------------------------------------------------
// Plans

std::string_view strategy_name(Strategy s) {
    switch (s) {
        case Strategy::OneShot: return "OneShot";
        case Strategy::CoarseToFine: return "CoG-CoarseToFine";
        case Strategy::FineToCoarse: return "CoG-FineToCoarse";
        case Strategy::NonCumulative: return "CoG-NonCumulative";
    }
    return "?";
}

Strategy parse_strategy(std::string_view name) {
    std::string low;
    for (char c : name) low.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    for (Strategy s : kAllStrategies) {
        std::string full;
        for (char c : strategy_name(s)) full.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        if (low == full) return s;
    }
    if (low == "oneshot" || low == "one-shot") return Strategy::OneShot;
    if (low == "c2f" || low == "coarsetofine") return Strategy::CoarseToFine;
    if (low == "f2c" || low == "finetocoarse") return Strategy::FineToCoarse;
    if (low == "noncumulative" || low == "nc") return Strategy::NonCumulative;
    throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

int start_step(double rho, int steps) {
    const int t = static_cast<int>(std::ceil(rho * steps - 1e-9));
    return std::clamp(t, 0, steps);
}

StagePlan plan(std::span<const PromptSegment> segments, Strategy strategy, double rho,
               std::span<const double> per_stage_rho) {
    if (segments.empty()) throw EmptySegments("cannot plan an empty segmentation");
    std::vector<PromptSegment> order(segments.begin(), segments.end());
    for (const auto& s : order) {
        if (s.components.empty()) throw EmptySegments("segment without components");
    }
    std::stable_sort(order.begin(), order.end(), [](const PromptSegment& a, const PromptSegment& b) {
        if (a.granularity != b.granularity) return granularity_rank(a.granularity) < granularity_rank(b.granularity);
        return a.components.front() < b.components.front();
    });
    if (strategy == Strategy::FineToCoarse) std::reverse(order.begin(), order.end());

    StagePlan p;
    p.strategy = strategy;
    if (strategy == Strategy::OneShot || order.size() == 1) {
        p.strategy = Strategy::OneShot;
        Stage all;
        for (const auto& s : order) {
            for (int tok : s.components) ++all.components[static_cast<std::size_t>(tok)];
        }
        p.stages.push_back(all);
        return p;
    }
    if (!per_stage_rho.empty() && per_stage_rho.size() != order.size() - 1) {
        throw std::invalid_argument("per-stage rho must give one value for every stage after the first");
    }
    Bag acc{};
    for (std::size_t k = 0; k < order.size(); ++k) {
        Stage st;
        if (strategy == Strategy::NonCumulative) {
            for (int tok : order[k].components) ++st.components[static_cast<std::size_t>(tok)];
        } else {
            for (int tok : order[k].components) ++acc[static_cast<std::size_t>(tok)];
            st.components = acc;
        }
        st.rho = k == 0 ? 1.0 : (per_stage_rho.empty() ? rho : per_stage_rho[k - 1]);
        if (!(st.rho > 0.0 && st.rho <= 1.0)) throw std::invalid_argument("warm-start fraction must lie in (0, 1]");
        p.stages.push_back(st);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Chains

namespace {

struct Rendered {
    std::string smiles;
    std::uint64_t bits = 0;
};

const Rendered& render(const MotifSpec& spec) {
    static std::mutex mu;
    static std::map<Bag, Rendered> cache;
    const Bag key = spec.bag();
    std::lock_guard lock(mu);
    auto it = cache.find(key);
    if (it == cache.end()) {
        const MolGraph g = realize(spec);
        it = cache.emplace(key, Rendered{write_smiles(g), fingerprint(g).bits}).first;
    }
    return it->second;
}

}  // namespace

std::vector<ChainResult> run_chains(const StagePlan& plan, const ChainContext& ctx,
                                    std::span<const std::uint64_t> seeds) {
    if (plan.stages.empty()) throw EmptySegments("plan has no stages");
    const int S = ctx.denoiser.schedule().steps();
    std::vector<Rng> rngs;
    rngs.reserve(seeds.size());
    for (auto s : seeds) rngs.emplace_back(s);
    const auto K = static_cast<Eigen::Index>(seeds.size());
    std::vector<ChainResult> out(seeds.size());

    Eigen::MatrixXd z;
    int global = 0;
    for (std::size_t k = 0; k < plan.stages.size(); ++k) {
        const Stage& st = plan.stages[k];
        const Condition cond = Condition::from_bag(st.components, ctx.align.W);
        const int t0 = start_step(st.rho, S);
        const int stage_start = global;
        StepObserver observer;
        if (!ctx.checkpoints.empty()) {
            observer = [&, k, t0, stage_start](int t, const Eigen::MatrixXd& x0) {
                if (std::find(ctx.checkpoints.begin(), ctx.checkpoints.end(), t) == ctx.checkpoints.end()) return;
                for (Eigen::Index c = 0; c < K; ++c) {
                    TraceRecord r;
                    r.stage = static_cast<int>(k);
                    r.step = t;
                    r.global_step = stage_start + (t0 - t);
                    r.decoded = ctx.dictionary.decode(x0.col(c));
                    const Rendered& rd = render(r.decoded);
                    r.smiles = rd.smiles;
                    r.fingerprint = rd.bits;
                    out[static_cast<std::size_t>(c)].trace.push_back(std::move(r));
                }
            };
        }
        z = sample(ctx.denoiser, cond, t0, k == 0 ? nullptr : &z, rngs, ctx.sampler, observer);
        global += t0;
        for (Eigen::Index c = 0; c < K; ++c) {
            auto& res = out[static_cast<std::size_t>(c)];
            res.stage_latents.push_back(z.col(c));
            res.stage_specs.push_back(ctx.dictionary.decode(z.col(c)));
        }
    }
    for (Eigen::Index c = 0; c < K; ++c) {
        auto& res = out[static_cast<std::size_t>(c)];
        res.latent = z.col(c);
        res.spec = res.stage_specs.back();
        res.graph = realize(res.spec);
    }
    return out;
}

ChainResult run_chain(const StagePlan& plan, const ChainContext& ctx, std::uint64_t seed) {
    return std::move(run_chains(plan, ctx, std::span<const std::uint64_t>(&seed, 1)).front());
}

}  // namespace cog
