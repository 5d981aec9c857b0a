// harness.cpp

#include "cog/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace cog {

using ojson = nlohmann::ordered_json;

namespace {

std::string hex64(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

std::string with_article(std::string_view word) {
    const bool vowel = std::string_view("aeiou").find(word.front()) != std::string_view::npos;
    return std::string(vowel ? "an " : "a ") + std::string(word);
}

// "fluorine" -> "fluoro"
std::string halo_prefix(std::string_view name) {
    std::string s(name);
    if (s.size() > 3 && s.ends_with("ine")) s.resize(s.size() - 3);
    return s + "o";
}

void parallel_for(int n, int threads, const std::function<void(int)>& body) {
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (int i = 0; i < n; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&] {
            for (int i = next++; i < n; i = next++) {
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                    next = n;
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

}  // namespace

// ---------------------------------------------------------------------------
// Datasets

std::string render_prompt(const MotifSpec& spec, Rng& rng) {
    static const char* scaffold_forms[] = {"The molecule is made of {} ring", "The molecule is {} ring",
                                           "The molecule consists of {} ring", "The molecule is built on {} core"};
    static const char* connectors[] = {" with ", " bearing ", " substituted with ", " carrying "};

    const auto fill = [](std::string form, const std::string& what) {
        return form.replace(form.find("{}"), 2, what);
    };
    std::string out = fill(scaffold_forms[rng.uniform_int(0, 3)], with_article(token_name(scaffold_token(spec.scaffold))));

    std::vector<std::string> parts;
    std::map<int, int> groups, mods;
    for (int g : spec.groups) ++groups[g];
    for (int m : spec.modifiers) ++mods[m];
    for (auto [g, n] : groups) {
        const std::string name(token_name(group_token(g)));
        const int form = rng.uniform_int(0, 3);
        if (n == 1) {
            const char* nouns[] = {" group", " substituent", " moiety", " group"};
            parts.push_back((form == 3 ? "one " + name : with_article(name)) + nouns[form]);
        } else {
            const char* nouns[] = {" groups", " substituents", " moieties", " functional groups"};
            parts.push_back((n == 2 ? "two " : "three ") + name + nouns[form]);
        }
    }
    for (auto [m, n] : mods) {
        const std::string name(token_name(modifier_token(m)));
        const int form = rng.uniform_int(0, 3);
        const std::string word = form == 2 ? halo_prefix(name) : name;
        const char* one[] = {" atom", " substituent", " substituent", " atom"};
        const char* many[] = {" atoms", " substituents", " substituents", " atoms"};
        if (n == 1) {
            parts.push_back((form == 3 ? "one " + word : with_article(word)) + one[form]);
        } else {
            parts.push_back((n == 2 ? "two " : "three ") + word + many[form]);
        }
    }
    if (!parts.empty()) {
        out += connectors[rng.uniform_int(0, 3)];
        for (std::size_t i = 0; i < parts.size(); ++i) {
            if (i > 0) out += i + 1 == parts.size() ? " and " : ", ";
            out += parts[i];
        }
    }
    return out + ".";
}

std::vector<DatasetRecord> gen_dataset(const DatasetConfig& config) {
    if (config.count < 0) throw ConfigError("dataset count must be non-negative");
    if (config.min_groups < 0 || config.min_groups > config.max_groups || config.max_groups > kMaxGroups ||
        config.min_modifiers < 0 || config.min_modifiers > config.max_modifiers ||
        config.max_modifiers > kMaxModifiers) {
        throw ConfigError("dataset group/modifier ranges are invalid");
    }
    std::vector<const MotifSpec*> pool;
    for (const auto& s : enumerate_grammar()) {
        const int g = static_cast<int>(s.groups.size());
        const int m = static_cast<int>(s.modifiers.size());
        if (g >= config.min_groups && g <= config.max_groups && m >= config.min_modifiers &&
            m <= config.max_modifiers) {
            pool.push_back(&s);
        }
    }
    if (pool.empty()) throw ConfigError("no grammar spec fits the dataset ranges");
    std::vector<DatasetRecord> out;
    out.reserve(static_cast<std::size_t>(config.count));
    for (int i = 0; i < config.count; ++i) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
        DatasetRecord r;
        r.spec = *pool[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1))];
        r.prompt = render_prompt(r.spec, rng);
        r.segments = segment_prompt(r.prompt);
        r.reference = realize(r.spec);
        out.push_back(std::move(r));
    }
    return out;
}

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records) {
    for (std::size_t i = 0; i < records.size(); ++i) {
        ojson j;
        j["index"] = i;
        j["spec"] = records[i].spec.to_string();
        j["prompt"] = records[i].prompt;
        j["reference"] = write_smiles(records[i].reference);
        out << j.dump() << '\n';
    }
}

std::vector<DatasetRecord> read_dataset(std::istream& in) {
    std::vector<DatasetRecord> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            DatasetRecord r;
            r.prompt = j.at("prompt").get<std::string>();
            r.segments = segment_prompt(r.prompt);
            r.spec = spec_from_segments(r.segments);
            if (j.contains("spec") && j["spec"].get<std::string>() != r.spec.to_string()) {
                throw ConfigError("prompt does not segment to its recorded spec " + j["spec"].get<std::string>());
            }
            r.reference = realize(r.spec);
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw ConfigError("dataset line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Config

namespace {

void check_keys(const nlohmann::json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            throw ConfigError("unknown key '" + key + "' in " + std::string(where));
        }
    }
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(std::string_view text) {
    RunConfig c;
    try {
        const auto j = nlohmann::json::parse(text);
        check_keys(j, "config",
                   {"schema_version", "seed", "prompts", "samples_per_prompt", "runs", "strategies", "rho", "dataset",
                    "schedule", "codec", "denoiser", "align", "sampler", "thresholds", "checkpoint_every",
                    "threads"});
        if (!j.contains("schema_version") || j["schema_version"].get<int>() != kSchemaVersion) {
            throw ConfigError("config schema_version must be " + std::to_string(kSchemaVersion));
        }
        read(j, "seed", c.seed);
        read(j, "prompts", c.prompts);
        read(j, "samples_per_prompt", c.samples_per_prompt);
        read(j, "runs", c.runs);
        read(j, "rho", c.rho);
        read(j, "checkpoint_every", c.checkpoint_every);
        read(j, "threads", c.threads);
        if (j.contains("strategies")) {
            c.strategies.clear();
            for (const auto& s : j["strategies"]) c.strategies.push_back(parse_strategy(s.get<std::string>()));
        }
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            check_keys(d, "dataset", {"seed", "min_groups", "max_groups", "min_modifiers", "max_modifiers"});
            read(d, "seed", c.dataset.seed);
            read(d, "min_groups", c.dataset.min_groups);
            read(d, "max_groups", c.dataset.max_groups);
            read(d, "min_modifiers", c.dataset.min_modifiers);
            read(d, "max_modifiers", c.dataset.max_modifiers);
        }
        if (j.contains("schedule")) {
            const auto& s = j["schedule"];
            check_keys(s, "schedule",
                       {"kind", "steps", "cosine_offset", "beta_max", "linear_beta_start", "linear_beta_end"});
            if (s.contains("kind")) {
                const auto k = s["kind"].get<std::string>();
                if (k == "cosine") c.schedule.kind = ScheduleKind::Cosine;
                else if (k == "linear") c.schedule.kind = ScheduleKind::Linear;
                else throw ConfigError("schedule kind must be cosine or linear");
            }
            read(s, "steps", c.schedule.steps);
            read(s, "cosine_offset", c.schedule.cosine_offset);
            read(s, "beta_max", c.schedule.beta_max);
            read(s, "linear_beta_start", c.schedule.linear_beta_start);
            read(s, "linear_beta_end", c.schedule.linear_beta_end);
        }
        if (j.contains("codec")) {
            const auto& s = j["codec"];
            check_keys(s, "codec", {"dim", "sigma", "theta", "max_coherence", "seed"});
            read(s, "dim", c.codec.dim);
            read(s, "sigma", c.codec.sigma);
            read(s, "theta", c.codec.theta);
            read(s, "max_coherence", c.codec.max_coherence);
            read(s, "seed", c.codec.seed);
        }
        if (j.contains("denoiser")) {
            const auto& s = j["denoiser"];
            check_keys(s, "denoiser", {"kind", "weighting", "tau", "weights"});
            if (s.contains("kind")) {
                const auto k = s["kind"].get<std::string>();
                if (k == "oracle") c.denoiser = DenoiserKind::Oracle;
                else if (k == "learned") c.denoiser = DenoiserKind::Learned;
                else throw ConfigError("denoiser kind must be oracle or learned");
            }
            if (s.contains("weighting")) {
                const auto w = s["weighting"].get<std::string>();
                if (w == "uniform") c.oracle.weighting = OracleWeighting::Uniform;
                else if (w == "contrastive") c.oracle.weighting = OracleWeighting::Contrastive;
                else throw ConfigError("denoiser weighting must be uniform or contrastive");
            }
            read(s, "tau", c.oracle.tau);
            read(s, "weights", c.denoiser_weights);
        }
        if (j.contains("align")) {
            check_keys(j["align"], "align", {"weights"});
            read(j["align"], "weights", c.align_weights);
        }
        if (j.contains("sampler")) {
            check_keys(j["sampler"], "sampler", {"variance"});
            if (j["sampler"].contains("variance")) {
                const auto v = j["sampler"]["variance"].get<std::string>();
                if (v == "posterior") c.sampler.variance = Variance::Posterior;
                else if (v == "deterministic") c.sampler.variance = Variance::Deterministic;
                else throw ConfigError("sampler variance must be posterior or deterministic");
            }
        }
        if (j.contains("thresholds")) {
            check_keys(j["thresholds"], "thresholds", {"lower", "upper"});
            read(j["thresholds"], "lower", c.thresholds.lower);
            read(j["thresholds"], "upper", c.thresholds.upper);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        if (dynamic_cast<const ConfigError*>(&e)) throw;
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.dataset.count = c.prompts;
    c.validate();
    return c;
}

std::string RunConfig::to_json() const {
    ojson j;
    j["schema_version"] = kSchemaVersion;
    j["seed"] = seed;
    j["prompts"] = prompts;
    j["samples_per_prompt"] = samples_per_prompt;
    j["runs"] = runs;
    j["strategies"] = ojson::array();
    for (auto s : strategies) j["strategies"].push_back(std::string(strategy_name(s)));
    j["rho"] = rho;
    j["dataset"] = {{"seed", dataset.seed},
                    {"min_groups", dataset.min_groups},
                    {"max_groups", dataset.max_groups},
                    {"min_modifiers", dataset.min_modifiers},
                    {"max_modifiers", dataset.max_modifiers}};
    j["schedule"] = {{"kind", schedule.kind == ScheduleKind::Cosine ? "cosine" : "linear"},
                     {"steps", schedule.steps},
                     {"cosine_offset", schedule.cosine_offset},
                     {"beta_max", schedule.beta_max},
                     {"linear_beta_start", schedule.linear_beta_start},
                     {"linear_beta_end", schedule.linear_beta_end}};
    j["codec"] = {{"dim", codec.dim},
                  {"sigma", codec.sigma},
                  {"theta", codec.theta},
                  {"max_coherence", codec.max_coherence},
                  {"seed", codec.seed}};
    j["denoiser"] = {{"kind", denoiser == DenoiserKind::Oracle ? "oracle" : "learned"},
                     {"weighting", oracle.weighting == OracleWeighting::Uniform ? "uniform" : "contrastive"},
                     {"tau", oracle.tau},
                     {"weights", denoiser_weights}};
    j["align"] = {{"weights", align_weights}};
    j["sampler"] = {{"variance", sampler.variance == Variance::Posterior ? "posterior" : "deterministic"}};
    j["thresholds"] = {{"lower", thresholds.lower}, {"upper", thresholds.upper}};
    j["checkpoint_every"] = checkpoint_every;
    j["threads"] = threads;
    return j.dump(2) + "\n";
}

void RunConfig::validate() const {
    if (prompts < 1) throw ConfigError("prompts must be at least 1");
    if (samples_per_prompt < 1) throw ConfigError("samples_per_prompt must be at least 1");
    if (runs < 1) throw ConfigError("runs must be at least 1");
    if (strategies.empty()) throw ConfigError("no strategies selected");
    if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
    if (schedule.steps < 1) throw ConfigError("schedule steps must be positive");
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be positive");
    if (!(thresholds.lower < thresholds.upper)) throw ConfigError("thresholds must satisfy lower < upper");
    if (denoiser == DenoiserKind::Learned && denoiser_weights.empty()) {
        throw ConfigError("a learned denoiser needs a weights file");
    }
}

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::unique_ptr<Denoiser> make_denoiser(const RunConfig& c, const Dictionary& dict, const Schedule& schedule) {
    if (c.denoiser == DenoiserKind::Oracle) return std::make_unique<OracleDenoiser>(dict, schedule, c.oracle);
    auto net = std::make_unique<LearnedDenoiser>(LearnedDenoiser::deserialize(slurp(c.denoiser_weights), schedule));
    if (net->latent_dim() != dict.dim()) throw ConfigError("denoiser weights do not match the codec dimension");
    return net;
}

AlignModel make_align(const RunConfig& c) {
    if (c.align_weights.empty()) return AlignModel{Dictionary::identity_text_map(c.codec.dim), 0.1, 0};
    AlignModel m = AlignModel::deserialize(slurp(c.align_weights));
    if (m.W.rows() != c.codec.dim) throw ConfigError("alignment weights do not match the codec dimension");
    return m;
}

}  // namespace

RunConfig load_config(const std::string& path) { return RunConfig::from_json(slurp(path)); }

Pipeline::Pipeline(const RunConfig& config)
    : dictionary(config.codec),
      schedule(config.schedule),
      align(make_align(config)),
      denoiser(make_denoiser(config, dictionary, schedule)) {}

ChainContext Pipeline::context(const RunConfig& config) const {
    return ChainContext{*denoiser, dictionary, align, config.sampler, {}};
}

// ---------------------------------------------------------------------------
// Benchmarks

BenchResult run_bench(const std::vector<DatasetRecord>& dataset, const RunConfig& config,
                      const BenchOptions& options) {
    config.validate();
    if (dataset.empty()) throw ConfigError("run_bench needs at least one prompt");
    const Pipeline pipe(config);
    const ChainContext ctx = pipe.context(config);
    const int P = static_cast<int>(dataset.size());
    const int K = config.samples_per_prompt;

    std::vector<Fingerprint> ref_fp;
    for (const auto& r : dataset) ref_fp.push_back(fingerprint(r.reference));
    std::vector<StagePlan> plans;  // [strategy][prompt]
    for (auto s : config.strategies) {
        for (const auto& r : dataset) plans.push_back(plan(r.segments, s, config.rho));
    }

    BenchResult result;
    for (auto s : config.strategies) result.strategies.push_back({s, {}, {}});
    for (int run = 0; run < config.runs; ++run) {
        const std::uint64_t run_seed = derive_seed(config.seed, static_cast<std::uint64_t>(run));
        const std::size_t run_begin = result.samples.size();
        for (std::size_t si = 0; si < config.strategies.size(); ++si) {
            std::vector<std::vector<SampleRecord>> logs(static_cast<std::size_t>(P));
            std::vector<MetricsReport> reports(static_cast<std::size_t>(P));
            parallel_for(P, config.threads, [&](int p) {
                const std::uint64_t prompt_seed = derive_seed(run_seed, static_cast<std::uint64_t>(p));
                std::vector<std::uint64_t> seeds;
                for (int k = 0; k < K; ++k) seeds.push_back(derive_seed(prompt_seed, static_cast<std::uint64_t>(k)));
                const auto chains = run_chains(plans[si * static_cast<std::size_t>(P) + static_cast<std::size_t>(p)],
                                               ctx, seeds);
                std::vector<ScoredSample> scored;
                auto& log = logs[static_cast<std::size_t>(p)];
                for (int k = 0; k < K; ++k) {
                    const ChainResult& ch = chains[static_cast<std::size_t>(k)];
                    const ScoredSample sc = score(EvalSample::make(ch.graph, dataset[static_cast<std::size_t>(p)].reference));
                    SampleRecord rec;
                    rec.run = run;
                    rec.prompt = p;
                    rec.strategy = config.strategies[si];
                    rec.sample = k;
                    rec.seed = seeds[static_cast<std::size_t>(k)];
                    rec.spec = ch.spec.to_string();
                    rec.valid = sc.valid;
                    rec.smiles = sc.valid ? write_smiles(ch.graph) : "";
                    rec.generated_fp = sc.valid ? sc.generated.bits : 0;
                    rec.reference_fp = sc.reference.bits;
                    rec.fidelity = sc.valid ? tanimoto(sc.generated, sc.reference) : 0.0;
                    for (const auto& st : ch.stage_specs) rec.stage_scaffolds.push_back(st.scaffold);
                    log.push_back(std::move(rec));
                    scored.push_back(sc);
                }
                reports[static_cast<std::size_t>(p)] = base_proportions(std::span<const ScoredSample>(scored),
                                                                         config.thresholds);
            });
            result.strategies[si].per_run.push_back(aggregate(reports));
            for (auto& l : logs) {
                for (auto& rec : l) result.samples.push_back(std::move(rec));
            }
        }
        if (options.raw_log) {
            for (std::size_t i = run_begin; i < result.samples.size(); ++i) {
                *options.raw_log << sample_to_json(result.samples[i]) << '\n';
            }
            options.raw_log->flush();
        }
    }
    for (auto& s : result.strategies) s.summary = summarize_runs(s.per_run);
    verify_report(result, config.thresholds, P);
    return result;
}

void verify_report(const BenchResult& result, const Thresholds& th, int prompts) {
    const auto pop = [](std::uint64_t x) { return static_cast<double>(__builtin_popcountll(x)); };
    const auto sim = [&](std::uint64_t a, std::uint64_t b) {
        const double u = pop(a | b);
        return u == 0 ? 1.0 : pop(a & b) / u;
    };
    const auto fail = [](const std::string& what) { throw VerificationFailed("report verification: " + what); };
    const auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12; };

    for (const auto& sr : result.strategies) {
        const int runs = static_cast<int>(sr.per_run.size());
        std::vector<std::array<double, 7>> run_fields;
        for (int run = 0; run < runs; ++run) {
            // per prompt: n, valid, base, qual, fingerprints of base members
            std::vector<std::array<double, 4>> counts(static_cast<std::size_t>(prompts), {0, 0, 0, 0});
            std::vector<std::vector<std::uint64_t>> base(static_cast<std::size_t>(prompts));
            for (const auto& s : result.samples) {
                if (s.strategy != sr.strategy || s.run != run) continue;
                if (s.prompt < 0 || s.prompt >= prompts) fail("sample with prompt index out of range");
                const double f = s.valid ? sim(s.generated_fp, s.reference_fp) : 0.0;
                if (!close(f, s.fidelity)) fail("logged fidelity differs from its fingerprints");
                auto& c = counts[static_cast<std::size_t>(s.prompt)];
                c[0] += 1;
                if (s.valid) {
                    c[1] += 1;
                    if (f > th.lower) {
                        c[2] += 1;
                        base[static_cast<std::size_t>(s.prompt)].push_back(s.generated_fp);
                        if (f < th.upper) c[3] += 1;
                    }
                }
            }
            std::array<double, 7> sum{};
            for (int p = 0; p < prompts; ++p) {
                const auto& c = counts[static_cast<std::size_t>(p)];
                if (c[0] == 0) fail("prompt " + std::to_string(p) + " has no samples");
                const double pv = c[1] / c[0], pb = c[2] / c[0], pq = c[3] / c[0];
                const auto& b = base[static_cast<std::size_t>(p)];
                double pd = 0;
                if (b.size() >= 2) {
                    double acc = 0;
                    int pairs = 0;
                    for (std::size_t i = 0; i < b.size(); ++i) {
                        for (std::size_t j = i + 1; j < b.size(); ++j) {
                            acc += 1.0 - sim(b[i], b[j]);
                            ++pairs;
                        }
                    }
                    pd = acc / pairs;
                }
                const std::array<double, 7> f = {pv, pb, pq, pd, 0.25 * (pv + pb + pq + pd), pv * pq, pq * pd};
                for (int k = 0; k < 7; ++k) sum[static_cast<std::size_t>(k)] += f[static_cast<std::size_t>(k)];
            }
            for (auto& v : sum) v /= prompts;
            run_fields.push_back(sum);
            int k = 0;
            for_each_field(sr.per_run[static_cast<std::size_t>(run)], [&](const char* name, double v) {
                if (!close(v, sum[static_cast<std::size_t>(k++)])) {
                    fail(std::string(strategy_name(sr.strategy)) + " run " + std::to_string(run) + " field " + name);
                }
            });
        }
        // mean and sample standard deviation across runs
        for (int k = 0; k < 7; ++k) {
            double mean = 0;
            for (const auto& f : run_fields) mean += f[static_cast<std::size_t>(k)];
            mean /= runs;
            double ss = 0;
            for (const auto& f : run_fields) ss += (f[static_cast<std::size_t>(k)] - mean) * (f[static_cast<std::size_t>(k)] - mean);
            const double sd = runs > 1 ? std::sqrt(ss / (runs - 1)) : 0.0;
            int idx = 0;
            double m_rep = 0, s_rep = 0;
            for_each_field(sr.summary.mean, [&](const char*, double v) { if (idx++ == k) m_rep = v; });
            idx = 0;
            for_each_field(sr.summary.stddev, [&](const char*, double v) { if (idx++ == k) s_rep = v; });
            if (!close(m_rep, mean) || !close(s_rep, sd)) {
                fail(std::string(strategy_name(sr.strategy)) + " summary field " + std::to_string(k));
            }
        }
    }
}

void write_csv(std::ostream& out, const BenchResult& result) {
    out << "strategy,runs";
    for_each_field(MetricsReport{}, [&](const char* name, double) { out << ',' << name << "_mean," << name << "_std"; });
    out << '\n';
    char buf[64];
    for (const auto& s : result.strategies) {
        out << strategy_name(s.strategy) << ',' << s.summary.runs;
        std::vector<double> sd;
        for_each_field(s.summary.stddev, [&](const char*, double v) { sd.push_back(v); });
        std::size_t k = 0;
        for_each_field(s.summary.mean, [&](const char*, double v) {
            std::snprintf(buf, sizeof buf, ",%.6f,%.6f", v, sd[k++]);
            out << buf;
        });
        out << '\n';
    }
}

void write_markdown(std::ostream& out, const BenchResult& result) {
    out << "| Strategy | Validity | p_base | p_qual | p_dist | BQI | Q-Cov | Q-Nov |\n";
    out << "|---|---|---|---|---|---|---|---|\n";
    char buf[64];
    for (const auto& s : result.strategies) {
        out << "| " << strategy_name(s.strategy) << " |";
        std::vector<double> sd;
        for_each_field(s.summary.stddev, [&](const char*, double v) { sd.push_back(v); });
        std::size_t k = 0;
        for_each_field(s.summary.mean, [&](const char*, double v) {
            std::snprintf(buf, sizeof buf, " %.2f ± %.2f |", 100.0 * v, 100.0 * sd[k++]);
            out << buf;
        });
        out << '\n';
    }
}

std::string sample_to_json(const SampleRecord& s) {
    ojson j;
    j["run"] = s.run;
    j["prompt"] = s.prompt;
    j["strategy"] = std::string(strategy_name(s.strategy));
    j["sample"] = s.sample;
    j["seed"] = hex64(s.seed);
    j["spec"] = s.spec;
    j["smiles"] = s.smiles;
    j["valid"] = s.valid;
    j["generated_fp"] = hex64(s.generated_fp);
    j["reference_fp"] = hex64(s.reference_fp);
    j["fidelity"] = s.fidelity;
    j["stage_scaffolds"] = ojson::array();
    for (int sc : s.stage_scaffolds) j["stage_scaffolds"].push_back(std::string(token_name(scaffold_token(sc))));
    return j.dump();
}

void write_sample_log(std::ostream& out, const std::vector<SampleRecord>& samples) {
    for (const auto& s : samples) out << sample_to_json(s) << '\n';
}

double scaffold_retention(const std::vector<SampleRecord>& samples) {
    long kept = 0, total = 0;
    for (const auto& s : samples) {
        for (std::size_t k = 1; k < s.stage_scaffolds.size(); ++k) {
            ++total;
            kept += s.stage_scaffolds[k] == s.stage_scaffolds[k - 1];
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(total);
}

// ---------------------------------------------------------------------------
// Traces

std::vector<int> checkpoint_steps(int steps, int every) {
    if (every < 1) throw std::invalid_argument("checkpoint interval must be positive");
    std::vector<int> out;
    for (int t = steps - 1; t >= 0; --t) {
        if (t % every == 0) out.push_back(t);
    }
    return out;
}

bool TraceReport::scaffold_before_modifiers() const {
    int scaffold_step = -1;
    for (const auto& c : components) {
        if (c.granularity == Granularity::Large) scaffold_step = c.first_step;
    }
    for (const auto& c : components) {
        if (c.granularity != Granularity::Small) continue;
        if (scaffold_step < 0 || c.first_step < 0 || scaffold_step > c.first_step) return false;
    }
    return true;
}

TraceReport trace_run(std::string_view prompt, Strategy strategy, const RunConfig& config, std::uint64_t seed,
                      const Pipeline& pipeline) {
    TraceReport rep;
    rep.prompt = std::string(prompt);
    rep.seed = seed;
    const auto segs = segment_prompt(prompt);
    const MotifSpec target = spec_from_segments(segs);
    rep.plan = plan(segs, strategy, config.rho);
    ChainContext ctx = pipeline.context(config);
    ctx.checkpoints = checkpoint_steps(pipeline.schedule.steps(), config.checkpoint_every);
    ChainResult r = run_chain(rep.plan, ctx, seed);
    rep.schedule_steps = pipeline.schedule.steps();
    for (const auto& st : rep.plan.stages) rep.total_steps += start_step(st.rho, rep.schedule_steps);

    MotifSpec bare;
    bare.scaffold = target.scaffold;
    const std::uint64_t scaffold_keys = fingerprint(realize(bare)).bits;
    const Bag bag = target.bag();
    for (int tok = 0; tok < kVocabSize; ++tok) {
        const int n = bag[static_cast<std::size_t>(tok)];
        if (n == 0) continue;
        ComponentAppearance c;
        c.token = tok;
        c.count = n;
        c.granularity = token_granularity(tok);
        if (c.granularity == Granularity::Large) {
            c.keys = scaffold_keys;
        } else {
            MotifSpec one = bare;
            if (c.granularity == Granularity::Medium) one.groups = {tok - kNumScaffolds};
            else one.modifiers = {tok - kNumScaffolds - kNumGroups};
            c.keys = fingerprint(realize(one)).bits & ~scaffold_keys;
        }
        for (const auto& rec : r.trace) {
            const bool shown = c.keys != 0 ? (rec.fingerprint & c.keys) == c.keys
                                            : rec.decoded.bag()[static_cast<std::size_t>(tok)] >= n;
            if (shown) {
                c.first_step = rec.global_step;
                break;
            }
        }
        rep.components.push_back(c);
    }
    rep.records = std::move(r.trace);
    rep.final_spec = r.spec;
    rep.final_smiles = write_smiles(r.graph);
    return rep;
}

void write_trace_jsonl(std::ostream& out, const TraceReport& report) {
    for (std::size_t i = 0; i < report.records.size(); ++i) {
        const auto& r = report.records[i];
        ojson j;
        j["type"] = "step";
        j["snapshot"] = i;
        j["stage"] = r.stage;
        j["step"] = r.step;
        j["global_step"] = r.global_step;
        j["spec"] = r.decoded.to_string();
        j["smiles"] = r.smiles;
        j["fingerprint"] = hex64(r.fingerprint);
        out << j.dump() << '\n';
    }
    ojson s;
    s["type"] = "summary";
    s["prompt"] = report.prompt;
    s["strategy"] = std::string(strategy_name(report.plan.strategy));
    s["seed"] = hex64(report.seed);
    s["total_steps"] = report.total_steps;
    s["final_spec"] = report.final_spec.to_string();
    s["final_smiles"] = report.final_smiles;
    s["first_appearance"] = ojson::object();
    for (const auto& c : report.components) s["first_appearance"][std::string(token_name(c.token))] = c.first_step;
    s["scaffold_before_modifiers"] = report.scaffold_before_modifiers();
    out << s.dump() << '\n';
}

namespace {

std::string component_label(const ComponentAppearance& c) {
    std::string s(token_name(c.token));
    if (c.count > 1) s += " x" + std::to_string(c.count);
    return s;
}

std::vector<int> stage_starts(const TraceReport& report) {
    std::vector<int> out;
    int acc = 0;
    for (const auto& st : report.plan.stages) {
        out.push_back(acc);
        acc += start_step(st.rho, report.schedule_steps);
    }
    return out;
}

}  // namespace

std::string ascii_timeline(const TraceReport& report, int width) {
    width = std::max(width, 10);
    const int total = std::max(report.total_steps, 1);
    std::size_t label = 6;
    for (const auto& c : report.components) label = std::max(label, component_label(c).size());
    const auto col_step = [&](int col) { return static_cast<int>(std::lround(static_cast<double>(col + 1) * total / width)); };

    std::ostringstream out;
    out << std::string(label + 2, ' ') << "global step 0.." << report.total_steps << '\n';
    const std::vector<int> starts = stage_starts(report);
    std::string bar(static_cast<std::size_t>(width), ' ');
    for (int s : starts) {
        const int col = std::clamp(static_cast<int>(static_cast<double>(s) * width / total), 0, width - 1);
        bar[static_cast<std::size_t>(col)] = '|';
    }
    out << "stages" << std::string(label + 2 - 6, ' ') << bar << '\n';
    for (const auto& c : report.components) {
        const std::string name = component_label(c);
        out << name << std::string(label + 2 - name.size(), ' ');
        for (int col = 0; col < width; ++col) out << (c.first_step >= 0 && c.first_step <= col_step(col) ? '#' : '.');
        out << "  " << (c.first_step >= 0 ? "first at " + std::to_string(c.first_step) : std::string("never")) << '\n';
    }
    return out.str();
}

std::string svg_timeline(const TraceReport& report) {
    const int row = 22, left = 130, width = 600;
    const int total = std::max(report.total_steps, 1);
    const int height = row * (static_cast<int>(report.components.size()) + 2);
    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << left + width + 20 << "\" height=\"" << height
        << "\" font-family=\"monospace\" font-size=\"12\">\n";
    int y = row;
    for (const auto& c : report.components) {
        out << "  <text x=\"4\" y=\"" << y + 14 << "\">" << component_label(c) << "</text>\n";
        out << "  <rect x=\"" << left << "\" y=\"" << y + 3 << "\" width=\"" << width
            << "\" height=\"14\" fill=\"#eeeeee\"/>\n";
        if (c.first_step >= 0) {
            const int x = left + c.first_step * width / total;
            out << "  <rect x=\"" << x << "\" y=\"" << y + 3 << "\" width=\"" << left + width - x
                << "\" height=\"14\" fill=\"#4477aa\"/>\n";
        }
        y += row;
    }
    for (int start : stage_starts(report)) {
        const int x = left + start * width / total;
        out << "  <line x1=\"" << x << "\" y1=\"" << row << "\" x2=\"" << x << "\" y2=\"" << y
            << "\" stroke=\"#cc3311\"/>\n";
    }
    out << "  <text x=\"" << left << "\" y=\"" << y + 14 << "\">global step 0.." << report.total_steps
        << "</text>\n</svg>\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Parity

ParityResult denoiser_parity(const ParityConfig& config, const Dictionary& dict, const Schedule& schedule,
                             LearnedDenoiser* trained) {
    std::vector<MotifSpec> all = enumerate_grammar();
    if (config.train_specs < 1 || config.eval_points < 1 ||
        static_cast<std::size_t>(config.train_specs) >= all.size()) {
        throw ConfigError("parity: train_specs must leave held-out specs");
    }
    Rng rng(config.seed);
    for (std::size_t i = all.size(); i > 1; --i) {
        std::swap(all[i - 1], all[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1))]);
    }
    const Eigen::MatrixXd W = Dictionary::identity_text_map(dict.dim());
    std::vector<DenoiserExample> train;
    for (int i = 0; i < config.train_specs; ++i) {
        const auto& s = all[static_cast<std::size_t>(i)];
        train.push_back({dict.encode(s, rng), encode_text(s.tokens(), W)});
    }
    ParityResult out;
    const auto t0 = std::chrono::steady_clock::now();
    LearnedDenoiser net = train_denoiser(train, schedule, config.net, &out.epoch_losses);
    out.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const OracleDenoiser oracle(dict, schedule);
    const std::size_t held = all.size() - static_cast<std::size_t>(config.train_specs);
    for (int i = 0; i < config.eval_points; ++i) {
        const auto& s = all[all.size() - 1 - static_cast<std::size_t>(i) % held];
        const Latent g = dict.encode(s, rng);
        const int t = rng.uniform_int(1, schedule.steps());
        const Latent e = rng.normal_vector(dict.dim());
        const Eigen::MatrixXd z = forward_noise(schedule, g, t, e);
        const Condition c = Condition::from_bag(s.bag(), W);
        out.learned_mse += (net.predict_eps(z, t, c).col(0) - e).squaredNorm();
        out.oracle_mse += (oracle.predict_eps(z, t, c).col(0) - e).squaredNorm();
    }
    out.learned_mse /= config.eval_points;
    out.oracle_mse /= config.eval_points;
    if (trained) *trained = std::move(net);
    return out;
}

}  // namespace cog
