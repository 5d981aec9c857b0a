// cog: command-line front end for datasets, generation, segmentation,
// evaluation, benchmarks and traces.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cog/harness.hpp"

using namespace cog;
namespace fs = std::filesystem;

namespace {

RunConfig config_from(const std::string& path) { return path.empty() ? RunConfig{} : load_config(path); }

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

SegmentPromptVariant parse_variant(const std::string& v) {
    if (v == "basic") return SegmentPromptVariant::Basic;
    if (v == "detailed") return SegmentPromptVariant::Detailed;
    if (v == "reasoning") return SegmentPromptVariant::Reasoning;
    throw std::invalid_argument("variant must be basic, detailed or reasoning");
}

std::vector<DatasetRecord> dataset_for(const RunConfig& cfg, const std::string& path) {
    if (path.empty()) {
        DatasetConfig dc = cfg.dataset;
        dc.count = cfg.prompts;
        return gen_dataset(dc);
    }
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    return read_dataset(in);
}

int cmd_gen_dataset(const std::string& config, const std::string& out, int count, long long seed) {
    RunConfig cfg = config_from(config);
    DatasetConfig dc = cfg.dataset;
    dc.count = count > 0 ? count : cfg.prompts;
    if (seed >= 0) dc.seed = static_cast<std::uint64_t>(seed);
    const auto data = gen_dataset(dc);
    if (out.empty()) {
        write_dataset(std::cout, data);
    } else {
        auto f = open_out(out);
        write_dataset(f, data);
        std::cerr << "wrote " << data.size() << " records to " << out << '\n';
    }
    return 0;
}

int cmd_gen(const std::string& prompt, const std::string& config, const std::string& strategy, std::uint64_t seed,
            int samples) {
    const RunConfig cfg = config_from(config);
    const Pipeline pipe(cfg);
    const auto segs = segment_prompt(prompt);
    const StagePlan p = plan(segs, parse_strategy(strategy), cfg.rho);
    std::vector<std::uint64_t> seeds;
    for (int k = 0; k < samples; ++k) seeds.push_back(samples == 1 ? seed : derive_seed(seed, static_cast<std::uint64_t>(k)));
    const auto chains = run_chains(p, pipe.context(cfg), seeds);
    const Fingerprint ref = fingerprint(realize(spec_from_segments(segs)));
    std::cout << "# strategy " << strategy_name(p.strategy) << ", " << p.stages.size() << " stage(s)\n";
    std::cout << "seed\tspec\tsmiles\tfidelity\n";
    for (std::size_t k = 0; k < chains.size(); ++k) {
        const auto& c = chains[k];
        std::cout << seeds[k] << '\t' << c.spec.to_string() << '\t' << write_smiles(c.graph) << '\t'
                  << tanimoto(fingerprint(c.graph), ref) << '\n';
    }
    return 0;
}

int cmd_segment(const std::string& prompt, bool use_llm, const std::string& variant) {
    const auto segs = segment_prompt(prompt);
    std::cout << "segments:\n";
    for (const auto& s : segs) {
        const char* g = s.granularity == Granularity::Large ? "large" : s.granularity == Granularity::Medium ? "medium" : "small";
        std::cout << "  [" << g << "] " << s.text << '\n';
    }
    LlmSegmentation cum;
    if (use_llm) {
        LlmConfig lc = LlmConfig::from_env();
        lc.variant = parse_variant(variant);
        cum = llm_segment(prompt, lc);
    } else {
        cum = rule_based_cumulative(prompt);
    }
    std::cout << "Number: " << cum.count << (cum.used_fallback ? "  (rule-based fallback)" : "") << '\n';
    std::cout << "cumulative:\n";
    for (const auto& s : cum.cumulative) std::cout << "  " << s << '\n';
    if (use_llm && !cum.reverse.empty()) {
        std::cout << "reverse:\n";
        for (const auto& s : cum.reverse) std::cout << "  " << s << '\n';
    }
    return 0;
}

// samples: lines "<prompt index>\t<SMILES>"; references: one SMILES per line
int cmd_eval(const std::string& samples_path, const std::string& refs_path, double lower, double upper) {
    std::vector<MolGraph> refs;
    {
        std::istringstream in(read_file(refs_path));
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) refs.push_back(parse_smiles(line));
        }
    }
    std::vector<std::vector<EvalSample>> by_prompt(refs.size());
    std::istringstream in(read_file(samples_path));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("samples line " + std::to_string(lineno) + ": expected index<TAB>SMILES");
        const std::size_t idx = std::stoul(line.substr(0, tab));
        if (idx >= refs.size()) throw std::runtime_error("samples line " + std::to_string(lineno) + ": no such reference");
        EvalSample s;
        s.reference = refs[idx];
        try {
            s = EvalSample::make(parse_smiles(line.substr(tab + 1)), refs[idx]);
        } catch (const SmilesError&) {
            s.valid = false;  // unparseable counts as invalid
        }
        by_prompt[idx].push_back(std::move(s));
    }
    Thresholds th{lower, upper};
    std::vector<MetricsReport> reports;
    std::cout << "prompt,n";
    for_each_field(MetricsReport{}, [](const char* name, double) { std::cout << ',' << name; });
    std::cout << '\n';
    for (std::size_t p = 0; p < by_prompt.size(); ++p) {
        if (by_prompt[p].empty()) continue;
        reports.push_back(base_proportions(std::span<const EvalSample>(by_prompt[p]), th));
        std::cout << p << ',' << by_prompt[p].size();
        for_each_field(reports.back(), [](const char*, double v) { std::cout << ',' << v; });
        std::cout << '\n';
    }
    const MetricsReport mean = aggregate(reports);
    std::cout << "mean," << reports.size();
    for_each_field(mean, [](const char*, double v) { std::cout << ',' << v; });
    std::cout << '\n';
    return 0;
}

int cmd_bench(const std::string& config, const std::string& dataset, const std::string& out_dir) {
    const RunConfig cfg = config_from(config);
    const auto data = dataset_for(cfg, dataset);
    const fs::path dir(out_dir);
    fs::create_directories(dir);
    {
        auto f = open_out(dir / "config.json");
        f << cfg.to_json();
    }
    {
        auto f = open_out(dir / "dataset.jsonl");
        write_dataset(f, data);
    }
    auto raw = open_out(dir / "samples.jsonl");
    const BenchResult r = run_bench(data, cfg, {&raw});
    {
        auto f = open_out(dir / "results.csv");
        write_csv(f, r);
    }
    {
        auto f = open_out(dir / "results.md");
        write_markdown(f, r);
    }
    write_markdown(std::cout, r);
    for (const auto& s : r.strategies) {
        if (s.strategy == Strategy::OneShot) continue;
        std::vector<SampleRecord> mine;
        for (const auto& x : r.samples) {
            if (x.strategy == s.strategy) mine.push_back(x);
        }
        std::cout << strategy_name(s.strategy) << " stage-to-stage scaffold retention: " << scaffold_retention(mine)
                  << '\n';
    }
    std::cerr << "wrote " << (dir / "results.csv").string() << ", results.md and samples.jsonl\n";
    return 0;
}

int cmd_trace(const std::string& prompt, const std::string& config, const std::string& strategy, std::uint64_t seed,
              const std::string& out, const std::string& svg, int every) {
    RunConfig cfg = config_from(config);
    if (every > 0) cfg.checkpoint_every = every;
    const Pipeline pipe(cfg);
    const TraceReport rep = trace_run(prompt, parse_strategy(strategy), cfg, seed, pipe);
    if (!out.empty()) {
        auto f = open_out(out);
        write_trace_jsonl(f, rep);
    }
    if (!svg.empty()) {
        auto f = open_out(svg);
        f << svg_timeline(rep);
    }
    std::cout << "prompt: " << rep.prompt << '\n'
              << "strategy: " << strategy_name(rep.plan.strategy) << ", seed " << seed << '\n'
              << ascii_timeline(rep) << "final: " << rep.final_spec.to_string() << "  " << rep.final_smiles << '\n'
              << "scaffold before modifiers: " << (rep.scaffold_before_modifiers() ? "yes" : "no") << '\n';
    return 0;
}

int cmd_train_denoiser(const std::string& config, const std::string& out, int specs, int epochs, int hidden) {
    const RunConfig cfg = config_from(config);
    const Dictionary dict(cfg.codec);
    const Schedule sched(cfg.schedule);
    ParityConfig pc;
    if (specs > 0) pc.train_specs = specs;
    if (epochs > 0) pc.net.epochs = epochs;
    if (hidden > 0) pc.net.hidden = hidden;
    LearnedDenoiser net(sched, dict.dim(), dict.dim(), pc.net);
    const ParityResult r = denoiser_parity(pc, dict, sched, &net);
    auto f = open_out(out);
    f << net.serialize();
    std::cout << "trained in " << r.train_seconds << " s; held-out eps-MSE learned " << r.learned_mse << ", oracle "
              << r.oracle_mse << " (ratio " << r.ratio() << ")\nwrote " << out << '\n';
    return 0;
}

int cmd_train_align(const std::string& config, const std::string& out, int pairs, std::uint64_t seed) {
    const RunConfig cfg = config_from(config);
    const Dictionary dict(cfg.codec);
    const auto& grammar = enumerate_grammar();
    Rng rng(seed);
    std::vector<AlignPair> data;
    for (int i = 0; i < pairs; ++i) {
        const auto& s = grammar[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(grammar.size()) - 1))];
        data.push_back({dict.encode(s, rng), bag_vector(s.tokens())});
    }
    AlignConfig ac;
    ac.seed = seed;
    std::vector<double> losses;
    const AlignModel m = train_alignment(data, ac, &losses);
    auto f = open_out(out);
    f << m.serialize();
    std::cout << "loss " << losses.front() << " -> " << losses.back() << ", top-1 retrieval "
              << retrieval_top1(m, data) << "\nwrote " << out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Staged text-conditioned latent diffusion over motif molecules"};
    app.require_subcommand(1);
    std::string config;
    app.add_option("-c,--config", config, "run config (JSON, schema_version 1)")->check(CLI::ExistingFile);

    std::string out, prompt, strategy = "c2f", dataset, samples_path, refs_path, variant = "reasoning", svg;
    std::uint64_t seed = 1;
    long long data_seed = -1;
    int count = 0, samples = 1, every = 0, specs = 0, epochs = 0, hidden = 0, pairs = 100;
    bool use_llm = false;
    double lower = 0.5, upper = 0.8;

    auto* gd = app.add_subcommand("gen-dataset", "write a synthetic prompt dataset (JSONL)");
    gd->add_option("-o,--out", out, "output file (stdout if omitted)");
    gd->add_option("-n,--count", count, "number of records (default: config prompts)");
    gd->add_option("--seed", data_seed, "dataset seed (default: config)");

    auto* gen = app.add_subcommand("gen", "generate molecules for one prompt");
    gen->add_option("prompt", prompt, "prompt text")->required();
    gen->add_option("-s,--strategy", strategy, "oneshot, c2f, f2c or noncumulative");
    gen->add_option("--seed", seed, "chain seed");
    gen->add_option("-k,--samples", samples, "number of chains")->check(CLI::PositiveNumber);

    auto* seg = app.add_subcommand("segment", "decompose a prompt into segments");
    seg->add_option("prompt", prompt, "prompt text")->required();
    seg->add_flag("--use-llm", use_llm, "ask the chat endpoint in COG_LLM_BASE_URL (falls back to rules)");
    seg->add_option("--variant", variant, "system prompt: basic, detailed or reasoning");

    auto* ev = app.add_subcommand("eval", "score generated SMILES against references");
    ev->add_option("--samples", samples_path, "lines of <prompt index><TAB><SMILES>")->required();
    ev->add_option("--references", refs_path, "one reference SMILES per line")->required();
    ev->add_option("--lower", lower, "fidelity threshold");
    ev->add_option("--upper", upper, "qualified upper bound");

    auto* bench = app.add_subcommand("bench", "strategy comparison over a dataset");
    bench->add_option("-d,--dataset", dataset, "dataset JSONL (generated from the config if omitted)");
    bench->add_option("-o,--out-dir", out, "output directory")->required();

    auto* tr = app.add_subcommand("trace", "decode partially denoised latents along one chain");
    tr->add_option("prompt", prompt, "prompt text")->required();
    tr->add_option("-s,--strategy", strategy, "oneshot, c2f, f2c or noncumulative");
    tr->add_option("--seed", seed, "chain seed");
    tr->add_option("-o,--out", out, "trace JSONL file");
    tr->add_option("--svg", svg, "SVG timeline file");
    tr->add_option("--every", every, "checkpoint interval in steps (default: config)");

    auto* td = app.add_subcommand("train-denoiser", "train the learned eps-network and report parity");
    td->add_option("-o,--out", out, "weights file")->required();
    td->add_option("--specs", specs, "training specs");
    td->add_option("--epochs", epochs, "epochs");
    td->add_option("--hidden", hidden, "hidden width");

    auto* ta = app.add_subcommand("train-align", "train the text-side map on grammar pairs");
    ta->add_option("-o,--out", out, "weights file")->required();
    ta->add_option("--pairs", pairs, "number of pairs")->check(CLI::Range(10, 100000));
    ta->add_option("--seed", seed, "seed");

    auto* cf = app.add_subcommand("config", "print the effective run config as JSON");

    CLI11_PARSE(app, argc, argv);
    try {
        if (*gd) return cmd_gen_dataset(config, out, count, data_seed);
        if (*gen) return cmd_gen(prompt, config, strategy, seed, samples);
        if (*seg) return cmd_segment(prompt, use_llm, variant);
        if (*ev) return cmd_eval(samples_path, refs_path, lower, upper);
        if (*bench) return cmd_bench(config, dataset, out);
        if (*tr) return cmd_trace(prompt, config, strategy, seed, out, svg, every);
        if (*td) return cmd_train_denoiser(config, out, specs, epochs, hidden);
        if (*ta) return cmd_train_align(config, out, pairs, seed);
        if (*cf) {
            std::cout << (config.empty() ? RunConfig{} : load_config(config)).to_json() << '\n';
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
