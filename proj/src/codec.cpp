// codec.cpp

#include "cog/codec.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace cog {

namespace {

// Ring templates. Attachment sites are the ring carbons carrying hydrogen, in
// SMILES order.
constexpr std::array<std::string_view, kNumScaffolds> kScaffoldSmiles = {
    "c1ccccc1", "c1ccncc1", "c1cncnc1", "c1ccc2ccccc2c1", "C1CCCCC1", "c1ccoc1", "c1cc[nH]c1", "c1ccsc1"};

// Substituent fragments, attachment atom first. The attachment atom gives up
// one hydrogen (if it has any) for the bond to the ring.
constexpr std::array<std::string_view, kNumGroups> kGroupSmiles = {
    "[N+](=O)[O-]", "OP(=O)(O)O", "C(N)=O", "O", "C", "C(=O)O", "N", "C#N", "S(=O)(=O)C"};
constexpr std::array<std::string_view, kNumModifiers> kModifierSmiles = {"F", "Cl", "Br", "I"};

struct Template {
    MolGraph graph;
    std::vector<int> sites;
};

const std::vector<Template>& scaffold_templates() {
    static const std::vector<Template> t = [] {
        std::vector<Template> out;
        for (auto s : kScaffoldSmiles) {
            Template tpl{parse_smiles(s), {}};
            for (std::size_t i = 0; i < tpl.graph.atom_count(); ++i) {
                const Atom& a = tpl.graph.atoms()[i];
                if (a.element == Element::C && a.explicit_h > 0) tpl.sites.push_back(static_cast<int>(i));
            }
            out.push_back(std::move(tpl));
        }
        return out;
    }();
    return t;
}

const std::vector<MolGraph>& fragments() {
    static const std::vector<MolGraph> f = [] {
        std::vector<MolGraph> out;
        for (auto s : kGroupSmiles) out.push_back(parse_smiles(s));
        for (auto s : kModifierSmiles) out.push_back(parse_smiles(s));
        return out;
    }();
    return f;
}

}  // namespace

std::string_view token_name(int token) {
    if (token < 0 || token >= kVocabSize) throw UnknownComponentToken("token index " + std::to_string(token));
    if (token < kNumScaffolds) return kScaffoldNames[static_cast<std::size_t>(token)];
    if (token < kNumScaffolds + kNumGroups) return kGroupNames[static_cast<std::size_t>(token - kNumScaffolds)];
    return kModifierNames[static_cast<std::size_t>(token - kNumScaffolds - kNumGroups)];
}

int token_index(std::string_view name) {
    for (int t = 0; t < kVocabSize; ++t) {
        if (token_name(t) == name) return t;
    }
    throw UnknownComponentToken("unknown component token '" + std::string(name) + "'");
}

Granularity token_granularity(int token) {
    if (token < kNumScaffolds) return Granularity::Large;
    if (token < kNumScaffolds + kNumGroups) return Granularity::Medium;
    return Granularity::Small;
}

int scaffold_sites(int scaffold) {
    return static_cast<int>(scaffold_templates().at(static_cast<std::size_t>(scaffold)).sites.size());
}

std::string_view scaffold_smiles(int scaffold) { return kScaffoldSmiles.at(static_cast<std::size_t>(scaffold)); }
std::string_view group_smiles(int group) { return kGroupSmiles.at(static_cast<std::size_t>(group)); }
std::string_view modifier_smiles(int modifier) { return kModifierSmiles.at(static_cast<std::size_t>(modifier)); }

// ---------------------------------------------------------------------------
// MotifSpec

Bag MotifSpec::bag() const {
    Bag b{};
    b[static_cast<std::size_t>(scaffold_token(scaffold))] = 1;
    for (int g : groups) ++b[static_cast<std::size_t>(group_token(g))];
    for (int m : modifiers) ++b[static_cast<std::size_t>(modifier_token(m))];
    return b;
}

std::vector<int> MotifSpec::tokens() const {
    std::vector<int> t{scaffold_token(scaffold)};
    for (int g : groups) t.push_back(group_token(g));
    for (int m : modifiers) t.push_back(modifier_token(m));
    return t;
}

bool MotifSpec::well_formed() const {
    if (scaffold < 0 || scaffold >= kNumScaffolds) return false;
    if (groups.size() > static_cast<std::size_t>(kMaxGroups)) return false;
    if (modifiers.size() > static_cast<std::size_t>(kMaxModifiers)) return false;
    for (int g : groups) {
        if (g < 0 || g >= kNumGroups) return false;
    }
    for (int m : modifiers) {
        if (m < 0 || m >= kNumModifiers) return false;
    }
    if (!std::is_sorted(groups.begin(), groups.end()) || !std::is_sorted(modifiers.begin(), modifiers.end())) {
        return false;
    }
    return substituent_count() <= static_cast<std::size_t>(scaffold_sites(scaffold));
}

std::string MotifSpec::to_string() const {
    std::string s(token_name(scaffold_token(scaffold)));
    for (int g : groups) s += "+" + std::string(token_name(group_token(g)));
    for (int m : modifiers) s += "+" + std::string(token_name(modifier_token(m)));
    return s;
}

MotifSpec MotifSpec::from_bag(const Bag& bag) {
    MotifSpec s;
    int scaffolds = 0;
    for (int t = 0; t < kVocabSize; ++t) {
        const int n = bag[static_cast<std::size_t>(t)];
        if (n < 0) throw InvalidMotifSpec("negative multiplicity");
        for (int k = 0; k < n; ++k) {
            switch (token_granularity(t)) {
                case Granularity::Large:
                    s.scaffold = t;
                    ++scaffolds;
                    break;
                case Granularity::Medium: s.groups.push_back(t - kNumScaffolds); break;
                case Granularity::Small: s.modifiers.push_back(t - kNumScaffolds - kNumGroups); break;
            }
        }
    }
    if (scaffolds != 1) throw InvalidMotifSpec("a spec needs exactly one scaffold");
    return s;
}

const std::vector<MotifSpec>& enumerate_grammar() {
    static const std::vector<MotifSpec> all = [] {
        auto multisets = [](int alphabet, int max_size) {
            std::vector<std::vector<int>> out{{}};
            std::vector<std::vector<int>> frontier{{}};
            for (int size = 1; size <= max_size; ++size) {
                std::vector<std::vector<int>> next;
                for (const auto& m : frontier) {
                    for (int x = m.empty() ? 0 : m.back(); x < alphabet; ++x) {
                        auto e = m;
                        e.push_back(x);
                        next.push_back(std::move(e));
                    }
                }
                out.insert(out.end(), next.begin(), next.end());
                frontier = std::move(next);
            }
            return out;
        };
        const auto gsets = multisets(kNumGroups, kMaxGroups);
        const auto msets = multisets(kNumModifiers, kMaxModifiers);
        std::vector<MotifSpec> specs;
        for (int s = 0; s < kNumScaffolds; ++s) {
            for (const auto& g : gsets) {
                for (const auto& m : msets) {
                    if (g.size() + m.size() > static_cast<std::size_t>(scaffold_sites(s))) continue;
                    specs.push_back({s, g, m});
                }
            }
        }
        return specs;
    }();
    return all;
}

MolGraph realize(const MotifSpec& spec) {
    if (spec.scaffold < 0 || spec.scaffold >= kNumScaffolds) throw InvalidMotifSpec("scaffold out of range");
    if (spec.groups.size() > static_cast<std::size_t>(kMaxGroups) ||
        spec.modifiers.size() > static_cast<std::size_t>(kMaxModifiers)) {
        throw InvalidMotifSpec("too many groups or modifiers in " + spec.to_string());
    }
    const Template& tpl = scaffold_templates()[static_cast<std::size_t>(spec.scaffold)];
    std::vector<Atom> atoms = tpl.graph.atoms();
    std::vector<Bond> bonds = tpl.graph.bonds();

    std::vector<int> frags;
    for (int g : spec.groups) {
        if (g < 0 || g >= kNumGroups) throw InvalidMotifSpec("group index out of range");
        frags.push_back(g);
    }
    std::sort(frags.begin(), frags.end());
    std::vector<int> mods;
    for (int m : spec.modifiers) {
        if (m < 0 || m >= kNumModifiers) throw InvalidMotifSpec("modifier index out of range");
        mods.push_back(kNumGroups + m);
    }
    std::sort(mods.begin(), mods.end());
    frags.insert(frags.end(), mods.begin(), mods.end());
    if (frags.size() > tpl.sites.size()) {
        throw NoFreeAttachmentSite(spec.to_string() + " needs " + std::to_string(frags.size()) + " sites, scaffold has " +
                                   std::to_string(tpl.sites.size()));
    }
    for (std::size_t k = 0; k < frags.size(); ++k) {
        const MolGraph& frag = fragments()[static_cast<std::size_t>(frags[k])];
        const int offset = static_cast<int>(atoms.size());
        for (const Atom& a : frag.atoms()) atoms.push_back(a);
        for (const Bond& b : frag.bonds()) bonds.push_back({b.a + offset, b.b + offset, b.order});
        const int site = tpl.sites[k];
        bonds.push_back({site, offset, BondOrder::Single});
        --atoms[static_cast<std::size_t>(site)].explicit_h;
        if (atoms[static_cast<std::size_t>(offset)].explicit_h > 0) --atoms[static_cast<std::size_t>(offset)].explicit_h;
    }
    return MolGraph(std::move(atoms), std::move(bonds));
}

// ---------------------------------------------------------------------------
// Dictionary

Dictionary::Dictionary(const CodecConfig& config) : config_(config) {
    if (config.dim < kVocabSize) throw std::invalid_argument("latent dimension must be at least the vocabulary size");
    if (!(config.max_coherence > 0.0) || !(config.sigma >= 0.0)) throw std::invalid_argument("bad codec config");
    Rng rng(config.seed);
    E_.resize(config.dim, kVocabSize);
    for (int k = 0; k < kVocabSize; ++k) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 1000000) throw std::runtime_error("dictionary: coherence bound unreachable");
            Eigen::VectorXd v = rng.normal_vector(config.dim);
            v.normalize();
            bool ok = true;
            for (int j = 0; j < k && ok; ++j) ok = std::abs(v.dot(E_.col(j))) <= config.max_coherence;
            if (ok) {
                E_.col(k) = v;
                break;
            }
        }
    }
    const Eigen::MatrixXd gram = E_.transpose() * E_;
    pinv_ = gram.ldlt().solve(E_.transpose());
}

double Dictionary::max_abs_inner_product() const {
    Eigen::MatrixXd gram = E_.transpose() * E_;
    gram.diagonal().setZero();
    return gram.cwiseAbs().maxCoeff();
}

Latent Dictionary::mean(const Bag& bag) const {
    Latent g = Latent::Zero(config_.dim);
    for (int t = 0; t < kVocabSize; ++t) {
        if (bag[static_cast<std::size_t>(t)] != 0) g += bag[static_cast<std::size_t>(t)] * E_.col(t);
    }
    return g;
}

Latent Dictionary::mean(const MotifSpec& spec) const { return mean(spec.bag()); }

Latent Dictionary::encode(const MotifSpec& spec, Rng& rng) const {
    return mean(spec) + config_.sigma * rng.normal_vector(config_.dim);
}

MotifSpec Dictionary::decode(const Latent& g) const {
    Eigen::VectorXd r = coefficients(g);
    MotifSpec spec;
    spec.scaffold = 0;
    for (int s = 1; s < kNumScaffolds; ++s) {
        if (r[s] > r[spec.scaffold]) spec.scaffold = s;
    }
    const std::size_t sites = static_cast<std::size_t>(scaffold_sites(spec.scaffold));
    while (spec.substituent_count() < sites) {
        int best = -1;
        double best_gain = config_.theta;
        const bool groups_open = spec.groups.size() < static_cast<std::size_t>(kMaxGroups);
        const bool mods_open = spec.modifiers.size() < static_cast<std::size_t>(kMaxModifiers);
        for (int t = kNumScaffolds; t < kVocabSize; ++t) {
            const bool is_group = t < kNumScaffolds + kNumGroups;
            if ((is_group && !groups_open) || (!is_group && !mods_open)) continue;
            const double gain = 2.0 * r[t] - 1.0;
            if (gain > best_gain) {
                best_gain = gain;
                best = t;
            }
        }
        if (best < 0) break;
        r[best] -= 1.0;
        if (best < kNumScaffolds + kNumGroups) spec.groups.push_back(best - kNumScaffolds);
        else spec.modifiers.push_back(best - kNumScaffolds - kNumGroups);
    }
    std::sort(spec.groups.begin(), spec.groups.end());
    std::sort(spec.modifiers.begin(), spec.modifiers.end());
    return spec;
}

Eigen::MatrixXd Dictionary::identity_text_map(int dim) {
    Eigen::MatrixXd W = Eigen::MatrixXd::Zero(dim, kVocabSize);
    for (int k = 0; k < std::min(dim, kVocabSize); ++k) W(k, k) = 1.0;
    return W;
}

std::string Dictionary::serialize() const {
    std::ostringstream out;
    char buf[64];
    out << "cog-dictionary v1\n";
    out << "dim " << config_.dim << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", config_.sigma);
    out << "sigma " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", config_.theta);
    out << "theta " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.17g", config_.max_coherence);
    out << "max_coherence " << buf << "\n";
    out << "seed " << config_.seed << "\n";
    for (int k = 0; k < kVocabSize; ++k) {
        out << token_name(k);
        for (int i = 0; i < config_.dim; ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", E_(i, k));
            out << ' ' << buf;
        }
        out << '\n';
    }
    return out.str();
}

Dictionary Dictionary::deserialize(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string magic, version, key;
    in >> magic >> version;
    if (magic != "cog-dictionary" || version != "v1") throw std::runtime_error("not a cog-dictionary v1 file");
    CodecConfig c;
    in >> key >> c.dim;
    if (key != "dim") throw std::runtime_error("dictionary file: expected dim");
    in >> key >> c.sigma;
    if (key != "sigma") throw std::runtime_error("dictionary file: expected sigma");
    in >> key >> c.theta;
    if (key != "theta") throw std::runtime_error("dictionary file: expected theta");
    in >> key >> c.max_coherence;
    if (key != "max_coherence") throw std::runtime_error("dictionary file: expected max_coherence");
    in >> key >> c.seed;
    if (key != "seed" || !in) throw std::runtime_error("dictionary file: expected seed");
    Dictionary d(c);
    for (int k = 0; k < kVocabSize; ++k) {
        std::string name;
        in >> name;
        if (name != token_name(k)) throw std::runtime_error("dictionary file: token order mismatch at " + name);
        for (int i = 0; i < c.dim; ++i) {
            double v;
            in >> v;
            if (!in || v != d.E_(i, k)) throw std::runtime_error("dictionary file: vectors do not match the recorded seed");
        }
    }
    return d;
}

Eigen::VectorXd bag_vector(std::span<const int> tokens) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(kVocabSize);
    for (int t : tokens) {
        if (t < 0 || t >= kVocabSize) throw UnknownComponentToken("token index " + std::to_string(t));
        b[t] += 1.0;
    }
    return b;
}

Latent encode_text(std::span<const int> tokens, const Eigen::MatrixXd& W) {
    if (W.cols() != kVocabSize) throw std::invalid_argument("text map must have one column per token");
    return W * bag_vector(tokens);
}

Latent encode_text(std::span<const std::string> tokens, const Eigen::MatrixXd& W) {
    std::vector<int> idx;
    idx.reserve(tokens.size());
    for (const auto& t : tokens) idx.push_back(token_index(t));
    return encode_text(std::span<const int>(idx), W);
}

}  // namespace cog
