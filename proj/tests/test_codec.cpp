#include <cmath>
#include <map>

#include "cog/codec.hpp"
#include "cog/fingerprint.hpp"
#include "doctest.h"

using namespace cog;

namespace {

MotifSpec spec(std::string_view scaffold, std::vector<std::string_view> groups = {},
               std::vector<std::string_view> mods = {}) {
    MotifSpec s;
    s.scaffold = token_index(scaffold);
    for (auto g : groups) s.groups.push_back(token_index(g) - kNumScaffolds);
    for (auto m : mods) s.modifiers.push_back(token_index(m) - kNumScaffolds - kNumGroups);
    std::sort(s.groups.begin(), s.groups.end());
    std::sort(s.modifiers.begin(), s.modifiers.end());
    return s;
}

const Dictionary& dict() {
    static const Dictionary d{};
    return d;
}

}  // namespace

TEST_CASE("vocabulary numbering") {
    CHECK(kVocabSize == 21);
    CHECK(token_index("benzene") == 0);
    CHECK(token_index("nitro") == kNumScaffolds);
    CHECK(token_index("fluorine") == kNumScaffolds + kNumGroups);
    CHECK(token_granularity(token_index("pyrrole")) == Granularity::Large);
    CHECK(token_granularity(token_index("amide")) == Granularity::Medium);
    CHECK(token_granularity(token_index("iodine")) == Granularity::Small);
    CHECK_THROWS_AS(token_index("xenon"), UnknownComponentToken);
    const std::map<std::string_view, int> sites = {{"benzene", 6},    {"pyridine", 5}, {"pyrimidine", 4},
                                                   {"naphthalene", 8}, {"cyclohexane", 6}, {"furan", 4},
                                                   {"pyrrole", 4},     {"thiophene", 4}};
    for (const auto& [name, n] : sites) CHECK(scaffold_sites(token_index(name)) == n);
}

TEST_CASE("realize: bare scaffold and worked examples") {
    CHECK(is_isomorphic(realize(spec("benzene")), parse_smiles("c1ccccc1")));
    // pyridine with nitro at the first site (para to N) and fluorine next to it
    CHECK(is_isomorphic(realize(spec("pyridine", {"nitro"}, {"fluorine"})),
                        parse_smiles("O=[N+]([O-])c1c(F)cncc1")));
    // groups go on in vocabulary order: nitro first, then phosphate
    CHECK(is_isomorphic(realize(spec("benzene", {"phosphate", "nitro"})),
                        parse_smiles("O=[N+]([O-])c1ccccc1OP(=O)(O)O")));
    CHECK(is_isomorphic(realize(spec("pyrrole", {"methyl"})), parse_smiles("Cc1cc[nH]c1")));
    CHECK(is_isomorphic(realize(spec("cyclohexane", {"sulfonyl"})), parse_smiles("CS(=O)(=O)C1CCCCC1")));
}

TEST_CASE("realize rejects overfilled scaffolds") {
    CHECK_THROWS_AS(realize(spec("furan", {"methyl", "methyl", "amine"}, {"fluorine", "chlorine"})),
                    NoFreeAttachmentSite);
    MotifSpec bad = spec("benzene");
    bad.groups = {0, 0, 0, 0};
    CHECK_THROWS_AS(realize(bad), InvalidMotifSpec);
}

TEST_CASE("grammar enumeration") {
    const auto& all = enumerate_grammar();
    CHECK(all.size() == 34900);
    std::size_t max_atoms = 0;
    for (const auto& s : all) {
        REQUIRE(s.well_formed());
        const auto g = realize(s);
        CHECK(validate(g));
        max_atoms = std::max(max_atoms, g.atom_count());
        CHECK(MotifSpec::from_bag(s.bag()) == s);
    }
    CHECK(max_atoms <= 30);
    CHECK(realize(all[1234]) == realize(all[1234]));
}

TEST_CASE("dictionary construction") {
    CHECK(dict().max_abs_inner_product() <= 0.3);
    for (int k = 0; k < kVocabSize; ++k) CHECK(dict().vector(k).norm() == doctest::Approx(1.0));
    Dictionary again{};
    CHECK(again.embeddings() == dict().embeddings());
    CodecConfig other;
    other.seed = 99;
    CHECK(Dictionary(other).embeddings() != dict().embeddings());
}

TEST_CASE("dictionary serialisation") {
    const std::string text = dict().serialize();
    CHECK(Dictionary::deserialize(text).embeddings() == dict().embeddings());
    std::string tampered = text;
    const auto pos = tampered.find("benzene ") + 8;
    tampered[pos + 3] = tampered[pos + 3] == '1' ? '2' : '1';
    CHECK_THROWS(Dictionary::deserialize(tampered));
}

TEST_CASE("encode is additive at zero noise") {
    CodecConfig c;
    c.sigma = 0.0;
    Dictionary d(c);
    Rng rng(1);
    CHECK(d.encode(spec("benzene"), rng) == d.vector(token_index("benzene")));
    const Latent both = d.encode(spec("benzene", {"nitro"}), rng);
    CHECK((both - d.vector(token_index("benzene")) - d.vector(token_index("nitro"))).norm() < 1e-15);
}

TEST_CASE("encode noise has the configured scale") {
    Rng rng(2);
    const auto s = spec("thiophene", {"amide"}, {"bromine"});
    const Latent mu = dict().mean(s);
    const int n = 10000;
    Latent sum = Latent::Zero(dict().dim());
    for (int i = 0; i < n; ++i) sum += dict().encode(s, rng);
    const Latent avg = sum / n;
    const double bound = 3.0 * dict().sigma() / std::sqrt(static_cast<double>(n));
    int outside = 0;
    for (int i = 0; i < dict().dim(); ++i) outside += std::abs(avg[i] - mu[i]) > bound;
    // 3-sigma per coordinate: expect about 0.3% of 32 coordinates outside
    CHECK(outside <= 1);
}

TEST_CASE("decode edge cases") {
    CHECK(dict().decode(Latent::Zero(dict().dim())) == spec("benzene"));
    const Latent g = dict().vector(token_index("benzene")) + 0.9 * dict().vector(token_index("nitro"));
    CHECK(dict().decode(g) == spec("benzene", {"nitro"}));
    // just below the acceptance margin the group is dropped
    const Latent weak = dict().vector(token_index("furan")) + 0.69 * dict().vector(token_index("amine"));
    CHECK(dict().decode(weak) == spec("furan"));
    Latent nan = Latent::Constant(dict().dim(), std::nan(""));
    CHECK(dict().decode(nan).well_formed());
}

TEST_CASE("exhaustive round trip at zero noise") {
    int mismatches = 0;
    for (const auto& s : enumerate_grammar()) mismatches += !(dict().decode(dict().mean(s)) == s);
    CHECK(mismatches == 0);
}

TEST_CASE("decode recovers noisy encodes") {
    Rng rng(3);
    const auto& all = enumerate_grammar();
    int ok = 0;
    const int n = 5000;
    for (int i = 0; i < n; ++i) {
        const auto& s = all[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(all.size()) - 1))];
        ok += dict().decode(dict().encode(s, rng)) == s;
    }
    CHECK(static_cast<double>(ok) / n >= 0.99);
}

TEST_CASE("random latents always decode to valid molecules") {
    Rng rng(4);
    for (int i = 0; i < 2000; ++i) {
        const Latent g = rng.normal_vector(dict().dim()) * (1.0 + 3.0 * rng.uniform());
        const auto s = dict().decode(g);
        REQUIRE(s.well_formed());
        CHECK(validate(realize(s)));
    }
}

TEST_CASE("text encoder") {
    const auto W = Dictionary::identity_text_map(32);
    CHECK(encode_text(std::span<const int>{}, W).isZero());
    std::vector<std::string> benz{"benzene"};
    Latent c = encode_text(std::span<const std::string>(benz), W);
    CHECK(c[0] == 1.0);
    CHECK(c.sum() == 1.0);
    std::vector<std::string> bad{"benzene", "unobtainium"};
    CHECK_THROWS_AS(encode_text(std::span<const std::string>(bad), W), UnknownComponentToken);
}

TEST_CASE("adding a component never clears a fingerprint bit") {
    const auto& all = enumerate_grammar();
    std::map<std::string, std::uint64_t> fps;
    for (const auto& s : all) fps[s.to_string()] = fingerprint(realize(s)).bits;
    int checked = 0;
    for (const auto& s : all) {
        for (int t = kNumScaffolds; t < kVocabSize; ++t) {
            MotifSpec bigger = s;
            if (t < kNumScaffolds + kNumGroups) bigger.groups.push_back(t - kNumScaffolds);
            else bigger.modifiers.push_back(t - kNumScaffolds - kNumGroups);
            std::sort(bigger.groups.begin(), bigger.groups.end());
            std::sort(bigger.modifiers.begin(), bigger.modifiers.end());
            if (!bigger.well_formed()) continue;
            const std::uint64_t small = fps.at(s.to_string());
            const std::uint64_t large = fps.at(bigger.to_string());
            CHECK((small & ~large) == 0);
            ++checked;
        }
    }
    CHECK(checked > 50000);
}
