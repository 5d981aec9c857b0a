#include <random>
#include <set>

#include "cog/fingerprint.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cog;

namespace {

std::set<std::string> set_keys(const std::string& smiles) {
    const auto fp = fingerprint(parse_smiles(smiles));
    std::set<std::string> out;
    for (std::size_t i = 0; i < KeySet::v1().size(); ++i) {
        if (fp.test(i)) out.insert(KeySet::v1().key(i).id);
    }
    return out;
}

struct KeyCase {
    const char* id;
    const char* positive;
    const char* negative;
};

// One hand-checked positive and negative molecule per key.
const KeyCase kCases[] = {
    {"N_PRESENT", "CN", "CO"},
    {"O_PRESENT", "CO", "CN"},
    {"S_PRESENT", "CS", "CO"},
    {"P_PRESENT", "CP", "CN"},
    {"F_PRESENT", "CF", "CCl"},
    {"CL_PRESENT", "CCl", "CF"},
    {"BR_PRESENT", "CBr", "CI"},
    {"I_PRESENT", "CI", "CBr"},
    {"RING_5", "C1CCCC1", "C1CCCCC1"},
    {"RING_6", "C1CCCCC1", "C1CCCC1"},
    {"RING_AROMATIC", "c1ccccc1", "C1CCCCC1"},
    {"RING_N_HETERO", "c1ccncc1", "c1ccoc1"},
    {"RINGS_GE2", "c1ccc2ccccc2c1", "c1ccccc1"},
    {"RING_FUSED", "c1ccc2ccccc2c1", "C1CCC12CCC2"},
    {"NITRO", "c1ccccc1[N+](=O)[O-]", "c1ccccc1N"},
    {"HYDROXYL", "Oc1ccccc1", "OC(=O)c1ccccc1"},
    {"CARBONYL", "CC=O", "CCO"},
    {"CARBOXYL", "CC(=O)O", "CC(=O)OC"},
    {"ETHER", "COC", "CCO"},
    {"PRIMARY_AMINE", "Nc1ccccc1", "NC(=O)c1ccccc1"},
    {"AMIDE", "NC(=O)C", "NCC=O"},
    {"NITRILE", "CC#N", "CC=N"},
    {"PHOSPHATE", "OP(=O)(O)O", "CP(=O)(O)O"},
    {"SULFONYL", "CS(=O)(=O)C", "CS(=O)C"},
    {"THIOL", "CS", "CSC"},
    {"HALOMETHYL", "ClCC", "ClC1CCCCC1"},
    {"N_GE2", "NCN", "CN"},
    {"O_GE2", "OCO", "CO"},
    {"RINGS_GE3", "c1ccc2cc3ccccc3cc2c1", "c1ccc2ccccc2c1"},
    {"RING_HETERO", "c1ccoc1", "c1ccccc1"},
    {"RING_CARBON_ONLY", "c1ccccc1", "c1ccncc1"},
    {"RING_ALIPHATIC", "C1CCCCC1", "c1ccccc1"},
    {"RING_O_HETERO", "c1ccoc1", "c1ccsc1"},
    {"RING_S_HETERO", "c1ccsc1", "c1ccoc1"},
    {"AROMATIC_N", "c1ccncc1", "C1CCNCC1"},
    {"AROMATIC_NH", "c1cc[nH]c1", "c1ccncc1"},
    {"AROMATIC_N_GE2", "c1cncnc1", "c1ccncc1"},
    {"N_GE3", "NC(N)N", "NCN"},
    {"O_GE3", "OC(O)O", "OCO"},
    {"O_GE4", "OP(=O)(O)O", "OC(O)O"},
    {"HALOGEN", "CCl", "CC"},
    {"HALOGEN_GE2", "ClCCl", "CCl"},
    {"HALOGEN_GE3", "ClC(Cl)Cl", "ClCCl"},
    {"ARYL_HALIDE", "Fc1ccccc1", "FC1CCCCC1"},
    {"RING_SUBST", "Cc1ccccc1", "c1ccccc1"},
    {"RING_SUBST_GE2", "Cc1ccc(C)cc1", "Cc1ccccc1"},
    {"RING_SUBST_GE3", "Cc1cc(C)cc(C)c1", "Cc1ccc(C)cc1"},
    {"RING_SUBST_GE4", "Cc1cc(C)c(C)cc1C", "Cc1cc(C)cc(C)c1"},
    {"ORTHO_SUBST", "Cc1ccccc1C", "Cc1ccc(C)cc1"},
    {"RING_CARBONYL", "OC(=O)c1ccccc1", "O=C1CCCCC1"},
    {"RING_N", "Nc1ccccc1", "c1ccncc1"},
    {"RING_O", "Oc1ccccc1", "c1ccoc1"},
    {"RING_S", "CS(=O)(=O)c1ccccc1", "c1ccsc1"},
    {"RING_C", "Cc1ccccc1", "Nc1ccccc1"},
    {"METHYL", "CCO", "C"},
    {"METHYL_GE2", "CCC", "CCO"},
    {"CHARGED", "[NH4+]", "N"},
    {"P_DOUBLE_O", "CP(=O)(C)C", "CP(C)C"},
    {"S_DOUBLE_O", "CS(=O)C", "CSC"},
    {"HETERO_BRANCH", "CN(C)C", "CNC"},
    {"DEGREE4", "CC(C)(C)C", "CC(C)C"},
    {"HEAVY_GE10", "CCCCCCCCCC", "CCCCCCCCC"},
    {"HEAVY_GE15", "CCCCCCCCCCCCCCC", "CCCCCCCCCCCCCC"},
    {"HEAVY_GE20", "CCCCCCCCCCCCCCCCCCCC", "CCCCCCCCCCCCCCCCCCC"},
};

}  // namespace

TEST_CASE("catalog shape") {
    const auto& ks = KeySet::v1();
    CHECK(ks.size() == 64);
    CHECK(ks.version() == "CoG-Keys-64 v1");
    std::set<std::string> ids;
    for (std::size_t i = 0; i < ks.size(); ++i) ids.insert(ks.key(i).id);
    CHECK(ids.size() == 64);
    CHECK(std::size(kCases) == 64);
}

TEST_CASE("every key has a positive and a negative witness") {
    const auto& ks = KeySet::v1();
    for (const auto& c : kCases) {
        INFO("key " << c.id);
        const std::size_t i = ks.index_of(c.id);
        CHECK(ks.evaluate(i, parse_smiles(c.positive)));
        CHECK_FALSE(ks.evaluate(i, parse_smiles(c.negative)));
    }
}

TEST_CASE("benzene sets exactly the ring keys") {
    CHECK(set_keys("c1ccccc1") == std::set<std::string>{"RING_6", "RING_AROMATIC", "RING_CARBON_ONLY"});
}

TEST_CASE("nitrobenzene key trace") {
    CHECK(set_keys("c1ccccc1[N+](=O)[O-]") ==
          std::set<std::string>{"N_PRESENT", "O_PRESENT", "RING_6", "RING_AROMATIC", "NITRO", "O_GE2",
                                "RING_CARBON_ONLY", "RING_SUBST", "RING_N", "CHARGED", "HETERO_BRANCH"});
}

TEST_CASE("single carbon sets nothing") { CHECK(fingerprint(parse_smiles("C")).bits == 0); }

TEST_CASE("invalid molecules are rejected") {
    CHECK_THROWS_AS(fingerprint(parse_smiles("c1cccccc1")), InvalidMolecule);
}

TEST_CASE("tanimoto arithmetic") {
    Fingerprint a{0b1110, KeySet::v1().tag()}, b{0b11100, KeySet::v1().tag()};
    CHECK(tanimoto(a, b) == doctest::Approx(0.5));
    CHECK(tanimoto(a, a) == 1.0);
    CHECK(tanimoto(Fingerprint{0b1, a.keyset_tag}, Fingerprint{0b10, a.keyset_tag}) == 0.0);
    CHECK(tanimoto(Fingerprint{0, a.keyset_tag}, Fingerprint{0, a.keyset_tag}) == 1.0);
    CHECK_THROWS_AS(tanimoto(a, Fingerprint{0b1110, a.keyset_tag + 1}), KeySetMismatch);
}

TEST_CASE("tanimoto is symmetric and bounded") {
    std::mt19937_64 rng(3);
    const auto tag = KeySet::v1().tag();
    for (int i = 0; i < 1000; ++i) {
        Fingerprint a{rng(), tag}, b{rng() & rng(), tag};
        const double s = tanimoto(a, b);
        CHECK(s == tanimoto(b, a));
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("fingerprints are invariant under SMILES enumeration") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        auto g = oracle::random_valid_graph(rng);
        const auto ref = fingerprint(g);
        for (int k = 0; k < 6; ++k) {
            auto s = write_smiles(g, oracle::random_permutation(rng, g.atom_count()));
            CHECK(fingerprint(parse_smiles(s)) == ref);
        }
    }
}

TEST_CASE("pattern dialect") {
    auto g = parse_smiles("OC(=O)c1ccc(N)cc1");
    CHECK(Pattern("c").count_matches(g) == 6);
    CHECK(Pattern("[#6]").count_matches(g) == 7);
    CHECK(Pattern("[c,N]").count_matches(g) == 7);
    CHECK(Pattern("[!#6]").count_matches(g) == 3);
    CHECK(Pattern("c:c").count_matches(g) == 6);
    CHECK(Pattern("c-c").count_matches(g) == 0);
    CHECK(Pattern("C~c").count_matches(g) == 1);
    CHECK(Pattern("c1ccccc1").count_matches(g) == 1);
    CHECK(Pattern("[cH1]").count_matches(g) == 4);
    CHECK(Pattern("[D3]").count_matches(g) == 3);
    CHECK(Pattern("[$(C=O)]").count_matches(g) == 1);
    CHECK(Pattern("[O;$(O-C=O)]").count_matches(g) == 1);
    CHECK_THROWS_AS(Pattern("[Xx]"), PatternError);
    CHECK_THROWS_AS(Pattern("C(C"), PatternError);
}

TEST_CASE("catalog parser rejects malformed input") {
    CHECK_THROWS_AS(KeySet::parse("0\tA\tcount\tC\t1\tx\n"), PatternError);  // no version
    CHECK_THROWS_AS(KeySet::parse("version\tv\n0\tA\tring\tweird\t1\tx\n"), PatternError);
    CHECK_THROWS_AS(KeySet::parse("version\tv\n0\tA\tcount\tC\t1\tx\n0\tB\tcount\tC\t1\tx\n"), PatternError);
    CHECK_THROWS_AS(KeySet::parse("version\tv\n0\tA\tcount\tC\t1\tx\n1\tA\tcount\tN\t1\tx\n"), PatternError);
    auto ks = KeySet::parse("version\tmini\n0\tC\tcount\tC\t1\tcarbon\n");
    CHECK(ks.size() == 1);
    CHECK(ks.tag() != KeySet::v1().tag());
}
