#include <algorithm>
#include <random>

#include "cog/metrics.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace cog;

namespace {

ScoredSample raw(std::uint64_t gen, std::uint64_t ref, bool valid = true) {
    const auto tag = KeySet::v1().tag();
    return {valid, Fingerprint{gen, tag}, Fingerprint{ref, tag}};
}

}  // namespace

TEST_CASE("identical samples: full fidelity, no qualified, no distance") {
    auto ref = parse_smiles("c1ccccc1[N+](=O)[O-]");
    std::vector<EvalSample> s;
    for (int i = 0; i < 5; ++i) s.push_back(EvalSample::make(ref, ref));
    auto r = base_proportions(std::span<const EvalSample>(s));
    CHECK(r.p_val == 1.0);
    CHECK(r.p_base == 1.0);
    CHECK(r.p_qual == 0.0);
    CHECK(r.p_dist == 0.0);
}

TEST_CASE("single sample at similarity 0.6") {
    // 3 shared bits out of 5 in the union
    std::vector<ScoredSample> s{raw(0b00111, 0b11111)};
    const double f = tanimoto(s[0].generated, s[0].reference);
    REQUIRE(f == doctest::Approx(0.6));
    auto r = base_proportions(std::span<const ScoredSample>(s));
    CHECK(r.p_val == 1.0);
    CHECK(r.p_base == 1.0);
    CHECK(r.p_qual == 1.0);
    CHECK(r.p_dist == 0.0);
}

TEST_CASE("interval ends are open") {
    // f = 0.5 exactly is not in the base set; f = 0.8 is base but not qualified
    std::vector<ScoredSample> half{raw(0b0011, 0b1111)};
    REQUIRE(tanimoto(half[0].generated, half[0].reference) == 0.5);
    CHECK(base_proportions(std::span<const ScoredSample>(half)).p_base == 0.0);
    std::vector<ScoredSample> eight{raw(0b11110, 0b11111)};
    REQUIRE(tanimoto(eight[0].generated, eight[0].reference) == doctest::Approx(0.8));
    auto r = base_proportions(std::span<const ScoredSample>(eight));
    CHECK(r.p_base == 1.0);
    CHECK(r.p_qual == 0.0);
}

TEST_CASE("invalid samples only lower p_val") {
    std::vector<ScoredSample> s{raw(0b1, 0b1), raw(0, 0b1, false)};
    auto r = base_proportions(std::span<const ScoredSample>(s));
    CHECK(r.p_val == 0.5);
    CHECK(r.p_base == 0.5);
}

TEST_CASE("composite arithmetic") {
    auto a = composite(1, 1, 0, 0);
    CHECK(a.bqi == 0.5);
    CHECK(a.q_cov == 0.0);
    CHECK(a.q_nov == 0.0);
    auto b = composite(1, 1, 0.4, 0.5);
    CHECK(b.q_cov == doctest::Approx(0.4));
    CHECK(b.q_nov == doctest::Approx(0.2));
    CHECK(b.bqi == doctest::Approx(0.725));
    auto z = composite(0, 0, 0, 0);
    CHECK(z.bqi == 0.0);
    CHECK(z.q_cov == 0.0);
    CHECK(z.q_nov == 0.0);
}

TEST_CASE("aggregate and run summaries") {
    auto one = composite(1, 0.5, 0.25, 0.5);
    std::vector<MetricsReport> single{one};
    auto same = aggregate(single);
    CHECK(same.bqi == one.bqi);
    CHECK(same.q_nov == one.q_nov);
    MetricsReport x{}, y{};
    x.bqi = 0.4;
    y.bqi = 0.6;
    std::vector<MetricsReport> two{x, y};
    CHECK(aggregate(two).bqi == doctest::Approx(0.5));
    auto s = summarize_runs(two);
    CHECK(s.stddev.bqi == doctest::Approx(std::sqrt(0.02)));
    CHECK(summarize_runs(single).stddev.bqi == 0.0);
    CHECK_THROWS_AS(aggregate(std::vector<MetricsReport>{}), EmptyInput);
    CHECK_THROWS_AS(base_proportions(std::span<const ScoredSample>{}), EmptySampleSet);
}

TEST_CASE("agrees with the brute-force recomputation and is order independent") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 1 + static_cast<int>(rng() % 40);
        const std::uint64_t ref = rng() & 0xFFFF;
        std::vector<ScoredSample> s;
        std::vector<oracle::RawSample> o;
        for (int i = 0; i < n; ++i) {
            // flip a few reference bits so similarities straddle the thresholds
            std::uint64_t gen = ref;
            const int flips = static_cast<int>(rng() % 6);
            for (int k = 0; k < flips; ++k) gen ^= 1ULL << (rng() % 16);
            const bool valid = rng() % 10 != 0;
            s.push_back(raw(gen, ref, valid));
            o.push_back({valid, gen, ref});
        }
        auto r = base_proportions(std::span<const ScoredSample>(s));
        auto b = oracle::brute_force_metrics(o);
        CHECK(std::abs(r.p_val - b.p_val) <= 1e-12);
        CHECK(std::abs(r.p_base - b.p_base) <= 1e-12);
        CHECK(std::abs(r.p_qual - b.p_qual) <= 1e-12);
        CHECK(std::abs(r.p_dist - b.p_dist) <= 1e-12);
        CHECK(std::abs(r.bqi - b.bqi) <= 1e-12);
        CHECK(std::abs(r.q_cov - b.q_cov) <= 1e-12);
        CHECK(std::abs(r.q_nov - b.q_nov) <= 1e-12);
        CHECK(r.p_qual <= r.p_base);

        std::shuffle(s.begin(), s.end(), rng);
        auto shuffled = base_proportions(std::span<const ScoredSample>(s));
        CHECK(std::abs(shuffled.p_dist - r.p_dist) <= 1e-12);
        CHECK(shuffled.p_base == r.p_base);
    }
}
