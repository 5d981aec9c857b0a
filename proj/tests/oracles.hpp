// Test-side reference implementations. These deliberately avoid the library
// code paths they check (no canonical forms, no shared helpers).
#pragma once

#include <algorithm>
#include <bitset>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "cog/molgraph.hpp"

namespace oracle {

// Exhaustive search for an atom bijection preserving atom records and bond
// orders. Backtracks atom by atom; intended for graphs of at most ~8 atoms.
inline bool brute_force_isomorphic(const cog::MolGraph& a, const cog::MolGraph& b) {
    const int n = static_cast<int>(a.atom_count());
    if (b.atom_count() != a.atom_count() || b.bond_count() != a.bond_count()) return false;
    std::vector<std::vector<int>> ma(n, std::vector<int>(n, 0)), mb(n, std::vector<int>(n, 0));
    for (const auto& bd : a.bonds()) ma[bd.a][bd.b] = ma[bd.b][bd.a] = static_cast<int>(bd.order);
    for (const auto& bd : b.bonds()) mb[bd.a][bd.b] = mb[bd.b][bd.a] = static_cast<int>(bd.order);
    std::vector<int> map(n, -1);
    std::vector<bool> used(n, false);
    auto rec = [&](auto&& self, int i) -> bool {
        if (i == n) return true;
        for (int j = 0; j < n; ++j) {
            if (used[j] || !(a.atoms()[i] == b.atoms()[j])) continue;
            bool ok = true;
            for (int k = 0; k < i && ok; ++k) ok = ma[i][k] == mb[j][map[k]];
            if (!ok) continue;
            used[j] = true;
            map[i] = j;
            if (self(self, i + 1)) return true;
            used[j] = false;
        }
        return false;
    };
    return rec(rec, 0);
}

// Random chemically valid graph with 1..max_atoms heavy atoms. Optionally
// seeded with a small aromatic ring so aromatic keys get exercised.
inline cog::MolGraph random_valid_graph(std::mt19937_64& rng, int max_atoms = 8) {
    using cog::Atom;
    using cog::Bond;
    using cog::BondOrder;
    using cog::Element;
    std::uniform_int_distribution<int> size_dist(1, max_atoms);
    const int target = size_dist(rng);
    std::vector<Atom> atoms;
    std::vector<Bond> bonds;
    std::vector<int> capacity;  // remaining bond valence per atom

    auto coin = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };

    if (target >= 5 && coin(0.4)) {
        const bool six = target >= 6 && coin(0.6);
        const int ring = six ? 6 : 5;
        const int hetero = std::uniform_int_distribution<int>(0, 3)(rng);  // 0 none, 1 n, 2 o/[nH], 3 s
        for (int i = 0; i < ring; ++i) atoms.push_back({Element::C, true, 0, 1});
        if (six && hetero == 1) atoms[2] = {Element::N, true, 0, 0};
        if (!six) {
            if (hetero == 3) atoms[4] = {Element::S, true, 0, 0};
            else if (hetero == 1) atoms[4] = {Element::N, true, 0, 1};
            else atoms[4] = {Element::O, true, 0, 0};
        }
        for (int i = 0; i < ring; ++i) {
            bonds.push_back({i, (i + 1) % ring, BondOrder::Aromatic});
            capacity.push_back(atoms[static_cast<std::size_t>(i)].element == Element::C ? 1 : 0);
        }
    } else {
        atoms.push_back({Element::C, false, 0, 0});
        capacity.push_back(4);
    }

    const std::vector<std::pair<Element, int>> pool = {
        {Element::C, 4}, {Element::C, 4}, {Element::C, 4}, {Element::C, 4}, {Element::N, 3}, {Element::N, 3},
        {Element::O, 2}, {Element::O, 2}, {Element::S, 2}, {Element::S, 6}, {Element::P, 5}, {Element::F, 1},
        {Element::Cl, 1}, {Element::Br, 1}, {Element::I, 1}, {Element::B, 3}};
    while (static_cast<int>(atoms.size()) < target) {
        std::vector<int> open;
        for (std::size_t i = 0; i < atoms.size(); ++i) {
            if (capacity[i] > 0) open.push_back(static_cast<int>(i));
        }
        if (open.empty()) break;
        const int host = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
        const auto [el, cap] = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        int order = 1;
        const int max_order = std::min({3, capacity[static_cast<std::size_t>(host)], cap});
        if (!atoms[static_cast<std::size_t>(host)].aromatic && max_order > 1 && coin(0.3)) {
            order = std::uniform_int_distribution<int>(2, max_order)(rng);
        }
        const int idx = static_cast<int>(atoms.size());
        atoms.push_back({el, false, 0, 0});
        capacity.push_back(cap - order);
        capacity[static_cast<std::size_t>(host)] -= order;
        bonds.push_back({host, idx, static_cast<BondOrder>(order)});
    }
    // occasional extra ring bond between two aliphatic atoms
    if (atoms.size() >= 3 && coin(0.35)) {
        std::vector<std::pair<int, int>> cands;
        for (int i = 0; i < static_cast<int>(atoms.size()); ++i) {
            for (int j = i + 1; j < static_cast<int>(atoms.size()); ++j) {
                if (atoms[static_cast<std::size_t>(i)].aromatic || atoms[static_cast<std::size_t>(j)].aromatic) continue;
                if (capacity[static_cast<std::size_t>(i)] < 1 || capacity[static_cast<std::size_t>(j)] < 1) continue;
                bool bonded = false;
                for (const auto& b : bonds) bonded |= (b.a == i && b.b == j) || (b.a == j && b.b == i);
                if (!bonded) cands.emplace_back(i, j);
            }
        }
        if (!cands.empty()) {
            auto [i, j] = cands[std::uniform_int_distribution<std::size_t>(0, cands.size() - 1)(rng)];
            bonds.push_back({i, j, BondOrder::Single});
            --capacity[static_cast<std::size_t>(i)];
            --capacity[static_cast<std::size_t>(j)];
        }
    }
    // hydrogens fill aliphatic atoms to the smallest standard valence reached
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (atoms[i].aromatic) continue;
        int sum = 0;
        for (const auto& b : bonds) {
            if (b.a == static_cast<int>(i) || b.b == static_cast<int>(i)) sum += static_cast<int>(b.order);
        }
        for (int v : cog::standard_valences(atoms[i].element)) {
            if (v >= sum) {
                atoms[i].explicit_h = v - sum;
                break;
            }
        }
    }
    // aromatic carbons that received a substituent lose their hydrogen
    for (std::size_t i = 0; i < atoms.size(); ++i) {
        if (atoms[i].aromatic && atoms[i].element == cog::Element::C) {
            int deg = 0;
            for (const auto& b : bonds) deg += b.a == static_cast<int>(i) || b.b == static_cast<int>(i);
            atoms[i].explicit_h = deg == 3 ? 0 : 1;
        }
    }
    return cog::MolGraph(std::move(atoms), std::move(bonds));
}

inline std::vector<int> random_permutation(std::mt19937_64& rng, std::size_t n) {
    std::vector<int> p(n);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
    return p;
}

}  // namespace oracle

namespace oracle {

struct RawSample {
    bool valid;
    std::uint64_t gen;
    std::uint64_t ref;
};

struct RawReport {
    double p_val, p_base, p_qual, p_dist, bqi, q_cov, q_nov;
};

inline double bit_tanimoto(std::uint64_t a, std::uint64_t b) {
    const std::bitset<64> x(a), y(b);
    const auto u = (x | y).count();
    return u == 0 ? 1.0 : static_cast<double>((x & y).count()) / static_cast<double>(u);
}

// Straight transcription of the metric definitions: ordered pairs i != j
// over the fidelity-passing set (each unordered pair counted twice).
inline RawReport brute_force_metrics(const std::vector<RawSample>& s) {
    double val = 0, base = 0, qual = 0;
    std::vector<std::uint64_t> passing;
    for (const auto& x : s) {
        if (!x.valid) continue;
        val += 1;
        const double f = bit_tanimoto(x.gen, x.ref);
        if (f > 0.5) {
            base += 1;
            passing.push_back(x.gen);
        }
        if (f > 0.5 && f < 0.8) qual += 1;
    }
    double dist = 0;
    if (passing.size() >= 2) {
        double total = 0;
        double count = 0;
        for (std::size_t i = 0; i < passing.size(); ++i) {
            for (std::size_t j = 0; j < passing.size(); ++j) {
                if (i == j) continue;
                total += 1.0 - bit_tanimoto(passing[i], passing[j]);
                count += 1;
            }
        }
        dist = total / count;
    }
    const double n = static_cast<double>(s.size());
    RawReport r{val / n, base / n, qual / n, dist, 0, 0, 0};
    r.bqi = 0.25 * r.p_val + 0.25 * r.p_base + 0.25 * r.p_dist + 0.25 * r.p_qual;
    r.q_cov = r.p_val * r.p_qual;
    r.q_nov = r.p_qual * r.p_dist;
    return r;
}

}  // namespace oracle

namespace oracle {

// Self-normalised importance sampling of E[g0 | z] for a Gaussian mixture
// prior {N(mu_i, sigma^2 I), weights w_i} observed as z = sqrt(ab) g0 +
// sqrt(1 - ab) eps. Draws g0 from the prior and weights by the likelihood.
inline Eigen::VectorXd mc_posterior_mean(const Eigen::MatrixXd& means, const std::vector<double>& weights, double sigma,
                                         double ab, const Eigen::VectorXd& z, int samples, std::mt19937_64& rng) {
    std::discrete_distribution<int> pick(weights.begin(), weights.end());
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto d = means.rows();
    std::vector<Eigen::VectorXd> draws;
    std::vector<double> logw;
    draws.reserve(static_cast<std::size_t>(samples));
    logw.reserve(static_cast<std::size_t>(samples));
    for (int s = 0; s < samples; ++s) {
        Eigen::VectorXd g = means.col(pick(rng));
        for (Eigen::Index k = 0; k < d; ++k) g[k] += sigma * normal(rng);
        logw.push_back(-(z - std::sqrt(ab) * g).squaredNorm() / (2.0 * (1.0 - ab)));
        draws.push_back(std::move(g));
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    Eigen::VectorXd num = Eigen::VectorXd::Zero(d);
    double den = 0;
    for (std::size_t s = 0; s < draws.size(); ++s) {
        const double w = std::exp(logw[s] - mx);
        num += w * draws[s];
        den += w;
    }
    return num / den;
}

}  // namespace oracle
