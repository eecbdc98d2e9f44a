#include <cmath>
#include <numeric>

#include "doctest.h"
#include "metatopic/synthetic.hpp"

using namespace metatopic;

namespace {

ModelHyperparams hyper(double tau0, double tau1, double gamma0) {
    ModelHyperparams h;
    h.tau0 = tau0;
    h.tau1 = tau1;
    h.gamma0 = gamma0;
    return h;
}

}  // namespace

TEST_SUITE("synthetic") {

TEST_CASE("stick weights decrease and live in (0,1)") {
    Rng rng(71);
    for (double gamma0 : {0.5, 1.0, 2.0}) {
        const std::vector<double> q = sample_stick_weights(gamma0, 60, rng);
        REQUIRE(q.size() == 60);
        for (std::size_t i = 0; i < q.size(); ++i) {
            CHECK(q[i] > 0.0);
            CHECK(q[i] < 1.0);
            if (i > 0) CHECK(q[i] < q[i - 1]);
        }
    }
}

TEST_CASE("dynamic truth: mean active count at t=1 approximates gamma0") {
    Rng rng(73);
    const int replicas = 10000;
    double total = 0.0, total_sq = 0.0;
    for (int r = 0; r < replicas; ++r) {
        const GroundTruth gt = sample_dynamic(hyper(1.0, 1.0, 1.0), 4, 1, 50, rng);
        const double active = static_cast<double>(gt.obs_t[0].size());
        total += active;
        total_sq += active * active;
    }
    const double mean = total / replicas;
    const double se = std::sqrt((total_sq / replicas - mean * mean) / replicas);
    CHECK(std::abs(mean - 1.0) < 3.0 * se + 1e-3);
}

TEST_CASE("huge tau0 freezes trajectories") {
    Rng rng(79);
    const GroundTruth gt = sample_dynamic(hyper(1e9, 1.0, 1.0), 12, 5, 50, rng);
    double max_step = 0.0;
    for (const auto& traj : gt.trajectories)
        for (std::size_t t = 1; t < traj.size(); ++t)
            max_step = std::max(max_step, angle_between(traj[t].coords(), traj[t - 1].coords()));
    CHECK(max_step < 1e-3);
}

TEST_CASE("tau1=0 observations are uniform") {
    Rng rng(83);
    Vec acc(10, 0.0);
    int n = 0;
    while (n < 10000) {
        const GroundTruth gt = sample_dynamic(hyper(1.0, 0.0, 2.0), 10, 3, 50, rng);
        for (const auto& step : gt.obs_t)
            for (const auto& obs : step) {
                axpy(1.0, obs.dir.coords(), acc);
                ++n;
            }
    }
    scale_inplace(acc, 1.0 / n);
    CHECK(norm2(acc) < 0.05);
}

TEST_CASE("grouped truth: E[m_i] = J * q_i") {
    Rng rng(89);
    const int replicas = 4000;
    const int J = 6;
    // track the first atom's appearance count against J * q_1
    double diff_total = 0.0, diff_sq = 0.0;
    for (int r = 0; r < replicas; ++r) {
        const GroundTruth gt = sample_grouped(hyper(0.0, 5.0, 1.0), 6, J, rng);
        int m = 0;
        for (char b : gt.active_j[0]) m += b;
        const double diff = m - J * gt.weights[0];
        diff_total += diff;
        diff_sq += diff * diff;
    }
    const double mean = diff_total / replicas;
    const double se = std::sqrt((diff_sq / replicas - mean * mean) / replicas);
    CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("hierarchical truth: E[p_ji] matches q_i") {
    Rng rng(97);
    const int replicas = 4000;
    double diff_total = 0.0, diff_sq = 0.0;
    for (int r = 0; r < replicas; ++r) {
        const GroundTruth gt = sample_hierarchical(hyper(5.0, 5.0, 1.0), 6, 3, 1, rng);
        const double diff = gt.group_weights[0][0] - gt.weights[0];
        diff_total += diff;
        diff_sq += diff * diff;
    }
    const double mean = diff_total / replicas;
    const double se = std::sqrt((diff_sq / replicas - mean * mean) / replicas);
    CHECK(std::abs(mean) < 3.0 * se);
}

TEST_CASE("sequential Bernoulli activations reproduce the new-topic rate") {
    // fresh activations at step t should arrive at mean rate gamma0 / t
    Rng rng(101);
    const double gamma0 = 1.0;
    const int T = 4;
    const int replicas = 20000;
    std::vector<double> total(T + 1, 0.0), total_sq(T + 1, 0.0);
    for (int r = 0; r < replicas; ++r) {
        const std::vector<double> q = sample_stick_weights(gamma0, 50, rng);
        std::vector<char> seen(q.size(), 0);
        for (int t = 1; t <= T; ++t) {
            int fresh = 0;
            for (std::size_t i = 0; i < q.size(); ++i) {
                if (rng.bernoulli(q[i]) && !seen[i]) {
                    seen[i] = 1;
                    ++fresh;
                }
            }
            total[static_cast<std::size_t>(t)] += fresh;
            total_sq[static_cast<std::size_t>(t)] += static_cast<double>(fresh) * fresh;
        }
    }
    for (int t = 1; t <= T; ++t) {
        const double mean = total[static_cast<std::size_t>(t)] / replicas;
        const double se = std::sqrt(
            (total_sq[static_cast<std::size_t>(t)] / replicas - mean * mean) / replicas);
        CHECK(std::abs(mean - gamma0 / t) < 3.0 * se + 1e-6);
    }
}

TEST_CASE("documents: counts sum to doc_len and topics are respected") {
    Rng rng(103);
    std::vector<SimplexPoint> topics{SimplexPoint(Vec{0.5, 0.5, 0.0, 0.0}),
                                     SimplexPoint(Vec{0.0, 0.0, 0.5, 0.5})};
    const DocBatch batch = sample_documents(topics, 50, 40, 0.5, rng);
    REQUIRE(batch.docs.size() == 50);
    for (const auto& doc : batch.docs) {
        int total = 0;
        for (const auto& [w, c] : doc) {
            CHECK(c > 0);
            CHECK(w < 4);
            total += c;
        }
        CHECK(total == 40);
    }
}

TEST_CASE("single topic: empirical distribution converges to it") {
    Rng rng(107);
    Vec t(20, 0.0);
    double total = 0.0;
    for (double& x : t) {
        x = rng.gamma(1.0);
        total += x;
    }
    scale_inplace(t, 1.0 / total);
    const std::vector<SimplexPoint> topics{SimplexPoint::unchecked(t)};
    const DocBatch batch = sample_documents(topics, 5, 10000, 1.0, rng);
    for (const auto& doc : batch.docs) {
        Vec emp(20, 0.0);
        for (const auto& [w, c] : doc) emp[static_cast<std::size_t>(w)] = c / 10000.0;
        double tv = 0.0;
        for (std::size_t v = 0; v < 20; ++v) tv += std::abs(emp[v] - t[v]);
        CHECK(tv / 2.0 < 0.1);
    }
}

TEST_CASE("alpha to infinity shares the uniform mixture") {
    Rng rng(109);
    std::vector<SimplexPoint> topics{SimplexPoint(Vec{1.0, 0.0}), SimplexPoint(Vec{0.0, 1.0})};
    const DocBatch batch = sample_documents(topics, 40, 2000, 1e9, rng);
    for (const auto& doc : batch.docs) {
        double first = 0.0;
        for (const auto& [w, c] : doc)
            if (w == 0) first = static_cast<double>(c) / 2000.0;
        CHECK(std::abs(first - 0.5) < 0.06);
    }
}

TEST_CASE("sampled structures satisfy the type invariants") {
    Rng rng(113);
    const GroundTruth gt = sample_hierarchical(hyper(10.0, 50.0, 1.5), 8, 3, 4, rng);
    CHECK(gt.tail_mass < 1e-3);
    for (const auto& traj : gt.trajectories)
        for (const auto& d : traj) {
            CHECK(std::abs(norm2(d.coords()) - 1.0) < 1e-9);
            CHECK(std::abs(coord_sum(d.coords())) < 1e-8);
        }
    for (const auto& row : gt.group_weights)
        for (double p : row) {
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
        }
    // reference directions cover exactly the ever-active atoms
    CHECK(gt.reference_directions().size() == gt.ever_active_atoms().size());
}

TEST_CASE("truncation is raised to cover the requested mass") {
    Rng rng(127);
    const GroundTruth gt = sample_dynamic(hyper(1.0, 1.0, 4.0), 4, 1, 10, rng);
    CHECK(gt.weights.size() >= 80);  // 20 * gamma0
}

}  // TEST_SUITE
