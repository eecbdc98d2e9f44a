#include <cmath>

#include "doctest.h"
#include "metatopic/geometry.hpp"

using namespace metatopic;

namespace {

SimplexPoint random_simplex(std::size_t V, Rng& rng) {
    Vec v(V);
    double total = 0.0;
    for (double& x : v) {
        x = rng.gamma(1.0);
        total += x;
    }
    scale_inplace(v, 1.0 / total);
    return SimplexPoint::unchecked(std::move(v));
}

SimplexPoint random_boundary_simplex(std::size_t V, Rng& rng) {
    Vec v(V);
    double total = 0.0;
    for (double& x : v) {
        x = rng.gamma(1.0);
        total += x;
    }
    scale_inplace(v, 1.0 / total);
    const std::size_t zero_at = rng.uniform_int(V);
    total = 1.0 - v[zero_at];
    v[zero_at] = 0.0;
    scale_inplace(v, 1.0 / total);
    return SimplexPoint::unchecked(std::move(v));
}

ReferencePoint ref_of(Vec mean) { return ReferencePoint{std::move(mean), 1}; }

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("embed matches the closed form on a vertex") {
    const SimplexPoint beta(Vec{1.0, 0.0, 0.0});
    const ReferencePoint C = ref_of({1.0 / 3, 1.0 / 3, 1.0 / 3});
    const UnitDirection theta = embed(beta, C);
    const double s = 1.0 / std::sqrt(6.0);
    CHECK(theta[0] == doctest::Approx(2 * s).epsilon(1e-12));
    CHECK(theta[1] == doctest::Approx(-s).epsilon(1e-12));
    CHECK(theta[2] == doctest::Approx(-s).epsilon(1e-12));
}

TEST_CASE("embedding the reference point itself is degenerate") {
    const SimplexPoint beta(Vec{0.25, 0.25, 0.5});
    const ReferencePoint C = ref_of({0.25, 0.25, 0.5});
    CHECK_THROWS_AS(embed(beta, C), DegenerateTopic);
}

TEST_CASE("embedded directions have unit norm and zero coordinate sum") {
    Rng rng(41);
    for (int i = 0; i < 1000; ++i) {
        const SimplexPoint beta = random_simplex(50, rng);
        const ReferencePoint C{random_simplex(50, rng).coords(), 1};
        if (norm2(weighted_sum(1.0, beta.coords(), -1.0, C.mean)) < 1e-9) continue;
        const UnitDirection theta = embed(beta, C);
        CHECK(std::abs(norm2(theta.coords()) - 1.0) < 1e-9);
        CHECK(std::abs(coord_sum(theta.coords())) < 1e-8);
    }
}

TEST_CASE("inverse_embed solves the boundary scale factor") {
    const double s = 1.0 / std::sqrt(6.0);
    const UnitDirection dir(Vec{2 * s, -s, -s});
    const ReferencePoint C = ref_of({1.0 / 3, 1.0 / 3, 1.0 / 3});
    const SimplexPoint beta = inverse_embed(dir, C);
    CHECK(beta[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(beta[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(beta[2] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("round trip over boundary points") {
    Rng rng(7);
    for (int i = 0; i < 500; ++i) {
        const std::size_t V = 3 + rng.uniform_int(40);
        const SimplexPoint beta = random_boundary_simplex(V, rng);
        const ReferencePoint C{random_simplex(V, rng).coords(), 1};
        const SimplexPoint back = inverse_embed(embed(beta, C), C);
        double max_err = 0.0;
        for (std::size_t v = 0; v < V; ++v) max_err = std::max(max_err, std::abs(back[v] - beta[v]));
        CHECK(max_err < 1e-8);
        // at least one exact-boundary coordinate
        double min_coord = 1.0;
        for (std::size_t v = 0; v < V; ++v) min_coord = std::min(min_coord, back[v]);
        CHECK(min_coord < 1e-9);
    }
}

TEST_CASE("inverse_embed round trips back through embed") {
    Rng rng(11);
    for (int i = 0; i < 200; ++i) {
        const UnitDirection dir = uniform_direction(10, rng);
        const ReferencePoint C{random_simplex(10, rng).coords(), 1};
        const SimplexPoint beta = inverse_embed(dir, C);
        const UnitDirection again = embed(beta, C);
        for (std::size_t v = 0; v < 10; ++v) CHECK(std::abs(again[v] - dir[v]) < 1e-8);
    }
}

TEST_CASE("inverse_embed guards") {
    const double s = 1.0 / std::sqrt(6.0);
    const UnitDirection dir(Vec{2 * s, -s, -s});
    CHECK_THROWS_AS(inverse_embed(dir, ref_of({0.5, 0.5, 0.0})), NonInteriorReference);
    // a nonnegative "direction" cannot reach the simplex boundary; built
    // unchecked because it violates the sum-zero invariant by construction
    const UnitDirection bogus = UnitDirection::unchecked(Vec{1.0, 0.0, 0.0});
    CHECK_THROWS_AS(inverse_embed(bogus, ref_of({1.0 / 3, 1.0 / 3, 1.0 / 3})), NoNegativeCoordinate);
}

TEST_CASE("angle preservation between embedded pairs") {
    Rng rng(13);
    for (int i = 0; i < 300; ++i) {
        const SimplexPoint b1 = random_simplex(20, rng);
        const SimplexPoint b2 = random_simplex(20, rng);
        const ReferencePoint C{random_simplex(20, rng).coords(), 1};
        const Vec d1 = weighted_sum(1.0, b1.coords(), -1.0, C.mean);
        const Vec d2 = weighted_sum(1.0, b2.coords(), -1.0, C.mean);
        if (norm2(d1) < 1e-9 || norm2(d2) < 1e-9) continue;
        const double direct = dot(d1, d2) / (norm2(d1) * norm2(d2));
        const double embedded = dot(embed(b1, C), embed(b2, C));
        CHECK(std::abs(direct - embedded) < 1e-10);
    }
}

TEST_CASE("update_reference basics") {
    ReferencePoint ref;
    update_reference(ref, {SimplexPoint(Vec{1.0, 0.0, 0.0})});
    CHECK(ref.doc_count == 1);
    CHECK(ref.mean[0] == doctest::Approx(1.0));

    update_reference(ref, {SimplexPoint(Vec{0.0, 1.0, 0.0})});
    CHECK(ref.doc_count == 2);
    CHECK(ref.mean[0] == doctest::Approx(0.5));
    CHECK(ref.mean[1] == doctest::Approx(0.5));
    CHECK(ref.mean[2] == doctest::Approx(0.0));

    const ReferencePoint before = ref;
    update_reference(ref, {});
    CHECK(ref.doc_count == before.doc_count);
    CHECK(ref.mean == before.mean);
}

TEST_CASE("streaming reference equals the one-shot mean") {
    Rng rng(17);
    std::vector<SimplexPoint> all;
    ReferencePoint streaming;
    for (int b = 0; b < 3; ++b) {
        std::vector<SimplexPoint> batch;
        for (int d = 0; d < 5 + static_cast<int>(rng.uniform_int(5)); ++d)
            batch.push_back(random_simplex(8, rng));
        all.insert(all.end(), batch.begin(), batch.end());
        update_reference(streaming, batch);
    }
    ReferencePoint oneshot;
    update_reference(oneshot, all);
    CHECK(streaming.doc_count == oneshot.doc_count);
    for (std::size_t v = 0; v < 8; ++v) CHECK(std::abs(streaming.mean[v] - oneshot.mean[v]) < 1e-12);
}

TEST_CASE("vmf_log_kernel trivial values") {
    Rng rng(19);
    const UnitDirection mu = uniform_direction(6, rng);
    CHECK(vmf_log_kernel(VmfParams{mu, 2.0}, mu) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(vmf_log_kernel(VmfParams{mu, 0.0}, uniform_direction(6, rng)) == 0.0);
    // orthogonal direction: project out mu from another draw
    Vec z = uniform_direction(6, rng).coords();
    axpy(-dot(z, mu.coords()), mu.coords(), z);
    const UnitDirection perp = UnitDirection::normalized(std::move(z));
    CHECK(vmf_log_kernel(VmfParams{mu, 1.0}, perp) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("vmf_map_combine closed forms") {
    const UnitDirection a = UnitDirection::unchecked(Vec{0.0, 1.0});
    const UnitDirection b = UnitDirection::unchecked(Vec{1.0, 0.0});
    const UnitDirection bisect = vmf_map_combine(&a, 1.0, std::span<const UnitDirection>(&b, 1), 1.0);
    CHECK(bisect[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(bisect[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

    // new topic: no prior, single observation
    const UnitDirection alone = vmf_map_combine(nullptr, 0.0, std::span<const UnitDirection>(&b, 1), 5.0);
    CHECK(alone[0] == doctest::Approx(1.0).epsilon(1e-12));

    const UnitDirection c = UnitDirection::unchecked(Vec{-1.0, 0.0});
    CHECK_THROWS_AS(vmf_map_combine(&b, 1.0, std::span<const UnitDirection>(&c, 1), 1.0), ZeroResultant);
}

TEST_CASE("vmf_map_combine maximizes the weighted alignment objective") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t V = 8;
        const UnitDirection prev = uniform_direction(V, rng);
        std::vector<UnitDirection> obs;
        for (int i = 0; i < 3; ++i) obs.push_back(uniform_direction(V, rng));
        const double tau0 = 0.5 + rng.uniform();
        const double tau1 = 0.5 + rng.uniform();
        const UnitDirection opt = vmf_map_combine(&prev, tau0, obs, tau1);
        const auto objective = [&](const UnitDirection& x) {
            double s = tau0 * dot(prev, x);
            for (const auto& v : obs) s += tau1 * dot(v, x);
            return s;
        };
        const double at_opt = objective(opt);
        for (int p = 0; p < 100; ++p) {
            Vec noisy = opt.coords();
            for (double& x : noisy) x += 0.1 * rng.normal();
            const double m = coord_sum(noisy) / static_cast<double>(V);
            for (double& x : noisy) x -= m;
            const UnitDirection cand = UnitDirection::normalized(std::move(noisy));
            CHECK(objective(cand) <= at_opt + 1e-12);
        }
    }
}

TEST_CASE("vmf_sample uniform case has a vanishing resultant") {
    Rng rng(29);
    const UnitDirection mu = uniform_direction(3, rng);
    Vec acc(3, 0.0);
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const UnitDirection d = vmf_sample(VmfParams{mu, 0.0}, rng);
        CHECK(std::abs(norm2(d.coords()) - 1.0) < 1e-9);
        axpy(1.0 / n, d.coords(), acc);
    }
    CHECK(norm2(acc) < 0.05);
}

TEST_CASE("vmf_sample concentrates at high kappa") {
    Rng rng(31);
    const UnitDirection mu = uniform_direction(3, rng);
    int within = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        const UnitDirection d = vmf_sample(VmfParams{mu, 1e6}, rng);
        if (angle_between(d.coords(), mu.coords()) < 0.01) ++within;
    }
    CHECK(within >= static_cast<int>(0.995 * n));
}

TEST_CASE("vmf_sample stays on the sum-zero sphere") {
    Rng rng(37);
    for (double tau : {0.0, 0.5, 10.0, 500.0}) {
        const UnitDirection mu = uniform_direction(12, rng);
        for (int i = 0; i < 200; ++i) {
            const UnitDirection d = vmf_sample(VmfParams{mu, tau}, rng);
            CHECK(std::abs(norm2(d.coords()) - 1.0) < 1e-9);
            CHECK(std::abs(coord_sum(d.coords())) < 1e-8);
        }
    }
}

TEST_CASE("interior_smooth keeps the simplex and fixes zeros") {
    const SimplexPoint smoothed = interior_smooth(Vec{0.5, 0.5, 0.0});
    CHECK(std::abs(coord_sum(smoothed.coords()) - 1.0) < 1e-12);
    for (std::size_t i = 0; i < 3; ++i) CHECK(smoothed[i] > 0.0);
}

}  // TEST_SUITE
