#include "metatopic/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace metatopic {

SimplexPoint::SimplexPoint(Vec coords) : coords_(std::move(coords)) {
    double s = 0.0;
    for (double x : coords_) {
        if (x < -kSimplexTol) throw std::invalid_argument("simplex coordinate below zero");
        s += x;
    }
    if (std::abs(s - 1.0) > kSimplexTol) throw std::invalid_argument("simplex coordinates do not sum to 1");
}

UnitDirection::UnitDirection(Vec coords) : coords_(std::move(coords)) {
    if (std::abs(norm2(coords_) - 1.0) > kUnitNormTol) throw std::invalid_argument("direction is not unit length");
    if (std::abs(coord_sum(coords_)) > kSumZeroTol) throw std::invalid_argument("direction coordinates do not sum to 0");
}

UnitDirection UnitDirection::normalized(Vec coords) {
    const double n = norm2(coords);
    if (n < kDegenerateTol) throw ZeroResultant();
    scale_inplace(coords, 1.0 / n);
    return unchecked(std::move(coords));
}

UnitDirection embed(const SimplexPoint& topic, const ReferencePoint& ref) {
    Vec d(topic.dim());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = topic[i] - ref.mean[i];
    const double n = norm2(d);
    if (n < kDegenerateTol) throw DegenerateTopic();
    scale_inplace(d, 1.0 / n);
    return UnitDirection::unchecked(std::move(d));
}

SimplexPoint inverse_embed(const UnitDirection& dir, const ReferencePoint& ref) {
    const std::size_t V = dir.dim();
    double min_ratio = 0.0;
    for (std::size_t i = 0; i < V; ++i) {
        if (ref.mean[i] <= 0.0) throw NonInteriorReference();
        min_ratio = std::min(min_ratio, dir[i] / ref.mean[i]);
    }
    if (min_ratio >= -kDegenerateTol) throw NoNegativeCoordinate();
    const double eta = -1.0 / min_ratio;
    Vec out(V);
    for (std::size_t i = 0; i < V; ++i) out[i] = std::max(eta * dir[i] + ref.mean[i], 0.0);
    return SimplexPoint::unchecked(std::move(out));
}

SimplexPoint interior_smooth(const Vec& mean, double eps) {
    const std::size_t V = mean.size();
    Vec out(V);
    const double z = 1.0 + eps * static_cast<double>(V);
    for (std::size_t i = 0; i < V; ++i) out[i] = (mean[i] + eps) / z;
    return SimplexPoint::unchecked(std::move(out));
}

void update_reference(ReferencePoint& ref, const std::vector<SimplexPoint>& docs) {
    if (docs.empty()) return;
    const std::size_t V = docs.front().dim();
    if (ref.doc_count == 0) ref.mean.assign(V, 0.0);
    const double old_count = static_cast<double>(ref.doc_count);
    const double new_count = old_count + static_cast<double>(docs.size());
    Vec acc(V, 0.0);
    for (const auto& d : docs) axpy(1.0, d.coords(), acc);
    for (std::size_t i = 0; i < V; ++i) ref.mean[i] = (old_count * ref.mean[i] + acc[i]) / new_count;
    ref.doc_count += docs.size();
}

void update_reference_sparse(ReferencePoint& ref, std::size_t vocab_size,
                             const std::vector<std::vector<std::pair<int, double>>>& docs) {
    if (docs.empty()) return;
    if (ref.doc_count == 0) ref.mean.assign(vocab_size, 0.0);
    const double old_count = static_cast<double>(ref.doc_count);
    const double new_count = old_count + static_cast<double>(docs.size());
    Vec acc(vocab_size, 0.0);
    for (const auto& d : docs)
        for (const auto& [w, p] : d) acc[static_cast<std::size_t>(w)] += p;
    for (std::size_t i = 0; i < vocab_size; ++i)
        ref.mean[i] = (old_count * ref.mean[i] + acc[i]) / new_count;
    ref.doc_count += docs.size();
}

double vmf_log_kernel(const VmfParams& params, const UnitDirection& x) {
    return params.concentration * dot(params.mean_direction, x);
}

UnitDirection vmf_map_combine(const UnitDirection* prev, double prev_weight,
                              std::span<const UnitDirection> obs, double obs_weight) {
    if (prev == nullptr && obs.empty())
        throw std::invalid_argument("vmf_map_combine needs a prior or at least one observation");
    const std::size_t V = prev != nullptr ? prev->dim() : obs.front().dim();
    Vec r(V, 0.0);
    if (prev != nullptr) axpy(prev_weight, prev->coords(), r);
    for (const auto& v : obs) axpy(obs_weight, v.coords(), r);
    const double n = norm2(r);
    if (n < kDegenerateTol) throw ZeroResultant();
    scale_inplace(r, 1.0 / n);
    return UnitDirection::unchecked(std::move(r));
}

UnitDirection uniform_direction(std::size_t vocab_size, Rng& rng) {
    Vec z(vocab_size);
    for (;;) {
        for (double& x : z) x = rng.normal();
        const double m = coord_sum(z) / static_cast<double>(vocab_size);
        for (double& x : z) x -= m;
        const double n = norm2(z);
        if (n > kDegenerateTol) {
            scale_inplace(z, 1.0 / n);
            return UnitDirection::unchecked(std::move(z));
        }
    }
}

namespace {

// isotropic tangent at mu inside the sum-zero subspace
Vec tangent_at(const Vec& mu, Rng& rng) {
    const std::size_t V = mu.size();
    Vec z(V);
    for (;;) {
        for (double& x : z) x = rng.normal();
        const double m = coord_sum(z) / static_cast<double>(V);
        for (double& x : z) x -= m;
        axpy(-dot(z, mu), mu, z);
        const double n = norm2(z);
        if (n > kDegenerateTol) {
            scale_inplace(z, 1.0 / n);
            return z;
        }
    }
}

}  // namespace

UnitDirection vmf_sample(const VmfParams& params, Rng& rng) {
    const double kappa = params.concentration;
    const std::size_t V = params.mean_direction.dim();
    if (kappa <= 0.0) return uniform_direction(V, rng);

    // the sum-zero subspace has dimension m = V-1; directions live on S^{m-1}
    const double m = static_cast<double>(V) - 1.0;
    const Vec& mu = params.mean_direction.coords();
    if (V == 2) {
        // two-point sphere: +/- mu with odds exp(kappa) : exp(-kappa)
        const double p = 1.0 / (1.0 + std::exp(-2.0 * kappa));
        Vec out = mu;
        if (!rng.bernoulli(p)) scale_inplace(out, -1.0);
        return UnitDirection::unchecked(std::move(out));
    }

    // b via the conjugate form; the textbook -2k + sqrt(4k^2 + d^2) cancels
    // to zero in doubles once 4k^2 swallows d^2 (large kappa) and the
    // rejection loop then never terminates
    const double d = m - 1.0;
    const double b = d / (2.0 * kappa + std::sqrt(4.0 * kappa * kappa + d * d));
    double w;
    for (;;) {
        const double z = rng.beta(d / 2.0, d / 2.0);
        const double denom = 1.0 - (1.0 - b) * z;
        w = (1.0 - (1.0 + b) * z) / denom;
        const double u = rng.uniform_pos();
        // acceptance log-ratio in cancellation-free form:
        //   kappa (w - x0) + d [log(1 - x0 w) - log(1 - x0^2)]
        // with w - x0 = 2b(1-2z)/((1+b) denom) and the log difference
        // reducing to log((1+b)/(2 denom))
        const double lhs = kappa * 2.0 * b * (1.0 - 2.0 * z) / ((1.0 + b) * denom) +
                           d * std::log((1.0 + b) / (2.0 * denom));
        if (lhs >= std::log(u)) break;
    }
    const double z_acc = (1.0 - w) * (1.0 + w) <= 0.0 ? 0.0 : (1.0 - w) * (1.0 + w);
    const Vec tan = tangent_at(mu, rng);
    const double s = std::sqrt(z_acc);
    Vec out(V);
    for (std::size_t i = 0; i < V; ++i) out[i] = w * mu[i] + s * tan[i];
    const double n = norm2(out);
    scale_inplace(out, 1.0 / n);
    return UnitDirection::unchecked(std::move(out));
}

}  // namespace metatopic
