#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "metatopic/rng.hpp"
#include "metatopic/vec.hpp"

namespace metatopic {

// Tolerance policy: simplex / unit-norm checks at 1e-9, coordinate-sum checks
// at 1e-8, degeneracy guards at 1e-12.
inline constexpr double kSimplexTol = 1e-9;
inline constexpr double kUnitNormTol = 1e-9;
inline constexpr double kSumZeroTol = 1e-8;
inline constexpr double kDegenerateTol = 1e-12;

struct DegenerateTopic : std::runtime_error {
    DegenerateTopic() : std::runtime_error("topic coincides with the reference point") {}
};
struct NonInteriorReference : std::runtime_error {
    NonInteriorReference() : std::runtime_error("reference point has a non-positive coordinate") {}
};
struct NoNegativeCoordinate : std::runtime_error {
    NoNegativeCoordinate() : std::runtime_error("direction has no negative coordinate") {}
};
struct ZeroResultant : std::runtime_error {
    ZeroResultant() : std::runtime_error("weighted direction sum has near-zero norm") {}
};

// A point in the vocabulary simplex: nonnegative coordinates summing to 1.
class SimplexPoint {
public:
    explicit SimplexPoint(Vec coords);

    // skips validation; for values that are simplex points by construction
    static SimplexPoint unchecked(Vec coords) { return SimplexPoint(std::move(coords), 0); }

    const Vec& coords() const { return coords_; }
    std::size_t dim() const { return coords_.size(); }
    double operator[](std::size_t i) const { return coords_[i]; }

private:
    SimplexPoint(Vec coords, int) : coords_(std::move(coords)) {}
    Vec coords_;
};

// A point on the unit sphere restricted to the sum-zero hyperplane, i.e. the
// image of the simplex boundary under the centered embedding.
class UnitDirection {
public:
    explicit UnitDirection(Vec coords);

    static UnitDirection unchecked(Vec coords) { return UnitDirection(std::move(coords), 0); }

    // normalizes an arbitrary nonzero vector; throws ZeroResultant below tol
    static UnitDirection normalized(Vec coords);

    const Vec& coords() const { return coords_; }
    std::size_t dim() const { return coords_.size(); }
    double operator[](std::size_t i) const { return coords_[i]; }

private:
    UnitDirection(Vec coords, int) : coords_(std::move(coords)) {}
    Vec coords_;
};

inline double dot(const UnitDirection& a, const UnitDirection& b) { return dot(a.coords(), b.coords()); }

// Running mean of normalized documents; anchors the simplex-to-sphere map.
struct ReferencePoint {
    Vec mean;                      // a simplex point once doc_count > 0
    std::uint64_t doc_count = 0;
};

struct VmfParams {
    UnitDirection mean_direction;
    double concentration = 0.0;    // 0 means uniform on the sphere
};

// theta = (topic - ref) / |topic - ref|
UnitDirection embed(const SimplexPoint& topic, const ReferencePoint& ref);

// beta = eta * dir + ref with eta = -1 / min_i(dir_i / c_i); lands on the
// simplex boundary and round-trips with embed
SimplexPoint inverse_embed(const UnitDirection& dir, const ReferencePoint& ref);

// uniform eps-smoothing toward the simplex center; used to make a reference
// interior before inverse_embed when some word was never observed
SimplexPoint interior_smooth(const Vec& mean, double eps = 1e-10);

// streaming mean: new_mean = (count*mean + sum(docs)) / (count + n)
void update_reference(ReferencePoint& ref, const std::vector<SimplexPoint>& docs);

// sparse variant used by the ingestion path; docs are (word, weight) lists
// that each sum to 1
void update_reference_sparse(ReferencePoint& ref, std::size_t vocab_size,
                             const std::vector<std::vector<std::pair<int, double>>>& docs);

// log vMF density up to its normalizing constant: tau * <mu, x>
double vmf_log_kernel(const VmfParams& params, const UnitDirection& x);

// MAP of a vMF mean under a vMF prior (prev, weight tau0) and observations
// (each weight tau1): the normalized weighted resultant. prev == nullptr
// means no prior (new topic).
UnitDirection vmf_map_combine(const UnitDirection* prev, double prev_weight,
                              std::span<const UnitDirection> obs, double obs_weight);

// uniform draw on the sum-zero unit sphere
UnitDirection uniform_direction(std::size_t vocab_size, Rng& rng);

// vMF draw on the sum-zero sphere (Wood's rejection scheme on the tangent-
// normal decomposition); concentration 0 is uniform
UnitDirection vmf_sample(const VmfParams& params, Rng& rng);

}  // namespace metatopic
