#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace metatopic {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double coord_sum(const Vec& a) {
    double s = 0.0;
    for (double x : a) s += x;
    return s;
}

// y += alpha * x
inline void axpy(double alpha, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale_inplace(Vec& a, double alpha) {
    for (double& x : a) x *= alpha;
}

inline Vec weighted_sum(double wa, const Vec& a, double wb, const Vec& b) {
    Vec r(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) r[i] = wa * a[i] + wb * b[i];
    return r;
}

inline double angle_between(const Vec& a, const Vec& b) {
    double c = dot(a, b) / (norm2(a) * norm2(b));
    if (c > 1.0) c = 1.0;
    if (c < -1.0) c = -1.0;
    return std::acos(c);
}

}  // namespace metatopic
