#include "mscpt/mat.hpp"

#include <algorithm>
#include <cmath>

namespace mscpt {

Mat randn(Rng& rng, int r, int c, double scale) {
    std::normal_distribution<double> d(0.0, 1.0);
    Mat m(r, c);
    for (auto& x : m.a) x = d(rng) * scale;
    return m;
}

Mat rand_uniform(Rng& rng, int r, int c, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    Mat m(r, c);
    for (auto& x : m.a) x = d(rng);
    return m;
}

bool all_finite(const Mat& m) {
    for (double x : m.a)
        if (!std::isfinite(x)) return false;
    return true;
}

double max_abs_diff(const Mat& x, const Mat& y) {
    if (!x.same_shape(y)) throw std::invalid_argument("max_abs_diff: shape mismatch");
    double d = 0.0;
    for (size_t i = 0; i < x.a.size(); ++i) d = std::max(d, std::fabs(x.a[i] - y.a[i]));
    return d;
}

double dot_rows(const Mat& x, int i, const Mat& y, int j) {
    if (x.cols != y.cols) throw std::invalid_argument("dot_rows: width mismatch");
    double s = 0.0;
    for (int c = 0; c < x.cols; ++c) s += x.at(i, c) * y.at(j, c);
    return s;
}

double row_norm(const Mat& x, int i) {
    double s = 0.0;
    for (int c = 0; c < x.cols; ++c) s += x.at(i, c) * x.at(i, c);
    return std::sqrt(s);
}

double cosine_rows(const Mat& x, int i, const Mat& y, int j) {
    const double nx = row_norm(x, i);
    const double ny = row_norm(y, j);
    if (nx == 0.0) throw std::domain_error("cosine: zero-norm row " + std::to_string(i));
    if (ny == 0.0) throw std::domain_error("cosine: zero-norm row " + std::to_string(j));
    return dot_rows(x, i, y, j) / (nx * ny);
}

}  // namespace mscpt
