// Dense row-major double matrix used everywhere in the pipeline.
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace mscpt {

using Rng = std::mt19937_64;

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {
        if (r < 0 || c < 0) throw std::invalid_argument("Mat: negative dimension");
    }

    static Mat zeros(int r, int c) { return Mat(r, c); }
    static Mat full(int r, int c, double v) {
        Mat m(r, c);
        std::fill(m.a.begin(), m.a.end(), v);
        return m;
    }
    static Mat identity(int n) {
        Mat m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }
    static Mat row(const std::vector<double>& v) {
        Mat m(1, static_cast<int>(v.size()));
        m.a = v;
        return m;
    }

    double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    const double& at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    bool empty() const { return rows == 0 || cols == 0; }
    size_t size() const { return a.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

// Gaussian fill, N(0, scale^2).
Mat randn(Rng& rng, int r, int c, double scale = 1.0);
Mat rand_uniform(Rng& rng, int r, int c, double lo = 0.0, double hi = 1.0);

bool all_finite(const Mat& m);
double max_abs_diff(const Mat& x, const Mat& y);
double dot_rows(const Mat& x, int i, const Mat& y, int j);
double row_norm(const Mat& x, int i);
// Cosine of two matrix rows; throws std::domain_error naming the row on zero norm.
double cosine_rows(const Mat& x, int i, const Mat& y, int j);

}  // namespace mscpt
