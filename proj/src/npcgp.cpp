#include "mscpt/npcgp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>

namespace mscpt {

double topk_pool(const Mat& block, int k_top) {
    const int total = block.rows * block.cols;
    if (k_top < 1 || k_top > total) {
        throw std::invalid_argument("topk_pool: k_top must be in [1, " + std::to_string(total) +
                                    "], got " + std::to_string(k_top));
    }
    std::vector<double> v(block.a.begin(), block.a.end());
    std::partial_sort(v.begin(), v.begin() + k_top, v.end(), std::greater<double>());
    double s = 0.0;
    for (int i = 0; i < k_top; ++i) s += v[static_cast<size_t>(i)];
    return s / k_top;
}

namespace {

void check_blocks(const Mat& P_high, const Mat& P_low, const Mat& Z_high, const Mat& Z_low,
                  int num_categories) {
    if (num_categories < 1) {
        throw std::invalid_argument("cross_guided_logits: need at least one category");
    }
    if (Z_high.rows % num_categories != 0 || Z_low.rows % num_categories != 0) {
        throw std::invalid_argument(
            "cross_guided_logits: description rows are not a multiple of the category count");
    }
    if (P_high.cols != Z_high.cols || P_low.cols != Z_low.cols || Z_high.cols != Z_low.cols) {
        throw std::invalid_argument("cross_guided_logits: embedding width mismatch");
    }
}

// 1 x K row of per-category pooled scores for one patch/description pairing.
Var pooled_row_t(Tape& t, Var P, Var Z, int num_categories, int k_top) {
    Var scores = t.matmul_nt(P, Z);  // M x (K*C)
    const int c_per = t.val(Z).rows / num_categories;
    std::vector<Var> cats;
    cats.reserve(static_cast<size_t>(num_categories));
    for (int k = 0; k < num_categories; ++k) {
        Var block = t.slice_cols(scores, k * c_per, (k + 1) * c_per);
        cats.push_back(t.topk_mean_all(block, k_top));
    }
    return t.concat_cols(cats);
}

}  // namespace

LogitsTripleVars cross_guided_logits_t(Tape& t, Var P_high, Var P_low, Var Z_high, Var Z_low,
                                       int num_categories, int k_top, bool cross_guidance) {
    check_blocks(t.val(P_high), t.val(P_low), t.val(Z_high), t.val(Z_low), num_categories);
    Var high = pooled_row_t(t, P_high, Z_high, num_categories, k_top);
    Var low = pooled_row_t(t, P_low, Z_low, num_categories, k_top);
    if (cross_guidance) {
        high = t.add(high, pooled_row_t(t, P_high, Z_low, num_categories, k_top));
        low = t.add(low, pooled_row_t(t, P_low, Z_high, num_categories, k_top));
    }
    Var overall = t.scale(t.add(high, low), 0.5);
    return {high, low, overall};
}

LogitsTriple cross_guided_logits(const Mat& P_high, const Mat& P_low, const Mat& Z_high,
                                 const Mat& Z_low, int num_categories, int k_top,
                                 bool cross_guidance) {
    Tape t;
    LogitsTripleVars v =
        cross_guided_logits_t(t, t.leaf(P_high), t.leaf(P_low), t.leaf(Z_high), t.leaf(Z_low),
                              num_categories, k_top, cross_guidance);
    auto to_vec = [&](Var x) {
        const Mat& m = t.val(x);
        return std::vector<double>(m.a.begin(), m.a.end());
    };
    return {to_vec(v.high), to_vec(v.low), to_vec(v.overall)};
}

Var mscpt_loss_t(Tape& t, const LogitsTripleVars& triple, int label) {
    Var l = t.add(t.cross_entropy_logits(triple.overall, label),
                  t.cross_entropy_logits(triple.high, label));
    return t.add(l, t.cross_entropy_logits(triple.low, label));
}

namespace {

double ce_from_logits(const std::vector<double>& logits, int label) {
    if (label < 0 || label >= static_cast<int>(logits.size())) {
        throw std::invalid_argument("mscpt_loss: label " + std::to_string(label) +
                                    " outside [0, " + std::to_string(logits.size()) + ")");
    }
    double mx = *std::max_element(logits.begin(), logits.end());
    double lse = 0.0;
    for (double v : logits) lse += std::exp(v - mx);
    return mx + std::log(lse) - logits[static_cast<size_t>(label)];
}

}  // namespace

double mscpt_loss(const LogitsTriple& triple, int label) {
    return ce_from_logits(triple.overall, label) + ce_from_logits(triple.high, label) +
           ce_from_logits(triple.low, label);
}

int predict(const LogitsTriple& triple) {
    if (triple.overall.empty()) throw std::invalid_argument("predict: empty logits");
    auto it = std::max_element(triple.overall.begin(), triple.overall.end());
    return static_cast<int>(it - triple.overall.begin());
}

}  // namespace mscpt
