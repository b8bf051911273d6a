#include "mscpt/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mscpt {

AttentionPoolParams AttentionPoolParams::init(Rng& rng, int d) {
    if (d < 1) throw std::invalid_argument("attention_pool: width must be >= 1");
    const int h = std::max(1, d / 2);
    AttentionPoolParams p;
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    p.V = randn(rng, d, h, s);
    p.U = randn(rng, d, h, s);
    p.w = randn(rng, h, 1, 1.0 / std::sqrt(static_cast<double>(h)));
    return p;
}

LinearHeadParams LinearHeadParams::init(Rng& rng, int d, int categories) {
    if (d < 1 || categories < 1) throw std::invalid_argument("linear_head: bad dimensions");
    LinearHeadParams p;
    p.W = randn(rng, d, categories, 1.0 / std::sqrt(static_cast<double>(d)));
    p.b = Mat::zeros(1, categories);
    return p;
}

static void check_nonempty(const Mat& P, const char* who) {
    if (P.rows < 1 || P.cols < 1) {
        throw std::invalid_argument(std::string(who) + ": empty bag");
    }
}

Mat mean_pool(const Mat& P) {
    check_nonempty(P, "mean_pool");
    Mat out(1, P.cols);
    for (int i = 0; i < P.rows; ++i) {
        for (int j = 0; j < P.cols; ++j) out.at(0, j) += P.at(i, j);
    }
    for (int j = 0; j < P.cols; ++j) out.at(0, j) /= P.rows;
    return out;
}

Mat max_pool(const Mat& P) {
    check_nonempty(P, "max_pool");
    Mat out(1, P.cols);
    for (int j = 0; j < P.cols; ++j) {
        double best = P.at(0, j);
        for (int i = 1; i < P.rows; ++i) best = std::max(best, P.at(i, j));
        out.at(0, j) = best;
    }
    return out;
}

AttentionPoolResult attention_pool(const Mat& P, const AttentionPoolParams& params) {
    check_nonempty(P, "attention_pool");
    Tape t;
    AttentionPoolVars v{t.leaf(params.V), t.leaf(params.U), t.leaf(params.w)};
    AttentionPoolOut out = attention_pool_t(t, t.leaf(P), v);
    return {t.val(out.embedding), t.val(out.weights)};
}

AttentionPoolVars bind_attention_pool(Tape& t, const AttentionPoolParams& params) {
    return {t.leaf(params.V), t.leaf(params.U), t.leaf(params.w)};
}

AttentionPoolOut attention_pool_t(Tape& t, Var P, const AttentionPoolVars& params) {
    check_nonempty(t.val(P), "attention_pool");
    Var gated = t.mul(t.tanh_(t.matmul(P, params.V)), t.sigmoid_(t.matmul(P, params.U)));
    Var scores = t.transpose(t.matmul(gated, params.w));  // 1 x M
    Var weights = t.row_softmax(scores);
    Var embedding = t.matmul(weights, P);
    return {embedding, weights};
}

Var mean_pool_t(Tape& t, Var P) {
    check_nonempty(t.val(P), "mean_pool");
    return t.mean_over_rows(P);
}

Var max_pool_t(Tape& t, Var P) {
    check_nonempty(t.val(P), "max_pool");
    return t.col_max(P);
}

Var linear_head_t(Tape& t, Var embedding, Var W, Var b) {
    return t.add(t.matmul(embedding, W), b);
}

}  // namespace mscpt
