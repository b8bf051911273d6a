// Non-parametric cross-guided top-K pooling: bag logits from patch-description
// similarity blocks, the triple cross-entropy objective, and prediction.
#pragma once

#include <vector>

#include "mscpt/mat.hpp"
#include "mscpt/tape.hpp"

namespace mscpt {

struct LogitsTriple {
    std::vector<double> high;
    std::vector<double> low;
    std::vector<double> overall;  // (high + low) / 2, elementwise
};

struct LogitsTripleVars {
    Var high;
    Var low;
    Var overall;  // each 1 x K
};

// Mean of the k_top largest entries of the block. k_top = 1 is the max,
// k_top = rows*cols the mean. Out-of-range k_top is an error, never a clamp.
double topk_pool(const Mat& block, int k_top);

// Per category k: pool the dot-product block of the scale's patches against
// that scale's own description rows, plus (when cross_guidance) the other
// scale's rows. Z rows are category-major: row k*C+c is description c of
// category k.
LogitsTripleVars cross_guided_logits_t(Tape& t, Var P_high, Var P_low, Var Z_high,
                                       Var Z_low, int num_categories, int k_top,
                                       bool cross_guidance = true);
LogitsTriple cross_guided_logits(const Mat& P_high, const Mat& P_low, const Mat& Z_high,
                                 const Mat& Z_low, int num_categories, int k_top,
                                 bool cross_guidance = true);

// Sum of cross-entropy on overall, high, and low logits, equal weights.
Var mscpt_loss_t(Tape& t, const LogitsTripleVars& triple, int label);
double mscpt_loss(const LogitsTriple& triple, int label);

// Argmax of the overall logits; ties break toward the lower index.
int predict(const LogitsTriple& triple);

}  // namespace mscpt
