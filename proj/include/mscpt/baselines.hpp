// Reference bag aggregators: mean pooling, max pooling, and gated-attention
// pooling, each feeding a linear category head.
#pragma once

#include "mscpt/mat.hpp"
#include "mscpt/tape.hpp"

namespace mscpt {

struct AttentionPoolParams {
    Mat V;  // d x h, tanh branch
    Mat U;  // d x h, sigmoid gate
    Mat w;  // h x 1, scoring vector
    static AttentionPoolParams init(Rng& rng, int d);
};

struct LinearHeadParams {
    Mat W;  // d x K
    Mat b;  // 1 x K
    static LinearHeadParams init(Rng& rng, int d, int categories);
};

Mat mean_pool(const Mat& P);  // 1 x d, coordinate-wise mean over instance rows
Mat max_pool(const Mat& P);   // 1 x d, coordinate-wise max

struct AttentionPoolResult {
    Mat embedding;  // 1 x d
    Mat weights;    // 1 x M, sums to 1
};
AttentionPoolResult attention_pool(const Mat& P, const AttentionPoolParams& params);

// ---- tape path ----

struct AttentionPoolVars {
    Var V, U, w;
};
AttentionPoolVars bind_attention_pool(Tape& t, const AttentionPoolParams& params);

struct AttentionPoolOut {
    Var embedding;  // 1 x d
    Var weights;    // 1 x M
};
AttentionPoolOut attention_pool_t(Tape& t, Var P, const AttentionPoolVars& params);

Var mean_pool_t(Tape& t, Var P);
Var max_pool_t(Tape& t, Var P);
Var linear_head_t(Tape& t, Var embedding, Var W, Var b);  // 1 x K logits

}  // namespace mscpt
