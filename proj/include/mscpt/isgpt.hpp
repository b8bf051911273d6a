// Image-text-similarity graph construction and GCN graph prompt tuning,
// plus the KNN graph builders used by the graph-source ablation.
#pragma once

#include <vector>

#include "mscpt/mat.hpp"
#include "mscpt/tape.hpp"

namespace mscpt {

struct GcnParams {
    std::vector<Mat> W;  // one d_joint x d_joint matrix per layer
    // Identity init keeps the tuned embeddings at the propagated input on
    // step zero.
    static GcnParams init(int layers, int d);
};

// ---- tape path (training) ----

// S: M x (K*C), row i is the softmax over cos(P_i, Z_j) / tau.
Var semantic_similarity_t(Tape& t, Var P, Var Z, double tau);
// A: M x M, row i is the softmax over cos(S_i, S_j) / tau.
Var adjacency_from_similarity_t(Tape& t, Var S, double tau);
// sigma(D^-1/2 (A+I) D^-1/2 H W), sigma = GELU on hidden layers, identity on
// the last so the output stays in the joint embedding space.
Var gcn_layer_t(Tape& t, Var A, Var H, Var W, bool hidden_activation);
Var graph_prompt_tune_t(Tape& t, Var P, Var A, const std::vector<Var>& Ws);

// ---- plain wrappers (evaluate the same graph on a scratch tape) ----

Mat semantic_similarity(const Mat& P, const Mat& Z, double tau);
Mat adjacency_from_similarity(const Mat& S, double tau);
Mat gcn_layer(const Mat& A, const Mat& H, const Mat& W, bool hidden_activation);
Mat graph_prompt_tune(const Mat& P, const Mat& A, const GcnParams& params);

// ---- KNN graph builders (constants w.r.t. training) ----

// Binary edges to the k nearest Euclidean neighbors, then row-normalized.
// Ties break toward the lower index. Requires 1 <= k <= M-1.
Mat knn_graph_coords(const Mat& coords, int k);
// Neighbors by descending cosine similarity of feature rows.
Mat knn_graph_features(const Mat& P, int k);

}  // namespace mscpt
