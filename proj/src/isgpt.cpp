#include "mscpt/isgpt.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mscpt {

GcnParams GcnParams::init(int layers, int d) {
    if (layers < 1) throw std::invalid_argument("gcn: layers must be >= 1");
    if (d < 1) throw std::invalid_argument("gcn: width must be >= 1");
    GcnParams p;
    p.W.assign(static_cast<size_t>(layers), Mat::identity(d));
    return p;
}

static void check_tau(double tau, const char* where) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument(std::string(where) + ": tau must be > 0");
    }
}

Var semantic_similarity_t(Tape& t, Var P, Var Z, double tau) {
    check_tau(tau, "semantic_similarity");
    if (t.val(P).cols != t.val(Z).cols) {
        throw std::invalid_argument("semantic_similarity: width mismatch");
    }
    Var cosines = t.matmul_nt(t.l2_normalize_rows(P), t.l2_normalize_rows(Z));
    return t.row_softmax(t.scale(cosines, 1.0 / tau));
}

Var adjacency_from_similarity_t(Tape& t, Var S, double tau) {
    check_tau(tau, "adjacency_from_similarity");
    Var n = t.l2_normalize_rows(S);
    return t.row_softmax(t.scale(t.matmul_nt(n, n), 1.0 / tau));
}

Var gcn_layer_t(Tape& t, Var A, Var H, Var W, bool hidden_activation) {
    const Mat& a = t.val(A);
    if (a.rows != a.cols) throw std::invalid_argument("gcn_layer: A must be square");
    if (a.rows != t.val(H).rows) {
        throw std::invalid_argument("gcn_layer: A and H row counts differ");
    }
    Var a_tilde = t.add_identity(A);
    Var d_inv_sqrt = t.rsqrt(t.row_sums(a_tilde));  // M x 1
    Var norm = t.scale_cols(t.scale_rows(a_tilde, d_inv_sqrt), d_inv_sqrt);
    Var out = t.matmul(t.matmul(norm, H), W);
    return hidden_activation ? t.gelu(out) : out;
}

Var graph_prompt_tune_t(Tape& t, Var P, Var A, const std::vector<Var>& Ws) {
    if (Ws.empty()) throw std::invalid_argument("graph_prompt_tune: no layers");
    Var h = P;
    for (size_t l = 0; l < Ws.size(); ++l) {
        h = gcn_layer_t(t, A, h, Ws[l], /*hidden_activation=*/l + 1 < Ws.size());
    }
    return h;
}

Mat semantic_similarity(const Mat& P, const Mat& Z, double tau) {
    Tape t;
    return t.val(semantic_similarity_t(t, t.leaf(P), t.leaf(Z), tau));
}

Mat adjacency_from_similarity(const Mat& S, double tau) {
    Tape t;
    return t.val(adjacency_from_similarity_t(t, t.leaf(S), tau));
}

Mat gcn_layer(const Mat& A, const Mat& H, const Mat& W, bool hidden_activation) {
    Tape t;
    return t.val(gcn_layer_t(t, t.leaf(A), t.leaf(H), t.leaf(W), hidden_activation));
}

Mat graph_prompt_tune(const Mat& P, const Mat& A, const GcnParams& params) {
    Tape t;
    std::vector<Var> ws;
    ws.reserve(params.W.size());
    for (const Mat& w : params.W) ws.push_back(t.leaf(w));
    return t.val(graph_prompt_tune_t(t, t.leaf(P), t.leaf(A), ws));
}

namespace {

Mat knn_from_scores(const std::vector<std::vector<double>>& score, int k,
                    bool larger_is_closer) {
    const int m = static_cast<int>(score.size());
    Mat a = Mat::zeros(m, m);
    for (int i = 0; i < m; ++i) {
        std::vector<int> order;
        order.reserve(static_cast<size_t>(m) - 1);
        for (int j = 0; j < m; ++j) {
            if (j != i) order.push_back(j);
        }
        std::sort(order.begin(), order.end(), [&](int x, int y) {
            double sx = score[static_cast<size_t>(i)][static_cast<size_t>(x)];
            double sy = score[static_cast<size_t>(i)][static_cast<size_t>(y)];
            if (sx != sy) return larger_is_closer ? sx > sy : sx < sy;
            return x < y;
        });
        for (int r = 0; r < k; ++r) {
            a.at(i, order[static_cast<size_t>(r)]) = 1.0 / k;
        }
    }
    return a;
}

void check_knn_args(int m, int k, const char* where) {
    if (k < 1 || k > m - 1) {
        throw std::invalid_argument(std::string(where) + ": k must be in [1, M-1], got k=" +
                                    std::to_string(k) + " with M=" + std::to_string(m));
    }
}

}  // namespace

Mat knn_graph_coords(const Mat& coords, int k) {
    const int m = coords.rows;
    check_knn_args(m, k, "knn_graph_coords");
    std::vector<std::vector<double>> dist(
        static_cast<size_t>(m), std::vector<double>(static_cast<size_t>(m), 0.0));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            double d2 = 0.0;
            for (int c = 0; c < coords.cols; ++c) {
                double diff = coords.at(i, c) - coords.at(j, c);
                d2 += diff * diff;
            }
            dist[static_cast<size_t>(i)][static_cast<size_t>(j)] = d2;
        }
    }
    return knn_from_scores(dist, k, /*larger_is_closer=*/false);
}

Mat knn_graph_features(const Mat& P, int k) {
    const int m = P.rows;
    check_knn_args(m, k, "knn_graph_features");
    std::vector<std::vector<double>> sim(
        static_cast<size_t>(m), std::vector<double>(static_cast<size_t>(m), 0.0));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            sim[static_cast<size_t>(i)][static_cast<size_t>(j)] = cosine_rows(P, i, P, j);
        }
    }
    return knn_from_scores(sim, k, /*larger_is_closer=*/true);
}

}  // namespace mscpt
