// Reverse-mode autodiff over dense double matrices.
//
// A Tape is built fresh for every forward pass: leaves hold parameter and
// input values, every op appends one node, backward() walks the nodes in
// reverse creation order. Nodes whose gradient was never touched are skipped.
#pragma once

#include <functional>
#include <vector>

#include "mscpt/mat.hpp"

namespace mscpt {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

class Tape {
  public:
    struct Node {
        Mat value;
        Mat grad;
        bool touched = false;
        std::function<void(Tape&)> back;
    };

    Var leaf(Mat v);

    const Mat& val(Var v) const { return node(v).value; }
    // Gradient of the last backward() call; zeros if the node was never reached.
    Mat grad_of(Var v) const;
    size_t size() const { return nodes_.size(); }

    // Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
    // loss must be 1x1.
    void backward(Var loss);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double s);
    Var matmul(Var a, Var b);     // A * B
    Var matmul_nt(Var a, Var b);  // A * B^T
    Var transpose(Var a);
    Var concat_rows(const std::vector<Var>& parts);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_rows(Var a, int r0, int r1);  // rows [r0, r1)
    Var slice_cols(Var a, int c0, int c1);
    Var add_rowvec(Var a, Var v);  // a: MxN, v: 1xN
    Var mul_rowvec(Var a, Var v);
    Var scale_rows(Var a, Var s);  // s: Mx1, scales row i by s(i)
    Var scale_cols(Var a, Var s);  // s: Nx1, scales column j by s(j)
    Var row_softmax(Var a);
    Var layer_norm_rows(Var a, double eps = 1e-5);
    Var gelu(Var a);  // exact erf form
    Var tanh_(Var a);
    Var sigmoid_(Var a);
    Var l2_normalize_rows(Var a);  // throws on a zero-norm row
    Var row_sums(Var a);           // Mx1
    Var rsqrt(Var a);              // elementwise, requires positive entries
    Var add_identity(Var a);
    Var topk_mean_all(Var a, int k);  // mean of the k largest entries, 1x1
    Var cross_entropy_logits(Var logits, int target);  // logits: 1xK, 1x1 out
    Var gather_rows(Var a, const std::vector<int>& ids);
    Var mean_over_rows(Var a);  // 1xN
    Var col_max(Var a);         // 1xN, per-column max; ties route grad to the lowest row
    Var sum_all(Var a);         // 1x1

  private:
    std::vector<Node> nodes_;

    Node& node(Var v) { return nodes_.at(static_cast<size_t>(v.id)); }
    const Node& node(Var v) const { return nodes_.at(static_cast<size_t>(v.id)); }
    // Gradient accumulator; allocates zeros on first touch.
    Mat& acc(int id);
    Var push(Mat value, std::function<void(Tape&)> back);
};

}  // namespace mscpt
