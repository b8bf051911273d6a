#include "mscpt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mscpt {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

Var Tape::leaf(Mat v) {
    return push(std::move(v), nullptr);
}

Var Tape::push(Mat value, std::function<void(Tape&)> back) {
    nodes_.push_back(Node{std::move(value), Mat(), false, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::acc(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.touched) {
        n.grad = Mat::zeros(n.value.rows, n.value.cols);
        n.touched = true;
    }
    return n.grad;
}

Mat Tape::grad_of(Var v) const {
    const Node& n = node(v);
    if (!n.touched) return Mat::zeros(n.value.rows, n.value.cols);
    return n.grad;
}

void Tape::backward(Var loss) {
    const Node& ln = node(loss);
    require(ln.value.rows == 1 && ln.value.cols == 1, "backward: loss must be 1x1");
    acc(loss.id).at(0, 0) += 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.touched && n.back) n.back(*this);
    }
}

Var Tape::add(Var a, Var b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    require(x.same_shape(y), "add: shape mismatch");
    Mat out = x;
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] += y.a[i];
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, b, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        Mat& gb = t.acc(b.id);
        for (size_t i = 0; i < g.a.size(); ++i) {
            ga.a[i] += g.a[i];
            gb.a[i] += g.a[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    require(x.same_shape(y), "sub: shape mismatch");
    Mat out = x;
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] -= y.a[i];
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, b, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        Mat& gb = t.acc(b.id);
        for (size_t i = 0; i < g.a.size(); ++i) {
            ga.a[i] += g.a[i];
            gb.a[i] -= g.a[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    require(x.same_shape(y), "mul: shape mismatch");
    Mat out = x;
    for (size_t i = 0; i < out.a.size(); ++i) out.a[i] *= y.a[i];
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, b, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& x2 = t.val(a);
        const Mat& y2 = t.val(b);
        Mat& ga = t.acc(a.id);
        Mat& gb = t.acc(b.id);
        for (size_t i = 0; i < g.a.size(); ++i) {
            ga.a[i] += g.a[i] * y2.a[i];
            gb.a[i] += g.a[i] * x2.a[i];
        }
    });
}

Var Tape::scale(Var a, double s) {
    Mat out = val(a);
    for (auto& x : out.a) x *= s;
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, s, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (size_t i = 0; i < g.a.size(); ++i) ga.a[i] += s * g.a[i];
    });
}

Var Tape::matmul(Var a, Var b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    require(x.cols == y.rows, "matmul: inner dim mismatch");
    Mat out(x.rows, y.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int k = 0; k < x.cols; ++k) {
            const double xv = x.at(i, k);
            if (xv == 0.0) continue;
            for (int j = 0; j < y.cols; ++j) out.at(i, j) += xv * y.at(k, j);
        }
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, b, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& x2 = t.val(a);
        const Mat& y2 = t.val(b);
        Mat& ga = t.acc(a.id);  // dA = G * B^T
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                const double gv = g.at(i, j);
                if (gv == 0.0) continue;
                for (int k = 0; k < x2.cols; ++k) ga.at(i, k) += gv * y2.at(k, j);
            }
        Mat& gb = t.acc(b.id);  // dB = A^T * G
        for (int i = 0; i < g.rows; ++i)
            for (int k = 0; k < x2.cols; ++k) {
                const double xv = x2.at(i, k);
                if (xv == 0.0) continue;
                for (int j = 0; j < g.cols; ++j) gb.at(k, j) += xv * g.at(i, j);
            }
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Mat& x = val(a);
    const Mat& y = val(b);
    require(x.cols == y.cols, "matmul_nt: width mismatch");
    Mat out(x.rows, y.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < y.rows; ++j) out.at(i, j) = dot_rows(x, i, y, j);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, b, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& x2 = t.val(a);
        const Mat& y2 = t.val(b);
        Mat& ga = t.acc(a.id);  // dA = G * B
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                const double gv = g.at(i, j);
                if (gv == 0.0) continue;
                for (int k = 0; k < y2.cols; ++k) ga.at(i, k) += gv * y2.at(j, k);
            }
        Mat& gb = t.acc(b.id);  // dB = G^T * A
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                const double gv = g.at(i, j);
                if (gv == 0.0) continue;
                for (int k = 0; k < x2.cols; ++k) gb.at(j, k) += gv * x2.at(i, k);
            }
    });
}

Var Tape::transpose(Var a) {
    const Mat& x = val(a);
    Mat out(x.cols, x.rows);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) ga.at(j, i) += g.at(i, j);
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_rows: no parts");
    const int cols = val(parts[0]).cols;
    int rows = 0;
    for (Var p : parts) {
        require(val(p).cols == cols, "concat_rows: width mismatch");
        rows += val(p).rows;
    }
    Mat out(rows, cols);
    int r = 0;
    std::vector<int> offsets;
    for (Var p : parts) {
        const Mat& x = val(p);
        offsets.push_back(r);
        std::copy(x.a.begin(), x.a.end(), out.a.begin() + static_cast<size_t>(r) * cols);
        r += x.rows;
    }
    Var o{static_cast<int>(nodes_.size())};
    std::vector<Var> ps = parts;
    return push(std::move(out), [ps, offsets, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        for (size_t p = 0; p < ps.size(); ++p) {
            Mat& gp = t.acc(ps[p].id);
            const int off = offsets[p];
            for (int i = 0; i < gp.rows; ++i)
                for (int j = 0; j < gp.cols; ++j) gp.at(i, j) += g.at(off + i, j);
        }
    });
}

Var Tape::concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no parts");
    const int rows = val(parts[0]).rows;
    int cols = 0;
    for (Var p : parts) {
        require(val(p).rows == rows, "concat_cols: height mismatch");
        cols += val(p).cols;
    }
    Mat out(rows, cols);
    int c = 0;
    std::vector<int> offsets;
    for (Var p : parts) {
        const Mat& x = val(p);
        offsets.push_back(c);
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < x.cols; ++j) out.at(i, c + j) = x.at(i, j);
        c += x.cols;
    }
    Var o{static_cast<int>(nodes_.size())};
    std::vector<Var> ps = parts;
    return push(std::move(out), [ps, offsets, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        for (size_t p = 0; p < ps.size(); ++p) {
            Mat& gp = t.acc(ps[p].id);
            const int off = offsets[p];
            for (int i = 0; i < gp.rows; ++i)
                for (int j = 0; j < gp.cols; ++j) gp.at(i, j) += g.at(i, off + j);
        }
    });
}

Var Tape::slice_rows(Var a, int r0, int r1) {
    const Mat& x = val(a);
    require(0 <= r0 && r0 <= r1 && r1 <= x.rows, "slice_rows: bad range");
    Mat out(r1 - r0, x.cols);
    for (int i = r0; i < r1; ++i)
        for (int j = 0; j < x.cols; ++j) out.at(i - r0, j) = x.at(i, j);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, r0, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) ga.at(r0 + i, j) += g.at(i, j);
    });
}

Var Tape::slice_cols(Var a, int c0, int c1) {
    const Mat& x = val(a);
    require(0 <= c0 && c0 <= c1 && c1 <= x.cols, "slice_cols: bad range");
    Mat out(x.rows, c1 - c0);
    for (int i = 0; i < x.rows; ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = x.at(i, j);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, c0, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) ga.at(i, c0 + j) += g.at(i, j);
    });
}

Var Tape::add_rowvec(Var a, Var v) {
    const Mat& x = val(a);
    const Mat& y = val(v);
    require(y.rows == 1 && y.cols == x.cols, "add_rowvec: shape mismatch");
    Mat out = x;
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out.at(i, j) += y.at(0, j);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, v, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        Mat& gv = t.acc(v.id);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                ga.at(i, j) += g.at(i, j);
                gv.at(0, j) += g.at(i, j);
            }
    });
}

Var Tape::mul_rowvec(Var a, Var v) {
    const Mat& x = val(a);
    const Mat& y = val(v);
    require(y.rows == 1 && y.cols == x.cols, "mul_rowvec: shape mismatch");
    Mat out = x;
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out.at(i, j) *= y.at(0, j);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, v, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& x2 = t.val(a);
        const Mat& y2 = t.val(v);
        Mat& ga = t.acc(a.id);
        Mat& gv = t.acc(v.id);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                ga.at(i, j) += g.at(i, j) * y2.at(0, j);
                gv.at(0, j) += g.at(i, j) * x2.at(i, j);
            }
    });
}

Var Tape::scale_rows(Var a, Var s) {
    const Mat& x = val(a);
    const Mat& y = val(s);
    require(y.cols == 1 && y.rows == x.rows, "scale_rows: shape mismatch");
    Mat out = x;
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out.at(i, j) *= y.at(i, 0);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, s, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& x2 = t.val(a);
        const Mat& y2 = t.val(s);
        Mat& ga = t.acc(a.id);
        Mat& gs = t.acc(s.id);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                ga.at(i, j) += g.at(i, j) * y2.at(i, 0);
                gs.at(i, 0) += g.at(i, j) * x2.at(i, j);
            }
    });
}

Var Tape::scale_cols(Var a, Var s) {
    const Mat& x = val(a);
    const Mat& y = val(s);
    require(y.cols == 1 && y.rows == x.cols, "scale_cols: shape mismatch");
    Mat out = x;
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out.at(i, j) *= y.at(j, 0);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, s, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& x2 = t.val(a);
        const Mat& y2 = t.val(s);
        Mat& ga = t.acc(a.id);
        Mat& gs = t.acc(s.id);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) {
                ga.at(i, j) += g.at(i, j) * y2.at(j, 0);
                gs.at(j, 0) += g.at(i, j) * x2.at(i, j);
            }
    });
}

Var Tape::row_softmax(Var a) {
    const Mat& x = val(a);
    Mat out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        double m = x.at(i, 0);
        for (int j = 1; j < x.cols; ++j) m = std::max(m, x.at(i, j));
        double z = 0.0;
        for (int j = 0; j < x.cols; ++j) {
            out.at(i, j) = std::exp(x.at(i, j) - m);
            z += out.at(i, j);
        }
        for (int j = 0; j < x.cols; ++j) out.at(i, j) /= z;
    }
    Var o{static_cast<int>(nodes_.size())};
    // dx = s * (g - <g, s>) per row
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& s = t.node(o).value;
        Mat& ga = t.acc(a.id);
        for (int i = 0; i < s.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < s.cols; ++j) dot += g.at(i, j) * s.at(i, j);
            for (int j = 0; j < s.cols; ++j)
                ga.at(i, j) += s.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var Tape::layer_norm_rows(Var a, double eps) {
    const Mat& x = val(a);
    const int n = x.cols;
    Mat out(x.rows, n);
    Mat inv_std(x.rows, 1);
    for (int i = 0; i < x.rows; ++i) {
        double mu = 0.0;
        for (int j = 0; j < n; ++j) mu += x.at(i, j);
        mu /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std.at(i, 0) = inv;
        for (int j = 0; j < n; ++j) out.at(i, j) = (x.at(i, j) - mu) * inv;
    }
    Var o{static_cast<int>(nodes_.size())};
    // dx = inv * (g - mean(g) - y * mean(g .* y)) per row
    return push(std::move(out), [a, inv_std, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& y = t.node(o).value;
        Mat& ga = t.acc(a.id);
        const int n2 = y.cols;
        for (int i = 0; i < y.rows; ++i) {
            double gm = 0.0, gym = 0.0;
            for (int j = 0; j < n2; ++j) {
                gm += g.at(i, j);
                gym += g.at(i, j) * y.at(i, j);
            }
            gm /= n2;
            gym /= n2;
            const double inv = inv_std.at(i, 0);
            for (int j = 0; j < n2; ++j)
                ga.at(i, j) += inv * (g.at(i, j) - gm - y.at(i, j) * gym);
        }
    });
}

Var Tape::gelu(Var a) {
    const Mat& x = val(a);
    Mat out = x;
    for (auto& v : out.a) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& x2 = t.val(a);
        Mat& ga = t.acc(a.id);
        const double c = 1.0 / std::sqrt(2.0 * 3.14159265358979323846);
        for (size_t i = 0; i < g.a.size(); ++i) {
            const double v = x2.a[i];
            const double d = 0.5 * (1.0 + std::erf(v / std::sqrt(2.0))) +
                             v * c * std::exp(-0.5 * v * v);
            ga.a[i] += g.a[i] * d;
        }
    });
}

Var Tape::tanh_(Var a) {
    Mat out = val(a);
    for (auto& v : out.a) v = std::tanh(v);
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& y = t.node(o).value;
        Mat& ga = t.acc(a.id);
        for (size_t i = 0; i < g.a.size(); ++i) ga.a[i] += g.a[i] * (1.0 - y.a[i] * y.a[i]);
    });
}

Var Tape::sigmoid_(Var a) {
    Mat out = val(a);
    for (auto& v : out.a) v = 1.0 / (1.0 + std::exp(-v));
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& y = t.node(o).value;
        Mat& ga = t.acc(a.id);
        for (size_t i = 0; i < g.a.size(); ++i) ga.a[i] += g.a[i] * y.a[i] * (1.0 - y.a[i]);
    });
}

Var Tape::l2_normalize_rows(Var a) {
    const Mat& x = val(a);
    Mat out(x.rows, x.cols);
    Mat norms(x.rows, 1);
    for (int i = 0; i < x.rows; ++i) {
        const double n = row_norm(x, i);
        if (n == 0.0)
            throw std::domain_error("l2_normalize: zero-norm row " + std::to_string(i));
        norms.at(i, 0) = n;
        for (int j = 0; j < x.cols; ++j) out.at(i, j) = x.at(i, j) / n;
    }
    Var o{static_cast<int>(nodes_.size())};
    // dx = (g - y * <y, g>) / n per row
    return push(std::move(out), [a, norms, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& y = t.node(o).value;
        Mat& ga = t.acc(a.id);
        for (int i = 0; i < y.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < y.cols; ++j) dot += y.at(i, j) * g.at(i, j);
            const double n = norms.at(i, 0);
            for (int j = 0; j < y.cols; ++j)
                ga.at(i, j) += (g.at(i, j) - y.at(i, j) * dot) / n;
        }
    });
}

Var Tape::row_sums(Var a) {
    const Mat& x = val(a);
    Mat out(x.rows, 1);
    for (int i = 0; i < x.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < x.cols; ++j) s += x.at(i, j);
        out.at(i, 0) = s;
    }
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (int i = 0; i < ga.rows; ++i)
            for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(i, 0);
    });
}

Var Tape::rsqrt(Var a) {
    const Mat& x = val(a);
    Mat out = x;
    for (auto& v : out.a) {
        if (v <= 0.0) throw std::domain_error("rsqrt: non-positive entry");
        v = 1.0 / std::sqrt(v);
    }
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        const Mat& y = t.node(o).value;
        Mat& ga = t.acc(a.id);
        for (size_t i = 0; i < g.a.size(); ++i)
            ga.a[i] += g.a[i] * (-0.5 * y.a[i] * y.a[i] * y.a[i]);
    });
}

Var Tape::add_identity(Var a) {
    const Mat& x = val(a);
    require(x.rows == x.cols, "add_identity: matrix not square");
    Mat out = x;
    for (int i = 0; i < x.rows; ++i) out.at(i, i) += 1.0;
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (size_t i = 0; i < g.a.size(); ++i) ga.a[i] += g.a[i];
    });
}

Var Tape::topk_mean_all(Var a, int k) {
    const Mat& x = val(a);
    const int total = static_cast<int>(x.a.size());
    require(k >= 1 && k <= total, "topk_mean_all: k out of range (k=" + std::to_string(k) +
                                      ", entries=" + std::to_string(total) + ")");
    std::vector<int> idx(static_cast<size_t>(total));
    std::iota(idx.begin(), idx.end(), 0);
    // Largest values first; ties resolved by lower flat index.
    std::sort(idx.begin(), idx.end(), [&x](int i, int j) {
        if (x.a[static_cast<size_t>(i)] != x.a[static_cast<size_t>(j)])
            return x.a[static_cast<size_t>(i)] > x.a[static_cast<size_t>(j)];
        return i < j;
    });
    idx.resize(static_cast<size_t>(k));
    double s = 0.0;
    for (int i : idx) s += x.a[static_cast<size_t>(i)];
    Mat out(1, 1);
    out.at(0, 0) = s / k;
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, idx, k, o](Tape& t) {
        const double g = t.node(o).grad.at(0, 0);
        Mat& ga = t.acc(a.id);
        for (int i : idx) ga.a[static_cast<size_t>(i)] += g / k;
    });
}

Var Tape::cross_entropy_logits(Var logits, int target) {
    const Mat& x = val(logits);
    require(x.rows == 1, "cross_entropy_logits: logits must be 1xK");
    require(target >= 0 && target < x.cols, "cross_entropy_logits: target out of range");
    double m = x.at(0, 0);
    for (int j = 1; j < x.cols; ++j) m = std::max(m, x.at(0, j));
    double z = 0.0;
    for (int j = 0; j < x.cols; ++j) z += std::exp(x.at(0, j) - m);
    Mat out(1, 1);
    out.at(0, 0) = m + std::log(z) - x.at(0, target);
    Var o{static_cast<int>(nodes_.size())};
    // dx = softmax(x) - onehot(target)
    return push(std::move(out), [logits, target, o](Tape& t) {
        const double g = t.node(o).grad.at(0, 0);
        const Mat& x2 = t.val(logits);
        Mat& ga = t.acc(logits.id);
        double m2 = x2.at(0, 0);
        for (int j = 1; j < x2.cols; ++j) m2 = std::max(m2, x2.at(0, j));
        double z2 = 0.0;
        for (int j = 0; j < x2.cols; ++j) z2 += std::exp(x2.at(0, j) - m2);
        for (int j = 0; j < x2.cols; ++j) {
            const double p = std::exp(x2.at(0, j) - m2) / z2;
            ga.at(0, j) += g * (p - (j == target ? 1.0 : 0.0));
        }
    });
}

Var Tape::gather_rows(Var a, const std::vector<int>& ids) {
    const Mat& x = val(a);
    for (int id : ids)
        require(id >= 0 && id < x.rows, "gather_rows: row id out of range");
    Mat out(static_cast<int>(ids.size()), x.cols);
    for (size_t r = 0; r < ids.size(); ++r)
        for (int j = 0; j < x.cols; ++j) out.at(static_cast<int>(r), j) = x.at(ids[r], j);
    Var o{static_cast<int>(nodes_.size())};
    std::vector<int> ids2 = ids;
    return push(std::move(out), [a, ids2, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (size_t r = 0; r < ids2.size(); ++r)
            for (int j = 0; j < g.cols; ++j)
                ga.at(ids2[r], j) += g.at(static_cast<int>(r), j);
    });
}

Var Tape::mean_over_rows(Var a) {
    const Mat& x = val(a);
    require(x.rows >= 1, "mean_over_rows: empty matrix");
    Mat out(1, x.cols);
    for (int i = 0; i < x.rows; ++i)
        for (int j = 0; j < x.cols; ++j) out.at(0, j) += x.at(i, j);
    for (int j = 0; j < x.cols; ++j) out.at(0, j) /= x.rows;
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (int i = 0; i < ga.rows; ++i)
            for (int j = 0; j < ga.cols; ++j) ga.at(i, j) += g.at(0, j) / ga.rows;
    });
}

Var Tape::col_max(Var a) {
    const Mat& x = val(a);
    require(x.rows >= 1 && x.cols >= 1, "col_max: empty matrix");
    Mat out(1, x.cols);
    std::vector<int> argmax(static_cast<size_t>(x.cols), 0);
    for (int j = 0; j < x.cols; ++j) {
        double best = x.at(0, j);
        for (int i = 1; i < x.rows; ++i) {
            if (x.at(i, j) > best) {
                best = x.at(i, j);
                argmax[static_cast<size_t>(j)] = i;
            }
        }
        out.at(0, j) = best;
    }
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o, argmax](Tape& t) {
        const Mat& g = t.node(o).grad;
        Mat& ga = t.acc(a.id);
        for (int j = 0; j < ga.cols; ++j) {
            ga.at(argmax[static_cast<size_t>(j)], j) += g.at(0, j);
        }
    });
}

Var Tape::sum_all(Var a) {
    const Mat& x = val(a);
    Mat out(1, 1);
    for (double v : x.a) out.at(0, 0) += v;
    Var o{static_cast<int>(nodes_.size())};
    return push(std::move(out), [a, o](Tape& t) {
        const double g = t.node(o).grad.at(0, 0);
        Mat& ga = t.acc(a.id);
        for (auto& v : ga.a) v += g;
    });
}

}  // namespace mscpt
