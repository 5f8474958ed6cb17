#pragma once

#include <functional>
#include <span>

#include "sugmine/common.hpp"

namespace sugmine::ad {

/// A named tensor with an externally owned gradient accumulator. Gradients
/// keep accumulating across tape runs until the optimizer clears them, which
/// is what makes gradient accumulation over several minibatches trivial.
struct Param {
    std::string name;
    Mat value;
    Mat grad;
    bool adapter = false;

    Param() = default;
    Param(std::string n, int r, int c, bool is_adapter = false)
        : name(std::move(n)), value(r, c), grad(r, c), adapter(is_adapter) {}

    void zero_grad() { grad.fill(0.0); }
    size_t count() const { return value.size(); }
};

/// Record-and-replay reverse-mode tape over matrices. Ops append nodes in
/// topological order; backward() walks them in reverse and finally flushes
/// leaf gradients into their bound Params.
class Tape {
  public:
    struct Var {
        int id = -1;
    };

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    const Mat& val(Var v) const {
        const Node& n = nodes_[static_cast<size_t>(v.id)];
        return n.external ? *n.external : n.storage;
    }
    const Mat& grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad; }

    Var leaf(Mat v) {
        const int id = new_node(std::move(v));
        return {id};
    }

    Var param(Param& p) {
        const int id = new_node_external(&p.value);
        nodes_[static_cast<size_t>(id)].bound = &p;
        return {id};
    }

    /// Constant input (no gradient ever read); value referenced, not copied.
    Var constant(const Mat& m) { return {new_node_external(&m)}; }

    Var matmul(Var a, Var b) {
        const Mat &A = val(a), &B = val(b);
        if (A.cols != B.rows) throw NumericError("matmul: inner dimensions differ");
        Mat c;
        matmul_into(A, B, c);
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a, b] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            matmul_nt_into(dC, val(b), mutable_grad(a), true);
            matmul_tn_into(val(a), dC, mutable_grad(b), true);
        };
        return {id};
    }

    // a * b^T
    Var matmul_nt(Var a, Var b) {
        const Mat &A = val(a), &B = val(b);
        if (A.cols != B.cols) throw NumericError("matmul_nt: inner dimensions differ");
        Mat c;
        matmul_nt_into(A, B, c);
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a, b] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            matmul_into(dC, val(b), mutable_grad(a), true);
            matmul_tn_into(dC, val(a), mutable_grad(b), true);
        };
        return {id};
    }

    Var add(Var a, Var b) {
        const Mat &A = val(a), &B = val(b);
        if (!A.same_shape(B)) throw NumericError("add: shape mismatch");
        Mat c = A;
        for (size_t i = 0; i < c.size(); ++i) c.a[i] += B.a[i];
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a, b] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            accumulate(mutable_grad(a), dC);
            accumulate(mutable_grad(b), dC);
        };
        return {id};
    }

    /// Broadcast-add a 1 x cols row vector to every row.
    Var add_row(Var a, Var r) {
        const Mat &A = val(a), &R = val(r);
        if (R.rows != 1 || R.cols != A.cols) throw NumericError("add_row: shape mismatch");
        Mat c = A;
        for (int i = 0; i < c.rows; ++i) {
            double* crow = c.row_ptr(i);
            for (int j = 0; j < c.cols; ++j) crow[j] += R(0, j);
        }
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a, r] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            accumulate(mutable_grad(a), dC);
            Mat& dR = mutable_grad(r);
            for (int i = 0; i < dC.rows; ++i)
                for (int j = 0; j < dC.cols; ++j) dR(0, j) += dC(i, j);
        };
        return {id};
    }

    Var add_const(Var a, const Mat& m) {
        const Mat& A = val(a);
        if (!A.same_shape(m)) throw NumericError("add_const: shape mismatch");
        Mat c = A;
        for (size_t i = 0; i < c.size(); ++i) c.a[i] += m.a[i];
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a] {
            accumulate(mutable_grad(a), nodes_[static_cast<size_t>(id)].grad);
        };
        return {id};
    }

    Var scale(Var a, double s) {
        Mat c = val(a);
        for (double& v : c.a) v *= s;
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a, s] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            Mat& dA = mutable_grad(a);
            for (size_t i = 0; i < dC.size(); ++i) dA.a[i] += s * dC.a[i];
        };
        return {id};
    }

    Var relu(Var a) {
        Mat c = val(a);
        for (double& v : c.a) v = v > 0.0 ? v : 0.0;
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            const Mat& A = val(a);
            Mat& dA = mutable_grad(a);
            for (size_t i = 0; i < dC.size(); ++i)
                if (A.a[i] > 0.0) dA.a[i] += dC.a[i];
        };
        return {id};
    }

    /// Row-wise softmax with PAD columns forced to zero weight (-inf logits).
    /// Throws if a row has every column masked.
    Var softmax_rows(Var a, const std::vector<char>& pad_mask) {
        const Mat& A = val(a);
        if (static_cast<int>(pad_mask.size()) != A.cols)
            throw NumericError("softmax_rows: mask length mismatch");
        bool any_kept = false;
        for (char m : pad_mask)
            if (!m) any_kept = true;
        if (!any_kept) throw NumericError("softmax_rows: degenerate mask (all positions masked)");

        Mat c(A.rows, A.cols);
        for (int i = 0; i < A.rows; ++i) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < A.cols; ++j)
                if (!pad_mask[static_cast<size_t>(j)]) mx = std::max(mx, A(i, j));
            double z = 0.0;
            for (int j = 0; j < A.cols; ++j) {
                if (pad_mask[static_cast<size_t>(j)]) continue;
                c(i, j) = std::exp(A(i, j) - mx);
                z += c(i, j);
            }
            for (int j = 0; j < A.cols; ++j)
                if (!pad_mask[static_cast<size_t>(j)]) c(i, j) /= z;
        }
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a] {
            const Mat& Y = val(Var{id});
            const Mat& dY = nodes_[static_cast<size_t>(id)].grad;
            Mat& dA = mutable_grad(a);
            for (int i = 0; i < Y.rows; ++i) {
                double s = 0.0;
                for (int j = 0; j < Y.cols; ++j) s += dY(i, j) * Y(i, j);
                for (int j = 0; j < Y.cols; ++j) dA(i, j) += Y(i, j) * (dY(i, j) - s);
            }
        };
        return {id};
    }

    /// Per-row layer norm with learnable gain/bias (1 x cols each).
    Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5) {
        const Mat &X = val(x), &G = val(gain), &B = val(bias);
        if (G.rows != 1 || G.cols != X.cols || B.rows != 1 || B.cols != X.cols)
            throw NumericError("layer_norm: shape mismatch");
        Mat c(X.rows, X.cols);
        const int d = X.cols;
        for (int i = 0; i < X.rows; ++i) {
            double mean = 0.0;
            for (int j = 0; j < d; ++j) mean += X(i, j);
            mean /= d;
            double var = 0.0;
            for (int j = 0; j < d; ++j) {
                const double t = X(i, j) - mean;
                var += t * t;
            }
            var /= d;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int j = 0; j < d; ++j) c(i, j) = G(0, j) * ((X(i, j) - mean) * inv) + B(0, j);
        }
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, x, gain, bias, eps] {
            const Mat& X = val(x);
            const Mat& G = val(gain);
            const Mat& dY = nodes_[static_cast<size_t>(id)].grad;
            Mat& dX = mutable_grad(x);
            Mat& dG = mutable_grad(gain);
            Mat& dB = mutable_grad(bias);
            const int d = X.cols;
            for (int i = 0; i < X.rows; ++i) {
                double mean = 0.0;
                for (int j = 0; j < d; ++j) mean += X(i, j);
                mean /= d;
                double var = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double t = X(i, j) - mean;
                    var += t * t;
                }
                var /= d;
                const double inv = 1.0 / std::sqrt(var + eps);
                // dXhat, plus the mean/variance chain terms
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int j = 0; j < d; ++j) {
                    const double xhat = (X(i, j) - mean) * inv;
                    const double dxhat = dY(i, j) * G(0, j);
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * xhat;
                    dG(0, j) += dY(i, j) * xhat;
                    dB(0, j) += dY(i, j);
                }
                for (int j = 0; j < d; ++j) {
                    const double xhat = (X(i, j) - mean) * inv;
                    const double dxhat = dY(i, j) * G(0, j);
                    dX(i, j) += inv * (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / d);
                }
            }
        };
        return {id};
    }

    Var rows(Var a, int r0, int r1) {
        const Mat& A = val(a);
        if (r0 < 0 || r1 > A.rows || r0 >= r1) throw NumericError("rows: bad range");
        Mat c(r1 - r0, A.cols);
        for (int i = r0; i < r1; ++i)
            for (int j = 0; j < A.cols; ++j) c(i - r0, j) = A(i, j);
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a, r0] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            Mat& dA = mutable_grad(a);
            for (int i = 0; i < dC.rows; ++i)
                for (int j = 0; j < dC.cols; ++j) dA(i + r0, j) += dC(i, j);
        };
        return {id};
    }

    Var concat_cols(std::span<const Var> parts) {
        if (parts.empty()) throw NumericError("concat_cols: no inputs");
        const int rows = val(parts[0]).rows;
        int total = 0;
        for (Var p : parts) {
            if (val(p).rows != rows) throw NumericError("concat_cols: row mismatch");
            total += val(p).cols;
        }
        Mat c(rows, total);
        int off = 0;
        for (Var p : parts) {
            const Mat& P = val(p);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < P.cols; ++j) c(i, off + j) = P(i, j);
            off += P.cols;
        }
        const int id = new_node(std::move(c));
        std::vector<Var> owned(parts.begin(), parts.end());
        nodes_[static_cast<size_t>(id)].back = [this, id, owned] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            int off = 0;
            for (Var p : owned) {
                Mat& dP = mutable_grad(p);
                for (int i = 0; i < dP.rows; ++i)
                    for (int j = 0; j < dP.cols; ++j) dP(i, j) += dC(i, off + j);
                off += dP.cols;
            }
        };
        return {id};
    }

    /// Copy of `base` with row `row_idx` replaced by the 1 x cols var; gradient
    /// flows only into the replaced row. Used to splice the trainable CLS
    /// embedding into an otherwise frozen input matrix.
    Var overlay_row(const Mat& base, int row_idx, Var row) {
        const Mat& R = val(row);
        if (R.rows != 1 || R.cols != base.cols || row_idx < 0 || row_idx >= base.rows)
            throw NumericError("overlay_row: shape mismatch");
        Mat c = base;
        for (int j = 0; j < base.cols; ++j) c(row_idx, j) = R(0, j);
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, row, row_idx] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            Mat& dR = mutable_grad(row);
            for (int j = 0; j < dC.cols; ++j) dR(0, j) += dC(row_idx, j);
        };
        return {id};
    }

    /// Inverted dropout; identity when p == 0.
    Var dropout(Var a, double p, Rng& rng) {
        if (p <= 0.0) return a;
        if (p >= 1.0) throw UsageError("dropout rate must be < 1");
        const Mat& A = val(a);
        std::vector<char> keep(A.size());
        const double scale = 1.0 / (1.0 - p);
        Mat c = A;
        for (size_t i = 0; i < c.size(); ++i) {
            keep[i] = uniform_real(rng, 0.0, 1.0) >= p;
            c.a[i] = keep[i] ? c.a[i] * scale : 0.0;
        }
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, a, keep = std::move(keep), scale] {
            const Mat& dC = nodes_[static_cast<size_t>(id)].grad;
            Mat& dA = mutable_grad(a);
            for (size_t i = 0; i < dC.size(); ++i)
                if (keep[i]) dA.a[i] += dC.a[i] * scale;
        };
        return {id};
    }

    /// Categorical cross-entropy from a 1 x k logits row: lse(z) - z[target].
    Var cross_entropy_logits(Var logits, int target) {
        const Mat& Z = val(logits);
        if (Z.rows != 1 || target < 0 || target >= Z.cols)
            throw NumericError("cross_entropy_logits: bad shape or target");
        double mx = Z(0, 0);
        for (int j = 1; j < Z.cols; ++j) mx = std::max(mx, Z(0, j));
        double sum = 0.0;
        for (int j = 0; j < Z.cols; ++j) sum += std::exp(Z(0, j) - mx);
        Mat c(1, 1);
        c(0, 0) = mx + std::log(sum) - Z(0, target);
        const int id = new_node(std::move(c));
        nodes_[static_cast<size_t>(id)].back = [this, id, logits, target, mx, sum] {
            const double g = nodes_[static_cast<size_t>(id)].grad(0, 0);
            const Mat& Z = val(logits);
            Mat& dZ = mutable_grad(logits);
            for (int j = 0; j < Z.cols; ++j) {
                const double p = std::exp(Z(0, j) - mx) / sum;
                dZ(0, j) += g * (p - (j == target ? 1.0 : 0.0));
            }
        };
        return {id};
    }

    /// Seeds d(loss)=1, replays the tape in reverse, then flushes gradients of
    /// bound parameters into their Param::grad accumulators.
    void backward(Var loss) {
        Mat& g = mutable_grad(loss);
        if (g.rows != 1 || g.cols != 1) throw NumericError("backward: loss must be 1x1");
        g(0, 0) = 1.0;
        for (int id = static_cast<int>(nodes_.size()) - 1; id >= 0; --id) {
            auto& n = nodes_[static_cast<size_t>(id)];
            if (n.back) n.back();
        }
        for (auto& n : nodes_) {
            if (!n.bound) continue;
            for (size_t i = 0; i < n.grad.size(); ++i) n.bound->grad.a[i] += n.grad.a[i];
        }
    }

    size_t node_count() const { return nodes_.size(); }

  private:
    struct Node {
        Mat storage;                      // op results live here
        const Mat* external = nullptr;    // params/constants are referenced, not copied
        Mat grad;
        std::function<void()> back;
        Param* bound = nullptr;
    };

    int new_node(Mat&& value) {
        Node n;
        n.storage = std::move(value);
        n.grad = Mat(n.storage.rows, n.storage.cols);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    int new_node_external(const Mat* value) {
        Node n;
        n.external = value;
        n.grad = Mat(value->rows, value->cols);
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    Mat& mutable_grad(Var v) { return nodes_[static_cast<size_t>(v.id)].grad; }

    static void accumulate(Mat& dst, const Mat& src) {
        for (size_t i = 0; i < dst.size(); ++i) dst.a[i] += src.a[i];
    }

    std::vector<Node> nodes_;
};

using Var = Tape::Var;

}  // namespace sugmine::ad
