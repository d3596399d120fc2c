#pragma once

#include <functional>
#include <utility>

#include "dg/common.hpp"
#include "dg/kernels.hpp"

namespace dg {

// Reverse-mode tape. Nodes are appended in forward order (a valid topological
// order), so backward() is a single reverse sweep. Grad buffers are allocated
// with the node; backward lambdas accumulate into parent grads. With
// grad_enabled()==false the tape is a plain forward evaluator.
template <class S>
class Tape {
public:
    explicit Tape(bool grad = true) : grad_(grad) {}

    bool grad_enabled() const { return grad_; }

    int leaf(const Tensor<S>& t) { return push(t.shape, t.v, {}); }
    int leaf(Shape shp, const S* data) {
        std::vector<S> v(data, data + numel(shp));
        return push(std::move(shp), std::move(v), {});
    }

    const Shape& shape(int id) const { return nodes_[id].shape; }
    const std::vector<S>& val(int id) const { return nodes_[id].v; }
    const std::vector<S>& grad(int id) const { return nodes_[id].g; }
    Tensor<S> value_tensor(int id) const { return Tensor<S>(nodes_[id].shape, nodes_[id].v); }
    Tensor<S> grad_tensor(int id) const { return Tensor<S>(nodes_[id].shape, nodes_[id].g); }
    S scalar(int id) const { return nodes_[id].v[0]; }

    // -------------------------------------------------------- elementwise

    int add(int a, int b) {
        same_shape(a, b, "add");
        std::vector<S> v(val(a));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += val(b)[i];
        return push(shape(a), std::move(v), [a, b](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            auto& gb = t.nodes_[b].g;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] += g[i];
            }
        });
    }

    int sub(int a, int b) {
        same_shape(a, b, "sub");
        std::vector<S> v(val(a));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= val(b)[i];
        return push(shape(a), std::move(v), [a, b](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            auto& gb = t.nodes_[b].g;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i];
                gb[i] -= g[i];
            }
        });
    }

    int mul(int a, int b) {
        same_shape(a, b, "mul");
        std::vector<S> v(val(a));
        for (std::size_t i = 0; i < v.size(); ++i) v[i] *= val(b)[i];
        return push(shape(a), std::move(v), [a, b](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            auto& gb = t.nodes_[b].g;
            const auto& va = t.nodes_[a].v;
            const auto& vb = t.nodes_[b].v;
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * vb[i];
                gb[i] += g[i] * va[i];
            }
        });
    }

    int scale(int a, S c) {
        std::vector<S> v(val(a));
        for (auto& x : v) x *= c;
        return push(shape(a), std::move(v), [a, c](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
        });
    }

    int silu(int a) {
        std::vector<S> v(val(a).size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            S x = val(a)[i];
            v[i] = x / (S(1) + std::exp(-x));
        }
        return push(shape(a), std::move(v), [a](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            const auto& va = t.nodes_[a].v;
            for (std::size_t i = 0; i < g.size(); ++i) {
                S x = va[i];
                S s = S(1) / (S(1) + std::exp(-x));
                ga[i] += g[i] * s * (S(1) + x * (S(1) - s));
            }
        });
    }

    int sigmoid(int a) {
        std::vector<S> v(val(a).size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = S(1) / (S(1) + std::exp(-val(a)[i]));
        return push(shape(a), std::move(v), [a](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            const auto& vy = t.nodes_[y].v;
            auto& ga = t.nodes_[a].g;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vy[i] * (S(1) - vy[i]);
        });
    }

    // ----------------------------------------------------- linear algebra

    int matmul(int a, int b, bool tA = false, bool tB = false) {
        const Shape& sa = shape(a);
        const Shape& sb = shape(b);
        if (sa.size() != 2 || sb.size() != 2) throw ShapeError("matmul needs 2-D operands");
        const int M = tA ? sa[1] : sa[0];
        const int Ka = tA ? sa[0] : sa[1];
        const int Kb = tB ? sb[1] : sb[0];
        const int N = tB ? sb[0] : sb[1];
        if (Ka != Kb)
            throw ShapeError("matmul inner dims " + std::to_string(Ka) + " vs " +
                             std::to_string(Kb));
        std::vector<S> v(static_cast<std::size_t>(M) * N);
        kern::matmul(val(a).data(), val(b).data(), v.data(), M, N, Ka, tA, tB, false);
        return push({M, N}, std::move(v), [a, b, tA, tB, M, N, Ka](Tape& t, int y) {
            const S* g = t.nodes_[y].g.data();
            const S* va = t.nodes_[a].v.data();
            const S* vb = t.nodes_[b].v.data();
            // dA += G op(B)^T and dB += op(A)^T G, rearranged per transpose flag
            if (!tA)
                kern::matmul(g, vb, t.nodes_[a].g.data(), M, Ka, N, false, !tB, true);
            else
                kern::matmul(vb, g, t.nodes_[a].g.data(), Ka, M, N, tB, true, true);
            if (!tB)
                kern::matmul(va, g, t.nodes_[b].g.data(), Ka, N, M, !tA, false, true);
            else
                kern::matmul(g, va, t.nodes_[b].g.data(), N, Ka, M, true, tA, true);
        });
    }

    int conv2d(int x, int w, int b, int stride, int pad) {
        const Shape& sx = shape(x);
        const Shape& sw = shape(w);
        if (sx.size() != 3 || sw.size() != 4) throw ShapeError("conv2d expects [C,H,W],[O,C,k,k]");
        if (sw[1] != sx[0]) throw ShapeError("conv2d channel mismatch");
        auto d = kern::conv_dims(sx[0], sx[1], sx[2], sw[0], sw[2], stride, pad);
        std::vector<S> v(static_cast<std::size_t>(d.cout) * d.ho * d.wo);
        kern::conv2d_fwd(val(x).data(), val(w).data(), val(b).data(), v.data(), d);
        return push({d.cout, d.ho, d.wo}, std::move(v), [x, w, b, d](Tape& t, int y) {
            const S* g = t.nodes_[y].g.data();
            kern::conv2d_bwd_input(g, t.nodes_[w].v.data(), t.nodes_[x].g.data(), d);
            kern::conv2d_bwd_weight(g, t.nodes_[x].v.data(), t.nodes_[w].g.data(),
                                    t.nodes_[b].g.data(), d);
        });
    }

    int upsample2x(int x) {
        const Shape& sx = shape(x);
        if (sx.size() != 3) throw ShapeError("upsample2x expects [C,H,W]");
        const int C = sx[0], H = sx[1], W = sx[2];
        std::vector<S> v(static_cast<std::size_t>(C) * 4 * H * W);
        kern::upsample2x_fwd(val(x).data(), v.data(), C, H, W);
        return push({C, 2 * H, 2 * W}, std::move(v), [x, C, H, W](Tape& t, int y) {
            kern::upsample2x_bwd(t.nodes_[y].g.data(), t.nodes_[x].g.data(), C, H, W);
        });
    }

    int softmax_rows(int a) {
        const Shape& sa = shape(a);
        if (sa.size() != 2) throw ShapeError("softmax_rows expects 2-D");
        const int R = sa[0], C = sa[1];
        std::vector<S> v(val(a).size());
        kern::softmax_rows(val(a).data(), v.data(), R, C);
        return push(sa, std::move(v), [a, R, C](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            const auto& vy = t.nodes_[y].v;
            auto& ga = t.nodes_[a].g;
            for (int r = 0; r < R; ++r) {
                S dot = S(0);
                for (int c = 0; c < C; ++c) dot += g[r * C + c] * vy[r * C + c];
                for (int c = 0; c < C; ++c)
                    ga[r * C + c] += vy[r * C + c] * (g[r * C + c] - dot);
            }
        });
    }

    // ------------------------------------------------------------ shaping

    int reshape(int a, Shape shp) {
        if (numel(shp) != val(a).size()) throw ShapeError("reshape numel mismatch");
        std::vector<S> v(val(a));
        return push(std::move(shp), std::move(v), [a](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }

    // [C,H,W] -> [H*W, C]; spatial positions become rows.
    int chw_to_nc(int a) {
        const Shape& sa = shape(a);
        if (sa.size() != 3) throw ShapeError("chw_to_nc expects [C,H,W]");
        const int C = sa[0], HW = sa[1] * sa[2];
        std::vector<S> v(val(a).size());
        const auto& x = val(a);
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < HW; ++p) v[p * C + c] = x[c * HW + p];
        return push({HW, C}, std::move(v), [a, C, HW](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            for (int c = 0; c < C; ++c)
                for (int p = 0; p < HW; ++p) ga[c * HW + p] += g[p * C + c];
        });
    }

    int nc_to_chw(int a, int C, int H, int W) {
        const Shape& sa = shape(a);
        if (sa.size() != 2 || sa[0] != H * W || sa[1] != C)
            throw ShapeError("nc_to_chw shape mismatch");
        const int HW = H * W;
        std::vector<S> v(val(a).size());
        const auto& x = val(a);
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < HW; ++p) v[c * HW + p] = x[p * C + c];
        return push({C, H, W}, std::move(v), [a, C, HW](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            for (int c = 0; c < C; ++c)
                for (int p = 0; p < HW; ++p) ga[p * C + c] += g[c * HW + p];
        });
    }

    int concat_c(int a, int b) {  // along channel axis of [C,H,W]
        const Shape& sa = shape(a);
        const Shape& sb = shape(b);
        if (sa.size() != 3 || sb.size() != 3 || sa[1] != sb[1] || sa[2] != sb[2])
            throw ShapeError("concat_c spatial mismatch");
        std::vector<S> v;
        v.reserve(val(a).size() + val(b).size());
        v.insert(v.end(), val(a).begin(), val(a).end());
        v.insert(v.end(), val(b).begin(), val(b).end());
        const std::size_t na = val(a).size();
        return push({sa[0] + sb[0], sa[1], sa[2]}, std::move(v), [a, b, na](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            auto& gb = t.nodes_[b].g;
            for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
            for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
        });
    }

    int slice_cols(int a, int off, int w) {
        const Shape& sa = shape(a);
        if (sa.size() != 2 || off < 0 || off + w > sa[1]) throw ShapeError("slice_cols bounds");
        const int R = sa[0], C = sa[1];
        std::vector<S> v(static_cast<std::size_t>(R) * w);
        const auto& x = val(a);
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < w; ++c) v[r * w + c] = x[r * C + off + c];
        return push({R, w}, std::move(v), [a, off, w, R, C](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& ga = t.nodes_[a].g;
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < w; ++c) ga[r * C + off + c] += g[r * w + c];
        });
    }

    int concat_cols(const std::vector<int>& parts) {
        if (parts.empty()) throw ShapeError("concat_cols: empty");
        const int R = shape(parts[0])[0];
        int C = 0;
        for (int p : parts) {
            if (shape(p).size() != 2 || shape(p)[0] != R) throw ShapeError("concat_cols rows");
            C += shape(p)[1];
        }
        std::vector<S> v(static_cast<std::size_t>(R) * C);
        int off = 0;
        for (int p : parts) {
            const int w = shape(p)[1];
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < w; ++c) v[r * C + off + c] = val(p)[r * w + c];
            off += w;
        }
        return push({R, C}, std::move(v), [parts, R, C](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            int off2 = 0;
            for (int p : parts) {
                const int w = t.shape(p)[1];
                auto& gp = t.nodes_[p].g;
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < w; ++c) gp[r * w + c] += g[r * C + off2 + c];
                off2 += w;
            }
        });
    }

    int gather_rows(int table, std::vector<int> ids) {
        const Shape& st = shape(table);
        if (st.size() != 2) throw ShapeError("gather_rows expects 2-D table");
        const int D = st[1];
        for (int id : ids)
            if (id < 0 || id >= st[0]) throw ShapeError("gather_rows: row id out of range");
        std::vector<S> v(ids.size() * static_cast<std::size_t>(D));
        for (std::size_t r = 0; r < ids.size(); ++r)
            for (int c = 0; c < D; ++c) v[r * D + c] = val(table)[ids[r] * D + c];
        const int L = static_cast<int>(ids.size());
        return push({L, D}, std::move(v), [table, ids = std::move(ids), D](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& gt = t.nodes_[table].g;
            for (std::size_t r = 0; r < ids.size(); ++r)
                for (int c = 0; c < D; ++c) gt[ids[r] * D + c] += g[r * D + c];
        });
    }

    // --------------------------------------------------------- bias adds

    int add_bias_rows(int x, int b) {  // x:[R,C] b:[C]
        const Shape& sx = shape(x);
        if (sx.size() != 2 || shape(b) != Shape{sx[1]}) throw ShapeError("add_bias_rows");
        const int R = sx[0], C = sx[1];
        std::vector<S> v(val(x));
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) v[r * C + c] += val(b)[c];
        return push(sx, std::move(v), [x, b, R, C](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& gx = t.nodes_[x].g;
            auto& gb = t.nodes_[b].g;
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            for (int c = 0; c < C; ++c) {
                S acc = S(0);
                for (int r = 0; r < R; ++r) acc += g[r * C + c];
                gb[c] += acc;
            }
        });
    }

    int add_bias_chan(int x, int b) {  // x:[C,H,W] b:[C]
        const Shape& sx = shape(x);
        if (sx.size() != 3 || shape(b) != Shape{sx[0]}) throw ShapeError("add_bias_chan");
        const int C = sx[0], HW = sx[1] * sx[2];
        std::vector<S> v(val(x));
        for (int c = 0; c < C; ++c)
            for (int p = 0; p < HW; ++p) v[c * HW + p] += val(b)[c];
        return push(sx, std::move(v), [x, b, C, HW](Tape& t, int y) {
            const auto& g = t.nodes_[y].g;
            auto& gx = t.nodes_[x].g;
            auto& gb = t.nodes_[b].g;
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
            for (int c = 0; c < C; ++c) {
                S acc = S(0);
                for (int p = 0; p < HW; ++p) acc += g[c * HW + p];
                gb[c] += acc;
            }
        });
    }

    // --------------------------------------------------------- reductions

    // mean((a - target)^2) against a constant target.
    int msd_const(int a, Tensor<S> target) {
        if (shape(a) != target.shape)
            throw ShapeError("msd_const: " + shape_str(shape(a)) + " vs " +
                             shape_str(target.shape));
        const std::size_t n = val(a).size();
        S acc = S(0);
        for (std::size_t i = 0; i < n; ++i) {
            S d = val(a)[i] - target.v[i];
            acc += d * d;
        }
        S v = acc / static_cast<S>(n);
        return push({1}, {v}, [a, target = std::move(target), n](Tape& t, int y) {
            const S g = t.nodes_[y].g[0];
            auto& ga = t.nodes_[a].g;
            const auto& va = t.nodes_[a].v;
            const S c = g * S(2) / static_cast<S>(n);
            for (std::size_t i = 0; i < n; ++i) ga[i] += c * (va[i] - target.v[i]);
        });
    }

    int mean_scalars(const std::vector<int>& xs) {
        if (xs.empty()) throw ShapeError("mean_scalars: empty");
        S acc = S(0);
        for (int x : xs) acc += scalar(x);
        S v = acc / static_cast<S>(xs.size());
        return push({1}, {v}, [xs, n = xs.size()](Tape& t, int y) {
            const S g = t.nodes_[y].g[0] / static_cast<S>(n);
            for (int x : xs) t.nodes_[x].g[0] += g;
        });
    }

    int add_scaled(int a, int b, S wa, S wb) {  // scalar combine
        S v = wa * scalar(a) + wb * scalar(b);
        return push({1}, {v}, [a, b, wa, wb](Tape& t, int y) {
            const S g = t.nodes_[y].g[0];
            t.nodes_[a].g[0] += wa * g;
            t.nodes_[b].g[0] += wb * g;
        });
    }

    // ----------------------------------------------------------- backward

    void backward(int root) {
        if (!grad_) throw NumericError("backward on a no-grad tape");
        if (nodes_[root].v.size() != 1) throw ShapeError("backward root must be scalar");
        nodes_[root].g[0] = S(1);
        for (int i = root; i >= 0; --i)
            if (nodes_[i].back) nodes_[i].back(*this, i);
    }

    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Shape shape;
        std::vector<S> v;
        std::vector<S> g;
        std::function<void(Tape&, int)> back;
    };

    std::vector<Node> nodes_;
    bool grad_;

    int push(Shape shp, std::vector<S> v, std::function<void(Tape&, int)> back) {
        Node n;
        n.shape = std::move(shp);
        n.v = std::move(v);
        if (grad_) {
            n.g.assign(n.v.size(), S(0));
            n.back = std::move(back);
        }
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    void same_shape(int a, int b, const char* op) const {
        if (shape(a) != shape(b))
            throw ShapeError(std::string(op) + ": " + shape_str(shape(a)) + " vs " +
                             shape_str(shape(b)));
    }
};

}  // namespace dg
