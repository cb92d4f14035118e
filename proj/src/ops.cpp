#include "biox/ops.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace biox::ops {

namespace {

[[noreturn]] void fail(const char* prim, const std::string& what) {
    throw ShapeError(std::string(prim) + ": " + what);
}

void require(bool cond, const char* prim, const std::string& what) {
    if (!cond) fail(prim, what);
}

struct Batched {
    int64_t batch;  // product of leading axes
    int64_t rows;
    int64_t cols;
};

// Views a rank>=2 tensor as (batch, rows, cols) over its last two axes.
Batched as_matrix(const Tensor& t, const char* prim) {
    require(t.rank() >= 2, prim, "needs rank >= 2, got shape " + shape_str(t.shape()));
    int64_t rows = t.dim(-2);
    int64_t cols = t.dim(-1);
    return {t.numel() / (rows * cols), rows, cols};
}

// Views a rank>=1 tensor as (rows, d) over its last axis.
std::pair<int64_t, int64_t> as_rows(const Tensor& t, const char* prim) {
    require(t.rank() >= 1, prim, "needs rank >= 1");
    int64_t d = t.dim(-1);
    return {t.numel() / d, d};
}

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& w) {
    Batched av = as_matrix(a, "matmul");
    require(w.rank() == 2, "matmul", "rhs must be rank 2, got " + shape_str(w.shape()));
    int64_t k = w.dim(0), m = w.dim(1);
    require(av.cols == k, "matmul",
            "inner dimensions differ: lhs " + shape_str(a.shape()) + " rhs " + shape_str(w.shape()));
    Shape out_shape = a.shape();
    out_shape.back() = m;
    Tensor out(out_shape);
    const double* ap = a.data();
    const double* wp = w.data();
    double* op = out.data();
    for (int64_t b = 0; b < av.batch; ++b) {
        const double* abase = ap + b * av.rows * k;
        double* obase = op + b * av.rows * m;
        for (int64_t i = 0; i < av.rows; ++i) {
            const double* arow = abase + i * k;
            double* orow = obase + i * m;
            for (int64_t kk = 0; kk < k; ++kk) {
                double aik = arow[kk];
                if (aik == 0.0) continue;
                const double* wrow = wp + kk * m;
                for (int64_t j = 0; j < m; ++j) orow[j] += aik * wrow[j];
            }
        }
    }
    return out;
}

Tensor matmul_vjp_a(const Tensor& g, const Tensor& w) {
    // dA = g . W^T
    Batched gv = as_matrix(g, "matmul");
    int64_t k = w.dim(0), m = w.dim(1);
    Shape out_shape = g.shape();
    out_shape.back() = k;
    Tensor da(out_shape);
    const double* gp = g.data();
    const double* wp = w.data();
    double* dp = da.data();
    for (int64_t b = 0; b < gv.batch; ++b) {
        for (int64_t i = 0; i < gv.rows; ++i) {
            const double* grow = gp + (b * gv.rows + i) * m;
            double* drow = dp + (b * gv.rows + i) * k;
            for (int64_t kk = 0; kk < k; ++kk) {
                const double* wrow = wp + kk * m;
                double acc = 0.0;
                for (int64_t j = 0; j < m; ++j) acc += grow[j] * wrow[j];
                drow[kk] = acc;
            }
        }
    }
    return da;
}

Tensor matmul_vjp_w(const Tensor& a, const Tensor& g) {
    // dW = sum_batch A^T . g
    Batched av = as_matrix(a, "matmul");
    int64_t k = av.cols;
    int64_t m = g.dim(-1);
    Tensor dw(Shape{k, m});
    const double* ap = a.data();
    const double* gp = g.data();
    double* dp = dw.data();
    for (int64_t b = 0; b < av.batch; ++b) {
        for (int64_t i = 0; i < av.rows; ++i) {
            const double* arow = ap + (b * av.rows + i) * k;
            const double* grow = gp + (b * av.rows + i) * m;
            for (int64_t kk = 0; kk < k; ++kk) {
                double aik = arow[kk];
                if (aik == 0.0) continue;
                double* drow = dp + kk * m;
                for (int64_t j = 0; j < m; ++j) drow[j] += aik * grow[j];
            }
        }
    }
    return dw;
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int64_t stride) {
    Batched xv = as_matrix(x, "conv1d");
    require(w.rank() == 3, "conv1d", "filter must be (K, Cin, Cout), got " + shape_str(w.shape()));
    int64_t K = w.dim(0), cin = w.dim(1), cout = w.dim(2);
    require(xv.cols == cin, "conv1d",
            "input channels " + std::to_string(xv.cols) + " != filter Cin " + std::to_string(cin));
    require(b.rank() == 1 && b.dim(0) == cout, "conv1d", "bias must be (Cout)");
    require(stride >= 1, "conv1d", "stride must be >= 1");
    int64_t T = xv.rows;
    require(T >= K, "conv1d", "input length " + std::to_string(T) + " shorter than kernel " + std::to_string(K));
    int64_t Tout = (T - K) / stride + 1;

    Shape out_shape = x.shape();
    out_shape[out_shape.size() - 2] = Tout;
    out_shape.back() = cout;
    Tensor out(out_shape);
    const double* xp = x.data();
    const double* wp = w.data();
    double* op = out.data();
    for (int64_t bi = 0; bi < xv.batch; ++bi) {
        const double* xb = xp + bi * T * cin;
        double* ob = op + bi * Tout * cout;
        for (int64_t t = 0; t < Tout; ++t) {
            double* orow = ob + t * cout;
            for (int64_t o = 0; o < cout; ++o) orow[o] = b[o];
            const double* xwin = xb + t * stride * cin;
            for (int64_t kk = 0; kk < K; ++kk) {
                const double* xrow = xwin + kk * cin;
                const double* wk = wp + kk * cin * cout;
                for (int64_t i = 0; i < cin; ++i) {
                    double xv2 = xrow[i];
                    if (xv2 == 0.0) continue;
                    const double* wrow = wk + i * cout;
                    for (int64_t o = 0; o < cout; ++o) orow[o] += xv2 * wrow[o];
                }
            }
        }
    }
    return out;
}

void conv1d_vjp(const Tensor& x, const Tensor& w, int64_t stride, const Tensor& g, Tensor* dx, Tensor* dw,
                Tensor* db) {
    Batched xv = as_matrix(x, "conv1d");
    int64_t K = w.dim(0), cin = w.dim(1), cout = w.dim(2);
    int64_t T = xv.rows;
    int64_t Tout = (T - K) / stride + 1;
    if (dx) *dx = Tensor(x.shape());
    if (dw) *dw = Tensor(w.shape());
    if (db) *db = Tensor(Shape{cout});
    const double* xp = x.data();
    const double* wp = w.data();
    const double* gp = g.data();
    for (int64_t bi = 0; bi < xv.batch; ++bi) {
        const double* xb = xp + bi * T * cin;
        const double* gb = gp + bi * Tout * cout;
        double* dxb = dx ? dx->data() + bi * T * cin : nullptr;
        for (int64_t t = 0; t < Tout; ++t) {
            const double* grow = gb + t * cout;
            if (db) {
                for (int64_t o = 0; o < cout; ++o) (*db)[o] += grow[o];
            }
            for (int64_t kk = 0; kk < K; ++kk) {
                const double* xrow = xb + (t * stride + kk) * cin;
                const double* wk = wp + kk * cin * cout;
                for (int64_t i = 0; i < cin; ++i) {
                    double acc = 0.0;
                    const double* wrow = wk + i * cout;
                    for (int64_t o = 0; o < cout; ++o) acc += grow[o] * wrow[o];
                    if (dx) dxb[(t * stride + kk) * cin + i] += acc;
                    if (dw) {
                        double xv2 = xrow[i];
                        if (xv2 != 0.0) {
                            double* dwrow = dw->data() + (kk * cin + i) * cout;
                            for (int64_t o = 0; o < cout; ++o) dwrow[o] += xv2 * grow[o];
                        }
                    }
                }
            }
        }
    }
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    auto [rows, d] = as_rows(x, "layer_norm");
    require(gamma.rank() == 1 && gamma.dim(0) == d, "layer_norm", "gamma must be (d)");
    require(beta.rank() == 1 && beta.dim(0) == d, "layer_norm", "beta must be (d)");
    Tensor out(x.shape());
    const double* xp = x.data();
    double* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = xp + r * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double c = row[j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        double inv = 1.0 / std::sqrt(var + eps);
        double* orow = op + r * d;
        for (int64_t j = 0; j < d; ++j) orow[j] = gamma[j] * (row[j] - mean) * inv + beta[j];
    }
    return out;
}

void layer_norm_vjp(const Tensor& x, const Tensor& gamma, double eps, const Tensor& g, Tensor* dx, Tensor* dgamma,
                    Tensor* dbeta) {
    auto [rows, d] = as_rows(x, "layer_norm");
    if (dx) *dx = Tensor(x.shape());
    if (dgamma) *dgamma = Tensor(Shape{d});
    if (dbeta) *dbeta = Tensor(Shape{d});
    const double* xp = x.data();
    const double* gp = g.data();
    double dd = static_cast<double>(d);
    std::vector<double> xhat(static_cast<size_t>(d));
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = xp + r * d;
        const double* grow = gp + r * d;
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += row[j];
        mean /= dd;
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            double c = row[j] - mean;
            var += c * c;
        }
        var /= dd;
        double inv = 1.0 / std::sqrt(var + eps);
        for (int64_t j = 0; j < d; ++j) xhat[static_cast<size_t>(j)] = (row[j] - mean) * inv;
        if (dgamma || dbeta) {
            for (int64_t j = 0; j < d; ++j) {
                if (dgamma) (*dgamma)[j] += grow[j] * xhat[static_cast<size_t>(j)];
                if (dbeta) (*dbeta)[j] += grow[j];
            }
        }
        if (dx) {
            // dxhat = g * gamma; dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat))
            double m1 = 0.0, m2 = 0.0;
            for (int64_t j = 0; j < d; ++j) {
                double dh = grow[j] * gamma[j];
                m1 += dh;
                m2 += dh * xhat[static_cast<size_t>(j)];
            }
            m1 /= dd;
            m2 /= dd;
            double* dxrow = dx->data() + r * d;
            for (int64_t j = 0; j < d; ++j) {
                double dh = grow[j] * gamma[j];
                dxrow[j] = inv * (dh - m1 - xhat[static_cast<size_t>(j)] * m2);
            }
        }
    }
}

namespace {

// Softmax over contiguous rows of length d, in place.
void softmax_rows(double* p, int64_t rows, int64_t d) {
    for (int64_t r = 0; r < rows; ++r) {
        double* row = p + r * d;
        double mx = row[0];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        double inv = 1.0 / sum;
        for (int64_t j = 0; j < d; ++j) row[j] *= inv;
    }
}

}  // namespace

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    Batched qv = as_matrix(q, "attention");
    require(q.same_shape(k) && q.same_shape(v), "attention",
            "q/k/v shapes differ: " + shape_str(q.shape()) + " " + shape_str(k.shape()) + " " +
                shape_str(v.shape()));
    int64_t N = qv.rows, d = qv.cols;
    double alpha = 1.0 / std::sqrt(static_cast<double>(d));
    Tensor out(q.shape());
    std::vector<double> scores(static_cast<size_t>(N * N));
    for (int64_t b = 0; b < qv.batch; ++b) {
        const double* qb = q.data() + b * N * d;
        const double* kb = k.data() + b * N * d;
        const double* vb = v.data() + b * N * d;
        double* ob = out.data() + b * N * d;
        for (int64_t i = 0; i < N; ++i) {
            for (int64_t j = 0; j < N; ++j) {
                double acc = 0.0;
                for (int64_t c = 0; c < d; ++c) acc += qb[i * d + c] * kb[j * d + c];
                scores[static_cast<size_t>(i * N + j)] = acc * alpha;
            }
        }
        softmax_rows(scores.data(), N, N);
        for (int64_t i = 0; i < N; ++i) {
            double* orow = ob + i * d;
            for (int64_t c = 0; c < d; ++c) orow[c] = 0.0;
            for (int64_t j = 0; j < N; ++j) {
                double p = scores[static_cast<size_t>(i * N + j)];
                if (p == 0.0) continue;
                const double* vrow = vb + j * d;
                for (int64_t c = 0; c < d; ++c) orow[c] += p * vrow[c];
            }
        }
    }
    return out;
}

void attention_vjp(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& g, Tensor* dq, Tensor* dk,
                   Tensor* dv) {
    Batched qv = as_matrix(q, "attention");
    int64_t N = qv.rows, d = qv.cols;
    double alpha = 1.0 / std::sqrt(static_cast<double>(d));
    if (dq) *dq = Tensor(q.shape());
    if (dk) *dk = Tensor(k.shape());
    if (dv) *dv = Tensor(v.shape());
    std::vector<double> P(static_cast<size_t>(N * N));
    std::vector<double> dS(static_cast<size_t>(N * N));
    for (int64_t b = 0; b < qv.batch; ++b) {
        const double* qb = q.data() + b * N * d;
        const double* kb = k.data() + b * N * d;
        const double* vb = v.data() + b * N * d;
        const double* gb = g.data() + b * N * d;
        // recompute attention weights
        for (int64_t i = 0; i < N; ++i) {
            for (int64_t j = 0; j < N; ++j) {
                double acc = 0.0;
                for (int64_t c = 0; c < d; ++c) acc += qb[i * d + c] * kb[j * d + c];
                P[static_cast<size_t>(i * N + j)] = acc * alpha;
            }
        }
        softmax_rows(P.data(), N, N);
        // dV = P^T g
        if (dv) {
            double* dvb = dv->data() + b * N * d;
            for (int64_t j = 0; j < N; ++j) {
                for (int64_t i = 0; i < N; ++i) {
                    double p = P[static_cast<size_t>(i * N + j)];
                    if (p == 0.0) continue;
                    const double* grow = gb + i * d;
                    double* dvrow = dvb + j * d;
                    for (int64_t c = 0; c < d; ++c) dvrow[c] += p * grow[c];
                }
            }
        }
        // dP = g V^T; dS via softmax backward
        for (int64_t i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < N; ++j) {
                double acc = 0.0;
                const double* grow = gb + i * d;
                const double* vrow = vb + j * d;
                for (int64_t c = 0; c < d; ++c) acc += grow[c] * vrow[c];
                dS[static_cast<size_t>(i * N + j)] = acc;
                dot += acc * P[static_cast<size_t>(i * N + j)];
            }
            for (int64_t j = 0; j < N; ++j) {
                size_t ij = static_cast<size_t>(i * N + j);
                dS[ij] = P[ij] * (dS[ij] - dot);
            }
        }
        // dQ = dS K * alpha; dK = dS^T Q * alpha
        if (dq) {
            double* dqb = dq->data() + b * N * d;
            for (int64_t i = 0; i < N; ++i) {
                for (int64_t j = 0; j < N; ++j) {
                    double s = dS[static_cast<size_t>(i * N + j)] * alpha;
                    if (s == 0.0) continue;
                    const double* krow = kb + j * d;
                    double* dqrow = dqb + i * d;
                    for (int64_t c = 0; c < d; ++c) dqrow[c] += s * krow[c];
                }
            }
        }
        if (dk) {
            double* dkb = dk->data() + b * N * d;
            for (int64_t i = 0; i < N; ++i) {
                for (int64_t j = 0; j < N; ++j) {
                    double s = dS[static_cast<size_t>(i * N + j)] * alpha;
                    if (s == 0.0) continue;
                    const double* qrow = qb + i * d;
                    double* dkrow = dkb + j * d;
                    for (int64_t c = 0; c < d; ++c) dkrow[c] += s * qrow[c];
                }
            }
        }
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "add", "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b[i];
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b) {
    auto [rows, d] = as_rows(x, "add_bias");
    require(b.rank() == 1 && b.dim(0) == d, "add_bias",
            "bias " + shape_str(b.shape()) + " does not match last axis of " + shape_str(x.shape()));
    Tensor out = x;
    double* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        double* row = op + r * d;
        for (int64_t j = 0; j < d; ++j) row[j] += b[j];
    }
    return out;
}

Tensor add_bias_vjp_b(const Tensor& g) {
    auto [rows, d] = as_rows(g, "add_bias");
    Tensor db(Shape{d});
    const double* gp = g.data();
    for (int64_t r = 0; r < rows; ++r) {
        for (int64_t j = 0; j < d; ++j) db[j] += gp[r * d + j];
    }
    return db;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "mul", "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b[i];
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = a;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= c;
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (int64_t i = 0; i < out.numel(); ++i) {
        double v = out[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
    return out;
}

Tensor gelu_vjp(const Tensor& x, const Tensor& g) {
    Tensor dx = x;
    for (int64_t i = 0; i < dx.numel(); ++i) {
        double v = x[i];
        double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx[i] = g[i] * (cdf + v * pdf);
    }
    return dx;
}

Tensor relu(const Tensor& x) {
    Tensor out = x;
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    return out;
}

Tensor relu_vjp(const Tensor& x, const Tensor& g) {
    Tensor dx = g;
    for (int64_t i = 0; i < dx.numel(); ++i) {
        if (x[i] <= 0.0) dx[i] = 0.0;
    }
    return dx;
}

namespace {

// outer: product of axes before `axis`; n: the reduced axis; inner: after.
struct AxisView {
    int64_t outer, n, inner;
    int norm_axis;
};

AxisView axis_view(const Shape& s, int axis, const char* prim) {
    int r = static_cast<int>(s.size());
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r) fail(prim, "axis out of range for shape " + shape_str(s));
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[static_cast<size_t>(i)];
    for (int i = axis + 1; i < r; ++i) inner *= s[static_cast<size_t>(i)];
    return {outer, s[static_cast<size_t>(axis)], inner, axis};
}

}  // namespace

Tensor mean_pool(const Tensor& x, int axis) {
    AxisView v = axis_view(x.shape(), axis, "mean_pool");
    Shape out_shape;
    for (int i = 0; i < x.rank(); ++i) {
        if (i != v.norm_axis) out_shape.push_back(x.shape()[static_cast<size_t>(i)]);
    }
    Tensor out(out_shape.empty() ? Shape{} : out_shape);
    const double* xp = x.data();
    double* op = out.data();
    double inv = 1.0 / static_cast<double>(v.n);
    for (int64_t o = 0; o < v.outer; ++o) {
        for (int64_t k = 0; k < v.n; ++k) {
            const double* base = xp + (o * v.n + k) * v.inner;
            double* obase = op + o * v.inner;
            for (int64_t i = 0; i < v.inner; ++i) obase[i] += base[i];
        }
    }
    for (int64_t i = 0; i < out.numel(); ++i) op[i] *= inv;
    return out;
}

Tensor mean_pool_vjp(const Tensor& g, const Shape& in_shape, int axis) {
    AxisView v = axis_view(in_shape, axis, "mean_pool");
    Tensor dx(in_shape);
    const double* gp = g.data();
    double* dp = dx.data();
    double inv = 1.0 / static_cast<double>(v.n);
    for (int64_t o = 0; o < v.outer; ++o) {
        for (int64_t k = 0; k < v.n; ++k) {
            double* base = dp + (o * v.n + k) * v.inner;
            const double* gbase = gp + o * v.inner;
            for (int64_t i = 0; i < v.inner; ++i) base[i] = gbase[i] * inv;
        }
    }
    return dx;
}

Tensor max_pool(const Tensor& x, int axis) {
    AxisView v = axis_view(x.shape(), axis, "max_pool");
    Shape out_shape;
    for (int i = 0; i < x.rank(); ++i) {
        if (i != v.norm_axis) out_shape.push_back(x.shape()[static_cast<size_t>(i)]);
    }
    Tensor out(out_shape.empty() ? Shape{} : out_shape);
    const double* xp = x.data();
    double* op = out.data();
    for (int64_t o = 0; o < v.outer; ++o) {
        double* obase = op + o * v.inner;
        for (int64_t i = 0; i < v.inner; ++i) obase[i] = xp[o * v.n * v.inner + i];
        for (int64_t k = 1; k < v.n; ++k) {
            const double* base = xp + (o * v.n + k) * v.inner;
            for (int64_t i = 0; i < v.inner; ++i) {
                if (base[i] > obase[i]) obase[i] = base[i];
            }
        }
    }
    return out;
}

Tensor max_pool_vjp(const Tensor& x, const Tensor& g, int axis) {
    AxisView v = axis_view(x.shape(), axis, "max_pool");
    Tensor dx(x.shape());
    const double* xp = x.data();
    const double* gp = g.data();
    double* dp = dx.data();
    for (int64_t o = 0; o < v.outer; ++o) {
        for (int64_t i = 0; i < v.inner; ++i) {
            int64_t best = 0;
            double best_v = xp[o * v.n * v.inner + i];
            for (int64_t k = 1; k < v.n; ++k) {
                double cand = xp[(o * v.n + k) * v.inner + i];
                if (cand > best_v) {
                    best_v = cand;
                    best = k;
                }
            }
            dp[(o * v.n + best) * v.inner + i] = gp[o * v.inner + i];
        }
    }
    return dx;
}

Tensor reshape(const Tensor& x, Shape shape) {
    int64_t known = 1;
    int infer = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) fail("reshape", "at most one -1 allowed");
            infer = static_cast<int>(i);
        } else {
            known *= shape[i];
        }
    }
    if (infer >= 0) {
        if (known == 0 || x.numel() % known != 0) {
            fail("reshape", "cannot infer dimension for " + shape_str(x.shape()) + " -> " + shape_str(shape));
        }
        shape[static_cast<size_t>(infer)] = x.numel() / known;
    }
    return x.reshaped(std::move(shape));
}

Tensor softmax(const Tensor& x) {
    auto [rows, d] = as_rows(x, "softmax");
    Tensor out = x;
    softmax_rows(out.data(), rows, d);
    return out;
}

Tensor softmax_vjp(const Tensor& y, const Tensor& g) {
    auto [rows, d] = as_rows(y, "softmax");
    Tensor dx(y.shape());
    const double* yp = y.data();
    const double* gp = g.data();
    double* dp = dx.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* yrow = yp + r * d;
        const double* grow = gp + r * d;
        double dot = 0.0;
        for (int64_t j = 0; j < d; ++j) dot += yrow[j] * grow[j];
        double* drow = dp + r * d;
        for (int64_t j = 0; j < d; ++j) drow[j] = yrow[j] * (grow[j] - dot);
    }
    return dx;
}

Tensor log_softmax(const Tensor& x) {
    auto [rows, d] = as_rows(x, "log_softmax");
    Tensor out = x;
    double* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        double* row = op + r * d;
        double mx = row[0];
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int64_t j = 0; j < d; ++j) sum += std::exp(row[j] - mx);
        double lse = mx + std::log(sum);
        for (int64_t j = 0; j < d; ++j) row[j] -= lse;
    }
    return out;
}

Tensor log_softmax_vjp(const Tensor& y, const Tensor& g) {
    // y holds the log-probabilities; dx = g - exp(y) * rowsum(g)
    auto [rows, d] = as_rows(y, "log_softmax");
    Tensor dx(y.shape());
    const double* yp = y.data();
    const double* gp = g.data();
    double* dp = dx.data();
    for (int64_t r = 0; r < rows; ++r) {
        double gsum = 0.0;
        for (int64_t j = 0; j < d; ++j) gsum += gp[r * d + j];
        for (int64_t j = 0; j < d; ++j) {
            dp[r * d + j] = gp[r * d + j] - std::exp(yp[r * d + j]) * gsum;
        }
    }
    return dx;
}

Tensor sum_all(const Tensor& x) {
    double acc = 0.0;
    for (int64_t i = 0; i < x.numel(); ++i) acc += x[i];
    return Tensor::scalar(acc);
}

Tensor sum_all_vjp(const Tensor& g, const Shape& in_shape) { return Tensor::full(in_shape, g.item()); }

Tensor transpose(const Tensor& x) {
    Batched v = as_matrix(x, "transpose");
    Shape out_shape = x.shape();
    std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
    Tensor out(out_shape);
    const double* xp = x.data();
    double* op = out.data();
    for (int64_t b = 0; b < v.batch; ++b) {
        const double* xb = xp + b * v.rows * v.cols;
        double* ob = op + b * v.rows * v.cols;
        for (int64_t i = 0; i < v.rows; ++i) {
            for (int64_t j = 0; j < v.cols; ++j) ob[j * v.rows + i] = xb[i * v.cols + j];
        }
    }
    return out;
}

namespace {
constexpr double kNormFloor = 1e-30;
}

Tensor l2_normalize_rows(const Tensor& x) {
    auto [rows, d] = as_rows(x, "l2_normalize_rows");
    Tensor out = x;
    double* op = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        double* row = op + r * d;
        double nsq = 0.0;
        for (int64_t j = 0; j < d; ++j) nsq += row[j] * row[j];
        if (nsq <= kNormFloor) continue;
        double inv = 1.0 / std::sqrt(nsq);
        for (int64_t j = 0; j < d; ++j) row[j] *= inv;
    }
    return out;
}

Tensor l2_normalize_rows_vjp(const Tensor& x, const Tensor& g) {
    auto [rows, d] = as_rows(x, "l2_normalize_rows");
    Tensor dx(x.shape());
    const double* xp = x.data();
    const double* gp = g.data();
    double* dp = dx.data();
    for (int64_t r = 0; r < rows; ++r) {
        const double* row = xp + r * d;
        const double* grow = gp + r * d;
        double nsq = 0.0;
        for (int64_t j = 0; j < d; ++j) nsq += row[j] * row[j];
        double* drow = dp + r * d;
        if (nsq <= kNormFloor) {
            for (int64_t j = 0; j < d; ++j) drow[j] = grow[j];
            continue;
        }
        double n = std::sqrt(nsq);
        double dot = 0.0;
        for (int64_t j = 0; j < d; ++j) dot += row[j] * grow[j];
        double c = dot / (nsq * n);
        for (int64_t j = 0; j < d; ++j) drow[j] = grow[j] / n - row[j] * c;
    }
    return dx;
}

namespace {
constexpr double kCosNormTol = 1e-12;
}

Tensor cosine_row_loss(const Tensor& a, const Tensor& b, int64_t* zero_norm_rows) {
    require(a.same_shape(b), "cosine_row_loss",
            "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto [rows, d] = as_rows(a, "cosine_row_loss");
    const double* ap = a.data();
    const double* bp = b.data();
    double acc = 0.0;
    int64_t zeros = 0;
    for (int64_t r = 0; r < rows; ++r) {
        const double* ar = ap + r * d;
        const double* br = bp + r * d;
        double na = 0.0, nb = 0.0, dot = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            na += ar[j] * ar[j];
            nb += br[j] * br[j];
            dot += ar[j] * br[j];
        }
        if (na <= kCosNormTol || nb <= kCosNormTol) {
            acc += 1.0;
            ++zeros;
        } else {
            acc += 1.0 - dot / std::sqrt(na * nb);
        }
    }
    if (zero_norm_rows) *zero_norm_rows = zeros;
    return Tensor::scalar(acc / static_cast<double>(rows));
}

void cosine_row_loss_vjp(const Tensor& a, const Tensor& b, const Tensor& g, Tensor* da, Tensor* db) {
    auto [rows, d] = as_rows(a, "cosine_row_loss");
    if (da) *da = Tensor(a.shape());
    if (db) *db = Tensor(b.shape());
    const double* ap = a.data();
    const double* bp = b.data();
    double gscale = g.item() / static_cast<double>(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const double* ar = ap + r * d;
        const double* br = bp + r * d;
        double na2 = 0.0, nb2 = 0.0, dot = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            na2 += ar[j] * ar[j];
            nb2 += br[j] * br[j];
            dot += ar[j] * br[j];
        }
        if (na2 <= kCosNormTol || nb2 <= kCosNormTol) continue;  // flat contribution
        double na = std::sqrt(na2), nb = std::sqrt(nb2);
        double inv = 1.0 / (na * nb);
        double c = dot * inv;
        if (da) {
            double* dar = da->data() + r * d;
            for (int64_t j = 0; j < d; ++j) dar[j] = -gscale * (br[j] * inv - c * ar[j] / na2);
        }
        if (db) {
            double* dbr = db->data() + r * d;
            for (int64_t j = 0; j < d; ++j) dbr[j] = -gscale * (ar[j] * inv - c * br[j] / nb2);
        }
    }
}

Tensor mae_loss(const Tensor& a, const Tensor& b) {
    require(a.same_shape(b), "mae_loss", "shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    double acc = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) acc += std::abs(a[i] - b[i]);
    return Tensor::scalar(acc / static_cast<double>(a.numel()));
}

void mae_loss_vjp(const Tensor& a, const Tensor& b, const Tensor& g, Tensor* da, Tensor* db) {
    if (da) *da = Tensor(a.shape());
    if (db) *db = Tensor(b.shape());
    double gscale = g.item() / static_cast<double>(a.numel());
    for (int64_t i = 0; i < a.numel(); ++i) {
        double diff = a[i] - b[i];
        double s = diff > 0.0 ? gscale : (diff < 0.0 ? -gscale : 0.0);
        if (da) (*da)[i] = s;
        if (db) (*db)[i] = -s;
    }
}

const char* primitive_name(Primitive p) {
    switch (p) {
        case Primitive::MatMul: return "matmul";
        case Primitive::Conv1d: return "conv1d";
        case Primitive::LayerNorm: return "layer_norm";
        case Primitive::Attention: return "attention";
        case Primitive::Add: return "add";
        case Primitive::AddBias: return "add_bias";
        case Primitive::Mul: return "mul";
        case Primitive::Scale: return "scale";
        case Primitive::Gelu: return "gelu";
        case Primitive::Relu: return "relu";
        case Primitive::MeanPool: return "mean_pool";
        case Primitive::MaxPool: return "max_pool";
        case Primitive::Reshape: return "reshape";
        case Primitive::Softmax: return "softmax";
        case Primitive::LogSoftmax: return "log_softmax";
        case Primitive::SumAll: return "sum_all";
        case Primitive::Transpose: return "transpose";
        case Primitive::L2NormalizeRows: return "l2_normalize_rows";
        case Primitive::CosineRowLoss: return "cosine_row_loss";
        case Primitive::MaeLoss: return "mae_loss";
    }
    return "?";
}

Tensor primitive_forward(Primitive kind, std::span<const Tensor> in, const PrimitiveAttrs& attrs) {
    auto arity = [&](size_t n) {
        if (in.size() != n) {
            fail(primitive_name(kind),
                 "expects " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
        }
    };
    switch (kind) {
        case Primitive::MatMul: arity(2); return matmul(in[0], in[1]);
        case Primitive::Conv1d: arity(3); return conv1d(in[0], in[1], in[2], attrs.stride);
        case Primitive::LayerNorm: arity(3); return layer_norm(in[0], in[1], in[2], attrs.eps);
        case Primitive::Attention: arity(3); return attention(in[0], in[1], in[2]);
        case Primitive::Add: arity(2); return add(in[0], in[1]);
        case Primitive::AddBias: arity(2); return add_bias(in[0], in[1]);
        case Primitive::Mul: arity(2); return mul(in[0], in[1]);
        case Primitive::Scale: arity(1); return scale(in[0], attrs.value);
        case Primitive::Gelu: arity(1); return gelu(in[0]);
        case Primitive::Relu: arity(1); return relu(in[0]);
        case Primitive::MeanPool: arity(1); return mean_pool(in[0], attrs.axis);
        case Primitive::MaxPool: arity(1); return max_pool(in[0], attrs.axis);
        case Primitive::Reshape: arity(1); return reshape(in[0], attrs.shape);
        case Primitive::Softmax: arity(1); return softmax(in[0]);
        case Primitive::LogSoftmax: arity(1); return log_softmax(in[0]);
        case Primitive::SumAll: arity(1); return sum_all(in[0]);
        case Primitive::Transpose: arity(1); return transpose(in[0]);
        case Primitive::L2NormalizeRows: arity(1); return l2_normalize_rows(in[0]);
        case Primitive::CosineRowLoss: arity(2); return cosine_row_loss(in[0], in[1]);
        case Primitive::MaeLoss: arity(2); return mae_loss(in[0], in[1]);
    }
    fail("primitive_forward", "unknown primitive");
}

}  // namespace biox::ops
