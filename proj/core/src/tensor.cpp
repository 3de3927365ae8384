#include "volnp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "volnp/errors.hpp"

namespace volnp::ad {

namespace {

void check(bool ok, const char* what) {
    if (!ok) throw ShapeMismatch(what);
}

double phi_cdf(double x) { return 0.5 * std::erfc(-x * 0.70710678118654752440); }
double phi_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

void ensure_shape(Matrix& m, int rows, int cols) {
    if (m.rows != rows || m.cols != cols || m.a.size() != static_cast<std::size_t>(rows) * cols)
        m = Matrix(rows, cols);
}

}  // namespace

Matrix Matrix::from_rows(int r, int c, std::initializer_list<double> values) {
    Matrix m(r, c);
    check(values.size() == m.size(), "Matrix::from_rows: wrong number of values");
    std::copy(values.begin(), values.end(), m.a.begin());
    return m;
}

void matmul_into(const Matrix& x, const Matrix& y, Matrix& out, bool accumulate) {
    check(x.cols == y.rows, "matmul: inner dimensions differ");
    if (!accumulate) ensure_shape(out, x.rows, y.cols);
    check(out.rows == x.rows && out.cols == y.cols, "matmul: output shape differs");
    const int n = y.cols;
    for (int i = 0; i < x.rows; ++i) {
        double* __restrict orow = out.row(i);
        if (!accumulate) std::fill(orow, orow + n, 0.0);
        const double* __restrict xrow = x.row(i);
        for (int l = 0; l < x.cols; ++l) {
            const double xv = xrow[l];
            const double* __restrict yrow = y.row(l);
            for (int j = 0; j < n; ++j) orow[j] += xv * yrow[j];
        }
    }
}

void matmul_nt_into(const Matrix& x, const Matrix& y, Matrix& out, bool accumulate) {
    check(x.cols == y.cols, "matmul_nt: inner dimensions differ");
    if (!accumulate) ensure_shape(out, x.rows, y.rows);
    check(out.rows == x.rows && out.cols == y.rows, "matmul_nt: output shape differs");
    const int k = x.cols;
    for (int i = 0; i < x.rows; ++i) {
        const double* __restrict xrow = x.row(i);
        double* __restrict orow = out.row(i);
        for (int j = 0; j < y.rows; ++j) {
            const double* __restrict yrow = y.row(j);
            double acc = 0.0;
            for (int l = 0; l < k; ++l) acc += xrow[l] * yrow[l];
            orow[j] = accumulate ? orow[j] + acc : acc;
        }
    }
}

void matmul_tn_into(const Matrix& x, const Matrix& y, Matrix& out, bool accumulate) {
    check(x.rows == y.rows, "matmul_tn: inner dimensions differ");
    if (!accumulate) {
        ensure_shape(out, x.cols, y.cols);
        std::fill(out.a.begin(), out.a.end(), 0.0);
    }
    check(out.rows == x.cols && out.cols == y.cols, "matmul_tn: output shape differs");
    const int n = y.cols;
    for (int i = 0; i < x.rows; ++i) {
        const double* __restrict xrow = x.row(i);
        const double* __restrict yrow = y.row(i);
        for (int l = 0; l < x.cols; ++l) {
            const double xv = xrow[l];
            double* __restrict orow = out.row(l);
            for (int j = 0; j < n; ++j) orow[j] += xv * yrow[j];
        }
    }
}

int Tensor::rows() const { return tape_->node(id_).value.rows; }
int Tensor::cols() const { return tape_->node(id_).value.cols; }
const Matrix& Tensor::value() const { return tape_->node(id_).value; }
const Matrix& Tensor::grad() const { return tape_->grad_ref(id_); }

Tensor Tape::emit(Matrix value, bool needs_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    const int id = static_cast<int>(nodes_.size()) - 1;
    if (needs_grad && back) nodes_.back().back = std::move(back);
    return Tensor(this, id);
}

Matrix& Tape::grad_ref(int id) {
    Node& n = node(id);
    if (n.grad.empty() && !n.value.empty()) n.grad = Matrix(n.value.rows, n.value.cols);
    return n.grad;
}

Tensor Tape::leaf(Matrix value) {
    Tensor t = emit(std::move(value), true, nullptr);
    node(t.id_).is_leaf = true;
    return t;
}

Tensor Tape::constant(Matrix value) { return emit(std::move(value), false, nullptr); }

Tensor Tape::matmul(Tensor a, Tensor b) {
    Matrix out;
    matmul_into(a.value(), b.value(), out);
    const bool ng = wants_grad(a.id_) || wants_grad(b.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ia = a.id_, ib = b.id_;
        node(io).back = [io, ia, ib](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            if (tp.wants_grad(ia)) matmul_nt_into(g, tp.node(ib).value, tp.grad_ref(ia), true);
            if (tp.wants_grad(ib)) matmul_tn_into(tp.node(ia).value, g, tp.grad_ref(ib), true);
        };
    }
    return t;
}

Tensor Tape::transpose(Tensor x) {
    const Matrix& v = x.value();
    Matrix out(v.cols, v.rows);
    for (int i = 0; i < v.rows; ++i)
        for (int j = 0; j < v.cols; ++j) out(j, i) = v(i, j);
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            Matrix& gx = tp.grad_ref(ix);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) gx(j, i) += g(i, j);
        };
    }
    return t;
}

Tensor Tape::add(Tensor a, Tensor b) {
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    const bool broadcast = vb.rows == 1 && va.rows > 1;
    check(va.cols == vb.cols && (va.rows == vb.rows || broadcast),
          "add: shapes must match (or b must be a 1 x n row vector)");
    Matrix out = va;
    if (broadcast) {
        const double* __restrict brow = vb.row(0);
        for (int i = 0; i < out.rows; ++i) {
            double* __restrict orow = out.row(i);
            for (int j = 0; j < out.cols; ++j) orow[j] += brow[j];
        }
    } else {
        for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += vb.a[i];
    }
    const bool ng = wants_grad(a.id_) || wants_grad(b.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ia = a.id_, ib = b.id_;
        node(io).back = [io, ia, ib, broadcast](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            if (tp.wants_grad(ia)) {
                Matrix& ga = tp.grad_ref(ia);
                for (std::size_t i = 0; i < g.a.size(); ++i) ga.a[i] += g.a[i];
            }
            if (tp.wants_grad(ib)) {
                Matrix& gb = tp.grad_ref(ib);
                if (broadcast) {
                    for (int i = 0; i < g.rows; ++i) {
                        const double* __restrict grow = g.row(i);
                        double* __restrict brow = gb.row(0);
                        for (int j = 0; j < g.cols; ++j) brow[j] += grow[j];
                    }
                } else {
                    for (std::size_t i = 0; i < g.a.size(); ++i) gb.a[i] += g.a[i];
                }
            }
        };
    }
    return t;
}

Tensor Tape::sub(Tensor a, Tensor b) {
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    check(va.rows == vb.rows && va.cols == vb.cols, "sub: shapes must match");
    Matrix out = va;
    for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] -= vb.a[i];
    const bool ng = wants_grad(a.id_) || wants_grad(b.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ia = a.id_, ib = b.id_;
        node(io).back = [io, ia, ib](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            if (tp.wants_grad(ia)) {
                Matrix& ga = tp.grad_ref(ia);
                for (std::size_t i = 0; i < g.a.size(); ++i) ga.a[i] += g.a[i];
            }
            if (tp.wants_grad(ib)) {
                Matrix& gb = tp.grad_ref(ib);
                for (std::size_t i = 0; i < g.a.size(); ++i) gb.a[i] -= g.a[i];
            }
        };
    }
    return t;
}

Tensor Tape::mul(Tensor a, Tensor b) {
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    check(va.rows == vb.rows && va.cols == vb.cols, "mul: shapes must match");
    Matrix out = va;
    for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] *= vb.a[i];
    const bool ng = wants_grad(a.id_) || wants_grad(b.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ia = a.id_, ib = b.id_;
        node(io).back = [io, ia, ib](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            const Matrix& va2 = tp.node(ia).value;
            const Matrix& vb2 = tp.node(ib).value;
            if (tp.wants_grad(ia)) {
                Matrix& ga = tp.grad_ref(ia);
                for (std::size_t i = 0; i < g.a.size(); ++i) ga.a[i] += g.a[i] * vb2.a[i];
            }
            if (tp.wants_grad(ib)) {
                Matrix& gb = tp.grad_ref(ib);
                for (std::size_t i = 0; i < g.a.size(); ++i) gb.a[i] += g.a[i] * va2.a[i];
            }
        };
    }
    return t;
}

Tensor Tape::scale(Tensor x, double c) {
    Matrix out = x.value();
    for (double& v : out.a) v *= c;
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix, c](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            Matrix& gx = tp.grad_ref(ix);
            for (std::size_t i = 0; i < g.a.size(); ++i) gx.a[i] += c * g.a[i];
        };
    }
    return t;
}

Tensor Tape::add_scalar(Tensor x, double c) {
    Matrix out = x.value();
    for (double& v : out.a) v += c;
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            Matrix& gx = tp.grad_ref(ix);
            for (std::size_t i = 0; i < g.a.size(); ++i) gx.a[i] += g.a[i];
        };
    }
    return t;
}

Tensor Tape::exp(Tensor x) {
    Matrix out = x.value();
    for (double& v : out.a) v = std::exp(v);
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            const Matrix& y = tp.node(io).value;
            Matrix& gx = tp.grad_ref(ix);
            for (std::size_t i = 0; i < g.a.size(); ++i) gx.a[i] += g.a[i] * y.a[i];
        };
    }
    return t;
}

Tensor Tape::log(Tensor x) {
    Matrix out = x.value();
    for (double& v : out.a) v = std::log(v);
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            const Matrix& v = tp.node(ix).value;
            Matrix& gx = tp.grad_ref(ix);
            for (std::size_t i = 0; i < g.a.size(); ++i) gx.a[i] += g.a[i] / v.a[i];
        };
    }
    return t;
}

Tensor Tape::gelu(Tensor x) {
    const Matrix& v = x.value();
    Matrix out(v.rows, v.cols);
    for (std::size_t i = 0; i < v.a.size(); ++i) out.a[i] = v.a[i] * phi_cdf(v.a[i]);
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            const Matrix& v2 = tp.node(ix).value;
            Matrix& gx = tp.grad_ref(ix);
            for (std::size_t i = 0; i < g.a.size(); ++i) {
                const double xv = v2.a[i];
                gx.a[i] += g.a[i] * (phi_cdf(xv) + xv * phi_pdf(xv));
            }
        };
    }
    return t;
}

Tensor Tape::clamp(Tensor x, double lo, double hi) {
    Matrix out = x.value();
    for (double& v : out.a) v = std::clamp(v, lo, hi);
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix, lo, hi](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            const Matrix& v = tp.node(ix).value;
            Matrix& gx = tp.grad_ref(ix);
            for (std::size_t i = 0; i < g.a.size(); ++i)
                if (v.a[i] >= lo && v.a[i] <= hi) gx.a[i] += g.a[i];
        };
    }
    return t;
}

Tensor Tape::concat_rows(Tensor a, Tensor b) {
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    check(va.cols == vb.cols, "concat_rows: column counts differ");
    Matrix out(va.rows + vb.rows, va.cols);
    std::copy(va.a.begin(), va.a.end(), out.a.begin());
    std::copy(vb.a.begin(), vb.a.end(), out.a.begin() + static_cast<std::ptrdiff_t>(va.a.size()));
    const bool ng = wants_grad(a.id_) || wants_grad(b.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ia = a.id_, ib = b.id_;
        const std::size_t na = va.a.size();
        node(io).back = [io, ia, ib, na](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            if (tp.wants_grad(ia)) {
                Matrix& ga = tp.grad_ref(ia);
                for (std::size_t i = 0; i < na; ++i) ga.a[i] += g.a[i];
            }
            if (tp.wants_grad(ib)) {
                Matrix& gb = tp.grad_ref(ib);
                for (std::size_t i = 0; i < gb.a.size(); ++i) gb.a[i] += g.a[na + i];
            }
        };
    }
    return t;
}

Tensor Tape::concat_cols(Tensor a, Tensor b) {
    const Matrix& va = a.value();
    const Matrix& vb = b.value();
    check(va.rows == vb.rows, "concat_cols: row counts differ");
    Matrix out(va.rows, va.cols + vb.cols);
    for (int i = 0; i < va.rows; ++i) {
        std::copy(va.row(i), va.row(i) + va.cols, out.row(i));
        std::copy(vb.row(i), vb.row(i) + vb.cols, out.row(i) + va.cols);
    }
    const bool ng = wants_grad(a.id_) || wants_grad(b.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ia = a.id_, ib = b.id_;
        const int ca = va.cols, cb = vb.cols;
        node(io).back = [io, ia, ib, ca, cb](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            if (tp.wants_grad(ia)) {
                Matrix& ga = tp.grad_ref(ia);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < ca; ++j) ga(i, j) += g(i, j);
            }
            if (tp.wants_grad(ib)) {
                Matrix& gb = tp.grad_ref(ib);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
            }
        };
    }
    return t;
}

Tensor Tape::slice_rows(Tensor x, int r0, int r1) {
    const Matrix& v = x.value();
    check(0 <= r0 && r0 < r1 && r1 <= v.rows, "slice_rows: range out of bounds");
    Matrix out(r1 - r0, v.cols);
    std::copy(v.row(r0), v.row(r0) + out.a.size(), out.a.begin());
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix, r0](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            Matrix& gx = tp.grad_ref(ix);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) gx(r0 + i, j) += g(i, j);
        };
    }
    return t;
}

Tensor Tape::slice_cols(Tensor x, int c0, int c1) {
    const Matrix& v = x.value();
    check(0 <= c0 && c0 < c1 && c1 <= v.cols, "slice_cols: range out of bounds");
    Matrix out(v.rows, c1 - c0);
    for (int i = 0; i < v.rows; ++i)
        std::copy(v.row(i) + c0, v.row(i) + c1, out.row(i));
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix, c0](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            Matrix& gx = tp.grad_ref(ix);
            for (int i = 0; i < g.rows; ++i)
                for (int j = 0; j < g.cols; ++j) gx(i, c0 + j) += g(i, j);
        };
    }
    return t;
}

Tensor Tape::row_softmax(Tensor x) {
    const Matrix& v = x.value();
    Matrix out(v.rows, v.cols);
    for (int i = 0; i < v.rows; ++i) {
        const double* __restrict xr = v.row(i);
        double* __restrict orow = out.row(i);
        double mx = xr[0];
        for (int j = 1; j < v.cols; ++j) mx = std::max(mx, xr[j]);
        double denom = 0.0;
        for (int j = 0; j < v.cols; ++j) {
            orow[j] = std::exp(xr[j] - mx);
            denom += orow[j];
        }
        const double inv = 1.0 / denom;
        for (int j = 0; j < v.cols; ++j) orow[j] *= inv;
    }
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            const Matrix& s = tp.node(io).value;
            Matrix& gx = tp.grad_ref(ix);
            for (int i = 0; i < g.rows; ++i) {
                const double* __restrict gr = g.row(i);
                const double* __restrict sr = s.row(i);
                double dot = 0.0;
                for (int j = 0; j < g.cols; ++j) dot += gr[j] * sr[j];
                double* __restrict gxr = gx.row(i);
                for (int j = 0; j < g.cols; ++j) gxr[j] += sr[j] * (gr[j] - dot);
            }
        };
    }
    return t;
}

Tensor Tape::layer_norm(Tensor x, Tensor gain, Tensor bias, double eps) {
    const Matrix& v = x.value();
    const Matrix& gn = gain.value();
    const Matrix& bs = bias.value();
    check(gn.rows == 1 && bs.rows == 1 && gn.cols == v.cols && bs.cols == v.cols,
          "layer_norm: gain/bias must be 1 x cols");
    Matrix xhat(v.rows, v.cols);
    std::vector<double> inv_std(static_cast<std::size_t>(v.rows));
    Matrix out(v.rows, v.cols);
    const int n = v.cols;
    for (int i = 0; i < v.rows; ++i) {
        const double* __restrict xr = v.row(i);
        double m = 0.0;
        for (int j = 0; j < n; ++j) m += xr[j];
        m /= n;
        double var = 0.0;
        for (int j = 0; j < n; ++j) var += (xr[j] - m) * (xr[j] - m);
        var /= n;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[static_cast<std::size_t>(i)] = is;
        double* __restrict hr = xhat.row(i);
        double* __restrict orow = out.row(i);
        for (int j = 0; j < n; ++j) {
            hr[j] = (xr[j] - m) * is;
            orow[j] = hr[j] * gn.a[static_cast<std::size_t>(j)] + bs.a[static_cast<std::size_t>(j)];
        }
    }
    const bool ng = wants_grad(x.id_) || wants_grad(gain.id_) || wants_grad(bias.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_, ig = gain.id_, ib = bias.id_;
        node(io).back = [io, ix, ig, ib, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)](Tape& tp) {
            const Matrix& g = tp.node(io).grad;
            const Matrix& gn2 = tp.node(ig).value;
            const int n2 = g.cols;
            if (tp.wants_grad(ig)) {
                Matrix& gg = tp.grad_ref(ig);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < n2; ++j) gg(0, j) += g(i, j) * xhat(i, j);
            }
            if (tp.wants_grad(ib)) {
                Matrix& gb = tp.grad_ref(ib);
                for (int i = 0; i < g.rows; ++i)
                    for (int j = 0; j < n2; ++j) gb(0, j) += g(i, j);
            }
            if (tp.wants_grad(ix)) {
                Matrix& gx = tp.grad_ref(ix);
                std::vector<double> gh(static_cast<std::size_t>(n2));
                for (int i = 0; i < g.rows; ++i) {
                    double mean_gh = 0.0, mean_ghh = 0.0;
                    for (int j = 0; j < n2; ++j) {
                        gh[static_cast<std::size_t>(j)] = g(i, j) * gn2(0, j);
                        mean_gh += gh[static_cast<std::size_t>(j)];
                        mean_ghh += gh[static_cast<std::size_t>(j)] * xhat(i, j);
                    }
                    mean_gh /= n2;
                    mean_ghh /= n2;
                    const double is = inv_std[static_cast<std::size_t>(i)];
                    for (int j = 0; j < n2; ++j)
                        gx(i, j) += is * (gh[static_cast<std::size_t>(j)] - mean_gh - xhat(i, j) * mean_ghh);
                }
            }
        };
    }
    return t;
}

Tensor Tape::sum(Tensor x) {
    const Matrix& v = x.value();
    double s = 0.0;
    for (double e : v.a) s += e;
    Matrix out(1, 1);
    out(0, 0) = s;
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix](Tape& tp) {
            const double g = tp.node(io).grad(0, 0);
            Matrix& gx = tp.grad_ref(ix);
            for (double& e : gx.a) e += g;
        };
    }
    return t;
}

Tensor Tape::mean(Tensor x) {
    const Matrix& v = x.value();
    double s = 0.0;
    for (double e : v.a) s += e;
    const double inv_n = 1.0 / static_cast<double>(v.a.size());
    Matrix out(1, 1);
    out(0, 0) = s * inv_n;
    const bool ng = wants_grad(x.id_);
    Tensor t = emit(std::move(out), ng, nullptr);
    if (ng) {
        const int io = t.id_, ix = x.id_;
        node(io).back = [io, ix, inv_n](Tape& tp) {
            const double g = tp.node(io).grad(0, 0) * inv_n;
            Matrix& gx = tp.grad_ref(ix);
            for (double& e : gx.a) e += g;
        };
    }
    return t;
}

void Tape::backward(Tensor loss) {
    if (loss.tape_ != this) throw NotScalar("backward: tensor does not belong to this tape");
    const Node& ln = node(loss.id_);
    if (ln.value.rows != 1 || ln.value.cols != 1)
        throw NotScalar("backward: loss must be a 1x1 tensor");

    // Non-leaf grads are per-call scratch; leaf grads accumulate across calls
    // until zero_grad().
    for (int i = 0; i <= loss.id_; ++i) {
        Node& n = node(i);
        if (!n.is_leaf && !n.grad.empty()) std::fill(n.grad.a.begin(), n.grad.a.end(), 0.0);
    }
    grad_ref(loss.id_)(0, 0) += 1.0;

    for (int i = loss.id_; i >= 0; --i) {
        Node& n = node(i);
        if (n.back && !n.grad.empty()) n.back(*this);
    }
}

void Tape::zero_grad() {
    for (Node& n : nodes_) n.grad = Matrix();
}

}  // namespace volnp::ad
