#include "occap/tape.hpp"

#include <algorithm>
#include <cmath>

#include "occap/errors.hpp"

namespace occap::num {

namespace {

void matmul_kernel(const double* a, const double* b, double* out, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            out[i * n + j] = acc;
        }
    }
}

double apply_ew(EwKind kind, double x) {
    switch (kind) {
    case EwKind::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case EwKind::Tanh: return std::tanh(x);
    case EwKind::Relu:
    case EwKind::ClampMinZero: return x > 0.0 ? x : 0.0;
    }
    throw UsageError("unknown elementwise kind");
}

double ew_grad(EwKind kind, double x, double y) {
    switch (kind) {
    case EwKind::Sigmoid: return y * (1.0 - y);
    case EwKind::Tanh: return 1.0 - y * y;
    case EwKind::Relu:
    case EwKind::ClampMinZero: return x > 0.0 ? 1.0 : 0.0;
    }
    throw UsageError("unknown elementwise kind");
}

std::vector<double> softmax_kernel(const std::vector<double>& x) {
    double mx = *std::max_element(x.begin(), x.end());
    std::vector<double> y(x.size());
    double total = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - mx);
        total += y[i];
    }
    for (auto& v : y) v /= total;
    return y;
}

} // namespace

EwKind ew_kind_from_string(const std::string& s) {
    if (s == "sigmoid") return EwKind::Sigmoid;
    if (s == "tanh") return EwKind::Tanh;
    if (s == "relu") return EwKind::Relu;
    if (s == "clamp_min_zero") return EwKind::ClampMinZero;
    throw UsageError("unknown elementwise kind '" + s + "'");
}

Var Tape::push(Tensor value, const char* op, bool requires_grad, std::function<void(Tape&, int)> back) {
    if (!value.all_finite()) {
        throw NumericError(std::string("op '") + op + "' produced non-finite values");
    }
    nodes_.push_back(Node{std::move(value), op, requires_grad, {}, std::move(back)});
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_valid(Var v, const char* op) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size())) {
        throw ContractError(std::string("op '") + op + "' given an invalid tape handle");
    }
}

Var Tape::param(const ParamStore& store, const std::string& name) {
    auto it = param_nodes_.find(name);
    if (it != param_nodes_.end()) return Var{it->second};
    Var v = push(store.at(name), "param", true, nullptr);
    param_nodes_[name] = v.id;
    return v;
}

Var Tape::input(Tensor value) { return push(std::move(value), "input", false, nullptr); }

Var Tape::input(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return input(Tensor({n}, std::move(v)));
}

Var Tape::input_scalar(double v) { return input(Tensor::scalar(v)); }

const Tensor& Tape::val(Var v) const {
    check_valid(v, "val");
    return node(v).value;
}

double Tape::scalar(Var v) const {
    const Tensor& t = val(v);
    if (t.size() != 1) throw ContractError("scalar() on tensor of shape " + t.shape_str());
    return t[0];
}

Var Tape::add(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.shape() != tb.shape()) {
        throw DimensionError("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += tb[i];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), "add", rg, [a, b](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] += g[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.shape() != tb.shape()) {
        throw DimensionError("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), "sub", rg, [a, b](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i];
            gb[i] -= g[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.shape() != tb.shape()) {
        throw DimensionError("mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), "mul", rg, [a, b](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& va = t.val(a).data();
        const auto& vb = t.val(b).data();
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * vb[i];
            gb[i] += g[i] * va[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = val(a);
    for (auto& v : out.data()) v *= c;
    return push(std::move(out), "scale", node(a).requires_grad, [a, c](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    });
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
        throw DimensionError("matmul: incompatible shapes " + ta.shape_str() + " vs " + tb.shape_str());
    }
    const int m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out({m, n});
    matmul_kernel(ta.data().data(), tb.data().data(), out.data().data(), m, k, n);
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), "matmul", rg, [a, b, m, k, n](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& va = t.val(a).data();
        const auto& vb = t.val(b).data();
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        // ga += g * b^T ; gb += a^T * g
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += g[i * n + j] * vb[p * n + j];
                ga[i * k + p] += acc;
            }
        for (int p = 0; p < k; ++p)
            for (int j = 0; j < n; ++j) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) acc += va[i * k + p] * g[i * n + j];
                gb[p * n + j] += acc;
            }
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.cols()) {
        throw DimensionError("matmul_nt: incompatible shapes " + ta.shape_str() + " vs " + tb.shape_str());
    }
    const int m = ta.rows(), k = ta.cols(), n = tb.rows();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += ta[i * k + p] * tb[j * k + p];
            out[i * n + j] = acc;
        }
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(std::move(out), "matmul_nt", rg, [a, b, m, k, n](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& va = t.val(a).data();
        const auto& vb = t.val(b).data();
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        // ga += g * b ; gb += g^T * a
        for (int i = 0; i < m; ++i)
            for (int p = 0; p < k; ++p) {
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += g[i * n + j] * vb[j * k + p];
                ga[i * k + p] += acc;
            }
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < k; ++p) {
                double acc = 0.0;
                for (int i = 0; i < m; ++i) acc += g[i * n + j] * va[i * k + p];
                gb[j * k + p] += acc;
            }
    });
}

Var Tape::matvec(Var m, Var x) {
    const Tensor& tm = val(m);
    const Tensor& tx = val(x);
    if (tm.rank() != 2 || tx.rank() != 1 || tm.cols() != tx.dim(0)) {
        throw DimensionError("matvec: incompatible shapes " + tm.shape_str() + " vs " + tx.shape_str());
    }
    const int r = tm.rows(), c = tm.cols();
    Tensor out({r});
    for (int i = 0; i < r; ++i) {
        double acc = 0.0;
        for (int j = 0; j < c; ++j) acc += tm[i * c + j] * tx[j];
        out[i] = acc;
    }
    bool rg = node(m).requires_grad || node(x).requires_grad;
    return push(std::move(out), "matvec", rg, [m, x, r, c](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& vm = t.val(m).data();
        const auto& vx = t.val(x).data();
        auto& gm = t.grad_of(m.id);
        auto& gx = t.grad_of(x.id);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) {
                gm[i * c + j] += g[i] * vx[j];
                gx[j] += vm[i * c + j] * g[i];
            }
    });
}

Var Tape::matvec_t(Var m, Var x) {
    const Tensor& tm = val(m);
    const Tensor& tx = val(x);
    if (tm.rank() != 2 || tx.rank() != 1 || tm.rows() != tx.dim(0)) {
        throw DimensionError("matvec_t: incompatible shapes " + tm.shape_str() + " vs " + tx.shape_str());
    }
    const int r = tm.rows(), c = tm.cols();
    Tensor out({c});
    for (int j = 0; j < c; ++j) {
        double acc = 0.0;
        for (int i = 0; i < r; ++i) acc += tm[i * c + j] * tx[i];
        out[j] = acc;
    }
    bool rg = node(m).requires_grad || node(x).requires_grad;
    return push(std::move(out), "matvec_t", rg, [m, x, r, c](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& vm = t.val(m).data();
        const auto& vx = t.val(x).data();
        auto& gm = t.grad_of(m.id);
        auto& gx = t.grad_of(x.id);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) {
                gm[i * c + j] += vx[i] * g[j];
                gx[i] += vm[i * c + j] * g[j];
            }
    });
}

Var Tape::add_row_broadcast(Var m, Var v) {
    const Tensor& tm = val(m);
    const Tensor& tv = val(v);
    if (tm.rank() != 2 || tv.rank() != 1 || tm.cols() != tv.dim(0)) {
        throw DimensionError("add_row_broadcast: incompatible shapes " + tm.shape_str() + " vs " + tv.shape_str());
    }
    const int r = tm.rows(), c = tm.cols();
    Tensor out = tm;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out[i * c + j] += tv[j];
    bool rg = node(m).requires_grad || node(v).requires_grad;
    return push(std::move(out), "add_row_broadcast", rg, [m, v, r, c](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        auto& gm = t.grad_of(m.id);
        auto& gv = t.grad_of(v.id);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j) {
                gm[i * c + j] += g[i * c + j];
                gv[j] += g[i * c + j];
            }
    });
}

Var Tape::elementwise(Var a, EwKind kind) {
    const Tensor& ta = val(a);
    Tensor out = ta;
    for (auto& x : out.data()) x = apply_ew(kind, x);
    return push(std::move(out), "elementwise", node(a).requires_grad, [a, kind](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& vx = t.val(a).data();
        const auto& vy = t.nodes_[static_cast<std::size_t>(self)].value.data();
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * ew_grad(kind, vx[i], vy[i]);
    });
}

Var Tape::abs_(Var a) {
    const Tensor& ta = val(a);
    Tensor out = ta;
    for (auto& v : out.data()) v = std::abs(v);
    return push(std::move(out), "abs", node(a).requires_grad, [a](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& vx = t.val(a).data();
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (vx[i] > 0.0) ga[i] += g[i];
            else if (vx[i] < 0.0) ga[i] -= g[i];
        }
    });
}

Var Tape::softmax(Var a) {
    const Tensor& ta = val(a);
    if (ta.rank() != 1 || ta.size() < 1) {
        throw DimensionError("softmax: needs a non-empty 1-D tensor, got " + ta.shape_str());
    }
    Tensor out({ta.dim(0)}, softmax_kernel(ta.data()));
    return push(std::move(out), "softmax", node(a).requires_grad, [a](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& y = t.nodes_[static_cast<std::size_t>(self)].value.data();
        auto& ga = t.grad_of(a.id);
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += y[i] * (g[i] - gy);
    });
}

Var Tape::sum(Var a) {
    const Tensor& ta = val(a);
    double acc = 0.0;
    for (double v : ta.data()) acc += v;
    return push(Tensor::scalar(acc), "sum", node(a).requires_grad, [a](Tape& t, int self) {
        const double g = t.grad_of(self)[0];
        auto& ga = t.grad_of(a.id);
        for (auto& v : ga) v += g;
    });
}

Var Tape::dot(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.shape() != tb.shape()) {
        throw DimensionError("dot: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
    }
    double acc = 0.0;
    for (std::int64_t i = 0; i < ta.size(); ++i) acc += ta[i] * tb[i];
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(Tensor::scalar(acc), "dot", rg, [a, b](Tape& t, int self) {
        const double g = t.grad_of(self)[0];
        const auto& va = t.val(a).data();
        const auto& vb = t.val(b).data();
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        for (std::size_t i = 0; i < va.size(); ++i) {
            ga[i] += g * vb[i];
            gb[i] += g * va[i];
        }
    });
}

Var Tape::concat(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.rank() != 1 || tb.rank() != 1) {
        throw DimensionError("concat: needs 1-D tensors, got " + ta.shape_str() + " and " + tb.shape_str());
    }
    std::vector<double> out = ta.data();
    out.insert(out.end(), tb.data().begin(), tb.data().end());
    const int na = ta.dim(0);
    const int total = static_cast<int>(out.size());
    bool rg = node(a).requires_grad || node(b).requires_grad;
    return push(Tensor({total}, std::move(out)), "concat", rg, [a, b, na](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        auto& ga = t.grad_of(a.id);
        auto& gb = t.grad_of(b.id);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[static_cast<std::size_t>(na) + i];
    });
}

Var Tape::slice(Var a, int start, int len) {
    const Tensor& ta = val(a);
    if (ta.rank() != 1 || start < 0 || len < 1 || start + len > ta.dim(0)) {
        throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                             ") out of bounds for " + ta.shape_str());
    }
    std::vector<double> out(ta.data().begin() + start, ta.data().begin() + start + len);
    return push(Tensor({len}, std::move(out)), "slice", node(a).requires_grad, [a, start](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        auto& ga = t.grad_of(a.id);
        for (std::size_t i = 0; i < g.size(); ++i) ga[static_cast<std::size_t>(start) + i] += g[i];
    });
}

Var Tape::row(Var m, int r) {
    const Tensor& tm = val(m);
    if (tm.rank() != 2 || r < 0 || r >= tm.rows()) {
        throw DimensionError("row: index " + std::to_string(r) + " out of bounds for " + tm.shape_str());
    }
    const int c = tm.cols();
    std::vector<double> out(tm.data().begin() + static_cast<std::size_t>(r) * c,
                            tm.data().begin() + static_cast<std::size_t>(r + 1) * c);
    return push(Tensor({c}, std::move(out)), "row", node(m).requires_grad, [m, r, c](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        auto& gm = t.grad_of(m.id);
        for (int j = 0; j < c; ++j) gm[static_cast<std::size_t>(r) * c + j] += g[static_cast<std::size_t>(j)];
    });
}

Var Tape::l2_normalize(Var a) {
    const Tensor& ta = val(a);
    double sq = 1e-24; // keeps the map differentiable at the origin
    for (double v : ta.data()) sq += v * v;
    const double r = std::sqrt(sq);
    Tensor out = ta;
    for (auto& v : out.data()) v /= r;
    return push(std::move(out), "l2_normalize", node(a).requires_grad, [a, r](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& y = t.nodes_[static_cast<std::size_t>(self)].value.data();
        auto& ga = t.grad_of(a.id);
        double gy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) gy += g[i] * y[i];
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += (g[i] - y[i] * gy) / r;
    });
}

Var Tape::scale_by(Var a, Var s) {
    const Tensor& ta = val(a);
    const Tensor& ts = val(s);
    if (ts.size() != 1) throw DimensionError("scale_by: scale must be scalar, got " + ts.shape_str());
    Tensor out = ta;
    for (auto& v : out.data()) v *= ts[0];
    bool rg = node(a).requires_grad || node(s).requires_grad;
    return push(std::move(out), "scale_by", rg, [a, s](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        const auto& va = t.val(a).data();
        const double sv = t.val(s)[0];
        auto& ga = t.grad_of(a.id);
        auto& gs = t.grad_of(s.id);
        for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += sv * g[i];
            gs[0] += g[i] * va[i];
        }
    });
}

Var Tape::one_minus(Var s) {
    const Tensor& ts = val(s);
    Tensor out = ts;
    for (auto& v : out.data()) v = 1.0 - v;
    return push(std::move(out), "one_minus", node(s).requires_grad, [s](Tape& t, int self) {
        const auto& g = t.grad_of(self);
        auto& gs = t.grad_of(s.id);
        for (std::size_t i = 0; i < g.size(); ++i) gs[i] -= g[i];
    });
}

Var Tape::cross_entropy_logits(Var logits, int target) {
    const Tensor& tl = val(logits);
    if (tl.rank() != 1 || target < 0 || target >= tl.dim(0)) {
        throw ContractError("cross_entropy_logits: target " + std::to_string(target) + " out of range for " +
                            tl.shape_str());
    }
    double mx = *std::max_element(tl.data().begin(), tl.data().end());
    double lse = 0.0;
    for (double v : tl.data()) lse += std::exp(v - mx);
    lse = mx + std::log(lse);
    double loss = lse - tl[target];
    return push(Tensor::scalar(loss), "cross_entropy_logits", node(logits).requires_grad,
                [logits, target](Tape& t, int self) {
                    const double g = t.grad_of(self)[0];
                    auto p = softmax_kernel(t.val(logits).data());
                    auto& gl = t.grad_of(logits.id);
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        gl[i] += g * (p[i] - (static_cast<int>(i) == target ? 1.0 : 0.0));
                    }
                });
}

Var Tape::bce_with_logits(Var logits, const Tensor& targets) {
    const Tensor& tl = val(logits);
    if (tl.shape() != targets.shape()) {
        throw DimensionError("bce_with_logits: shape mismatch " + tl.shape_str() + " vs " +
                             shape_to_string(targets.shape()));
    }
    const double n = static_cast<double>(tl.size());
    double loss = 0.0;
    for (std::int64_t i = 0; i < tl.size(); ++i) {
        double x = tl[i], y = targets[i];
        loss += std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= n;
    Tensor y = targets;
    return push(Tensor::scalar(loss), "bce_with_logits", node(logits).requires_grad,
                [logits, y = std::move(y), n](Tape& t, int self) {
                    const double g = t.grad_of(self)[0];
                    const auto& x = t.val(logits).data();
                    auto& gl = t.grad_of(logits.id);
                    for (std::size_t i = 0; i < x.size(); ++i) {
                        double s = 1.0 / (1.0 + std::exp(-x[i]));
                        gl[i] += g * (s - y[static_cast<std::int64_t>(i)]) / n;
                    }
                });
}

void Tape::backward(Var loss, ParamStore& store) {
    check_valid(loss, "backward");
    if (node(loss).value.size() != 1) {
        throw ContractError("backward: loss must be scalar, got " + node(loss).value.shape_str());
    }
    for (auto& n : nodes_) n.grad.assign(static_cast<std::size_t>(n.value.size()), 0.0);
    node(loss).grad[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (!n.requires_grad || !n.back) continue;
        n.back(*this, i);
    }
    for (auto& n : nodes_) {
        for (double g : n.grad) {
            if (!std::isfinite(g)) {
                throw NumericError(std::string("backward through op '") + n.op + "' produced non-finite gradient");
            }
        }
    }
    store.zero_all_grads();
    for (const auto& [name, id] : param_nodes_) {
        auto& g = store.at(name).grad();
        const auto& ng = nodes_[static_cast<std::size_t>(id)].grad;
        for (std::size_t j = 0; j < ng.size(); ++j) g[j] += ng[j];
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
        throw DimensionError("matmul: incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
    }
    Tensor out({a.rows(), b.cols()});
    matmul_kernel(a.data().data(), b.data().data(), out.data().data(), a.rows(), a.cols(), b.cols());
    return out;
}

Tensor softmax(const Tensor& x) {
    if (x.rank() != 1 || x.size() < 1) {
        throw DimensionError("softmax: needs a non-empty 1-D tensor, got " + x.shape_str());
    }
    return Tensor({x.dim(0)}, softmax_kernel(x.data()));
}

Tensor elementwise(const Tensor& x, EwKind kind) {
    Tensor out = x;
    for (auto& v : out.data()) v = apply_ew(kind, v);
    return out;
}

} // namespace occap::num
