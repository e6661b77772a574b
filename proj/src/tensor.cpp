#include "hcost/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace hcost {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
}

NodeRef make_node(std::vector<std::size_t> shape, std::vector<double> data) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return n;
}

// Result node wired to its parents; needs_grad propagates forward.
NodeRef make_op(std::vector<std::size_t> shape, std::vector<double> data,
                std::vector<NodeRef> parents,
                std::function<void(TensorNode&)> bwd) {
    auto n = make_node(std::move(shape), std::move(data));
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->needs_grad;
    n->needs_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(bwd);
    }
    return n;
}

void require_matrix(const Tensor& t, const char* who) {
    if (t.shape().size() != 2)
        throw TensorError(std::string(who) + ": expected a rank-2 tensor, got " +
                          shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (a.shape() != b.shape())
        throw TensorError(std::string(who) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
}

// C (m×n) += A (m×k) * B (k×n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// C (m×n) += A (m×k) * B^T with B (n×k)
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* bj = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
            ci[j] += acc;
        }
    }
}

// C (k×n) += A^T * B with A (m×k), B (m×n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ai[p];
            double* cp = c + p * n;
            for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
        }
    }
}

}  // namespace

// ---- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
    auto n = make_node(shape, std::vector<double>(shape_product(shape), 0.0));
    n->requires_grad = requires_grad;
    n->needs_grad = requires_grad;
    return Tensor(n);
}

Tensor Tensor::constant(std::vector<std::size_t> shape, std::vector<double> data) {
    if (shape_product(shape) != data.size())
        throw TensorError("constant: shape " + shape_str(shape) + " does not match " +
                          std::to_string(data.size()) + " values");
    return Tensor(make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::param(std::vector<std::size_t> shape, std::vector<double> data) {
    Tensor t = constant(std::move(shape), std::move(data));
    t.node_->requires_grad = true;
    t.node_->needs_grad = true;
    t.node_->ensure_grad();
    return t;
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

std::size_t Tensor::rows() const {
    return node_->shape.empty() ? 1 : node_->shape[0];
}

std::size_t Tensor::cols() const {
    return node_->shape.size() < 2 ? (node_->shape.empty() ? 1 : node_->shape[0])
                                   : node_->shape[1];
}

const std::vector<double>& Tensor::grad() const {
    if (node_->grad.size() != node_->data.size())
        throw TensorError("grad accessed before backward populated it");
    return node_->grad;
}

double Tensor::value() const {
    if (size() != 1) throw TensorError("value(): tensor is not scalar, shape " +
                                       shape_str(shape()));
    return node_->data[0];
}

Tensor Tensor::detach() const {
    return constant(node_->shape, node_->data);
}

// ---- ops -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    if (b.shape()[0] != k)
        throw TensorError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    const std::size_t n = b.shape()[1];
    std::vector<double> out(m * n, 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto an = a.node_, bn = b.node_;
    return Tensor(make_op({m, n}, std::move(out), {an, bn}, [m, k, n](TensorNode& self) {
        auto& an = *self.parents[0];
        auto& bn = *self.parents[1];
        if (an.needs_grad) {
            an.ensure_grad();
            gemm_nt(self.grad.data(), bn.data.data(), an.grad.data(), m, n, k);
        }
        if (bn.needs_grad) {
            bn.ensure_grad();
            gemm_tn(an.data.data(), self.grad.data(), bn.grad.data(), m, k, n);
        }
    }));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t m = a.shape()[0], k = a.shape()[1];
    if (b.shape()[1] != k)
        throw TensorError("matmul_nt: inner dimensions disagree, " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
    const std::size_t n = b.shape()[0];
    std::vector<double> out(m * n, 0.0);
    gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto an = a.node_, bn = b.node_;
    return Tensor(make_op({m, n}, std::move(out), {an, bn}, [m, k, n](TensorNode& self) {
        auto& an = *self.parents[0];
        auto& bn = *self.parents[1];
        // dA = dC * B ; dB = dC^T * A
        if (an.needs_grad) {
            an.ensure_grad();
            gemm_nn(self.grad.data(), bn.data.data(), an.grad.data(), m, n, k);
        }
        if (bn.needs_grad) {
            bn.ensure_grad();
            gemm_tn(self.grad.data(), an.data.data(), bn.grad.data(), m, n, k);
        }
    }));
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + b.at(i);
    return Tensor(make_op(a.shape(), std::move(out), {a.node_, b.node_},
                          [](TensorNode& self) {
                              for (auto& p : self.parents) {
                                  if (!p->needs_grad) continue;
                                  p->ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      p->grad[i] += self.grad[i];
                              }
                          }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) - b.at(i);
    return Tensor(make_op(a.shape(), std::move(out), {a.node_, b.node_},
                          [](TensorNode& self) {
                              auto& an = *self.parents[0];
                              auto& bn = *self.parents[1];
                              if (an.needs_grad) {
                                  an.ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      an.grad[i] += self.grad[i];
                              }
                              if (bn.needs_grad) {
                                  bn.ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      bn.grad[i] -= self.grad[i];
                              }
                          }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * b.at(i);
    return Tensor(make_op(a.shape(), std::move(out), {a.node_, b.node_},
                          [](TensorNode& self) {
                              auto& an = *self.parents[0];
                              auto& bn = *self.parents[1];
                              if (an.needs_grad) {
                                  an.ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      an.grad[i] += self.grad[i] * bn.data[i];
                              }
                              if (bn.needs_grad) {
                                  bn.ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      bn.grad[i] += self.grad[i] * an.data[i];
                              }
                          }));
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) * c;
    return Tensor(make_op(a.shape(), std::move(out), {a.node_}, [c](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] * c;
    }));
}

Tensor add_scalar(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + c;
    return Tensor(make_op(a.shape(), std::move(out), {a.node_}, [](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i];
    }));
}

Tensor add_row(const Tensor& a, const Tensor& row_vec) {
    require_matrix(a, "add_row");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (row_vec.size() != n)
        throw TensorError("add_row: row length " + std::to_string(row_vec.size()) +
                          " does not match " + std::to_string(n) + " columns");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.at(i * n + j) + row_vec.at(j);
    return Tensor(make_op(a.shape(), std::move(out), {a.node_, row_vec.node_},
                          [m, n](TensorNode& self) {
                              auto& an = *self.parents[0];
                              auto& rn = *self.parents[1];
                              if (an.needs_grad) {
                                  an.ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      an.grad[i] += self.grad[i];
                              }
                              if (rn.needs_grad) {
                                  rn.ensure_grad();
                                  for (std::size_t i = 0; i < m; ++i)
                                      for (std::size_t j = 0; j < n; ++j)
                                          rn.grad[j] += self.grad[i * n + j];
                              }
                          }));
}

Tensor add_broadcast_scalar(const Tensor& a, const Tensor& s) {
    if (s.size() != 1) throw TensorError("add_broadcast_scalar: bias must be scalar");
    const double sv = s.at(0);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) + sv;
    return Tensor(make_op(a.shape(), std::move(out), {a.node_, s.node_},
                          [](TensorNode& self) {
                              auto& an = *self.parents[0];
                              auto& sn = *self.parents[1];
                              if (an.needs_grad) {
                                  an.ensure_grad();
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      an.grad[i] += self.grad[i];
                              }
                              if (sn.needs_grad) {
                                  sn.ensure_grad();
                                  double acc = 0.0;
                                  for (double g : self.grad) acc += g;
                                  sn.grad[0] += acc;
                              }
                          }));
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.at(i);
        out[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                        : std::exp(x) / (1.0 + std::exp(x));
    }
    return Tensor(make_op(a.shape(), std::move(out), {a.node_}, [](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            const double y = self.data[i];
            an.grad[i] += self.grad[i] * y * (1.0 - y);
        }
    }));
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.at(i) > 0 ? a.at(i) : 0.0;
    return Tensor(make_op(a.shape(), std::move(out), {a.node_}, [](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            if (self.data[i] > 0) an.grad[i] += self.grad[i];
    }));
}

Tensor exp_op(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.at(i));
    return Tensor(make_op(a.shape(), std::move(out), {a.node_}, [](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
            an.grad[i] += self.grad[i] * self.data[i];
    }));
}

Tensor log_clamped(const Tensor& a) {
    constexpr double kFloor = 1e-9;
    std::vector<double> out(a.size());
    std::vector<char> clamped(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.at(i);
        clamped[i] = x < kFloor;
        out[i] = std::log(std::max(x, kFloor));
    }
    return Tensor(make_op(a.shape(), std::move(out), {a.node_},
                          [clamped = std::move(clamped)](TensorNode& self) {
                              auto& an = *self.parents[0];
                              an.ensure_grad();
                              for (std::size_t i = 0; i < self.grad.size(); ++i)
                                  if (!clamped[i])
                                      an.grad[i] += self.grad[i] / an.data[i];
                          }));
}

Tensor softmax_rows(const Tensor& a) {
    require_matrix(a, "softmax_rows");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < m; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, a.at(i * n + j));
        if (!std::isfinite(mx))
            throw TensorError("softmax_rows: row " + std::to_string(i) +
                              " has no finite entry");
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp(a.at(i * n + j) - mx);
            out[i * n + j] = e;
            z += e;
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= z;
    }
    return Tensor(make_op(a.shape(), std::move(out), {a.node_}, [m, n](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < m; ++i) {
            const double* y = self.data.data() + i * n;
            const double* dy = self.grad.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[j] * dy[j];
            double* dx = an.grad.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    }));
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i);
    return Tensor(make_op({1}, {acc}, {a.node_}, [](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < an.grad.size(); ++i) an.grad[i] += self.grad[0];
    }));
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw TensorError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor masked_mean(const Tensor& a, const std::vector<double>& mask) {
    if (mask.size() != a.size())
        throw TensorError("masked_mean: mask length does not match tensor size");
    double count = 0.0;
    for (double v : mask) count += v;
    if (count == 0.0) throw TensorError("masked_mean: empty reduction (all-zero mask)");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i) * mask[i];
    const double inv = 1.0 / count;
    return Tensor(make_op({1}, {acc * inv}, {a.node_}, [mask, inv](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t i = 0; i < an.grad.size(); ++i)
            an.grad[i] += self.grad[0] * mask[i] * inv;
    }));
}

Tensor norm2(const Tensor& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.at(i) * a.at(i);
    const double nrm = std::sqrt(acc);
    return Tensor(make_op({1}, {nrm}, {a.node_}, [](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        const double nrm = self.data[0];
        if (nrm == 0.0) return;  // subgradient 0 at the origin
        for (std::size_t i = 0; i < an.grad.size(); ++i)
            an.grad[i] += self.grad[0] * an.data[i] / nrm;
    }));
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps) {
    require_matrix(x, "layer_norm_rows");
    const std::size_t m = x.shape()[0], n = x.shape()[1];
    if (gamma.size() != n || beta.size() != n)
        throw TensorError("layer_norm_rows: gain/bias length does not match columns");
    std::vector<double> out(x.size());
    std::vector<double> xhat(x.size());
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data().data() + i * n;
        double mu = 0.0;
        for (std::size_t j = 0; j < n; ++j) mu += xi[j];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (xi[j] - mu) * is;
            xhat[i * n + j] = h;
            out[i * n + j] = h * gamma.at(j) + beta.at(j);
        }
    }
    return Tensor(make_op(
        x.shape(), std::move(out), {x.node_, gamma.node_, beta.node_},
        [m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorNode& self) {
            auto& xn = *self.parents[0];
            auto& gn = *self.parents[1];
            auto& bn = *self.parents[2];
            if (gn.needs_grad) gn.ensure_grad();
            if (bn.needs_grad) bn.ensure_grad();
            if (xn.needs_grad) xn.ensure_grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double* dy = self.grad.data() + i * n;
                const double* xh = xhat.data() + i * n;
                if (gn.needs_grad || bn.needs_grad) {
                    for (std::size_t j = 0; j < n; ++j) {
                        if (gn.needs_grad) gn.grad[j] += dy[j] * xh[j];
                        if (bn.needs_grad) bn.grad[j] += dy[j];
                    }
                }
                if (xn.needs_grad) {
                    // dxhat = dy * gamma; dx = (dxhat - mean(dxhat) - xhat*mean(dxhat*xhat)) * inv_std
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dxh = dy[j] * gn.data[j];
                        s1 += dxh;
                        s2 += dxh * xh[j];
                    }
                    s1 /= static_cast<double>(n);
                    s2 /= static_cast<double>(n);
                    double* dx = xn.grad.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dxh = dy[j] * gn.data[j];
                        dx[j] += (dxh - s1 - xh[j] * s2) * inv_std[i];
                    }
                }
            }
        }));
}

Tensor concat_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw TensorError("concat_rows: no rows given");
    const std::size_t n = rows[0].size();
    std::vector<double> out;
    out.reserve(rows.size() * n);
    std::vector<NodeRef> parents;
    parents.reserve(rows.size());
    for (const auto& r : rows) {
        if (r.size() != n)
            throw TensorError("concat_rows: inconsistent row length");
        out.insert(out.end(), r.data().begin(), r.data().end());
        parents.push_back(r.node_);
    }
    return Tensor(make_op({rows.size(), n}, std::move(out), std::move(parents),
                          [n](TensorNode& self) {
                              for (std::size_t i = 0; i < self.parents.size(); ++i) {
                                  auto& p = *self.parents[i];
                                  if (!p.needs_grad) continue;
                                  p.ensure_grad();
                                  for (std::size_t j = 0; j < n; ++j)
                                      p.grad[j] += self.grad[i * n + j];
                              }
                          }));
}

Tensor maxpool_rows(const Tensor& a) {
    require_matrix(a, "maxpool_rows");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (m == 0) throw TensorError("maxpool_rows: empty input");
    std::vector<double> out(n);
    std::vector<std::size_t> arg(n, 0);
    for (std::size_t j = 0; j < n; ++j) {
        double best = a.at(j);
        std::size_t bi = 0;
        for (std::size_t i = 1; i < m; ++i) {
            const double v = a.at(i * n + j);
            if (v > best) {
                best = v;
                bi = i;
            }
        }
        out[j] = best;
        arg[j] = bi;
    }
    return Tensor(make_op({1, n}, std::move(out), {a.node_},
                          [n, arg = std::move(arg)](TensorNode& self) {
                              auto& an = *self.parents[0];
                              an.ensure_grad();
                              for (std::size_t j = 0; j < n; ++j)
                                  an.grad[arg[j] * n + j] += self.grad[j];
                          }));
}

Tensor row(const Tensor& a, std::size_t i) {
    require_matrix(a, "row");
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    if (i >= m) throw TensorError("row: index out of range");
    std::vector<double> out(a.data().begin() + i * n, a.data().begin() + (i + 1) * n);
    return Tensor(make_op({1, n}, std::move(out), {a.node_}, [i, n](TensorNode& self) {
        auto& an = *self.parents[0];
        an.ensure_grad();
        for (std::size_t j = 0; j < n; ++j) an.grad[i * n + j] += self.grad[j];
    }));
}

Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids) {
    require_matrix(table, "gather_rows");
    const std::size_t m = table.shape()[0], n = table.shape()[1];
    std::vector<double> out;
    out.reserve(ids.size() * n);
    for (std::size_t id : ids) {
        if (id >= m)
            throw TensorError("gather_rows: id " + std::to_string(id) + " out of range " +
                              std::to_string(m));
        out.insert(out.end(), table.data().begin() + id * n,
                   table.data().begin() + (id + 1) * n);
    }
    return Tensor(make_op({ids.size(), n}, std::move(out), {table.node_},
                          [ids, n](TensorNode& self) {
                              auto& tn = *self.parents[0];
                              tn.ensure_grad();
                              for (std::size_t r = 0; r < ids.size(); ++r)
                                  for (std::size_t j = 0; j < n; ++j)
                                      tn.grad[ids[r] * n + j] += self.grad[r * n + j];
                          }));
}

Tensor pairwise_dot(const Tensor& h, const std::vector<double>& p, std::size_t n) {
    require_matrix(h, "pairwise_dot");
    const std::size_t k = h.shape()[1];
    if (h.shape()[0] != n || p.size() != n * n * k)
        throw TensorError("pairwise_dot: spatial buffer does not match " +
                          std::to_string(n) + " objects x " + std::to_string(k));
    std::vector<double> out(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* hi = h.data().data() + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* pij = p.data() + (i * n + j) * k;
            double acc = 0.0;
            for (std::size_t c = 0; c < k; ++c) acc += hi[c] * pij[c];
            out[i * n + j] = acc;
        }
    }
    return Tensor(make_op({n, n}, std::move(out), {h.node_}, [p, n, k](TensorNode& self) {
        auto& hn = *self.parents[0];
        hn.ensure_grad();
        for (std::size_t i = 0; i < n; ++i) {
            double* dhi = hn.grad.data() + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const double g = self.grad[i * n + j];
                const double* pij = p.data() + (i * n + j) * k;
                for (std::size_t c = 0; c < k; ++c) dhi[c] += g * pij[c];
            }
        }
    }));
}

Tensor bce_with_logits(const Tensor& z, const std::vector<double>& y,
                       const std::vector<double>& mask) {
    if (y.size() != z.size() || mask.size() != z.size())
        throw TensorError("bce_with_logits: label/mask length does not match logits");
    double count = 0.0;
    for (double v : mask) count += v;
    if (count == 0.0)
        throw TensorError("bce_with_logits: empty reduction (all-zero mask)");
    double acc = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (mask[i] == 0.0) continue;
        const double x = z.at(i);
        // max(x,0) - x*y + log(1 + exp(-|x|))
        acc += std::max(x, 0.0) - x * y[i] + std::log1p(std::exp(-std::abs(x)));
    }
    const double inv = 1.0 / count;
    return Tensor(make_op({1}, {acc * inv}, {z.node_}, [y, mask, inv](TensorNode& self) {
        auto& zn = *self.parents[0];
        zn.ensure_grad();
        for (std::size_t i = 0; i < zn.grad.size(); ++i) {
            if (mask[i] == 0.0) continue;
            const double x = zn.data[i];
            const double s = x >= 0 ? 1.0 / (1.0 + std::exp(-x))
                                    : std::exp(x) / (1.0 + std::exp(x));
            zn.grad[i] += self.grad[0] * (s - y[i]) * inv;
        }
    }));
}

Tensor distinct_hinge(const Tensor& a, const Tensor& b_detached, double margin) {
    require_matrix(a, "distinct_hinge");
    require_same_shape(a, b_detached, "distinct_hinge");
    const std::size_t n = a.shape()[0], d = a.shape()[1];
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data().data() + i * d;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const double* bj = b_detached.data().data() + j * d;
            double sq = 0.0;
            for (std::size_t c = 0; c < d; ++c) sq += (ai[c] - bj[c]) * (ai[c] - bj[c]);
            const double dist = std::sqrt(sq);
            if (dist < margin) acc += (margin - dist) * (margin - dist);
        }
    }
    const double inv = 1.0 / (static_cast<double>(n) * static_cast<double>(n));
    auto bn = b_detached.node_;
    return Tensor(make_op({1}, {acc * inv}, {a.node_},
                          [bn, margin, n, d, inv](TensorNode& self) {
                              auto& an = *self.parents[0];
                              an.ensure_grad();
                              for (std::size_t i = 0; i < n; ++i) {
                                  const double* ai = an.data.data() + i * d;
                                  double* dai = an.grad.data() + i * d;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      if (j == i) continue;
                                      const double* bj = bn->data.data() + j * d;
                                      double sq = 0.0;
                                      for (std::size_t c = 0; c < d; ++c)
                                          sq += (ai[c] - bj[c]) * (ai[c] - bj[c]);
                                      const double dist = std::sqrt(sq);
                                      if (dist >= margin || dist == 0.0) continue;
                                      const double coef =
                                          self.grad[0] * inv * (-2.0) * (margin - dist) / dist;
                                      for (std::size_t c = 0; c < d; ++c)
                                          dai[c] += coef * (ai[c] - bj[c]);
                                  }
                              }
                          }));
}

// ---- backward --------------------------------------------------------------

void backward(const Tensor& loss) {
    if (!loss.valid() || loss.size() != 1)
        throw TensorError("backward: loss must be a scalar tensor");
    TensorNode* root = loss.node_.get();
    if (!root->needs_grad)
        throw TensorError("backward: loss is detached from any differentiable leaf");
    if (root->backward_run)
        throw TensorError("backward: already called on this loss; reset the graph first");
    root->backward_run = true;

    // Iterative post-order topological sort.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx].get();
            ++idx;
            if (p->needs_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                  double eps) {
    Tensor x = Tensor::param(x0.shape(), x0.data());
    Tensor loss = f(x);
    if (loss.size() != 1) throw TensorError("grad_check: f must be scalar-valued");
    backward(loss);
    std::vector<double> analytic = x.grad();

    Tensor probe = Tensor::constant(x0.shape(), x0.data());
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const double orig = probe.data()[i];
        probe.data()[i] = orig + eps;
        const double fp = f(probe).value();
        probe.data()[i] = orig - eps;
        const double fm = f(probe).value();
        probe.data()[i] = orig;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double rel =
            std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace hcost
