#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hcost {

class TensorError : public std::runtime_error {
public:
    explicit TensorError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TensorNode;
using NodeRef = std::shared_ptr<TensorNode>;

// One node of the eager autodiff graph. The backward function pulls this
// node's gradient into its parents' gradient buffers.
struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;   // leaf flag (parameters)
    bool needs_grad = false;      // reachable from a requires_grad leaf
    bool backward_run = false;
    std::vector<NodeRef> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
};

// Value-semantic handle over a graph node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodeRef n) : node_(std::move(n)) {}

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
    static Tensor constant(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor param(std::vector<std::size_t> shape, std::vector<double> data);
    static Tensor scalar(double v);

    bool valid() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    const std::vector<double>& grad() const;
    bool requires_grad() const { return node_->requires_grad; }
    double value() const;   // scalar tensors only
    double at(std::size_t i) const { return node_->data[i]; }

    // Copy of the values as a fresh constant leaf (cuts the graph).
    Tensor detach() const;
    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    NodeRef node_;
};

// ---- primitive ops ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a (m×k) times b^T where b is (n×k); result m×n.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);
// Broadcast-add a row vector (shape {n} or {1,n}) to every row of a (m×n).
Tensor add_row(const Tensor& a, const Tensor& row_vec);
// Broadcast-add a scalar tensor to every entry.
Tensor add_broadcast_scalar(const Tensor& a, const Tensor& s);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp_op(const Tensor& a);
// Natural log with the argument clamped to a floor of 1e-9.
Tensor log_clamped(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Mean of entries where mask==1; errors on an all-zero mask.
Tensor masked_mean(const Tensor& a, const std::vector<double>& mask);
Tensor norm2(const Tensor& a);  // scalar L2 norm
// Per-row layer normalization with learned gain/bias vectors (shape {n}).
Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       double eps = 1e-5);
// Stack k tensors of shape {1,n} (or {n}) into a {k,n} matrix.
Tensor concat_rows(const std::vector<Tensor>& rows);
// Column-wise max over rows: (m×n) -> {1,n}. Gradient flows to the first argmax row.
Tensor maxpool_rows(const Tensor& a);
Tensor row(const Tensor& a, std::size_t i);  // {1,n} slice
// out[i] = rows of `table` selected by ids; backward scatter-adds.
Tensor gather_rows(const Tensor& table, const std::vector<std::size_t>& ids);
// out[i][j] = sum_k h[i][k] * p[(i*n + j)*k_dim + k] with p a constant buffer.
Tensor pairwise_dot(const Tensor& h, const std::vector<double>& p, std::size_t n);
// Numerically-stable masked-mean binary cross-entropy on logits.
Tensor bce_with_logits(const Tensor& z, const std::vector<double>& y,
                       const std::vector<double>& mask);
// (1/N^2) sum_i sum_{j!=i} max(0, m - ||a_i - b_j||_2)^2 with b constant rows.
Tensor distinct_hinge(const Tensor& a, const Tensor& b_detached, double margin);

// ---- reverse pass ----------------------------------------------------------

// Populates .grad on every requires_grad leaf reachable from `loss`.
void backward(const Tensor& loss);

// Max over coordinates of |analytic - central difference| / max(1, |central|).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x0,
                  double eps = 1e-5);

}  // namespace hcost
