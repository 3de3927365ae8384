#pragma once

#include <functional>
#include <initializer_list>
#include <vector>

namespace volnp::ad {

// Dense row-major matrix of doubles; the only array shape the engine needs.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

    static Matrix from_rows(int r, int c, std::initializer_list<double> values);

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
    double* row(int i) { return a.data() + static_cast<std::size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<std::size_t>(i) * cols; }
    std::size_t size() const { return a.size(); }
    bool empty() const { return a.empty(); }
};

// out = x * y (or out += with accumulate); shapes m x k, k x n -> m x n
void matmul_into(const Matrix& x, const Matrix& y, Matrix& out, bool accumulate = false);
// out (+)= x * y^T; shapes m x k, n x k -> m x n
void matmul_nt_into(const Matrix& x, const Matrix& y, Matrix& out, bool accumulate = false);
// out (+)= x^T * y; shapes k x m, k x n -> m x n
void matmul_tn_into(const Matrix& x, const Matrix& y, Matrix& out, bool accumulate = false);

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Tensor {
public:
    Tensor() = default;
    int rows() const;
    int cols() const;
    const Matrix& value() const;
    const Matrix& grad() const;
    bool valid() const { return tape_ != nullptr; }

private:
    friend class Tape;
    Tensor(Tape* tape, int id) : tape_(tape), id_(id) {}
    Tape* tape_ = nullptr;
    int id_ = -1;
};

// Reverse-mode tape over 2-D matrices. Nodes are recorded in topological
// order (operands before results). Forward evaluation is eager and uses a
// fixed reduction order, so results are bitwise deterministic. A tape is
// single-threaded; run independent tapes for parallel work.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // differentiable input (parameter); grads accumulate across backward calls
    Tensor leaf(Matrix value);
    // non-differentiable input (data); never receives a gradient
    Tensor constant(Matrix value);

    Tensor matmul(Tensor a, Tensor b);
    Tensor transpose(Tensor x);
    // elementwise a + b; b may also be a 1 x n row vector broadcast over rows
    Tensor add(Tensor a, Tensor b);
    Tensor sub(Tensor a, Tensor b);
    Tensor mul(Tensor a, Tensor b);  // elementwise
    Tensor scale(Tensor x, double c);
    Tensor add_scalar(Tensor x, double c);
    Tensor exp(Tensor x);
    Tensor log(Tensor x);
    // exact GELU, x * Phi(x)
    Tensor gelu(Tensor x);
    // clamp to [lo, hi]; gradient is passed through inside the interval and
    // zero outside
    Tensor clamp(Tensor x, double lo, double hi);
    Tensor concat_rows(Tensor a, Tensor b);  // stack vertically
    Tensor concat_cols(Tensor a, Tensor b);  // stack horizontally
    Tensor slice_rows(Tensor x, int r0, int r1);  // rows [r0, r1)
    Tensor slice_cols(Tensor x, int c0, int c1);  // cols [c0, c1)
    // softmax over each row, computed with row-max subtraction
    Tensor row_softmax(Tensor x);
    // per-row normalization to mean 0 / variance 1, then x_hat * gain + bias;
    // gain and bias are 1 x cols row vectors
    Tensor layer_norm(Tensor x, Tensor gain, Tensor bias, double eps = 1e-12);
    Tensor sum(Tensor x);   // 1 x 1
    Tensor mean(Tensor x);  // 1 x 1

    // Reverse pass from a scalar node. Non-leaf gradients are scratch and
    // reset on every call; leaf gradients accumulate until zero_grad().
    void backward(Tensor loss);
    void zero_grad();

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    friend class Tensor;

    struct Node {
        Matrix value;
        Matrix grad;  // lazily allocated
        bool is_leaf = false;
        bool needs_grad = false;
        std::function<void(Tape&)> back;  // null for inputs
    };

    Tensor emit(Matrix value, bool needs_grad, std::function<void(Tape&)> back);
    Matrix& grad_ref(int id);  // allocates zeros on first touch
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    bool wants_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }

    std::vector<Node> nodes_;
};

}  // namespace volnp::ad
