#pragma once

// Dense row-major matrices with define-by-run reverse-mode differentiation.
//
// Every value is a rank-2 tensor (rows x cols); scalars are 1x1 and row
// vectors are 1xn. Each forward op allocates a result node that keeps its
// parents alive and knows how to push its gradient back into them, so the
// graph lives exactly as long as the tensors that reference it. Parameters are
// leaf nodes owned by a ParamStore and are never linked to a graph themselves.

#include <array>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace moif::ad {

struct Node {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until something flows into it
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor filled(std::size_t rows, std::size_t cols, double v);
  /// Constant (no gradient). Throws ShapeError if values.size() != rows*cols.
  static Tensor constant(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor scalar(double v) { return filled(1, 1, v); }
  /// Trainable leaf.
  static Tensor leaf(std::size_t rows, std::size_t cols, std::vector<double> values);

  bool defined() const { return static_cast<bool>(node_); }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->value.size(); }
  std::array<std::size_t, 2> shape() const { return {node_->rows, node_->cols}; }
  std::string shape_str() const;

  std::span<const double> data() const { return node_->value; }
  /// Direct write access; only meaningful for leaves (optimizer steps, gradcheck).
  std::span<double> mutable_data() { return node_->value; }
  double at(std::size_t r, std::size_t c) const { return node_->value[r * node_->cols + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient accumulated by backward(); all zeros if nothing reached this tensor.
  std::vector<double> grad() const;
  void zero_grad() { node_->grad.clear(); }

  const char* op() const { return node_->op; }
  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {
/// Builds a result node. Checks finiteness of `value` (NumericError naming
/// `op`) and records parents/backward only when a parent requires grad.
Tensor make_result(const char* op, std::size_t rows, std::size_t cols, std::vector<double> value,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward);
}  // namespace detail

// ---- linear algebra -------------------------------------------------------

/// m×k · k×n. ShapeError reports both shapes on mismatch.
Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
/// r×c + 1×c, broadcasting the row over every row of `a`.
Tensor add_row(const Tensor& a, const Tensor& row);
/// r×c ⊙ r×1, scaling each row of `a` by the matching entry of `col`.
Tensor mul_col(const Tensor& a, const Tensor& col);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor neg(const Tensor& a);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor exp(const Tensor& a);
/// Values outside [lo, hi] are clamped and pass zero gradient.
Tensor clamp(const Tensor& a, double lo, double hi);
/// acos of the input clamped to [-1, 1]. The slope is taken at the input
/// clamped to [1e-7 - 1, 1 - 1e-7], so it stays finite at the boundary.
Tensor acos(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// r×c -> r×1 row sums.
Tensor row_sum(const Tensor& a);
/// r×c -> r×1 Euclidean norm of each row. Subgradient 0 at the origin.
Tensor row_norm(const Tensor& a);
/// Row-wise dot products of two r×c tensors -> r×1.
Tensor row_dot(const Tensor& a, const Tensor& b);

// ---- structure ------------------------------------------------------------

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
/// Row-major reinterpretation; size must match.
Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols);
/// 1×c -> n×c.
Tensor repeat_rows(const Tensor& row, std::size_t n);

// ---- attention ------------------------------------------------------------

/// Row-wise softmax of x / scale, max-subtracted. Columns whose key_mask entry
/// is false get probability exactly 0 (equivalent to a -inf logit). An empty
/// mask means every column is live. ParameterError if scale <= 0 or if a row
/// has no live column.
Tensor softmax_rows(const Tensor& x, double scale, const std::vector<bool>& key_mask = {});

// ---- backward -------------------------------------------------------------

/// Accumulates d(loss)/d(leaf) into every reachable tensor that requires
/// grad. Each node is visited once, in reverse topological order.
/// ContractError if loss is not 1×1.
void backward(const Tensor& loss);

/// Named trainable tensors, iterated in lexicographic name order.
class ParamStore {
 public:
  /// ParameterError on a duplicate name.
  Tensor& add(const std::string& name, std::size_t rows, std::size_t cols, std::vector<double> values);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  /// ParameterError on an unknown name.
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;

  void zero_grad();
  /// Values concatenated in name order.
  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;
  /// ShapeError if the length differs from total_elements().
  void assign_flat(std::span<const double> values);

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
};

using GradMap = std::map<std::string, std::vector<double>>;

/// Zeroes every parameter gradient, back-propagates `loss`, and returns the
/// gradient of each parameter (zeros for parameters the loss does not reach).
GradMap backward(const Tensor& loss, ParamStore& params);

// ---- finite differences ---------------------------------------------------

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-6;
  /// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
  /// Check at most this many entries per tensor (evenly strided); 0 = all.
  std::size_t max_entries = 0;
  /// Five-point stencil (error O(h⁴)) instead of the two-point one (O(h²)).
  bool five_point = true;
};

struct GradCheckEntry {
  std::string name;
  std::size_t checked = 0;
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_err = 0.0;
  bool pass = true;
};

/// Compares backward() against central differences of f for every entry of
/// every leaf in `leaves`. `f` must rebuild its graph on each call and be a
/// pure function of the leaves' values; it is evaluated twice at the start and
/// ContractError is thrown if the two results differ.
GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  std::vector<std::pair<std::string, Tensor>> leaves,
                                  const GradCheckOptions& options = {});
GradCheckReport finite_diff_check(const std::function<Tensor()>& f, ParamStore& params,
                                  const GradCheckOptions& options = {});

}  // namespace moif::ad
