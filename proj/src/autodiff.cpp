#include "moif/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "moif/errors.hpp"

namespace moif::ad {

namespace {

std::shared_ptr<Node> new_node(std::size_t rows, std::size_t cols, std::vector<double> values,
                               bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError("tensor data has " + std::to_string(values.size()) + " values for shape [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  }
  auto node = std::make_shared<Node>();
  node->rows = rows;
  node->cols = cols;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  }
}

// Accumulate into parent i if it takes gradient.
template <typename Fn>
void into_parent(Node& self, std::size_t i, Fn&& fn) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return;
  p.ensure_grad();
  fn(p.grad);
}

template <typename Fn>
Tensor unary(const char* op, const Tensor& a, Fn&& f, std::function<void(Node&)> bw) {
  std::vector<double> out(a.size());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return detail::make_result(op, a.rows(), a.cols(), std::move(out), {a}, std::move(bw));
}

// acos slopes are evaluated no closer than this to ±1.
constexpr double kAcosEdge = 1e-7;

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(std::size_t rows, std::size_t cols) { return filled(rows, cols, 0.0); }

Tensor Tensor::filled(std::size_t rows, std::size_t cols, double v) {
  return Tensor(new_node(rows, cols, std::vector<double>(rows * cols, v), false));
}

Tensor Tensor::constant(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(new_node(rows, cols, std::move(values), false));
}

Tensor Tensor::leaf(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(new_node(rows, cols, std::move(values), true));
}

std::string Tensor::shape_str() const {
  if (!node_) return "[undefined]";
  return "[" + std::to_string(node_->rows) + "x" + std::to_string(node_->cols) + "]";
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str());
  return node_->value[0];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

namespace detail {

Tensor make_result(const char* op, std::size_t rows, std::size_t cols, std::vector<double> value,
                   std::vector<Tensor> parents, std::function<void(Node&)> backward) {
  for (double v : value) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    }
  }
  bool tracked = false;
  for (const auto& p : parents) tracked = tracked || p.requires_grad();
  auto node = new_node(rows, cols, std::move(value), tracked);
  node->op = op;
  if (tracked) {
    node->parents.reserve(parents.size());
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

}  // namespace detail

using detail::make_result;

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() + " x " + b.shape_str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  return make_result("matmul", m, n, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    into_parent(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[p * n + j];
          ga[i * k + p] += acc;
        }
    });
    into_parent(self, 1, [&](std::vector<double>& gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    });
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: feature dimensions differ, " + a.shape_str() + " x " +
                     b.shape_str() + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n, 0.0);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
      out[i * n + j] = acc;
    }
  return make_result("matmul_nt", m, n, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& g = self.grad;
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    into_parent(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += gij * bv[j * k + p];
        }
    });
    into_parent(self, 1, [&](std::vector<double>& gb) {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += gij * av[i * k + p];
        }
    });
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  const auto av = a.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return make_result("transpose", c, r, std::move(out), {a}, [r, c](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& ga) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
    });
  });
}

// ---- elementwise -----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result("add", a.rows(), a.cols(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t k = 0; k < 2; ++k)
      into_parent(self, k, [&](std::vector<double>& gp) {
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
      });
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return make_result("sub", a.rows(), a.cols(), std::move(out), {a, b}, [](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
    });
    into_parent(self, 1, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] -= self.grad[i];
    });
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result("mul", a.rows(), a.cols(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * bv[i];
    });
    into_parent(self, 1, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * av[i];
    });
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same_shape("div", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return make_result("div", a.rows(), a.cols(), std::move(out), {a, b}, [](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] / bv[i];
    });
    into_parent(self, 1, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] -= self.grad[i] * av[i] / (bv[i] * bv[i]);
    });
  });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw ShapeError("add_row: cannot broadcast " + row.shape_str() + " over " + a.shape_str());
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] + row.data()[j];
  return make_result("add_row", r, c, std::move(out), {a, row}, [r, c](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
    });
    into_parent(self, 1, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gp[j] += self.grad[i * c + j];
    });
  });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) {
    throw ShapeError("mul_col: cannot broadcast " + col.shape_str() + " over " + a.shape_str());
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = a.data()[i * c + j] * col.data()[i];
  return make_result("mul_col", r, c, std::move(out), {a, col}, [r, c](Node& self) {
    const auto& av = self.parents[0]->value;
    const auto& cv = self.parents[1]->value;
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[i * c + j] * cv[i];
    });
    into_parent(self, 1, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gp[i] += self.grad[i * c + j] * av[i * c + j];
    });
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += s * self.grad[i];
    });
  });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
    });
  });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); }, [](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const double y = self.value[i];
        gp[i] += self.grad[i] * (1.0 - y * y);
      }
    });
  });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, [](double x) { return stable_sigmoid(x); }, [](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const double y = self.value[i];
        gp[i] += self.grad[i] * y * (1.0 - y);
      }
    });
  });
}

Tensor silu(const Tensor& a) {
  return unary("silu", a, [](double x) { return x * stable_sigmoid(x); }, [](Node& self) {
    const auto& xv = self.parents[0]->value;
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) {
        const double s = stable_sigmoid(xv[i]);
        gp[i] += self.grad[i] * s * (1.0 + xv[i] * (1.0 - s));
      }
    });
  });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * self.value[i];
    });
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary("clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
               [lo, hi](Node& self) {
                 const auto& xv = self.parents[0]->value;
                 into_parent(self, 0, [&](std::vector<double>& gp) {
                   for (std::size_t i = 0; i < gp.size(); ++i)
                     if (xv[i] >= lo && xv[i] <= hi) gp[i] += self.grad[i];
                 });
               });
}

Tensor acos(const Tensor& a) {
  return unary("acos", a, [](double x) { return std::acos(std::clamp(x, -1.0, 1.0)); },
               [](Node& self) {
                 const auto& xv = self.parents[0]->value;
                 into_parent(self, 0, [&](std::vector<double>& gp) {
                   for (std::size_t i = 0; i < gp.size(); ++i) {
                     const double x = std::clamp(xv[i], kAcosEdge - 1.0, 1.0 - kAcosEdge);
                     gp[i] -= self.grad[i] / std::sqrt(1.0 - x * x);
                   }
                 });
               });
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_result("sum", 1, 1, {acc}, {a}, [](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (double& g : gp) g += self.grad[0];
    });
  });
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor row_sum(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i] += a.data()[i * c + j];
  return make_result("row_sum", r, 1, std::move(out), {a}, [r, c](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[i];
    });
  });
}

Tensor row_norm(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < c; ++j) acc += a.data()[i * c + j] * a.data()[i * c + j];
    out[i] = std::sqrt(acc);
  }
  return make_result("row_norm", r, 1, std::move(out), {a}, [r, c](Node& self) {
    const auto& av = self.parents[0]->value;
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < r; ++i) {
        const double n = self.value[i];
        if (n <= 0.0) continue;
        for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[i] * av[i * c + j] / n;
      }
    });
  });
}

Tensor row_dot(const Tensor& a, const Tensor& b) {
  require_same_shape("row_dot", a, b);
  return row_sum(mul(a, b));
}

// ---- structure ------------------------------------------------------------

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t r = parts.front().rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw ShapeError("concat_cols: row counts differ, " + parts.front().shape_str() + " vs " +
                       p.shape_str());
    }
    offsets.push_back(total);
    total += p.cols();
  }
  std::vector<double> out(r * total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t c = parts[k].cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * total + offsets[k] + j] = parts[k].data()[i * c + j];
  }
  return make_result("concat_cols", r, total, std::move(out), parts,
                     [r, total, offsets](Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         const std::size_t c = self.parents[k]->cols;
                         into_parent(self, k, [&](std::vector<double>& gp) {
                           for (std::size_t i = 0; i < r; ++i)
                             for (std::size_t j = 0; j < c; ++j)
                               gp[i * c + j] += self.grad[i * total + offsets[k] + j];
                         });
                       }
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw ShapeError("concat_rows: column counts differ, " + parts.front().shape_str() + " vs " +
                       p.shape_str());
    }
    total += p.rows();
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return make_result("concat_rows", total, c, std::move(out), parts, [](Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      const std::size_t n = self.parents[k]->value.size();
      into_parent(self, k, [&](std::vector<double>& gp) {
        for (std::size_t i = 0; i < n; ++i) gp[i] += self.grad[offset + i];
      });
      offset += n;
    }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.cols()) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + a.shape_str());
  }
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * count);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = a.data()[i * c + begin + j];
  return make_result("slice_cols", r, count, std::move(out), {a}, [r, c, begin, count](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) gp[i * c + begin + j] += self.grad[i * count + j];
    });
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  if (begin + count > a.rows()) {
    throw ShapeError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for " + a.shape_str());
  }
  const std::size_t c = a.cols();
  std::vector<double> out(a.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                          a.data().begin() + static_cast<std::ptrdiff_t>((begin + count) * c));
  return make_result("slice_rows", count, c, std::move(out), {a}, [begin, c](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) gp[begin * c + i] += self.grad[i];
    });
  });
}

Tensor reshape(const Tensor& a, std::size_t rows, std::size_t cols) {
  if (rows * cols != a.size()) {
    throw ShapeError("reshape " + a.shape_str() + " to [" + std::to_string(rows) + "x" +
                     std::to_string(cols) + "]");
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result("reshape", rows, cols, std::move(out), {a}, [](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
    });
  });
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
  if (row.rows() != 1) throw ShapeError("repeat_rows expects a row vector, got " + row.shape_str());
  const std::size_t c = row.cols();
  std::vector<double> out;
  out.reserve(n * c);
  for (std::size_t i = 0; i < n; ++i) out.insert(out.end(), row.data().begin(), row.data().end());
  return make_result("repeat_rows", n, c, std::move(out), {row}, [n, c](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) gp[j] += self.grad[i * c + j];
    });
  });
}

// ---- attention ------------------------------------------------------------

Tensor softmax_rows(const Tensor& x, double scale_by, const std::vector<bool>& key_mask) {
  if (!(scale_by > 0.0)) throw ParameterError("softmax_rows: scale must be positive");
  const std::size_t r = x.rows(), c = x.cols();
  if (!key_mask.empty() && key_mask.size() != c) {
    throw ShapeError("softmax_rows: mask of length " + std::to_string(key_mask.size()) + " for " +
                     x.shape_str());
  }
  auto live = [&](std::size_t j) { return key_mask.empty() || key_mask[j]; };
  std::vector<double> out(r * c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (live(j)) mx = std::max(mx, x.data()[i * c + j] / scale_by);
    if (!std::isfinite(mx)) throw ParameterError("softmax_rows: row has no unmasked entry");
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (!live(j)) continue;
      out[i * c + j] = std::exp(x.data()[i * c + j] / scale_by - mx);
      z += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return make_result("softmax_rows", r, c, std::move(out), {x}, [r, c, scale_by](Node& self) {
    into_parent(self, 0, [&](std::vector<double>& gp) {
      for (std::size_t i = 0; i < r; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c; ++j) dot += self.value[i * c + j] * self.grad[i * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          const double y = self.value[i * c + j];
          gp[i * c + j] += y * (self.grad[i * c + j] - dot) / scale_by;
        }
      }
    });
  });
}

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + loss.shape_str());
  }
  Node* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS; reversed, it is a topological order from the root.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
}

Tensor& ParamStore::add(const std::string& name, std::size_t rows, std::size_t cols,
                        std::vector<double> values) {
  if (params_.count(name) != 0) throw ParameterError("duplicate parameter name '" + name + "'");
  auto [it, inserted] = params_.emplace(name, Tensor::leaf(rows, cols, std::move(values)));
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ParameterError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ParameterError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, t] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::vector<double> ParamStore::flat_values() const {
  std::vector<double> out;
  out.reserve(total_elements());
  for (const auto& [name, t] : params_) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

std::vector<double> ParamStore::flat_grads() const {
  std::vector<double> out;
  out.reserve(total_elements());
  for (const auto& [name, t] : params_) {
    const auto g = t.grad();
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

void ParamStore::assign_flat(std::span<const double> values) {
  if (values.size() != total_elements()) {
    throw ShapeError("assign_flat: " + std::to_string(values.size()) + " values for " +
                     std::to_string(total_elements()) + " parameters");
  }
  std::size_t offset = 0;
  for (auto& [name, t] : params_) {
    auto dst = t.mutable_data();
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(offset),
              values.begin() + static_cast<std::ptrdiff_t>(offset + dst.size()), dst.begin());
    offset += dst.size();
  }
}

GradMap backward(const Tensor& loss, ParamStore& params) {
  params.zero_grad();
  backward(loss);
  GradMap out;
  for (const auto& [name, t] : params) out.emplace(name, t.grad());
  return out;
}

// ---- finite differences ---------------------------------------------------

GradCheckReport finite_diff_check(const std::function<Tensor()>& f,
                                  std::vector<std::pair<std::string, Tensor>> leaves,
                                  const GradCheckOptions& options) {
  for (auto& [name, t] : leaves) {
    if (!t.requires_grad() || !t.node()->parents.empty()) {
      throw ContractError("finite_diff_check: '" + name + "' is not a trainable leaf");
    }
  }
  const Tensor base = f();
  const Tensor again = f();
  if (base.size() != 1 || again.size() != 1) {
    throw ContractError("finite_diff_check: function must return a scalar");
  }
  if (base.item() != again.item()) {
    throw ContractError("finite_diff_check: function is not deterministic under a fixed seed");
  }

  for (auto& [name, t] : leaves) t.zero_grad();
  backward(base);

  GradCheckReport report;
  for (auto& [name, t] : leaves) {
    GradCheckEntry entry;
    entry.name = name;
    const auto analytic = t.grad();
    auto values = t.mutable_data();
    const std::size_t n = values.size();
    const std::size_t stride =
        (options.max_entries == 0 || n <= options.max_entries) ? 1 : (n + options.max_entries - 1) / options.max_entries;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = values[i];
      auto at = [&](double offset) {
        values[i] = orig + offset;
        const double v = f().item();
        values[i] = orig;
        return v;
      };
      const double h = options.step;
      const double numeric = options.five_point
                                 ? (at(-2 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2 * h)) / (12.0 * h)
                                 : (at(h) - at(-h)) / (2.0 * h);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), options.floor});
      entry.max_abs_err = std::max(entry.max_abs_err, abs_err);
      entry.max_rel_err = std::max(entry.max_rel_err, abs_err / denom);
      ++entry.checked;
    }
    entry.pass = entry.max_rel_err < options.tol;
    report.max_rel_err = std::max(report.max_rel_err, entry.max_rel_err);
    report.pass = report.pass && entry.pass;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

GradCheckReport finite_diff_check(const std::function<Tensor()>& f, ParamStore& params,
                                  const GradCheckOptions& options) {
  std::vector<std::pair<std::string, Tensor>> leaves;
  for (auto& [name, t] : params) leaves.emplace_back(name, t);
  return finite_diff_check(f, std::move(leaves), options);
}

}  // namespace moif::ad
