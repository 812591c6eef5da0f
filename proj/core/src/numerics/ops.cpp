#include "owdetr/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "owdetr/errors.hpp"

namespace owdetr::numerics {

namespace {

// Gradient buffer of input i, or nullptr when that input is a constant.
std::vector<double>* input_grad(const Node& out, std::size_t i) {
  Node* in = out.inputs[i].get();
  return in->requires_grad ? &in->ensure_grad() : nullptr;
}

const std::vector<double>& input_data(const Node& out, std::size_t i) {
  return out.inputs[i]->data;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(rank) + ", got " +
                         shape_str(t.shape()));
  }
}

// b's shape must equal a's or be a suffix of it.
void require_suffix(const Tensor& a, const Tensor& b, const char* op) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  bool ok = sb.size() <= sa.size() &&
            std::equal(sb.rbegin(), sb.rend(), sa.rbegin());
  if (!ok) {
    throw DimensionError(std::string(op) + ": cannot combine " + shape_str(sa) +
                         " with " + shape_str(sb));
  }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

// y[i] += a * x[i]. Multiversioned: the AVX2 clone performs the same
// separate multiply and add per element, so results match the baseline clone
// bit for bit (no FMA contraction is enabled in either).
__attribute__((target_clones("avx2", "default"))) void axpy(
    double* __restrict y, const double* __restrict x, double a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> c(m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* bp = B.data() + p * n;
      axpy(ci, bp, aip, n);
    }
  }
  return make_result(
      {m, n}, std::move(c), {a, b},
      [m, k, n](const Node& out) {
        const auto& A = input_data(out, 0);
        const auto& B = input_data(out, 1);
        const auto& G = out.grad;
        if (auto* ga = input_grad(out, 0)) {
          // ga += G B^T, accumulated row-wise against B^T so the inner loop
          // is an axpy.
          std::vector<double> bt(n * k);
          for (std::size_t p = 0; p < k; ++p) {
            for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
          }
          for (std::size_t i = 0; i < m; ++i) {
            double* row = ga->data() + i * k;
            for (std::size_t j = 0; j < n; ++j) {
              const double g = G[i * n + j];
              if (g == 0.0) continue;
              const double* bj = bt.data() + j * k;
              axpy(row, bj, g, k);
            }
          }
        }
        if (auto* gb = input_grad(out, 1)) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = A[i * k + p];
              if (aip == 0.0) continue;
              double* row = gb->data() + p * n;
              axpy(row, G.data() + i * n, aip, n);
            }
          }
        }
      },
      "matmul");
}

Tensor batched_matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 3, "batched_matmul");
  require_rank(b, 3, "batched_matmul");
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  if (b.dim(0) != batch || b.dim(1) != k) {
    throw DimensionError("batched_matmul: incompatible " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> c(batch * m * n, 0.0);
  auto A = a.data();
  auto B = b.data();
  for (std::size_t s = 0; s < batch; ++s) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = A[(s * m + i) * k + p];
        for (std::size_t j = 0; j < n; ++j) {
          c[(s * m + i) * n + j] += aip * B[(s * k + p) * n + j];
        }
      }
    }
  }
  return make_result(
      {batch, m, n}, std::move(c), {a, b},
      [batch, m, k, n](const Node& out) {
        const auto& A = input_data(out, 0);
        const auto& B = input_data(out, 1);
        const auto& G = out.grad;
        auto* ga = input_grad(out, 0);
        auto* gb = input_grad(out, 1);
        for (std::size_t s = 0; s < batch; ++s) {
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t p = 0; p < k; ++p) {
              const std::size_t ai = (s * m + i) * k + p;
              double acc = 0.0;
              for (std::size_t j = 0; j < n; ++j) {
                const double g = G[(s * m + i) * n + j];
                acc += g * B[(s * k + p) * n + j];
                if (gb) (*gb)[(s * k + p) * n + j] += A[ai] * g;
              }
              if (ga) (*ga)[ai] += acc;
            }
          }
        }
      },
      "batched_matmul");
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t r = a.dim(0), c = a.dim(1);
  std::vector<double> out(r * c);
  auto x = a.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  }
  return make_result(
      {c, r}, std::move(out), {a},
      [r, c](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += out.grad[j * r + i];
        }
      },
      "transpose");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_suffix(a, b, "add");
  const std::size_t nb = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i % nb];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [nb](const Node& out) {
        if (auto* ga = input_grad(out, 0)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) (*ga)[i] += out.grad[i];
        }
        if (auto* gb = input_grad(out, 1)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) (*gb)[i % nb] += out.grad[i];
        }
      },
      "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_suffix(a, b, "sub");
  const std::size_t nb = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= y[i % nb];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [nb](const Node& out) {
        if (auto* ga = input_grad(out, 0)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) (*ga)[i] += out.grad[i];
        }
        if (auto* gb = input_grad(out, 1)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) (*gb)[i % nb] -= out.grad[i];
        }
      },
      "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_suffix(a, b, "mul");
  const std::size_t nb = b.numel();
  std::vector<double> out(a.data().begin(), a.data().end());
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i % nb];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [nb](const Node& out) {
        const auto& A = input_data(out, 0);
        const auto& B = input_data(out, 1);
        if (auto* ga = input_grad(out, 0)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) (*ga)[i] += out.grad[i] * B[i % nb];
        }
        if (auto* gb = input_grad(out, 1)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) (*gb)[i % nb] += out.grad[i] * A[i];
        }
      },
      "mul");
}

Tensor div(const Tensor& a, const Tensor& b) {
  require_same(a, b, "div");
  std::vector<double> out(a.numel());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / y[i];
  return make_result(
      a.shape(), std::move(out), {a, b},
      [](const Node& out) {
        const auto& A = input_data(out, 0);
        const auto& B = input_data(out, 1);
        if (auto* ga = input_grad(out, 0)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) (*ga)[i] += out.grad[i] / B[i];
        }
        if (auto* gb = input_grad(out, 1)) {
          for (std::size_t i = 0; i < out.grad.size(); ++i) {
            (*gb)[i] -= out.grad[i] * A[i] / (B[i] * B[i]);
          }
        }
      },
      "div");
}

namespace {

// Elementwise select; ties route the gradient to the first operand.
Tensor select_binary(const Tensor& a, const Tensor& b, bool take_min,
                     const char* op) {
  require_same(a, b, op);
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  auto mask = std::make_shared<std::vector<char>>(n);
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < n; ++i) {
    const bool first = take_min ? x[i] <= y[i] : x[i] >= y[i];
    (*mask)[i] = first;
    out[i] = first ? x[i] : y[i];
  }
  return make_result(
      a.shape(), std::move(out), {a, b},
      [mask](const Node& out) {
        auto* ga = input_grad(out, 0);
        auto* gb = input_grad(out, 1);
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
          if ((*mask)[i]) {
            if (ga) (*ga)[i] += out.grad[i];
          } else if (gb) {
            (*gb)[i] += out.grad[i];
          }
        }
      },
      op);
}

}  // namespace

Tensor minimum(const Tensor& a, const Tensor& b) {
  return select_binary(a, b, true, "minimum");
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return select_binary(a, b, false, "maximum");
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(
      a.shape(), std::move(out), {a},
      [factor](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < out.grad.size(); ++i) (*ga)[i] += factor * out.grad[i];
      },
      "scale");
}

Tensor add_scalar(const Tensor& a, double value) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += value;
  return make_result(
      a.shape(), std::move(out), {a},
      [](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < out.grad.size(); ++i) (*ga)[i] += out.grad[i];
      },
      "add_scalar");
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor abs(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(x[i]);
  return make_result(
      a.shape(), std::move(out), {a},
      [](const Node& out) {
        const auto& X = input_data(out, 0);
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
          const double s = X[i] > 0 ? 1.0 : (X[i] < 0 ? -1.0 : 0.0);
          (*ga)[i] += s * out.grad[i];
        }
      },
      "abs");
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0 ? x[i] : 0.0;
  return make_result(
      a.shape(), std::move(out), {a},
      [](const Node& out) {
        const auto& X = input_data(out, 0);
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
          if (X[i] > 0) (*ga)[i] += out.grad[i];
        }
      },
      "relu");
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.numel());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(x[i]);
  return make_result(
      a.shape(), std::move(out), {a},
      [](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < out.grad.size(); ++i) {
          const double s = out.data[i];
          (*ga)[i] += out.grad[i] * s * (1.0 - s);
        }
      },
      "sigmoid");
}

Tensor softmax(const Tensor& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    double* yr = out.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
  }
  return make_result(
      x.shape(), std::move(out), {x},
      [n, rows](const Node& out) {
        auto* gx = input_grad(out, 0);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* y = out.data.data() + r * n;
          const double* g = out.grad.data() + r * n;
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
          for (std::size_t j = 0; j < n; ++j) (*gx)[r * n + j] += y[j] * (g[j] - dot);
        }
      },
      "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t n = x.shape().back();
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(n) +
                         "], got " + shape_str(gain.shape()) + " and " +
                         shape_str(bias.shape()));
  }
  const std::size_t rows = x.numel() / n;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  auto in = x.data();
  auto g = gain.data();
  auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(n);
    const double s = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = s;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (xr[j] - mu) * s;
      (*xhat)[r * n + j] = h;
      out[r * n + j] = h * g[j] + b[j];
    }
  }
  return make_result(
      x.shape(), std::move(out), {x, gain, bias},
      [n, rows, xhat, rstd](const Node& out) {
        const auto& G = input_data(out, 1);
        auto* gx = input_grad(out, 0);
        auto* gg = input_grad(out, 1);
        auto* gb = input_grad(out, 2);
        std::vector<double> dxhat(n);
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gy = out.grad.data() + r * n;
          const double* h = xhat->data() + r * n;
          double mean_d = 0.0, mean_dh = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            if (gg) (*gg)[j] += gy[j] * h[j];
            if (gb) (*gb)[j] += gy[j];
            dxhat[j] = gy[j] * G[j];
            mean_d += dxhat[j];
            mean_dh += dxhat[j] * h[j];
          }
          if (!gx) continue;
          mean_d /= static_cast<double>(n);
          mean_dh /= static_cast<double>(n);
          for (std::size_t j = 0; j < n; ++j) {
            (*gx)[r * n + j] += (*rstd)[r] * (dxhat[j] - mean_d - h[j] * mean_dh);
          }
        }
      },
      "layer_norm");
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result(
      {1}, {total}, {a},
      [](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (auto& g : *ga) g += out.grad[0];
      },
      "sum");
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_last(const Tensor& a) {
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  if (shape.empty()) shape = {1};
  std::vector<double> out(rows, 0.0);
  auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < n; ++j) out[r] += x[r * n + j];
  }
  return make_result(
      std::move(shape), std::move(out), {a},
      [n, rows](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < n; ++j) (*ga)[r * n + j] += out.grad[r];
        }
      },
      "sum_last");
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " +
                         shape_str(shape));
  }
  return make_result(
      std::move(shape), std::vector<double>(a.data().begin(), a.data().end()),
      {a},
      [](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < out.grad.size(); ++i) (*ga)[i] += out.grad[i];
      },
      "reshape");
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  if (a.rank() == 0 || count == 0 || start + count > a.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " +
                         shape_str(a.shape()));
  }
  const std::size_t inner = a.numel() / a.dim(0);
  Shape shape = a.shape();
  shape[0] = count;
  auto first = a.data().begin() + static_cast<std::ptrdiff_t>(start * inner);
  std::vector<double> out(first, first + static_cast<std::ptrdiff_t>(count * inner));
  const std::size_t offset = start * inner;
  return make_result(
      std::move(shape), std::move(out), {a},
      [offset](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < out.grad.size(); ++i) (*ga)[offset + i] += out.grad[i];
      },
      "slice_rows");
}

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t count) {
  require_rank(a, 2, "slice_cols");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (count == 0 || start + count > cols) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of " +
                         shape_str(a.shape()));
  }
  std::vector<double> out(rows * count);
  auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < count; ++j) out[r * count + j] = x[r * cols + start + j];
  }
  return make_result(
      {rows, count}, std::move(out), {a},
      [rows, cols, start, count](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < count; ++j) {
            (*ga)[r * cols + start + j] += out.grad[r * count + j];
          }
        }
      },
      "slice_cols");
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape inner(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (Shape(p.shape().begin() + 1, p.shape().end()) != inner) {
      throw DimensionError("concat_rows: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    rows += p.dim(0);
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape shape = parts[0].shape();
  shape[0] = rows;
  return make_result(
      std::move(shape), std::move(out),
      std::vector<Tensor>(parts.begin(), parts.end()),
      [](const Node& out) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < out.inputs.size(); ++i) {
          const std::size_t n = out.inputs[i]->data.size();
          if (auto* g = input_grad(out, i)) {
            for (std::size_t j = 0; j < n; ++j) (*g)[j] += out.grad[offset + j];
          }
          offset += n;
        }
      },
      "concat_rows");
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  for (const auto& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) {
      throw DimensionError("concat_cols: " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    cols += p.dim(1);
  }
  std::vector<double> out(rows * cols);
  std::size_t start = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1);
    auto x = p.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(r * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(r * cols + start));
    }
    start += w;
  }
  return make_result(
      {rows, cols}, std::move(out),
      std::vector<Tensor>(parts.begin(), parts.end()),
      [rows, cols](const Node& out) {
        std::size_t start = 0;
        for (std::size_t i = 0; i < out.inputs.size(); ++i) {
          const std::size_t w = out.inputs[i]->shape[1];
          if (auto* g = input_grad(out, i)) {
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < w; ++j) {
                (*g)[r * w + j] += out.grad[r * cols + start + j];
              }
            }
          }
          start += w;
        }
      },
      "concat_cols");
}

Tensor repeat_rows(const Tensor& a, std::size_t times) {
  require_rank(a, 2, "repeat_rows");
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out;
  out.reserve(rows * times * cols);
  auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < times; ++t) {
      out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(r * cols),
                 x.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
    }
  }
  return make_result(
      {rows * times, cols}, std::move(out), {a},
      [rows, cols, times](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t t = 0; t < times; ++t) {
            for (std::size_t j = 0; j < cols; ++j) {
              (*ga)[r * cols + j] += out.grad[((r * times) + t) * cols + j];
            }
          }
        }
      },
      "repeat_rows");
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
  require_rank(a, 2, "gather_rows");
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  const std::size_t cols = a.dim(1);
  std::vector<double> out;
  out.reserve(rows.size() * cols);
  auto x = a.data();
  for (auto r : rows) {
    if (r >= a.dim(0)) {
      throw DimensionError("gather_rows: row " + std::to_string(r) +
                           " out of " + shape_str(a.shape()));
    }
    out.insert(out.end(), x.begin() + static_cast<std::ptrdiff_t>(r * cols),
               x.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols));
  }
  std::vector<std::size_t> index(rows.begin(), rows.end());
  return make_result(
      {rows.size(), cols}, std::move(out), {a},
      [index = std::move(index), cols](const Node& out) {
        auto* ga = input_grad(out, 0);
        for (std::size_t i = 0; i < index.size(); ++i) {
          for (std::size_t j = 0; j < cols; ++j) {
            (*ga)[index[i] * cols + j] += out.grad[i * cols + j];
          }
        }
      },
      "gather_rows");
}

Tensor conv2d(const Tensor& x, const Tensor& w, std::size_t stride,
              std::size_t pad) {
  return conv2d(x, w, Tensor(), stride, pad);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias,
              std::size_t stride, std::size_t pad) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  if (stride == 0) throw DimensionError("conv2d: stride must be positive");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  if (w.dim(1) != cin || w.dim(3) != k) {
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) +
                         " does not fit input " + shape_str(x.shape()));
  }
  if (k > h + 2 * pad || k > wd + 2 * pad) {
    throw DimensionError("conv2d: kernel " + shape_str(w.shape()) +
                         " larger than padded input " + shape_str(x.shape()));
  }
  if (bias.defined() && bias.shape() != Shape{cout}) {
    throw DimensionError("conv2d: bias " + shape_str(bias.shape()) +
                         " for " + std::to_string(cout) + " output channels");
  }
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - k) / stride + 1;
  const std::size_t patch = cin * k * k;
  const std::size_t npos = ho * wo;

  // im2col: cols[patch x npos]
  auto cols = std::make_shared<std::vector<double>>(patch * npos, 0.0);
  auto X = x.data();
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = cols->data() + ((c * k + ky) * k + kx) * npos;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                          static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                            static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
            row[oy * wo + ox] = X[(c * h + static_cast<std::size_t>(iy)) * wd +
                                  static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
  std::vector<double> out(cout * npos, 0.0);
  auto W = w.data();
  for (std::size_t o = 0; o < cout; ++o) {
    double* orow = out.data() + o * npos;
    if (bias.defined()) std::fill(orow, orow + npos, bias.data()[o]);
    for (std::size_t p = 0; p < patch; ++p) {
      const double wv = W[o * patch + p];
      const double* crow = cols->data() + p * npos;
      axpy(orow, crow, wv, npos);
    }
  }
  std::vector<Tensor> inputs{x, w};
  if (bias.defined()) inputs.push_back(bias);
  return make_result(
      {cout, ho, wo}, std::move(out), std::move(inputs),
      [=](const Node& out) {
        const auto& W = input_data(out, 1);
        const auto& G = out.grad;
        if (auto* gw = input_grad(out, 1)) {
          std::vector<double> cols_t(npos * patch);
          for (std::size_t p = 0; p < patch; ++p) {
            for (std::size_t q = 0; q < npos; ++q) cols_t[q * patch + p] = (*cols)[p * npos + q];
          }
          for (std::size_t o = 0; o < cout; ++o) {
            double* row = gw->data() + o * patch;
            for (std::size_t q = 0; q < npos; ++q) {
              const double g = G[o * npos + q];
              if (g == 0.0) continue;
              const double* c = cols_t.data() + q * patch;
              axpy(row, c, g, patch);
            }
          }
        }
        if (out.inputs.size() > 2) {
          if (auto* gb = input_grad(out, 2)) {
            for (std::size_t o = 0; o < cout; ++o) {
              double acc = 0.0;
              for (std::size_t q = 0; q < npos; ++q) acc += G[o * npos + q];
              (*gb)[o] += acc;
            }
          }
        }
        if (auto* gx = input_grad(out, 0)) {
          std::vector<double> gcols(patch * npos, 0.0);
          for (std::size_t o = 0; o < cout; ++o) {
            for (std::size_t p = 0; p < patch; ++p) {
              const double wv = W[o * patch + p];
              double* grow = gcols.data() + p * npos;
              axpy(grow, G.data() + o * npos, wv, npos);
            }
          }
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              for (std::size_t kx = 0; kx < k; ++kx) {
                const double* grow = gcols.data() + ((c * k + ky) * k + kx) * npos;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                  const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(pad);
                  if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
                  for (std::size_t ox = 0; ox < wo; ++ox) {
                    const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(pad);
                    if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                    (*gx)[(c * h + static_cast<std::size_t>(iy)) * wd +
                          static_cast<std::size_t>(ix)] += grow[oy * wo + ox];
                  }
                }
              }
            }
          }
        }
      },
      "conv2d");
}

Tensor bilinear_sample(const Tensor& feature, const Tensor& points) {
  require_rank(feature, 3, "bilinear_sample");
  require_rank(points, 2, "bilinear_sample");
  if (points.dim(1) != 2) {
    throw DimensionError("bilinear_sample: points must be [P x 2], got " +
                         shape_str(points.shape()));
  }
  const std::size_t channels = feature.dim(0);
  const auto h = static_cast<std::ptrdiff_t>(feature.dim(1));
  const auto w = static_cast<std::ptrdiff_t>(feature.dim(2));
  const std::size_t np = points.dim(0);
  const std::size_t plane = feature.dim(1) * feature.dim(2);

  std::vector<double> out(np * channels, 0.0);
  auto F = feature.data();
  auto P = points.data();
  for (std::size_t p = 0; p < np; ++p) {
    const double u = P[2 * p] - 0.5;
    const double v = P[2 * p + 1] - 0.5;
    const double fx0 = std::floor(u), fy0 = std::floor(v);
    const double fx = u - fx0, fy = v - fy0;
    const auto x0 = static_cast<std::ptrdiff_t>(fx0);
    const auto y0 = static_cast<std::ptrdiff_t>(fy0);
    const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy,
                           fx * fy};
    const std::ptrdiff_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const std::ptrdiff_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
    for (int corner = 0; corner < 4; ++corner) {
      if (xs[corner] < 0 || xs[corner] >= w || ys[corner] < 0 || ys[corner] >= h) continue;
      const auto cell = static_cast<std::size_t>(ys[corner] * w + xs[corner]);
      for (std::size_t c = 0; c < channels; ++c) {
        out[p * channels + c] += wts[corner] * F[c * plane + cell];
      }
    }
  }
  return make_result(
      {np, channels}, std::move(out), {feature, points},
      [channels, h, w, np, plane](const Node& out) {
        const auto& F = input_data(out, 0);
        const auto& P = input_data(out, 1);
        auto* gf = input_grad(out, 0);
        auto* gp = input_grad(out, 1);
        for (std::size_t p = 0; p < np; ++p) {
          const double u = P[2 * p] - 0.5;
          const double v = P[2 * p + 1] - 0.5;
          const double fx0 = std::floor(u), fy0 = std::floor(v);
          const double fx = u - fx0, fy = v - fy0;
          const auto x0 = static_cast<std::ptrdiff_t>(fx0);
          const auto y0 = static_cast<std::ptrdiff_t>(fy0);
          const double wts[4] = {(1 - fx) * (1 - fy), fx * (1 - fy),
                                 (1 - fx) * fy, fx * fy};
          // d(weight)/d(fx), d(weight)/d(fy) per corner
          const double dwx[4] = {-(1 - fy), (1 - fy), -fy, fy};
          const double dwy[4] = {-(1 - fx), -fx, (1 - fx), fx};
          const std::ptrdiff_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
          const std::ptrdiff_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
          const double* g = out.grad.data() + p * channels;
          double gx = 0.0, gy = 0.0;
          for (int corner = 0; corner < 4; ++corner) {
            if (xs[corner] < 0 || xs[corner] >= w || ys[corner] < 0 ||
                ys[corner] >= h) {
              continue;
            }
            const auto cell = static_cast<std::size_t>(ys[corner] * w + xs[corner]);
            double dot = 0.0;
            for (std::size_t c = 0; c < channels; ++c) {
              dot += g[c] * F[c * plane + cell];
              if (gf) (*gf)[c * plane + cell] += g[c] * wts[corner];
            }
            gx += dot * dwx[corner];
            gy += dot * dwy[corner];
          }
          if (gp) {
            (*gp)[2 * p] += gx;
            (*gp)[2 * p + 1] += gy;
          }
        }
      },
      "bilinear_sample");
}

}  // namespace owdetr::numerics
