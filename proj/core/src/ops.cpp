#include "pivotcap/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pivotcap {

namespace {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

NodePtr make_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = false;
    for (const auto* t : inputs) any = any || t->requires_grad();
    if (any) {
      node->requires_grad = true;
      for (const auto* t : inputs) node->parents.push_back(t->node_ptr());
    }
  }
  return node;
}

NodePtr make_result(Shape shape, std::vector<double> value, std::span<const Tensor> inputs) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (grad_enabled()) {
    bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      for (const auto& t : inputs) node->parents.push_back(t.node_ptr());
    }
  }
  return node;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw Error(std::string(op) + ": undefined operand");
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  require_defined(t, op);
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_str(t.shape()));
  }
}

// True when `b` equals `a` or is a trailing suffix of it.
bool suffix_of(const Shape& a, const Shape& b) {
  if (b.size() > a.size()) return false;
  return std::equal(b.rbegin(), b.rend(), a.rbegin());
}

void check_binary(const Tensor& a, const Tensor& b, const char* op) {
  require_defined(a, op);
  require_defined(b, op);
  if (!suffix_of(a.shape(), b.shape())) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " do not conform");
  }
}

// Extent of the axis together with the products of the dims before/after it.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  require_defined(a, op);
  const auto in = a.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  auto node = make_result(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [deriv](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * deriv(pa.value[i], self.value[i]);
    };
  }
  return Tensor::wrap(std::move(node));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "add");
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t period = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[period ? i % period : 0];
  auto node = make_result(a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      if (pa.requires_grad) {
        auto& ga = pa.ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
      }
      if (pb.requires_grad) {
        auto& gb = pb.ensure_grad();
        const std::size_t period = gb.size();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % period] += self.grad[i];
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  check_binary(a, b, "mul");
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t period = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i % period];
  auto node = make_result(a.shape(), std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const std::size_t period = pb.value.size();
      if (pa.requires_grad) {
        auto& ga = pa.ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * pb.value[i % period];
      }
      if (pb.requires_grad) {
        auto& gb = pb.ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % period] += self.grad[i] * pa.value[i];
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, "scale", [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
  if (b.dim(0) != k) {
    throw ShapeError("matmul: inner dims differ, shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = out.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * m;
      for (std::size_t j = 0; j < m; ++j) row[j] += aip * brow[j];
    }
  }
  auto node = make_result({n, m}, std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward = [n, k, m](Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const double* G = self.grad.data();
      if (pa.requires_grad) {
        // dA = G B^T
        auto& ga = pa.ensure_grad();
        const double* B = pb.value.data();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            const double* brow = B + p * m;
            const double* grow = G + i * m;
            for (std::size_t j = 0; j < m; ++j) acc += grow[j] * brow[j];
            ga[i * k + p] += acc;
          }
        }
      }
      if (pb.requires_grad) {
        // dB = A^T G
        auto& gb = pb.ensure_grad();
        const double* A = pa.value.data();
        for (std::size_t i = 0; i < n; ++i) {
          const double* grow = G + i * m;
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            if (aip == 0.0) continue;
            double* gbrow = gb.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) gbrow[j] += aip * grow[j];
          }
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(0);
  if (b.dim(1) != k) {
    throw ShapeError("matmul_nt: inner dims differ, shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += A[i * k + p] * B[j * k + p];
      out[i * m + j] = acc;
    }
  }
  auto node = make_result({n, m}, std::move(out), {&a, &b});
  if (node->requires_grad) {
    node->backward = [n, k, m](Node& self) {
      auto& pa = *self.parents[0];
      auto& pb = *self.parents[1];
      const double* G = self.grad.data();
      if (pa.requires_grad) {
        // dA = G B
        auto& ga = pa.ensure_grad();
        const double* B = pb.value.data();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            const double g = G[i * m + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) ga[i * k + p] += g * B[j * k + p];
          }
        }
      }
      if (pb.requires_grad) {
        // dB = G^T A
        auto& gb = pb.ensure_grad();
        const double* A = pa.value.data();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < m; ++j) {
            const double g = G[i * m + j];
            if (g == 0.0) continue;
            for (std::size_t p = 0; p < k; ++p) gb[j * k + p] += g * A[i * k + p];
          }
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t n = a.dim(0), m = a.dim(1);
  const auto in = a.data();
  std::vector<double> out(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) out[j * n + i] = in[i * m + j];
  auto node = make_result({m, n}, std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [n, m](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) ga[i * m + j] += self.grad[j * n + i];
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  auto node = make_result(std::move(shape), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i];
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  for (const auto& p : parts) require_defined(p, "concat");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) throw ShapeError("concat: shapes " + shape_str(first) + " and " + shape_str(s) + " do not conform");
    out_shape[axis] += s[axis];
  }
  const AxisSplit total = split_axis(out_shape, axis);
  std::vector<double> out(shape_numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t ext = p.shape()[axis];
    const auto v = p.data();
    for (std::size_t o = 0; o < total.outer; ++o) {
      std::copy_n(v.data() + o * ext * total.inner, ext * total.inner,
                  out.data() + (o * total.extent + offset) * total.inner);
    }
    offsets.push_back(offset);
    offset += ext;
  }
  auto node = make_result(out_shape, std::move(out), parts);
  if (node->requires_grad) {
    node->backward = [total, offsets, axis](Node& self) {
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        auto& p = *self.parents[k];
        if (!p.requires_grad) continue;
        auto& g = p.ensure_grad();
        const std::size_t ext = p.shape[axis];
        for (std::size_t o = 0; o < total.outer; ++o) {
          const double* src = self.grad.data() + (o * total.extent + offsets[k]) * total.inner;
          double* dst = g.data() + o * ext * total.inner;
          for (std::size_t i = 0; i < ext * total.inner; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  require_defined(a, "slice");
  const Shape& in_shape = a.shape();
  if (axis >= in_shape.size()) throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " + shape_str(in_shape));
  if (start + length > in_shape[axis]) {
    throw IndexError("slice: range [" + std::to_string(start) + "," + std::to_string(start + length) +
                     ") exceeds extent " + std::to_string(in_shape[axis]) + " of " + shape_str(in_shape));
  }
  const AxisSplit s = split_axis(in_shape, axis);
  Shape out_shape = in_shape;
  out_shape[axis] = length;
  std::vector<double> out(shape_numel(out_shape));
  const auto v = a.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(v.data() + (o * s.extent + start) * s.inner, length * s.inner, out.data() + o * length * s.inner);
  }
  auto node = make_result(std::move(out_shape), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [s, start, length](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& g = pa.ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        const double* src = self.grad.data() + o * length * s.inner;
        double* dst = g.data() + (o * s.extent + start) * s.inner;
        for (std::size_t i = 0; i < length * s.inner; ++i) dst[i] += src[i];
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  require_defined(a, "softmax");
  if (axis >= a.rank()) throw ShapeError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
  const AxisSplit s = split_axis(a.shape(), axis);
  const auto v = a.data();
  std::vector<double> out(v.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t e = 0; e < s.extent; ++e) mx = std::max(mx, v[base + e * s.inner]);
      double total = 0.0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const double x = std::exp(v[base + e * s.inner] - mx);
        out[base + e * s.inner] = x;
        total += x;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  }
  auto node = make_result(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [s](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& g = pa.ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = o * s.extent * s.inner + in;
          double dot = 0.0;
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t idx = base + e * s.inner;
            dot += self.grad[idx] * self.value[idx];
          }
          for (std::size_t e = 0; e < s.extent; ++e) {
            const std::size_t idx = base + e * s.inner;
            g[idx] += self.value[idx] * (self.grad[idx] - dot);
          }
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor causal_softmax(const Tensor& a, std::size_t offset) {
  require_rank(a, 2, "causal_softmax");
  const std::size_t n = a.dim(0), m = a.dim(1);
  const auto v = a.data();
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t visible = std::min(m, i + offset + 1);
    const double* row = v.data() + i * m;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < visible; ++j) mx = std::max(mx, row[j]);
    double total = 0.0;
    for (std::size_t j = 0; j < visible; ++j) {
      out[i * m + j] = std::exp(row[j] - mx);
      total += out[i * m + j];
    }
    for (std::size_t j = 0; j < visible; ++j) out[i * m + j] /= total;
  }
  auto node = make_result(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [n, m, offset](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t visible = std::min(m, i + offset + 1);
        double dot = 0.0;
        for (std::size_t j = 0; j < visible; ++j) dot += self.grad[i * m + j] * self.value[i * m + j];
        for (std::size_t j = 0; j < visible; ++j) {
          g[i * m + j] += self.value[i * m + j] * (self.grad[i * m + j] - dot);
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_defined(x, "layer_norm");
  require_rank(gamma, 1, "layer_norm");
  require_rank(beta, 1, "layer_norm");
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.dim(0) != d || beta.dim(0) != d) {
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) + " with gamma " + shape_str(gamma.shape()) +
                     " and beta " + shape_str(beta.shape()));
  }
  const std::size_t rows = x.numel() / d;
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  std::vector<double> out(xv.size());
  std::vector<double> xhat(xv.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (row[j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gv[j] + bv[j];
    }
  }
  auto node = make_result(x.shape(), std::move(out), {&x, &gamma, &beta});
  if (node->requires_grad) {
    node->backward = [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
      auto& px = *self.parents[0];
      auto& pg = *self.parents[1];
      auto& pb = *self.parents[2];
      const double* G = self.grad.data();
      if (pg.requires_grad) {
        auto& gg = pg.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gg[j] += G[r * d + j] * xhat[r * d + j];
      }
      if (pb.requires_grad) {
        auto& gb = pb.ensure_grad();
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < d; ++j) gb[j] += G[r * d + j];
      }
      if (px.requires_grad) {
        auto& gx = px.ensure_grad();
        const double* gamma = pg.value.data();
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = G[r * d + j] * gamma[j];
            sum_g += gh;
            sum_gx += gh * xhat[r * d + j];
          }
          for (std::size_t j = 0; j < d; ++j) {
            const double gh = G[r * d + j] * gamma[j];
            gx[r * d + j] += inv_std[r] * (gh - inv_d * sum_g - xhat[r * d + j] * inv_d * sum_gx);
          }
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  require_rank(table, 2, "embedding");
  const std::size_t rows = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  const auto tv = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= rows) {
      throw IndexError("embedding: index " + std::to_string(ids[i]) + " out of range for table with " +
                       std::to_string(rows) + " rows");
    }
    std::copy_n(tv.data() + ids[i] * d, d, out.data() + i * d);
  }
  auto node = make_result({ids.size(), d}, std::move(out), {&table});
  if (node->requires_grad) {
    node->backward = [ids = std::vector<std::size_t>(ids.begin(), ids.end()), d](Node& self) {
      auto& pt = *self.parents[0];
      if (!pt.requires_grad) return;
      auto& g = pt.ensure_grad();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) g[ids[i] * d + j] += self.grad[i * d + j];
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double x : a.data()) total += x;
  auto node = make_result({}, {total}, {&a});
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& g = pa.ensure_grad();
      for (auto& x : g) x += self.grad[0];
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  if (a.numel() == 0) throw ShapeError("mean: empty tensor " + shape_str(a.shape()));
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  require_defined(a, "mean_axis");
  if (axis >= a.rank()) throw ShapeError("mean_axis: axis " + std::to_string(axis) + " out of range for " + shape_str(a.shape()));
  const AxisSplit s = split_axis(a.shape(), axis);
  if (s.extent == 0) throw ShapeError("mean_axis: empty axis in " + shape_str(a.shape()));
  Shape out_shape = a.shape();
  out_shape[axis] = 1;
  const auto v = a.data();
  std::vector<double> out(s.outer * s.inner, 0.0);
  const double inv = 1.0 / static_cast<double>(s.extent);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t e = 0; e < s.extent; ++e)
      for (std::size_t in = 0; in < s.inner; ++in) out[o * s.inner + in] += v[(o * s.extent + e) * s.inner + in];
  for (auto& x : out) x *= inv;
  auto node = make_result(std::move(out_shape), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [s, inv](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& g = pa.ensure_grad();
      for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
          for (std::size_t in = 0; in < s.inner; ++in)
            g[(o * s.extent + e) * s.inner + in] += self.grad[o * s.inner + in] * inv;
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor gather(const Tensor& a, std::span<const std::size_t> flat_indices) {
  require_defined(a, "gather");
  const auto v = a.data();
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    if (flat_indices[i] >= v.size()) {
      throw IndexError("gather: index " + std::to_string(flat_indices[i]) + " out of range for " +
                       shape_str(a.shape()));
    }
    out[i] = v[flat_indices[i]];
  }
  auto node = make_result({flat_indices.size()}, std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [idx = std::vector<std::size_t>(flat_indices.begin(), flat_indices.end())](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor logsumexp(const Tensor& a) {
  require_defined(a, "logsumexp");
  if (a.numel() == 0) throw ShapeError("logsumexp: empty tensor");
  const auto v = a.data();
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double x : v) total += std::exp(x - mx);
  const double lse = mx + std::log(total);
  auto node = make_result({}, {lse}, {&a});
  if (node->requires_grad) {
    node->backward = [](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& g = pa.ensure_grad();
      const double lse = self.value[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * std::exp(pa.value[i] - lse);
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor pair_softmax_nll(const Tensor& s, std::span<const std::pair<std::size_t, std::size_t>> pairs, double tau,
                        bool include_positive) {
  require_rank(s, 2, "pair_softmax_nll");
  const std::size_t m = s.dim(1);
  const auto v = s.data();
  struct Term {
    std::size_t row, col;
    double lse;
  };
  std::vector<Term> terms;
  double total = 0.0;
  for (const auto& [i, j] : pairs) {
    if (i >= s.dim(0) || j >= m) {
      throw IndexError("pair_softmax_nll: pair (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                       shape_str(s.shape()));
    }
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < m; ++k)
      if (include_positive || k != j) mx = std::max(mx, v[i * m + k] / tau);
    if (m == 1 && !include_positive) continue;
    double z = 0.0;
    for (std::size_t k = 0; k < m; ++k)
      if (include_positive || k != j) z += std::exp(v[i * m + k] / tau - mx);
    const double lse = mx + std::log(z);
    total += lse - v[i * m + j] / tau;
    terms.push_back({i, j, lse});
  }
  auto node = make_result({}, {total}, {&s});
  if (node->requires_grad) {
    node->backward = [m, tau, include_positive, terms = std::move(terms)](Node& self) {
      auto& ps = *self.parents[0];
      if (!ps.requires_grad) return;
      auto& g = ps.ensure_grad();
      const double up = self.grad[0] / tau;
      for (const auto& t : terms) {
        for (std::size_t k = 0; k < m; ++k)
          if (include_positive || k != t.col) g[t.row * m + k] += up * std::exp(ps.value[t.row * m + k] / tau - t.lse);
        g[t.row * m + t.col] -= up;
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor l2_normalize_rows(const Tensor& a) {
  require_rank(a, 2, "l2_normalize_rows");
  const std::size_t n = a.dim(0), d = a.dim(1);
  const auto v = a.data();
  std::vector<double> norms(n);
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < d; ++j) sq += v[i * d + j] * v[i * d + j];
    if (sq == 0.0) throw ShapeError("l2_normalize_rows: row " + std::to_string(i) + " has zero norm");
    norms[i] = std::sqrt(sq);
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = v[i * d + j] / norms[i];
  }
  auto node = make_result(a.shape(), std::move(out), {&a});
  if (node->requires_grad) {
    node->backward = [n, d, norms = std::move(norms)](Node& self) {
      auto& pa = *self.parents[0];
      if (!pa.requires_grad) return;
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += self.grad[i * d + j] * self.value[i * d + j];
        for (std::size_t j = 0; j < d; ++j) {
          g[i * d + j] += (self.grad[i * d + j] - dot * self.value[i * d + j]) / norms[i];
        }
      }
    };
  }
  return Tensor::wrap(std::move(node));
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets, std::size_t ignore_id) {
  require_rank(logits, 2, "cross_entropy");
  const std::size_t T = logits.dim(0), V = logits.dim(1);
  if (targets.size() != T) {
    throw ShapeError("cross_entropy: logits " + shape_str(logits.shape()) + " with " +
                     std::to_string(targets.size()) + " targets");
  }
  const auto v = logits.data();
  std::vector<double> probs(v.size(), 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t t = 0; t < T; ++t) {
    if (targets[t] == ignore_id) continue;
    if (targets[t] >= V) {
      throw IndexError("cross_entropy: target id " + std::to_string(targets[t]) + " out of range for " +
                       std::to_string(V) + " classes");
    }
    const double* row = v.data() + t * V;
    const double mx = *std::max_element(row, row + V);
    double z = 0.0;
    for (std::size_t j = 0; j < V; ++j) {
      probs[t * V + j] = std::exp(row[j] - mx);
      z += probs[t * V + j];
    }
    for (std::size_t j = 0; j < V; ++j) probs[t * V + j] /= z;
    total += -(row[targets[t]] - mx - std::log(z));
    ++counted;
  }
  const double loss = counted ? total / static_cast<double>(counted) : 0.0;
  auto node = make_result({}, {loss}, {&logits});
  if (node->requires_grad && counted) {
    node->backward = [T, V, counted, probs = std::move(probs),
                      tg = std::vector<std::size_t>(targets.begin(), targets.end()), ignore_id](Node& self) {
      auto& pl = *self.parents[0];
      if (!pl.requires_grad) return;
      auto& g = pl.ensure_grad();
      const double w = self.grad[0] / static_cast<double>(counted);
      for (std::size_t t = 0; t < T; ++t) {
        if (tg[t] == ignore_id) continue;
        for (std::size_t j = 0; j < V; ++j) g[t * V + j] += w * probs[t * V + j];
        g[t * V + tg[t]] -= w;
      }
    };
  } else if (node->requires_grad) {
    node->backward = [](Node&) {};
  }
  return Tensor::wrap(std::move(node));
}

}  // namespace pivotcap
