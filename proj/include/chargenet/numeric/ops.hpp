#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "chargenet/numeric/tape.hpp"

namespace chargenet {

/// Per-position validity flags; 1 = real token, 0 = PAD.
using Mask = std::vector<std::uint8_t>;

namespace detail {

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline void require_matrix_view(const Var& a, const char* op) {
  if (a.value().rank() > 2) throw DimensionError(std::string(op) + ": rank > 2 not supported");
}

template <class Fn>
inline void accumulate_into(Tape& t, const Var& v, Fn&& fn) {
  if (!v.requires_grad()) return;
  fn(t.grad_buffer(v.id));
}

// y = f(x) pointwise with dy/dx expressed through x and y.
template <class F, class DF>
inline Var unary(Var x, F f, DF df, const char* name) {
  const Tensor& xv = x.value();
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < xv.size(); ++i) out.data[i] = f(xv.data[i]);
  return x.tape->op(
      std::move(out), {x},
      [x, df](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& xd = t.value(x.id).data;
        const auto& yd = t.value(self).data;
        auto& gx = t.grad_buffer(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * df(xd[i], yd[i]);
      },
      name);
}

}  // namespace detail

/// Matrix product. Rank-1 operands act as row vectors; a rank-1 left
/// operand yields a rank-1 result.
inline Var matmul(Var a, Var b) {
  detail::require_matrix_view(a, "matmul");
  detail::require_matrix_view(b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k)
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(av.shape) + " x " +
                         shape_str(bv.shape));
  Tensor out(av.rank() == 2 ? Shape{m, n} : Shape{n});
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av.data[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += aip * brow[j];
    }
  }
  return a.tape->op(
      std::move(out), {a, b},
      [a, b, m, k, n](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& ad = t.value(a.id).data;
        const auto& bd = t.value(b.id).data;
        if (t.requires_grad(a.id)) {
          auto& ga = t.grad_buffer(a.id);  // dA = dC * B^T
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double s = 0.0;
              for (std::size_t j = 0; j < n; ++j) s += g[i * n + j] * bd[p * n + j];
              ga[i * k + p] += s;
            }
        }
        if (t.requires_grad(b.id)) {
          auto& gb = t.grad_buffer(b.id);  // dB = A^T * dC
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double aip = ad[i * k + p];
              if (aip == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
            }
        }
      },
      "matmul");
}

/// X * W^T for a weight stored as (out x in). Shape follows matmul.
inline Var matmul_nt(Var x, Var w) {
  detail::require_matrix_view(x, "matmul_nt");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  if (wv.rank() != 2) throw DimensionError("matmul_nt: weight must be rank 2");
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.rows();
  if (wv.cols() != k)
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_str(xv.shape) + " x " +
                         shape_str(wv.shape) + "^T");
  Tensor out(xv.rank() == 2 ? Shape{m, n} : Shape{n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* xr = xv.data.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* wr = wv.data.data() + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += xr[p] * wr[p];
      out.data[i * n + j] = s;
    }
  }
  return x.tape->op(
      std::move(out), {x, w},
      [x, w, m, k, n](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& xd = t.value(x.id).data;
        const auto& wd = t.value(w.id).data;
        if (t.requires_grad(x.id)) {
          auto& gx = t.grad_buffer(x.id);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = g[i * n + j];
              if (gij == 0.0) continue;
              for (std::size_t p = 0; p < k; ++p) gx[i * k + p] += gij * wd[j * k + p];
            }
        }
        if (t.requires_grad(w.id)) {
          auto& gw = t.grad_buffer(w.id);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = g[i * n + j];
              if (gij == 0.0) continue;
              for (std::size_t p = 0; p < k; ++p) gw[j * k + p] += gij * xd[i * k + p];
            }
        }
      },
      "matmul_nt");
}

/// Same data under a new shape of equal element count.
inline Var reshape(Var x, Shape shape) {
  if (numel(shape) != x.value().size())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  Tensor out(std::move(shape), x.value().data);
  return x.tape->op(
      std::move(out), {x},
      [x](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_buffer(x.id);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      },
      "reshape");
}

inline Var transpose(Var a) {
  detail::require_matrix_view(a, "transpose");
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[j * r + i] = av.data[i * c + j];
  return a.tape->op(
      std::move(out), {a},
      [a, r, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& ga = t.grad_buffer(a.id);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
      },
      "transpose");
}

inline Var add(Var a, Var b) {
  detail::require_same_shape(a, b, "add");
  Tensor out(a.shape());
  const auto& ad = a.value().data;
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < ad.size(); ++i) out.data[i] = ad[i] + bd[i];
  return a.tape->op(
      std::move(out), {a, b},
      [a, b](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        for (const Var& v : {a, b})
          detail::accumulate_into(t, v, [&](std::vector<double>& gv) {
            for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
          });
      },
      "add");
}

inline Var sub(Var a, Var b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  const auto& ad = a.value().data;
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < ad.size(); ++i) out.data[i] = ad[i] - bd[i];
  return a.tape->op(
      std::move(out), {a, b},
      [a, b](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        detail::accumulate_into(t, a, [&](std::vector<double>& gv) {
          for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        });
        detail::accumulate_into(t, b, [&](std::vector<double>& gv) {
          for (std::size_t i = 0; i < g.size(); ++i) gv[i] -= g[i];
        });
      },
      "sub");
}

/// Element-wise (Hadamard) product.
inline Var mul(Var a, Var b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  const auto& ad = a.value().data;
  const auto& bd = b.value().data;
  for (std::size_t i = 0; i < ad.size(); ++i) out.data[i] = ad[i] * bd[i];
  return a.tape->op(
      std::move(out), {a, b},
      [a, b](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& ad = t.value(a.id).data;
        const auto& bd = t.value(b.id).data;
        detail::accumulate_into(t, a, [&](std::vector<double>& gv) {
          for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i] * bd[i];
        });
        detail::accumulate_into(t, b, [&](std::vector<double>& gv) {
          for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i] * ad[i];
        });
      },
      "mul");
}

inline Var scale(Var a, double c) {
  return detail::unary(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; }, "scale");
}

/// |x| with subgradient 0 at x == 0.
inline Var abs(Var a) {
  return detail::unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }, "abs");
}

inline Var tanh(Var a) {
  return detail::unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; },
      "tanh");
}

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

inline Var exp(Var a) {
  return detail::unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; }, "exp");
}

/// Adds a bias vector of extent cols() to every row of `x`.
inline Var add_bias(Var x, Var b) {
  const std::size_t r = x.rows(), c = x.cols();
  if (b.value().size() != c)
    throw DimensionError("add_bias: bias " + shape_str(b.shape()) + " vs input " +
                         shape_str(x.shape()));
  Tensor out = x.value();
  out.requires_grad = false;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.data[i * c + j] += b.value().data[j];
  return x.tape->op(
      std::move(out), {x, b},
      [x, b, r, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        detail::accumulate_into(t, x, [&](std::vector<double>& gv) {
          for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        });
        detail::accumulate_into(t, b, [&](std::vector<double>& gv) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gv[j] += g[i * c + j];
        });
      },
      "add_bias");
}

/// Concatenation. Rank-1 inputs join along axis 0; rank-2 inputs stack rows
/// (axis 0) or join columns (axis 1). Empty inputs are skipped.
inline Var concat(const std::vector<Var>& parts, std::size_t axis = 0) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  std::vector<Var> live;
  for (const Var& p : parts)
    if (p.value().size() != 0) live.push_back(p);
  if (live.empty()) return parts.front();
  if (live.size() == 1) return live.front();
  const std::size_t rank = live.front().value().rank();
  for (const Var& p : live)
    if (p.value().rank() != rank) throw DimensionError("concat: mixed ranks");
  Tape& tape = *live.front().tape;

  if (rank <= 1) {
    if (axis != 0) throw DimensionError("concat: rank-1 inputs only support axis 0");
    std::vector<double> data;
    std::vector<std::size_t> offsets;
    for (const Var& p : live) {
      offsets.push_back(data.size());
      const auto& d = p.value().data;
      data.insert(data.end(), d.begin(), d.end());
    }
    return tape.op(
        Tensor::vector(std::move(data)), live,
        [live, offsets](Tape& t, std::size_t self) {
          const auto& g = t.grad(self);
          for (std::size_t q = 0; q < live.size(); ++q)
            detail::accumulate_into(t, live[q], [&](std::vector<double>& gv) {
              for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g[offsets[q] + i];
            });
        },
        "concat");
  }
  if (rank != 2 || axis > 1) throw DimensionError("concat: unsupported rank/axis");

  if (axis == 0) {
    const std::size_t c = live.front().cols();
    std::vector<double> data;
    std::vector<std::size_t> offsets;
    std::size_t rows = 0;
    for (const Var& p : live) {
      if (p.cols() != c) throw DimensionError("concat axis 0: column extents differ");
      offsets.push_back(data.size());
      data.insert(data.end(), p.value().data.begin(), p.value().data.end());
      rows += p.rows();
    }
    return tape.op(
        Tensor(Shape{rows, c}, std::move(data)), live,
        [live, offsets](Tape& t, std::size_t self) {
          const auto& g = t.grad(self);
          for (std::size_t q = 0; q < live.size(); ++q)
            detail::accumulate_into(t, live[q], [&](std::vector<double>& gv) {
              for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g[offsets[q] + i];
            });
        },
        "concat");
  }

  const std::size_t r = live.front().rows();
  std::vector<std::size_t> col_off;
  std::size_t total = 0;
  for (const Var& p : live) {
    if (p.rows() != r) throw DimensionError("concat axis 1: row extents differ");
    col_off.push_back(total);
    total += p.cols();
  }
  Tensor out(Shape{r, total});
  for (std::size_t q = 0; q < live.size(); ++q) {
    const Tensor& v = live[q].value();
    for (std::size_t i = 0; i < r; ++i)
      std::copy(v.row(i).begin(), v.row(i).end(), out.data.begin() + i * total + col_off[q]);
  }
  return tape.op(
      std::move(out), live,
      [live, col_off, r, total](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        for (std::size_t q = 0; q < live.size(); ++q) {
          const std::size_t c = t.value(live[q].id).cols();
          detail::accumulate_into(t, live[q], [&](std::vector<double>& gv) {
            for (std::size_t i = 0; i < r; ++i)
              for (std::size_t j = 0; j < c; ++j) gv[i * c + j] += g[i * total + col_off[q] + j];
          });
        }
      },
      "concat");
}

/// Stacks equal-length rank-1 vectors into a (count x extent) matrix.
inline Var stack_rows(const std::vector<Var>& vecs) {
  if (vecs.empty()) throw DimensionError("stack_rows: no inputs");
  const std::size_t c = vecs.front().value().size();
  std::vector<double> data;
  data.reserve(c * vecs.size());
  for (const Var& v : vecs) {
    if (v.value().rank() > 1 || v.value().size() != c)
      throw DimensionError("stack_rows: inputs must be equal-length vectors");
    data.insert(data.end(), v.value().data.begin(), v.value().data.end());
  }
  return vecs.front().tape->op(
      Tensor(Shape{vecs.size(), c}, std::move(data)), vecs,
      [vecs, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        for (std::size_t q = 0; q < vecs.size(); ++q)
          detail::accumulate_into(t, vecs[q], [&](std::vector<double>& gv) {
            for (std::size_t j = 0; j < c; ++j) gv[j] += g[q * c + j];
          });
      },
      "stack_rows");
}

/// Row `i` of a matrix as a rank-1 vector.
inline Var row(Var x, std::size_t i) {
  const std::size_t r = x.rows(), c = x.cols();
  if (i >= r) throw DimensionError("row: index out of range");
  std::vector<double> d(x.value().row(i).begin(), x.value().row(i).end());
  return x.tape->op(
      Tensor::vector(std::move(d)), {x},
      [x, i, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_buffer(x.id);
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j];
      },
      "row");
}

/// Selected rows, in the given order, as a matrix.
inline Var select_rows(Var x, const std::vector<std::size_t>& idx) {
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(Shape{idx.size(), c});
  for (std::size_t q = 0; q < idx.size(); ++q) {
    if (idx[q] >= r) throw DimensionError("select_rows: index out of range");
    std::copy(x.value().row(idx[q]).begin(), x.value().row(idx[q]).end(),
              out.data.begin() + q * c);
  }
  return x.tape->op(
      std::move(out), {x},
      [x, idx, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_buffer(x.id);
        for (std::size_t q = 0; q < idx.size(); ++q)
          for (std::size_t j = 0; j < c; ++j) gx[idx[q] * c + j] += g[q * c + j];
      },
      "select_rows");
}

/// Embedding lookup: rows of `table` for each id. Row 0 (PAD) never
/// receives gradient.
inline Var gather_rows(Var table, const std::vector<std::size_t>& ids) {
  const std::size_t r = table.rows(), c = table.cols();
  Tensor out(Shape{ids.size(), c});
  for (std::size_t q = 0; q < ids.size(); ++q) {
    if (ids[q] >= r) throw DimensionError("gather_rows: id " + std::to_string(ids[q]) + " >= " +
                                          std::to_string(r));
    std::copy(table.value().row(ids[q]).begin(), table.value().row(ids[q]).end(),
              out.data.begin() + q * c);
  }
  return table.tape->op(
      std::move(out), {table},
      [table, ids, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gt = t.grad_buffer(table.id);
        for (std::size_t q = 0; q < ids.size(); ++q) {
          if (ids[q] == 0) continue;
          for (std::size_t j = 0; j < c; ++j) gt[ids[q] * c + j] += g[q * c + j];
        }
      },
      "gather_rows");
}

/// Same-padded sliding windows of an (n x d) sequence: row j of the result
/// is [x_{j-h}; ...; x_{j+h}] with h = (window-1)/2 and zero rows outside.
inline Var unfold_windows(Var x, std::size_t window) {
  if (window == 0 || window % 2 == 0) throw ContractError("unfold_windows: window must be odd");
  const std::size_t n = x.rows(), d = x.cols();
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const std::size_t w = window * d;
  Tensor out(Shape{n, w});
  const auto& xd = x.value().data;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t o = 0; o < window; ++o) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(o) - half;
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
      std::copy_n(xd.begin() + src * static_cast<std::ptrdiff_t>(d), d,
                  out.data.begin() + j * w + o * d);
    }
  return x.tape->op(
      std::move(out), {x},
      [x, n, d, w, window, half](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_buffer(x.id);
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t o = 0; o < window; ++o) {
            const std::ptrdiff_t src =
                static_cast<std::ptrdiff_t>(j) + static_cast<std::ptrdiff_t>(o) - half;
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(n)) continue;
            for (std::size_t k = 0; k < d; ++k) gx[src * d + k] += g[j * w + o * d + k];
          }
      },
      "unfold_windows");
}

/// Sum of all elements as a scalar.
inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data) s += v;
  return x.tape->op(
      Tensor::scalar(s), {x},
      [x](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0];
        auto& gx = t.grad_buffer(x.id);
        for (double& v : gx) v += g;
      },
      "sum");
}

/// Column sums of a matrix over rows whose mask entry is nonzero (all rows
/// when `mask` is empty). Result is rank-1 of extent cols().
inline Var sum_rows(Var x, const Mask& mask = {}) {
  const std::size_t r = x.rows(), c = x.cols();
  if (!mask.empty() && mask.size() != r) throw DimensionError("sum_rows: mask length mismatch");
  std::vector<double> s(c, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    for (std::size_t j = 0; j < c; ++j) s[j] += x.value().data[i * c + j];
  }
  return x.tape->op(
      Tensor::vector(std::move(s)), {x},
      [x, mask, r, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        auto& gx = t.grad_buffer(x.id);
        for (std::size_t i = 0; i < r; ++i) {
          if (!mask.empty() && !mask[i]) continue;
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j];
        }
      },
      "sum_rows");
}

namespace detail {

inline void softmax_span(const double* in, double* out, std::size_t n, const Mask* mask,
                         std::size_t mask_offset) {
  double mx = -HUGE_VAL;
  bool any = false;
  for (std::size_t j = 0; j < n; ++j) {
    if (mask && !(*mask)[mask_offset + j]) continue;
    mx = std::max(mx, in[j]);
    any = true;
  }
  if (!any) throw ContractError("softmax: every position is masked");
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (mask && !(*mask)[mask_offset + j]) {
      out[j] = 0.0;
      continue;
    }
    out[j] = std::exp(in[j] - mx);
    z += out[j];
  }
  for (std::size_t j = 0; j < n; ++j) out[j] /= z;
}

}  // namespace detail

/// Numerically stable softmax. A rank-1 input is normalized as a whole; a
/// rank-2 input is normalized row by row. Positions whose mask entry is 0
/// get weight exactly 0 (the mask indexes columns).
inline Var softmax(Var x, const Mask& mask = {}) {
  detail::require_matrix_view(x, "softmax");
  const Tensor& xv = x.value();
  if (xv.size() == 0) throw ContractError("softmax: empty input");
  const std::size_t r = xv.rows(), c = xv.cols();
  if (!mask.empty() && mask.size() != c) throw DimensionError("softmax: mask length mismatch");
  Tensor out(xv.shape);
  for (std::size_t i = 0; i < r; ++i)
    detail::softmax_span(xv.data.data() + i * c, out.data.data() + i * c, c,
                         mask.empty() ? nullptr : &mask, 0);
  return x.tape->op(
      std::move(out), {x},
      [x, r, c](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& y = t.value(self).data;
        auto& gx = t.grad_buffer(x.id);
        for (std::size_t i = 0; i < r; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
        }
      },
      "softmax");
}

/// Weighted sum of equal-shape tensors, sum_i w_i * xs_i, with `w` a
/// rank-1 vector of extent xs.size(). When `keep` is given, terms with a
/// zero entry are left out.
inline Var weighted_sum(Var w, const std::vector<Var>& xs, const std::vector<std::uint8_t>& keep = {}) {
  if (xs.empty()) throw DimensionError("weighted_sum: no inputs");
  if (w.value().size() != xs.size())
    throw DimensionError("weighted_sum: " + std::to_string(w.value().size()) + " weights for " +
                         std::to_string(xs.size()) + " terms");
  if (!keep.empty() && keep.size() != xs.size())
    throw DimensionError("weighted_sum: keep mask length mismatch");
  const Shape& shape = xs.front().shape();
  for (const Var& x : xs)
    if (x.shape() != shape) throw DimensionError("weighted_sum: term shapes differ");
  Tensor out(shape);
  const auto& wd = w.value().data;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!keep.empty() && !keep[i]) continue;
    const auto& xd = xs[i].value().data;
    for (std::size_t k = 0; k < xd.size(); ++k) out.data[k] += wd[i] * xd[k];
  }
  std::vector<Var> inputs = xs;
  inputs.push_back(w);
  return w.tape->op(
      std::move(out), inputs,
      [w, xs, keep](Tape& t, std::size_t self) {
        const auto& g = t.grad(self);
        const auto& wd = t.value(w.id).data;
        const bool wg = t.requires_grad(w.id);
        for (std::size_t i = 0; i < xs.size(); ++i) {
          if (!keep.empty() && !keep[i]) continue;
          const auto& xd = t.value(xs[i].id).data;
          if (wg) {
            double s = 0.0;
            for (std::size_t k = 0; k < g.size(); ++k) s += g[k] * xd[k];
            t.grad_buffer(w.id)[i] += s;
          }
          detail::accumulate_into(t, xs[i], [&](std::vector<double>& gx) {
            for (std::size_t k = 0; k < g.size(); ++k) gx[k] += wd[i] * g[k];
          });
        }
      },
      "weighted_sum");
}

}  // namespace chargenet
