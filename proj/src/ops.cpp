#include "skillnet/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace skillnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

using NodePtr = std::shared_ptr<detail::Node>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                     shape_to_string(b.shape()));
  }
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": expected rank >= 1, got a scalar");
  return x.shape().back();
}

std::vector<double> to_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_op_result(a.shape(), std::move(out), {&a, &b}, [na, nb](const std::vector<double>& g) {
    na->accumulate(g);
    nb->accumulate(g);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_op_result(a.shape(), std::move(out), {&a, &b}, [na, nb](const std::vector<double>& g) {
    na->accumulate(g);
    if (!nb->requires_grad) return;
    auto gb = nb->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  NodePtr na = a.node(), nb = b.node();
  return make_op_result(a.shape(), std::move(out), {&a, &b}, [na, nb](const std::vector<double>& g) {
    if (na->requires_grad) {
      auto ga = na->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * nb->data[i];
    }
    if (nb->requires_grad) {
      auto gb = nb->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * na->data[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  NodePtr na = a.node();
  return make_op_result(a.shape(), std::move(out), {&a}, [na, factor](const std::vector<double>& g) {
    if (!na->requires_grad) return;
    auto ga = na->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = last_dim(x, "add_bias");
  if (bias.rank() != 1 || bias.dim(0) != n) {
    throw ShapeError("add_bias: bias shape " + shape_to_string(bias.shape()) + " does not match last dim of " +
                     shape_to_string(x.shape()));
  }
  std::vector<double> out = to_vector(x.data());
  const std::size_t rows = x.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bias.data()[c];
  }
  NodePtr nx = x.node(), nb = bias.node();
  return make_op_result(x.shape(), std::move(out), {&x, &bias}, [nx, nb, rows, n](const std::vector<double>& g) {
    nx->accumulate(g);
    if (!nb->requires_grad) return;
    auto gb = nb->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.dim(0));
  const auto k = static_cast<Eigen::Index>(a.dim(1));
  const auto n = static_cast<Eigen::Index>(b.dim(1));
  std::vector<double> out(static_cast<std::size_t>(m * n));
  MutMap(out.data(), m, n).noalias() = ConstMap(a.data().data(), m, k) * ConstMap(b.data().data(), k, n);

  NodePtr na = a.node(), nb = b.node();
  return make_op_result({a.dim(0), b.dim(1)}, std::move(out), {&a, &b}, [na, nb, m, k, n](const std::vector<double>& g) {
    ConstMap dc(g.data(), m, n);
    if (na->requires_grad) {
      MutMap(na->grad_buffer().data(), m, k).noalias() += dc * ConstMap(nb->data.data(), k, n).transpose();
    }
    if (nb->requires_grad) {
      MutMap(nb->grad_buffer().data(), k, n).noalias() += ConstMap(na->data.data(), m, k).transpose() * dc;
    }
  });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_to_string(a.shape()));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(a.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[c * rows + r] = a.data()[r * cols + c];
  }
  NodePtr na = a.node();
  return make_op_result({cols, rows}, std::move(out), {&a}, [na, rows, cols](const std::vector<double>& g) {
    if (!na->requires_grad) return;
    auto ga = na->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[c * rows + r];
    }
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_to_string(a.shape()) + " as " + shape_to_string(shape));
  }
  NodePtr na = a.node();
  return make_op_result(std::move(shape), to_vector(a.data()), {&a},
                        [na](const std::vector<double>& g) { na->accumulate(g); });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.data()[i]);
  NodePtr nx = x.node();
  return make_op_result(x.shape(), std::move(out), {&x}, [nx](const std::vector<double>& g) {
    if (!nx->requires_grad) return;
    auto gx = nx->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (nx->data[i] > 0.0) gx[i] += g[i];
    }
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x.data()[i];
    out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
  }
  NodePtr nx = x.node();
  return make_op_result(x.shape(), std::move(out), {&x}, [nx, inv_sqrt_2pi](const std::vector<double>& g) {
    if (!nx->requires_grad) return;
    auto gx = nx->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = nx->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_to_string(x.shape()));
  }
  const auto& shape = x.shape();
  const std::size_t len = shape[axis];
  std::size_t inner = 1;
  for (std::size_t d = axis + 1; d < shape.size(); ++d) inner *= shape[d];
  const std::size_t outer = x.numel() / (len * inner);

  std::vector<double> out(x.numel());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double peak = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < len; ++j) peak = std::max(peak, x.data()[base + j * inner]);
      double total = 0.0;
      for (std::size_t j = 0; j < len; ++j) {
        const double e = std::exp(x.data()[base + j * inner] - peak);
        out[base + j * inner] = e;
        total += e;
      }
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] /= total;
    }
  }

  NodePtr nx = x.node();
  auto probs = std::make_shared<std::vector<double>>(out);
  return make_op_result(shape, std::move(out), {&x}, [nx, probs, outer, inner, len](const std::vector<double>& g) {
    if (!nx->requires_grad) return;
    auto gx = nx->grad_buffer();
    const auto& p = *probs;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t j = 0; j < len; ++j) dot += g[base + j * inner] * p[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += p[idx] * (g[idx] - dot);
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = last_dim(x, "layer_norm");
  if (gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    throw ShapeError("layer_norm: gain/bias " + shape_to_string(gain.shape()) + "/" + shape_to_string(bias.shape()) +
                     " do not match last dim of " + shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / n;
  auto normalized = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += x.data()[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = x.data()[r * n + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double denom = std::sqrt(var + eps);
    const double is = denom > 0.0 ? 1.0 / denom : 0.0;
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const double xhat = (x.data()[r * n + c] - mu) * is;
      (*normalized)[r * n + c] = xhat;
      out[r * n + c] = xhat * gain.data()[c] + bias.data()[c];
    }
  }

  NodePtr nx = x.node(), ng = gain.node(), nb = bias.node();
  return make_op_result(x.shape(), std::move(out), {&x, &gain, &bias},
                        [nx, ng, nb, normalized, inv_std, rows, n](const std::vector<double>& g) {
                          const auto& xhat = *normalized;
                          if (ng->requires_grad) {
                            auto gg = ng->grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * xhat[i];
                          }
                          if (nb->requires_grad) {
                            auto gb = nb->grad_buffer();
                            for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                          }
                          if (!nx->requires_grad) return;
                          auto gx = nx->grad_buffer();
                          const double inv_n = 1.0 / static_cast<double>(n);
                          for (std::size_t r = 0; r < rows; ++r) {
                            double mean_dy = 0.0, mean_dy_xhat = 0.0;
                            for (std::size_t c = 0; c < n; ++c) {
                              const double dy = g[r * n + c] * ng->data[c];
                              mean_dy += dy;
                              mean_dy_xhat += dy * xhat[r * n + c];
                            }
                            mean_dy *= inv_n;
                            mean_dy_xhat *= inv_n;
                            for (std::size_t c = 0; c < n; ++c) {
                              const double dy = g[r * n + c] * ng->data[c];
                              gx[r * n + c] += (*inv_std)[r] * (dy - mean_dy - xhat[r * n + c] * mean_dy_xhat);
                            }
                          }
                        });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_to_string(table.shape()));
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<int> rows(ids.begin(), ids.end());
  std::vector<double> out(rows.size() * d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || static_cast<std::size_t>(rows[i]) >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(rows[i]) + " outside table of " +
                              std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  NodePtr nt = table.node();
  Shape shape{rows.size(), d};
  return make_op_result(std::move(shape), std::move(out), {&table}, [nt, rows = std::move(rows), d](const std::vector<double>& g) {
    if (!nt->requires_grad) return;
    auto gt = nt->grad_buffer();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t base = static_cast<std::size_t>(rows[i]) * d;
      for (std::size_t c = 0; c < d; ++c) gt[base + c] += g[i * d + c];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  NodePtr nx = x.node();
  return make_op_result({}, {total}, {&x}, [nx](const std::vector<double>& g) {
    if (!nx->requires_grad) return;
    for (double& v : nx->grad_buffer()) v += g[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, int pad_id) {
  const std::size_t vocab = last_dim(logits, "cross_entropy");
  const std::size_t rows = logits.numel() / vocab;
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_to_string(logits.shape()));
  }
  std::vector<int> tgt(targets.begin(), targets.end());
  std::size_t counted = 0;
  for (int t : tgt) {
    if (t == pad_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw std::out_of_range("cross_entropy: target id " + std::to_string(t) + " outside vocab of " +
                              std::to_string(vocab));
    }
    ++counted;
  }

  // Row softmax kept for backward.
  auto probs = std::make_shared<std::vector<double>>(logits.numel(), 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (tgt[r] == pad_id) continue;
    const double* row = logits.data().data() + r * vocab;
    const double peak = *std::max_element(row, row + vocab);
    double z = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) z += std::exp(row[c] - peak);
    const double log_z = std::log(z) + peak;
    total += log_z - row[tgt[r]];
    for (std::size_t c = 0; c < vocab; ++c) (*probs)[r * vocab + c] = std::exp(row[c] - log_z);
  }
  const double norm = counted > 0 ? 1.0 / static_cast<double>(counted) : 0.0;

  NodePtr nl = logits.node();
  return make_op_result({}, {total * norm}, {&logits},
                        [nl, probs, tgt = std::move(tgt), vocab, rows, norm, pad_id](const std::vector<double>& g) {
                          if (!nl->requires_grad || norm == 0.0) return;
                          auto gl = nl->grad_buffer();
                          const double scale_factor = g[0] * norm;
                          for (std::size_t r = 0; r < rows; ++r) {
                            if (tgt[r] == pad_id) continue;
                            for (std::size_t c = 0; c < vocab; ++c) gl[r * vocab + c] += scale_factor * (*probs)[r * vocab + c];
                            gl[r * vocab + static_cast<std::size_t>(tgt[r])] -= scale_factor;
                          }
                        });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionLayout& layout) {
  const std::size_t B = layout.batch, Tq = layout.query_len, Tk = layout.key_len, H = layout.heads;
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) throw ShapeError("attention: q, k, v must be rank 2");
  const std::size_t d = q.dim(1);
  if (q.dim(0) != B * Tq || k.dim(0) != B * Tk || v.dim(0) != B * Tk || k.dim(1) != d || v.dim(1) != d) {
    throw ShapeError("attention: shapes q" + shape_to_string(q.shape()) + " k" + shape_to_string(k.shape()) + " v" +
                     shape_to_string(v.shape()) + " disagree with layout");
  }
  if (H == 0 || d % H != 0) throw ShapeError("attention: width " + std::to_string(d) + " not divisible by heads");
  if (!layout.key_valid.empty() && layout.key_valid.size() != B * Tk) {
    throw ShapeError("attention: key_valid has " + std::to_string(layout.key_valid.size()) + " entries, expected " +
                     std::to_string(B * Tk));
  }
  if (layout.causal && Tq > Tk) throw ShapeError("attention: causal mask needs query_len <= key_len");

  const std::size_t dh = d / H;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  // Causal offset aligns the last query with the last key.
  const std::size_t offset = Tk - Tq;
  auto allowed = [&layout, Tk, offset](std::size_t b, std::size_t i, std::size_t j) {
    if (!layout.key_valid.empty() && !layout.key_valid[b * Tk + j]) return false;
    return !layout.causal || j <= i + offset;
  };

  // probs laid out [B, H, Tq, Tk]
  auto probs = std::make_shared<std::vector<double>>(B * H * Tq * Tk, 0.0);
  std::vector<double> out(B * Tq * d, 0.0);
  const double* qd = q.data().data();
  const double* kd = k.data().data();
  const double* vd = v.data().data();
  std::vector<double> scores(Tk);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t h = 0; h < H; ++h) {
      for (std::size_t i = 0; i < Tq; ++i) {
        const double* qi = qd + (b * Tq + i) * d + h * dh;
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < Tk; ++j) {
          if (!allowed(b, i, j)) continue;
          const double* kj = kd + (b * Tk + j) * d + h * dh;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
          scores[j] = s * inv_scale;
          peak = std::max(peak, scores[j]);
        }
        if (peak == -std::numeric_limits<double>::infinity()) continue;
        double* p = probs->data() + ((b * H + h) * Tq + i) * Tk;
        double z = 0.0;
        for (std::size_t j = 0; j < Tk; ++j) {
          if (!allowed(b, i, j)) continue;
          p[j] = std::exp(scores[j] - peak);
          z += p[j];
        }
        double* oi = out.data() + (b * Tq + i) * d + h * dh;
        for (std::size_t j = 0; j < Tk; ++j) {
          if (p[j] == 0.0) continue;
          p[j] /= z;
          const double* vj = vd + (b * Tk + j) * d + h * dh;
          for (std::size_t c = 0; c < dh; ++c) oi[c] += p[j] * vj[c];
        }
      }
    }
  }

  NodePtr nq = q.node(), nk = k.node(), nv = v.node();
  return make_op_result(q.shape(), std::move(out), {&q, &k, &v},
                        [nq, nk, nv, probs, B, Tq, Tk, H, d, dh, inv_scale](const std::vector<double>& g) {
                          std::vector<double> dq(nq->data.size(), 0.0), dk(nk->data.size(), 0.0),
                              dv(nv->data.size(), 0.0);
                          std::vector<double> dp(Tk);
                          for (std::size_t b = 0; b < B; ++b) {
                            for (std::size_t h = 0; h < H; ++h) {
                              for (std::size_t i = 0; i < Tq; ++i) {
                                const double* p = probs->data() + ((b * H + h) * Tq + i) * Tk;
                                const double* gi = g.data() + (b * Tq + i) * d + h * dh;
                                double dot = 0.0;
                                for (std::size_t j = 0; j < Tk; ++j) {
                                  if (p[j] == 0.0) {
                                    dp[j] = 0.0;
                                    continue;
                                  }
                                  const double* vj = nv->data.data() + (b * Tk + j) * d + h * dh;
                                  double* dvj = dv.data() + (b * Tk + j) * d + h * dh;
                                  double s = 0.0;
                                  for (std::size_t c = 0; c < dh; ++c) {
                                    s += gi[c] * vj[c];
                                    dvj[c] += p[j] * gi[c];
                                  }
                                  dp[j] = s;
                                  dot += p[j] * s;
                                }
                                const double* qi = nq->data.data() + (b * Tq + i) * d + h * dh;
                                double* dqi = dq.data() + (b * Tq + i) * d + h * dh;
                                for (std::size_t j = 0; j < Tk; ++j) {
                                  if (p[j] == 0.0) continue;
                                  const double ds = p[j] * (dp[j] - dot) * inv_scale;
                                  const double* kj = nk->data.data() + (b * Tk + j) * d + h * dh;
                                  double* dkj = dk.data() + (b * Tk + j) * d + h * dh;
                                  for (std::size_t c = 0; c < dh; ++c) {
                                    dqi[c] += ds * kj[c];
                                    dkj[c] += ds * qi[c];
                                  }
                                }
                              }
                            }
                          }
                          nq->accumulate(dq);
                          nk->accumulate(dk);
                          nv->accumulate(dv);
                        });
}

}  // namespace skillnet
