#include "vaest/graph.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace vaest {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap map_of(std::span<const double> v, std::size_t r, std::size_t c) {
  return ConstMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

MutMap map_of(std::span<double> v, std::size_t r, std::size_t c) {
  return MutMap(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

[[noreturn]] void shape_error(const char* prim, const Tensor& a, const Tensor& b) {
  throw std::invalid_argument(std::string(prim) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()));
}

void check_same_shape(const char* prim, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(prim, a, b);
}

void check_rank2(const char* prim, const Tensor& t) {
  if (t.rank() != 2) {
    throw std::invalid_argument(std::string(prim) + ": expected rank-2 tensor, got " +
                                shape_str(t.shape()));
  }
}

}  // namespace

TensorPtr Graph::record(Shape shape, std::vector<double> data,
                        const std::vector<TensorPtr>& inputs, BackwardFn backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (const auto& in : inputs) {
      if (in->requires_grad()) {
        needs = true;
        break;
      }
    }
  }
  auto out = Tensor::create(std::move(shape), std::move(data), needs);
  if (needs) {
    tape_.push_back(Node{[out, fn = std::move(backward)]() {
      // A node whose output never received a gradient is off the path from
      // the loss; its contributions are all zero.
      if (out->has_grad()) fn(*out);
    }});
  }
  return out;
}

TensorPtr Graph::matmul(const TensorPtr& a, const TensorPtr& b) {
  check_rank2("matmul", *a);
  check_rank2("matmul", *b);
  if (a->shape()[1] != b->shape()[0]) shape_error("matmul", *a, *b);
  const std::size_t m = a->shape()[0], k = a->shape()[1], n = b->shape()[1];
  std::vector<double> out(m * n);
  map_of(std::span<double>(out), m, n).noalias() =
      map_of(a->data(), m, k) * map_of(b->data(), k, n);
  return record({m, n}, std::move(out), {a, b}, [a, b, m, k, n](const Tensor& o) {
    ConstMap g = map_of(o.grad(), m, n);
    if (a->requires_grad()) {
      map_of(a->grad_buffer(), m, k).noalias() += g * map_of(b->data(), k, n).transpose();
    }
    if (b->requires_grad()) {
      map_of(b->grad_buffer(), k, n).noalias() += map_of(a->data(), m, k).transpose() * g;
    }
  });
}

TensorPtr Graph::transpose(const TensorPtr& a) {
  check_rank2("transpose", *a);
  const std::size_t r = a->shape()[0], c = a->shape()[1];
  std::vector<double> out(r * c);
  map_of(std::span<double>(out), c, r).noalias() = map_of(a->data(), r, c).transpose();
  return record({c, r}, std::move(out), {a}, [a, r, c](const Tensor& o) {
    if (a->requires_grad()) {
      map_of(a->grad_buffer(), r, c).noalias() += map_of(o.grad(), c, r).transpose();
    }
  });
}

TensorPtr Graph::add(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape() == b->shape()) {
    std::vector<double> out(a->size());
    auto da = a->data(), db = b->data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] + db[i];
    return record(a->shape(), std::move(out), {a, b}, [a, b](const Tensor& o) {
      auto g = o.grad();
      if (a->requires_grad()) a->accumulate_grad(g);
      if (b->requires_grad()) b->accumulate_grad(g);
    });
  }
  // Row-vector broadcast: a [R x C] + b [C].
  if (a->rank() == 2 && b->rank() == 1 && b->size() == a->shape()[1]) {
    const std::size_t r = a->shape()[0], c = a->shape()[1];
    std::vector<double> out(a->size());
    auto da = a->data(), db = b->data();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] = da[i * c + j] + db[j];
    }
    return record(a->shape(), std::move(out), {a, b}, [a, b, r, c](const Tensor& o) {
      auto g = o.grad();
      if (a->requires_grad()) a->accumulate_grad(g);
      if (b->requires_grad()) {
        auto gb = b->grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
        }
      }
    });
  }
  shape_error("add", *a, *b);
}

TensorPtr Graph::sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape("sub", *a, *b);
  std::vector<double> out(a->size());
  auto da = a->data(), db = b->data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] - db[i];
  return record(a->shape(), std::move(out), {a, b}, [a, b](const Tensor& o) {
    auto g = o.grad();
    if (a->requires_grad()) a->accumulate_grad(g);
    if (b->requires_grad()) {
      auto gb = b->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

TensorPtr Graph::mul(const TensorPtr& a, const TensorPtr& b) {
  if (a->shape() == b->shape()) {
    std::vector<double> out(a->size());
    auto da = a->data(), db = b->data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * db[i];
    return record(a->shape(), std::move(out), {a, b}, [a, b](const Tensor& o) {
      auto g = o.grad();
      auto da = a->data(), db = b->data();
      if (a->requires_grad()) {
        auto ga = a->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * db[i];
      }
      if (b->requires_grad()) {
        auto gb = b->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * da[i];
      }
    });
  }
  // Scalar broadcast on either side.
  const bool a_scalar = a->is_scalar(), b_scalar = b->is_scalar();
  if (a_scalar || b_scalar) {
    const TensorPtr& s = a_scalar ? a : b;
    const TensorPtr& t = a_scalar ? b : a;
    const double sv = s->value();
    std::vector<double> out(t->size());
    auto dt = t->data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = dt[i] * sv;
    return record(t->shape(), std::move(out), {a, b}, [s, t, sv](const Tensor& o) {
      auto g = o.grad();
      if (t->requires_grad()) {
        auto gt = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i] * sv;
      }
      if (s->requires_grad()) {
        auto dt = t->data();
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * dt[i];
        s->grad_buffer()[0] += acc;
      }
    });
  }
  shape_error("mul", *a, *b);
}

TensorPtr Graph::div(const TensorPtr& a, const TensorPtr& b) {
  const bool same = a->shape() == b->shape();
  if (!same && !b->is_scalar()) shape_error("div", *a, *b);
  std::vector<double> out(a->size());
  auto da = a->data(), db = b->data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = da[i] / (same ? db[i] : db[0]);
    if (!std::isfinite(out[i])) {
      throw std::domain_error("div: non-finite quotient at element " + std::to_string(i));
    }
  }
  return record(a->shape(), std::move(out), {a, b}, [a, b, same](const Tensor& o) {
    auto g = o.grad();
    auto da = a->data(), db = b->data();
    if (a->requires_grad()) {
      auto ga = a->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / (same ? db[i] : db[0]);
    }
    if (b->requires_grad()) {
      auto gb = b->grad_buffer();
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * da[i] / (db[i] * db[i]);
      } else {
        double acc = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * da[i];
        gb[0] -= acc / (db[0] * db[0]);
      }
    }
  });
}

TensorPtr Graph::scale(const TensorPtr& a, double factor) {
  std::vector<double> out(a->size());
  auto da = a->data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = da[i] * factor;
  return record(a->shape(), std::move(out), {a}, [a, factor](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

TensorPtr Graph::concat_cols(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const std::size_t rows = parts[0]->rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_rank2("concat_cols", *p);
    if (p->shape()[0] != rows) shape_error("concat_cols", *parts[0], *p);
    total += p->shape()[1];
  }
  std::vector<double> out(rows * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t c = p->shape()[1];
    auto d = p->data();
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = d[i * c + j];
    }
    off += c;
  }
  return record({rows, total}, std::move(out), parts, [parts, rows, total](const Tensor& o) {
    auto g = o.grad();
    std::size_t off = 0;
    for (const auto& p : parts) {
      const std::size_t c = p->shape()[1];
      if (p->requires_grad()) {
        auto gp = p->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + off + j];
        }
      }
      off += c;
    }
  });
}

TensorPtr Graph::concat_rows(const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  check_rank2("concat_rows", *parts[0]);
  const std::size_t cols = parts[0]->shape()[1];
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_rank2("concat_rows", *p);
    if (p->shape()[1] != cols) shape_error("concat_rows", *parts[0], *p);
    total += p->shape()[0];
  }
  std::vector<double> out;
  out.reserve(total * cols);
  for (const auto& p : parts) out.insert(out.end(), p->data().begin(), p->data().end());
  return record({total, cols}, std::move(out), parts, [parts](const Tensor& o) {
    auto g = o.grad();
    std::size_t off = 0;
    for (const auto& p : parts) {
      if (p->requires_grad()) {
        auto gp = p->grad_buffer();
        for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
      }
      off += p->size();
    }
  });
}

TensorPtr Graph::slice_rows(const TensorPtr& a, std::size_t begin, std::size_t end) {
  check_rank2("slice", *a);
  const std::size_t r = a->shape()[0], c = a->shape()[1];
  if (begin >= end || end > r) {
    throw std::invalid_argument("slice: row range [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") out of bounds for " +
                                shape_str(a->shape()));
  }
  auto d = a->data();
  std::vector<double> out(d.begin() + begin * c, d.begin() + end * c);
  return record({end - begin, c}, std::move(out), {a}, [a, begin, c](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
  });
}

TensorPtr Graph::slice_cols(const TensorPtr& a, std::size_t begin, std::size_t end) {
  check_rank2("slice", *a);
  const std::size_t r = a->shape()[0], c = a->shape()[1];
  if (begin >= end || end > c) {
    throw std::invalid_argument("slice: column range [" + std::to_string(begin) + ", " +
                                std::to_string(end) + ") out of bounds for " +
                                shape_str(a->shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  auto d = a->data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = d[i * c + begin + j];
  }
  return record({r, w}, std::move(out), {a}, [a, begin, r, c, w](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += g[i * w + j];
    }
  });
}

TensorPtr Graph::sigmoid(const TensorPtr& a) {
  std::vector<double> out(a->size());
  auto d = a->data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = d[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  return record(a->shape(), std::move(out), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto y = o.data();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

TensorPtr Graph::tanh(const TensorPtr& a) {
  std::vector<double> out(a->size());
  auto d = a->data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(d[i]);
  return record(a->shape(), std::move(out), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto y = o.data();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

TensorPtr Graph::relu(const TensorPtr& a) {
  std::vector<double> out(a->size());
  auto d = a->data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] > 0.0 ? d[i] : 0.0;
  return record(a->shape(), std::move(out), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto d = a->data();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (d[i] > 0.0) ga[i] += g[i];
    }
  });
}

TensorPtr Graph::exp(const TensorPtr& a) {
  std::vector<double> out(a->size());
  auto d = a->data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(d[i]);
    if (!std::isfinite(out[i])) {
      throw std::domain_error("exp: non-finite output for input " + std::to_string(d[i]));
    }
  }
  return record(a->shape(), std::move(out), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto y = o.data();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

TensorPtr Graph::log(const TensorPtr& a) {
  std::vector<double> out(a->size());
  auto d = a->data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::log(d[i]);
    if (!std::isfinite(out[i])) {
      throw std::domain_error("log: non-finite output for input " + std::to_string(d[i]));
    }
  }
  return record(a->shape(), std::move(out), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto d = a->data();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / d[i];
  });
}

TensorPtr Graph::square(const TensorPtr& a) {
  std::vector<double> out(a->size());
  auto d = a->data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d[i] * d[i];
  return record(a->shape(), std::move(out), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto d = a->data();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 2.0 * g[i] * d[i];
  });
}

TensorPtr Graph::sqrt(const TensorPtr& a) {
  std::vector<double> out(a->size());
  auto d = a->data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(d[i] > 0.0)) {
      throw std::domain_error("sqrt: input must be positive, got " + std::to_string(d[i]));
    }
    out[i] = std::sqrt(d[i]);
  }
  return record(a->shape(), std::move(out), {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto y = o.data();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += 0.5 * g[i] / y[i];
  });
}

TensorPtr Graph::softmax(const TensorPtr& a) {
  if (a->rank() > 2) {
    throw std::invalid_argument("softmax: expected rank-1 or rank-2 tensor, got " +
                                shape_str(a->shape()));
  }
  const std::size_t r = a->rows(), c = a->cols();
  std::vector<double> out(a->size());
  auto d = a->data();
  for (std::size_t i = 0; i < r; ++i) {
    double mx = d[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, d[i * c + j]);
    if (!std::isfinite(mx)) {
      throw std::domain_error("softmax: non-finite input in row " + std::to_string(i));
    }
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(d[i * c + j] - mx);
      s += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
  }
  return record(a->shape(), std::move(out), {a}, [a, r, c](const Tensor& o) {
    if (!a->requires_grad()) return;
    auto g = o.grad();
    auto y = o.data();
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        ga[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
      }
    }
  });
}

TensorPtr Graph::sum(const TensorPtr& a) {
  double s = 0.0;
  for (double v : a->data()) s += v;
  return record({1}, {s}, {a}, [a](const Tensor& o) {
    if (!a->requires_grad()) return;
    const double g = o.grad()[0];
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

TensorPtr Graph::mean(const TensorPtr& a) {
  double s = 0.0;
  for (double v : a->data()) s += v;
  const double n = static_cast<double>(a->size());
  return record({1}, {s / n}, {a}, [a, n](const Tensor& o) {
    if (!a->requires_grad()) return;
    const double g = o.grad()[0] / n;
    auto ga = a->grad_buffer();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

TensorPtr Graph::causal_dilated_conv1d(const TensorPtr& x, const TensorPtr& w,
                                       const TensorPtr& b, std::size_t dilation) {
  check_rank2("causal_dilated_conv1d", *x);
  if (w->rank() != 3) {
    throw std::invalid_argument("causal_dilated_conv1d: weight must be rank-3 [k, C_in, C_out], got " +
                                shape_str(w->shape()));
  }
  if (dilation == 0) throw std::invalid_argument("causal_dilated_conv1d: dilation must be >= 1");
  const std::size_t t_len = x->shape()[0], c_in = x->shape()[1];
  const std::size_t k = w->shape()[0], c_out = w->shape()[2];
  if (w->shape()[1] != c_in) shape_error("causal_dilated_conv1d", *x, *w);
  if (b->rank() != 1 || b->size() != c_out) shape_error("causal_dilated_conv1d", *w, *b);

  std::vector<double> out(t_len * c_out);
  {
    MutMap o = map_of(std::span<double>(out), t_len, c_out);
    auto bd = b->data();
    for (std::size_t t = 0; t < t_len; ++t) {
      for (std::size_t j = 0; j < c_out; ++j) out[t * c_out + j] = bd[j];
    }
    ConstMap xm = map_of(x->data(), t_len, c_in);
    for (std::size_t tap = 0; tap < k; ++tap) {
      const std::size_t shift = tap * dilation;
      if (shift >= t_len) break;
      const auto rows = static_cast<Eigen::Index>(t_len - shift);
      ConstMap wm(w->data().data() + tap * c_in * c_out, static_cast<Eigen::Index>(c_in),
                  static_cast<Eigen::Index>(c_out));
      o.bottomRows(rows).noalias() += xm.topRows(rows) * wm;
    }
  }
  return record({t_len, c_out}, std::move(out), {x, w, b},
                [x, w, b, dilation, t_len, c_in, k, c_out](const Tensor& o) {
    ConstMap g = map_of(o.grad(), t_len, c_out);
    if (b->requires_grad()) {
      auto gb = b->grad_buffer();
      for (std::size_t t = 0; t < t_len; ++t) {
        for (std::size_t j = 0; j < c_out; ++j) gb[j] += g(t, j);
      }
    }
    const bool need_x = x->requires_grad(), need_w = w->requires_grad();
    if (!need_x && !need_w) return;
    ConstMap xm = map_of(x->data(), t_len, c_in);
    for (std::size_t tap = 0; tap < k; ++tap) {
      const std::size_t shift = tap * dilation;
      if (shift >= t_len) break;
      const auto rows = static_cast<Eigen::Index>(t_len - shift);
      ConstMap wm(w->data().data() + tap * c_in * c_out, static_cast<Eigen::Index>(c_in),
                  static_cast<Eigen::Index>(c_out));
      if (need_x) {
        MutMap gx = map_of(x->grad_buffer(), t_len, c_in);
        gx.topRows(rows).noalias() += g.bottomRows(rows) * wm.transpose();
      }
      if (need_w) {
        MutMap gw(w->grad_buffer().data() + tap * c_in * c_out,
                  static_cast<Eigen::Index>(c_in), static_cast<Eigen::Index>(c_out));
        gw.noalias() += xm.topRows(rows).transpose() * g.bottomRows(rows);
      }
    }
  });
}

void Graph::backward(const TensorPtr& loss) {
  if (!loss->is_scalar()) {
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss->shape()));
  }
  if (!loss->requires_grad()) {
    throw std::invalid_argument("backward: loss does not require grad (recording disabled?)");
  }
  loss->grad_buffer()[0] += 1.0;
  for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) it->apply();
  tape_.clear();
}

}  // namespace vaest
