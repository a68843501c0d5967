#include "gsmt/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "gsmt/error.hpp"
#include "gsmt/fft.hpp"
#include "gsmt/ops.hpp"

namespace gsmt {

const char* op_name(OpKind kind) noexcept {
  switch (kind) {
    case OpKind::parameter: return "parameter";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::relu: return "relu";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::matmul: return "matmul";
    case OpKind::matmul_nt: return "matmul_nt";
    case OpKind::transpose: return "transpose";
    case OpKind::softmax_rows: return "softmax_rows";
    case OpKind::max_pool_rows: return "max_pool_rows";
    case OpKind::maximum: return "maximum";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::concat_rows: return "concat_rows";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::causal_conv: return "causal_conv";
    case OpKind::dss_kernel: return "dss_kernel";
    case OpKind::select_straight_through: return "select_straight_through";
    case OpKind::normalize_rows: return "normalize_rows";
    case OpKind::cross_entropy: return "cross_entropy";
  }
  return "unknown";
}

const Tensor& Var::value() const { return tape_->value(id_); }
const Tensor& Var::grad() const { return tape_->grad(id_); }

Var Tape::parameter(Tensor value) {
  Node node{OpKind::parameter, {}, std::move(value), {}, {}, recording()};
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  Node node{OpKind::constant, {}, std::move(value), {}, {}, false};
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward) {
  bool needs = false;
  if (recording()) {
    for (std::size_t in : inputs) {
      if (in >= nodes_.size()) throw ContractError("tape input refers to a later node");
      needs = needs || nodes_[in].requires_grad;
    }
  }
  Node node{kind, std::move(inputs), std::move(value), {}, needs ? std::move(backward) : BackwardFn{}, needs};
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::grad(std::size_t id) const {
  const Node& node = nodes_.at(id);
  if (node.grad.empty()) node.grad = Tensor(node.value.shape());
  return node.grad;
}

void Tape::accumulate(std::size_t id, const Tensor& g) {
  Node& node = nodes_.at(id);
  if (!node.requires_grad) return;
  if (g.size() != node.value.size()) {
    throw DimensionError(std::string("gradient shape ") + shape_string(g.shape()) + " does not match " +
                         op_name(node.kind) + " node of shape " + shape_string(node.value.shape()));
  }
  if (node.grad.empty()) {
    node.grad = g.reshaped(node.value.shape());
    return;
  }
  auto dst = node.grad.data();
  auto src = g.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  if (!recording()) throw ContractError("backward() on an inference tape");
  if (&loss.tape() != this) throw ContractError("loss belongs to a different tape");
  const std::size_t root = loss.id();
  if (nodes_.at(root).value.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_string(nodes_[root].value.shape()));
  }
  for (Node& node : nodes_) node.grad = Tensor();
  for (Node& node : nodes_) {
    if (node.kind == OpKind::parameter) node.grad = Tensor(node.value.shape());
  }
  if (!nodes_[root].requires_grad) return;
  nodes_[root].grad = Tensor(nodes_[root].value.shape(), 1.0);
  for (std::size_t i = root + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.backward || node.grad.empty()) continue;
    const Tensor g = node.grad;
    node.backward(*this, i, g);
  }
}

std::optional<Tape::NonFinite> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) return NonFinite{i, nodes_[i].kind};
  }
  return std::nullopt;
}

namespace {

void require_same_tape(Var a, Var b, const char* op) {
  if (&a.tape() != &b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

}  // namespace

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  Tensor out = ops::add(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(OpKind::add, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  Tensor out = ops::sub(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(OpKind::sub, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    t.accumulate(ia, g);
    t.accumulate(ib, ops::scale(g, -1.0));
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  Tensor out = ops::mul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(OpKind::mul, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, ops::mul(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, ops::mul(g, t.value(ia)));
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return a.tape().push(OpKind::scale, {ia}, ops::scale(a.value(), s),
                       [ia, s](Tape& t, std::size_t, const Tensor& g) { t.accumulate(ia, ops::scale(g, s)); });
}

Var relu(Var a) {
  const std::size_t ia = a.id();
  return a.tape().push(OpKind::relu, {ia}, ops::relu(a.value()), [ia](Tape& t, std::size_t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > 0.0 ? g[i] : 0.0;
    t.accumulate(ia, dx);
  });
}

Var exp(Var a) {
  const std::size_t ia = a.id();
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.value()[i]);
  return a.tape().push(OpKind::exp, {ia}, std::move(out), [ia](Tape& t, std::size_t self, const Tensor& g) {
    t.accumulate(ia, ops::mul(g, t.value(self)));
  });
}

Var log_clamped(Var a, double eps) {
  const std::size_t ia = a.id();
  Tensor out(a.value().shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(a.value()[i], eps));
  return a.tape().push(OpKind::log, {ia}, std::move(out), [ia, eps](Tape& t, std::size_t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    Tensor dx(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] = x[i] > eps ? g[i] / x[i] : 0.0;
    t.accumulate(ia, dx);
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tensor out = ops::matmul(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(OpKind::matmul, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    if (t.requires_grad(ia)) t.accumulate(ia, ops::matmul_nt(g, t.value(ib)));
    if (t.requires_grad(ib)) t.accumulate(ib, ops::matmul_tn(t.value(ia), g));
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b, "matmul_nt");
  Tensor out = ops::matmul_nt(a.value(), b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(OpKind::matmul_nt, {ia, ib}, std::move(out),
                       [ia, ib](Tape& t, std::size_t, const Tensor& g) {
                         // out = A B^T: dA = g B, dB = g^T A
                         if (t.requires_grad(ia)) t.accumulate(ia, ops::matmul(g, t.value(ib)));
                         if (t.requires_grad(ib)) t.accumulate(ib, ops::matmul_tn(g, t.value(ia)));
                       });
}

Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape().push(OpKind::transpose, {ia}, ops::transpose(a.value()),
                       [ia](Tape& t, std::size_t, const Tensor& g) { t.accumulate(ia, ops::transpose(g)); });
}

Var softmax_rows(Var a) {
  const std::size_t ia = a.id();
  return a.tape().push(OpKind::softmax_rows, {ia}, ops::softmax_rows(a.value()),
                       [ia](Tape& t, std::size_t self, const Tensor& g) {
                         const Tensor& y = t.value(self);
                         const std::size_t m = y.rows(), n = y.cols();
                         Tensor dx(y.shape());
                         for (std::size_t i = 0; i < m; ++i) {
                           double dot = 0.0;
                           for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * y(i, j);
                           for (std::size_t j = 0; j < n; ++j) dx(i, j) = y(i, j) * (g(i, j) - dot);
                         }
                         t.accumulate(ia, dx);
                       });
}

Var max_pool_rows(Var a, std::size_t group) {
  const std::size_t ia = a.id();
  return a.tape().push(OpKind::max_pool_rows, {ia}, ops::max_pool_rows(a.value(), group),
                       [ia, group](Tape& t, std::size_t, const Tensor& g) {
                         const Tensor& x = t.value(ia);
                         const std::size_t n = x.cols();
                         Tensor dx(x.shape());
                         for (std::size_t r = 0; r < g.rows(); ++r) {
                           for (std::size_t c = 0; c < n; ++c) {
                             std::size_t best = r * group;
                             for (std::size_t k = 1; k < group; ++k) {
                               if (x(r * group + k, c) > x(best, c)) best = r * group + k;
                             }
                             dx(best, c) += g(r, c);
                           }
                         }
                         t.accumulate(ia, dx);
                       });
}

Var maximum(Var a, Var b) {
  require_same_tape(a, b, "maximum");
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  if (x.shape() != y.shape()) {
    throw DimensionError("maximum: shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(x[i], y[i]);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(OpKind::maximum, {ia, ib}, std::move(out), [ia, ib](Tape& t, std::size_t, const Tensor& g) {
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    Tensor dx(x.shape()), dy(y.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      // ties go to the first operand, matching std::max
      if (x[i] >= y[i]) dx[i] = g[i];
      else dy[i] = g[i];
    }
    t.accumulate(ia, dx);
    t.accumulate(ib, dy);
  });
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  const std::size_t ia = a.id();
  Tensor out = ops::gather_rows(a.value(), indices);
  return a.tape().push(OpKind::gather_rows, {ia}, std::move(out),
                       [ia, idx = std::move(indices)](Tape& t, std::size_t, const Tensor& g) {
                         Tensor dx(t.value(ia).shape());
                         const std::size_t n = g.cols();
                         for (std::size_t r = 0; r < idx.size(); ++r) {
                           for (std::size_t c = 0; c < n; ++c) dx(idx[r], c) += g(r, c);
                         }
                         t.accumulate(ia, dx);
                       });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  std::vector<const Tensor*> values;
  std::vector<std::size_t> ids;
  for (const Var& p : parts) {
    require_same_tape(parts.front(), p, "concat_rows");
    values.push_back(&p.value());
    ids.push_back(p.id());
  }
  Tensor out = ops::concat_rows(values);
  std::vector<std::size_t> inputs = ids;
  return parts.front().tape().push(OpKind::concat_rows, std::move(inputs), std::move(out),
                                   [ids](Tape& t, std::size_t, const Tensor& g) {
                                     std::size_t offset = 0;
                                     for (std::size_t id : ids) {
                                       const Tensor& v = t.value(id);
                                       if (t.requires_grad(id)) {
                                         Tensor piece(v.shape(), g.data().subspan(offset, v.size()));
                                         t.accumulate(id, piece);
                                       }
                                       offset += v.size();
                                     }
                                   });
}

Var sum(Var a) {
  const std::size_t ia = a.id();
  return a.tape().push(OpKind::sum, {ia}, Tensor::scalar(ops::sum(a.value())),
                       [ia](Tape& t, std::size_t, const Tensor& g) {
                         t.accumulate(ia, Tensor(t.value(ia).shape(), g[0]));
                       });
}

Var mean(Var a) {
  const std::size_t ia = a.id();
  const double n = static_cast<double>(a.value().size());
  return a.tape().push(OpKind::mean, {ia}, Tensor::scalar(ops::sum(a.value()) / n),
                       [ia, n](Tape& t, std::size_t, const Tensor& g) {
                         t.accumulate(ia, Tensor(t.value(ia).shape(), g[0] / n));
                       });
}

Var causal_conv(Var x, Var kernel) {
  require_same_tape(x, kernel, "causal_conv");
  const Tensor& xv = x.value();
  const Tensor& kv = kernel.value();
  const std::size_t L = xv.rows(), C = xv.cols();
  if (kv.rows() != C) {
    throw DimensionError("causal_conv: input " + shape_string(xv.shape()) + " needs kernel [" + std::to_string(C) +
                         " x K], got " + shape_string(kv.shape()));
  }
  const std::size_t K = kv.cols();
  const bool use_fft = !x.tape().recording() && K == L;

  Tensor out({L, C});
  Tensor::Storage column(L), result(L);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t t = 0; t < L; ++t) column[t] = xv(t, c);
    if (use_fft) {
      fft_convolve_causal(column, kv.row(c), result);
    } else {
      direct_convolve_causal(column, kv.row(c), result);
    }
    for (std::size_t t = 0; t < L; ++t) out(t, c) = result[t];
  }

  const std::size_t ix = x.id(), ik = kernel.id();
  return x.tape().push(OpKind::causal_conv, {ix, ik}, std::move(out),
                       [ix, ik](Tape& t, std::size_t, const Tensor& g) {
                         const Tensor& xv = t.value(ix);
                         const Tensor& kv = t.value(ik);
                         const std::size_t L = xv.rows(), C = xv.cols(), K = kv.cols();
                         const bool want_x = t.requires_grad(ix), want_k = t.requires_grad(ik);
                         Tensor dx(xv.shape()), dk(kv.shape());
                         // contiguous per-channel columns; sums run in the same order as the
                         // strided loop
                         Tensor::Storage gc(L), xc(L), dxc(L);
                         for (std::size_t c = 0; c < C; ++c) {
                           for (std::size_t s = 0; s < L; ++s) {
                             gc[s] = g(s, c);
                             xc[s] = xv(s, c);
                             dxc[s] = 0.0;
                           }
                           for (std::size_t j = 0; j < std::min(K, L); ++j) {
                             const double kj = kv(c, j);
                             const double* gj = gc.data() + j;
                             if (want_x) {
                               for (std::size_t s = 0; s + j < L; ++s) dxc[s] += kj * gj[s];
                             }
                             if (want_k) {
                               double acc = 0.0;
                               for (std::size_t s = 0; s + j < L; ++s) acc += gj[s] * xc[s];
                               dk(c, j) = acc;
                             }
                           }
                           if (want_x) {
                             for (std::size_t s = 0; s < L; ++s) dx(s, c) = dxc[s];
                           }
                         }
                         t.accumulate(ix, dx);
                         t.accumulate(ik, dk);
                       });
}

Var select_straight_through(const std::vector<std::size_t>& hard, Var soft, const Tensor& soft_frozen, Var rows) {
  require_same_tape(soft, rows, "select_straight_through");
  const Tensor& sv = soft.value();
  const Tensor& rv = rows.value();
  const std::size_t k = hard.size(), n = rv.rows();
  if (sv.rows() != k || sv.cols() != n || soft_frozen.shape() != sv.shape()) {
    throw DimensionError("select_straight_through: soft weights " + shape_string(sv.shape()) + " / frozen " +
                         shape_string(soft_frozen.shape()) + " do not match " + std::to_string(k) +
                         " picks over " + std::to_string(n) + " rows");
  }
  Tensor mix = ops::sub(sv, soft_frozen);
  for (std::size_t r = 0; r < k; ++r) {
    if (hard[r] >= n) throw DimensionError("select_straight_through: index out of range");
    mix(r, hard[r]) += 1.0;
  }
  Tensor out = ops::matmul(mix, rv);
  const std::size_t is = soft.id(), ir = rows.id();
  return soft.tape().push(OpKind::select_straight_through, {is, ir}, std::move(out),
                          [is, ir, mix = std::move(mix)](Tape& t, std::size_t, const Tensor& g) {
                            if (t.requires_grad(ir)) t.accumulate(ir, ops::matmul_tn(mix, g));
                            if (t.requires_grad(is)) t.accumulate(is, ops::matmul_nt(g, t.value(ir)));
                          });
}

Var normalize_rows(Var a) {
  const Tensor& x = a.value();
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(x.shape());
  std::vector<double> norms(m);
  for (std::size_t i = 0; i < m; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < n; ++j) sq += x(i, j) * x(i, j);
    norms[i] = std::sqrt(sq);
    if (norms[i] > 0.0) {
      for (std::size_t j = 0; j < n; ++j) out(i, j) = x(i, j) / norms[i];
    }
  }
  const std::size_t ia = a.id();
  return a.tape().push(OpKind::normalize_rows, {ia}, std::move(out),
                       [ia, norms = std::move(norms)](Tape& t, std::size_t self, const Tensor& g) {
                         const Tensor& y = t.value(self);
                         Tensor dx(y.shape());
                         const std::size_t n = y.cols();
                         for (std::size_t i = 0; i < y.rows(); ++i) {
                           if (norms[i] == 0.0) continue;
                           double dot = 0.0;
                           for (std::size_t j = 0; j < n; ++j) dot += y(i, j) * g(i, j);
                           for (std::size_t j = 0; j < n; ++j) dx(i, j) = (g(i, j) - y(i, j) * dot) / norms[i];
                         }
                         t.accumulate(ia, dx);
                       });
}

Var cross_entropy(Var logits, std::size_t label) {
  const Tensor& z = logits.value();
  if (z.rows() != 1) throw DimensionError("cross_entropy expects one row of logits, got " + shape_string(z.shape()));
  if (label >= z.cols()) {
    throw ContractError("cross_entropy: label " + std::to_string(label) + " out of range for " +
                        std::to_string(z.cols()) + " classes");
  }
  Tensor probs = ops::softmax_rows(z);
  const double mx = *std::max_element(z.data().begin(), z.data().end());
  double lse = 0.0;
  for (double v : z.data()) lse += std::exp(v - mx);
  const double loss = mx + std::log(lse) - z[label];
  const std::size_t iz = logits.id();
  return logits.tape().push(OpKind::cross_entropy, {iz}, Tensor::scalar(loss),
                            [iz, label, probs = std::move(probs)](Tape& t, std::size_t, const Tensor& g) {
                              Tensor dz = ops::scale(probs, g[0]);
                              dz[label] -= g[0];
                              t.accumulate(iz, dz);
                            });
}

Var operator+(Var a, Var b) { return add(a, b); }
Var operator-(Var a, Var b) { return sub(a, b); }
Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace gsmt
