#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gsmt/tensor.hpp"

namespace gsmt {

enum class OpKind {
  parameter,
  constant,
  add,
  sub,
  mul,
  scale,
  relu,
  exp,
  log,
  matmul,
  matmul_nt,
  transpose,
  softmax_rows,
  max_pool_rows,
  maximum,
  gather_rows,
  concat_rows,
  sum,
  mean,
  causal_conv,
  dss_kernel,
  select_straight_through,
  normalize_rows,
  cross_entropy,
};

const char* op_name(OpKind kind) noexcept;

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Tensor& value() const;
  const Tensor& grad() const;
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of operations. Nodes are stored in creation order, so
// inputs always precede their consumers and backward() is a single reverse
// sweep.
//
// An inference tape keeps only values: no backward closures are stored and
// convolutions take the FFT path.
class Tape {
 public:
  enum class Mode { record, inference };

  // Receives the tape, the node's own id and the gradient flowing into it.
  using BackwardFn = std::function<void(Tape&, std::size_t self, const Tensor& out_grad)>;

  explicit Tape(Mode mode = Mode::record) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::record; }

  Var parameter(Tensor value);
  Var constant(Tensor value);

  // Used by op implementations. `backward` may be empty for inference tapes.
  Var push(OpKind kind, std::vector<std::size_t> inputs, Tensor value, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  // Gradient accumulated by the last backward(); zeros if the node was not reached.
  const Tensor& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  OpKind kind(std::size_t id) const { return nodes_.at(id).kind; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(std::size_t id, const Tensor& g);

  // Reverse sweep from a scalar loss node. Every parameter ends with a
  // gradient (zero when untouched).
  void backward(Var loss);

  struct NonFinite {
    std::size_t id;
    OpKind kind;
  };
  std::optional<NonFinite> first_non_finite() const;

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    mutable Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Mode mode_;
  std::vector<Node> nodes_;
};

// Operations. Shapes follow the tape-free kernels in ops.hpp.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var relu(Var a);
Var exp(Var a);
// log(max(a, eps)); the gradient is zero where the clamp is active.
Var log_clamped(Var a, double eps = 1e-8);
Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);
Var transpose(Var a);
Var softmax_rows(Var a);
Var max_pool_rows(Var a, std::size_t group);
Var maximum(Var a, Var b);
Var gather_rows(Var a, std::vector<std::size_t> indices);
Var concat_rows(const std::vector<Var>& parts);
Var sum(Var a);
Var mean(Var a);

// Per-channel causal convolution of x [L x C] with kernel [C x K]:
// out[t][c] = sum_{j < K, j <= t} kernel[c][j] * x[t-j][c].
// Recording tapes use the direct sum; inference tapes use the FFT when K == L.
Var causal_conv(Var x, Var kernel);

// Rows of `rows` picked by `hard` on the forward pass, with gradient routed
// through `soft` as well: value = (onehot(hard) + soft - soft_frozen) * rows.
// With soft_frozen equal to soft's value this is exactly the hard pick.
Var select_straight_through(const std::vector<std::size_t>& hard, Var soft, const Tensor& soft_frozen,
                            Var rows);

// Each row scaled to unit L2 norm; zero rows stay zero.
Var normalize_rows(Var a);

// -log softmax(logits)[label] for a single row of logits.
Var cross_entropy(Var logits, std::size_t label);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(double s, Var a);

}  // namespace gsmt
