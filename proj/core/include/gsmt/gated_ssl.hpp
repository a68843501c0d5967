#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "gsmt/autodiff.hpp"
#include "gsmt/dss.hpp"
#include "gsmt/tensor.hpp"
#include "gsmt/weights.hpp"

namespace gsmt {

// U = relu(X w_u), V = relu(X w_v), O = SSM(U) w_o, H = (O . V) w_h.
// All maps are bias-free.
template <class T>
struct GatedSslWeights {
  T w_u;  // [d x d_gating]
  T w_v;  // [d x d_gating]
  T w_o;  // [d_gating x d_gating]
  T w_h;  // [d_gating x d_h]
  DssWeights<T> dss;  // d_gating channels

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    detail::visit_field(prefix + "w_u", w_u, f);
    detail::visit_field(prefix + "w_v", w_v, f);
    detail::visit_field(prefix + "w_o", w_o, f);
    detail::visit_field(prefix + "w_h", w_h, f);
    dss.visit(prefix + "dss.", f);
  }

  template <class U, class F>
  GatedSslWeights<U> map(const std::string& prefix, F&& f) const {
    return {detail::map_field<U>(prefix + "w_u", w_u, f), detail::map_field<U>(prefix + "w_v", w_v, f),
            detail::map_field<U>(prefix + "w_o", w_o, f), detail::map_field<U>(prefix + "w_h", w_h, f),
            dss.template map<U>(prefix + "dss.", f)};
  }
};

using GatedSslParams = GatedSslWeights<Tensor>;

struct GatedSslDims {
  std::size_t d = 0;
  std::size_t d_state = 0;
  std::size_t d_h = 0;
  std::size_t d_gating = 0;
  // Without the gate, H = O w_h and w_v is not allocated.
  bool gated = true;
};

// Rejects d_gating >= min(d, d_h, d_state).
void validate(const GatedSslDims& dims);

GatedSslParams make_gated_ssl_params(const GatedSslDims& dims, std::mt19937_64& rng);

// Runs ungated when w_v is unset.
Var gated_ssl_forward(const GatedSslWeights<Var>& w, Var x);
Tensor gated_ssl_forward(const GatedSslParams& params, const Tensor& x);

// Global-context mechanisms, interchangeable for ablation. Every kind maps
// [L x d] to [L x d_h].
enum class MechanismKind { gated_ssl, self_attention, conv1d, none };

MechanismKind parse_mechanism(const std::string& name);
std::string to_string(MechanismKind kind);

inline constexpr std::size_t kConvWindow = 9;

template <class T>
struct SelfAttentionWeights {
  T w_q, w_k, w_v;  // [d x d_k]
  T w_out;          // [d_k x d_h]

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    detail::visit_field(prefix + "w_q", w_q, f);
    detail::visit_field(prefix + "w_k", w_k, f);
    detail::visit_field(prefix + "w_v", w_v, f);
    detail::visit_field(prefix + "w_out", w_out, f);
  }

  template <class U, class F>
  SelfAttentionWeights<U> map(const std::string& prefix, F&& f) const {
    return {detail::map_field<U>(prefix + "w_q", w_q, f), detail::map_field<U>(prefix + "w_k", w_k, f),
            detail::map_field<U>(prefix + "w_v", w_v, f), detail::map_field<U>(prefix + "w_out", w_out, f)};
  }
};

template <class T>
struct MechanismWeights {
  MechanismKind kind = MechanismKind::gated_ssl;
  GatedSslWeights<T> ssl;
  SelfAttentionWeights<T> attention;
  T conv_kernel;  // [d x kConvWindow], depthwise causal
  T projection;   // [d x d_h]; conv1d and none arms

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    ssl.visit(prefix + "ssl.", f);
    attention.visit(prefix + "attention.", f);
    detail::visit_field(prefix + "conv_kernel", conv_kernel, f);
    detail::visit_field(prefix + "projection", projection, f);
  }

  template <class U, class F>
  MechanismWeights<U> map(const std::string& prefix, F&& f) const {
    MechanismWeights<U> out;
    out.kind = kind;
    out.ssl = ssl.template map<U>(prefix + "ssl.", f);
    out.attention = attention.template map<U>(prefix + "attention.", f);
    out.conv_kernel = detail::map_field<U>(prefix + "conv_kernel", conv_kernel, f);
    out.projection = detail::map_field<U>(prefix + "projection", projection, f);
    return out;
  }
};

using MechanismParams = MechanismWeights<Tensor>;

// d_gating doubles as the attention width d_k.
MechanismParams make_mechanism_params(MechanismKind kind, const GatedSslDims& dims, std::mt19937_64& rng);

// softmax(Q K^T / sqrt(d_k)) V for one head.
Var attend(Var x, Var w_q, Var w_k, Var w_v);

Var global_mechanism_forward(const MechanismWeights<Var>& w, Var x);
Tensor global_mechanism_forward(const MechanismParams& params, const Tensor& x);

// Glorot-style N(0, 1/rows) matrix.
Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double gain = 1.0);

}  // namespace gsmt
