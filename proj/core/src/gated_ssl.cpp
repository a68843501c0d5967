#include "gsmt/gated_ssl.hpp"

#include <algorithm>
#include <cmath>

#include "gsmt/error.hpp"

namespace gsmt {

Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double gain) {
  Tensor out({rows, cols});
  std::normal_distribution<double> n(0.0, gain / std::sqrt(static_cast<double>(rows)));
  for (double& v : out.data()) v = n(rng);
  return out;
}

void validate(const GatedSslDims& dims) {
  if (dims.d == 0 || dims.d_state == 0 || dims.d_h == 0 || dims.d_gating == 0) {
    throw ConfigError("gated SSL dimensions must be positive");
  }
  if (dims.d_gating >= std::min({dims.d, dims.d_h, dims.d_state})) {
    throw ConfigError("d_gating (" + std::to_string(dims.d_gating) + ") must be smaller than d (" +
                      std::to_string(dims.d) + "), d_h (" + std::to_string(dims.d_h) + ") and d_state (" +
                      std::to_string(dims.d_state) + ")");
  }
}

GatedSslParams make_gated_ssl_params(const GatedSslDims& dims, std::mt19937_64& rng) {
  validate(dims);
  GatedSslParams p;
  // relu halves the variance; gain sqrt(2) keeps U and V at unit scale
  p.w_u = random_matrix(dims.d, dims.d_gating, rng, std::sqrt(2.0));
  if (dims.gated) p.w_v = random_matrix(dims.d, dims.d_gating, rng, std::sqrt(2.0));
  p.w_o = random_matrix(dims.d_gating, dims.d_gating, rng);
  p.w_h = random_matrix(dims.d_gating, dims.d_h, rng);
  p.dss = make_dss_params(dims.d_gating, dims.d_state, rng);
  return p;
}

namespace {

void check_map(const char* name, const Tensor& w, std::size_t in) {
  if (w.rows() != in) {
    throw DimensionError(std::string("gated SSL map ") + name + " expects input width " + std::to_string(w.rows()) +
                         ", got " + std::to_string(in));
  }
}

}  // namespace

Var gated_ssl_forward(const GatedSslWeights<Var>& w, Var x) {
  const std::size_t d = x.value().cols();
  check_map("w_u", w.w_u.value(), d);
  const std::size_t g = w.w_u.value().cols();
  check_map("w_o", w.w_o.value(), g);
  check_map("w_h", w.w_h.value(), w.w_o.value().cols());
  if (w.dss.c.value().rows() != g) {
    throw DimensionError("gated SSL state space has " + std::to_string(w.dss.c.value().rows()) +
                         " channels, gating width is " + std::to_string(g));
  }

  Var u = relu(matmul(x, w.w_u));
  Var o = matmul(ssm_apply(w.dss, u), w.w_o);
  if (!is_set(w.w_v)) return matmul(o, w.w_h);
  check_map("w_v", w.w_v.value(), d);
  Var v = relu(matmul(x, w.w_v));
  return matmul(mul(o, v), w.w_h);
}

Tensor gated_ssl_forward(const GatedSslParams& params, const Tensor& x) {
  Tape tape(Tape::Mode::inference);
  auto w = params.map<Var>("", as_constants(tape));
  return gated_ssl_forward(w, tape.constant(x)).value();
}

MechanismKind parse_mechanism(const std::string& name) {
  if (name == "gated-ssl") return MechanismKind::gated_ssl;
  if (name == "self-attention") return MechanismKind::self_attention;
  if (name == "conv1d") return MechanismKind::conv1d;
  if (name == "none") return MechanismKind::none;
  throw ConfigError("unknown mechanism '" + name + "' (expected gated-ssl, self-attention, conv1d or none)");
}

std::string to_string(MechanismKind kind) {
  switch (kind) {
    case MechanismKind::gated_ssl: return "gated-ssl";
    case MechanismKind::self_attention: return "self-attention";
    case MechanismKind::conv1d: return "conv1d";
    case MechanismKind::none: return "none";
  }
  return "unknown";
}

MechanismParams make_mechanism_params(MechanismKind kind, const GatedSslDims& dims, std::mt19937_64& rng) {
  MechanismParams p;
  p.kind = kind;
  switch (kind) {
    case MechanismKind::gated_ssl:
      p.ssl = make_gated_ssl_params(dims, rng);
      break;
    case MechanismKind::self_attention:
      validate(dims);
      p.attention.w_q = random_matrix(dims.d, dims.d_gating, rng);
      p.attention.w_k = random_matrix(dims.d, dims.d_gating, rng);
      p.attention.w_v = random_matrix(dims.d, dims.d_gating, rng);
      p.attention.w_out = random_matrix(dims.d_gating, dims.d_h, rng);
      break;
    case MechanismKind::conv1d:
      p.conv_kernel = random_matrix(dims.d, kConvWindow, rng);
      p.projection = random_matrix(dims.d, dims.d_h, rng);
      break;
    case MechanismKind::none:
      p.projection = random_matrix(dims.d, dims.d_h, rng);
      break;
  }
  return p;
}

Var attend(Var x, Var w_q, Var w_k, Var w_v) {
  Var q = matmul(x, w_q);
  Var k = matmul(x, w_k);
  Var v = matmul(x, w_v);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(q.value().cols()));
  return matmul(softmax_rows(scale(matmul_nt(q, k), inv_sqrt)), v);
}

Var global_mechanism_forward(const MechanismWeights<Var>& w, Var x) {
  switch (w.kind) {
    case MechanismKind::gated_ssl:
      return gated_ssl_forward(w.ssl, x);
    case MechanismKind::self_attention:
      return matmul(attend(x, w.attention.w_q, w.attention.w_k, w.attention.w_v), w.attention.w_out);
    case MechanismKind::conv1d:
      return matmul(causal_conv(x, w.conv_kernel), w.projection);
    case MechanismKind::none:
      return matmul(x, w.projection);
  }
  throw ConfigError("unknown mechanism kind");
}

Tensor global_mechanism_forward(const MechanismParams& params, const Tensor& x) {
  Tape tape(Tape::Mode::inference);
  auto w = params.map<Var>("", as_constants(tape));
  return global_mechanism_forward(w, tape.constant(x)).value();
}

}  // namespace gsmt
