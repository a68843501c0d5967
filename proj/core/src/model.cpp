#include "gsmt/model.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "gsmt/error.hpp"
#include "gsmt/ops.hpp"

namespace gsmt {

SslPosition parse_ssl_position(const std::string& name) {
  if (name == "pre-selection") return SslPosition::pre_selection;
  if (name == "penultimate") return SslPosition::penultimate;
  throw ConfigError("unknown ssl position '" + name + "' (expected pre-selection or penultimate)");
}

std::string to_string(SslPosition position) {
  return position == SslPosition::pre_selection ? "pre-selection" : "penultimate";
}

void GsmtConfig::validate() const {
  if (d == 0 || d_state == 0 || d_h == 0 || d_gating == 0 || d_k == 0) {
    throw ConfigError("model widths must be positive");
  }
  if (k == 0 || j == 0 || segments == 0) throw ConfigError("k, j and the segment count must be positive");
  if (k > segments) {
    throw ConfigError("k (" + std::to_string(k) + ") exceeds the segment count (" + std::to_string(segments) + ")");
  }
  if (layers == 0) throw ConfigError("at least one attention layer is required");
  if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ConfigError("gamma must be a finite non-negative number");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ConfigError("temperature must be positive");
  if (!(logit_scale > 0.0) || !std::isfinite(logit_scale)) throw ConfigError("logit_scale must be positive");
  if (ssl_position == SslPosition::penultimate && layers < 2) {
    throw ConfigError("ssl_position = penultimate needs at least 2 layers");
  }
  if (c3_layer > layers) {
    throw ConfigError("c3_layer (" + std::to_string(c3_layer) + ") exceeds the layer count (" +
                      std::to_string(layers) + ")");
  }
  if (ssl_position == SslPosition::penultimate) {
    gsmt::validate(GatedSslDims{d, d_state, d, d_gating, gating});
  } else if (mechanism == MechanismKind::gated_ssl || mechanism == MechanismKind::self_attention) {
    gsmt::validate(GatedSslDims{d, d_state, d_h, d_gating, gating});
  }
}

GsmtConfig GsmtConfig::reference() {
  GsmtConfig c;
  c.d = c.d_state = c.d_h = c.d_k = 512;
  c.d_gating = 128;
  return c;
}

void validate(const Sample& sample, const GsmtConfig& config) {
  if (sample.frames == 0 || sample.patches == 0) throw DimensionError("sample has no frames or patches");
  const Shape expected{sample.frames * sample.patches, config.d};
  if (sample.features.shape() != expected) {
    throw DimensionError("features have shape " + shape_string(sample.features.shape()) + ", expected " +
                         shape_string(expected));
  }
  if (sample.question.rank() != 2 || sample.question.cols() != config.d) {
    throw DimensionError("question has shape " + shape_string(sample.question.shape()) + ", expected [M x " +
                         std::to_string(config.d) + "]");
  }
  const Tensor& a = sample.answers.candidates;
  if (a.rank() != 2 || a.rows() < 2 || a.cols() != config.effective_answer_dim()) {
    throw DimensionError("answer candidates have shape " + shape_string(a.shape()) + ", expected [>=2 x " +
                         std::to_string(config.effective_answer_dim()) + "]");
  }
  if (sample.answers.groundtruth >= a.rows()) {
    throw ContractError("groundtruth index " + std::to_string(sample.answers.groundtruth) + " out of range for " +
                        std::to_string(a.rows()) + " candidates");
  }
}

GsmtModel::GsmtModel(GsmtConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const auto& c = config_;
  const bool penultimate = c.ssl_position == SslPosition::penultimate;
  const MechanismKind global = penultimate ? MechanismKind::none : c.mechanism;
  params_.global = make_mechanism_params(global, GatedSslDims{c.d, c.d_state, c.d_h, c.d_gating, c.gating}, rng);
  params_.selector = make_selector_params(c.d, c.d_h, c.d_k, rng);
  params_.fusion = {random_matrix(c.d_h, c.d, rng), random_matrix(c.d_h, c.d, rng), random_matrix(c.d, c.d, rng)};
  params_.layers.resize(c.layers);
  for (std::size_t i = 0; i < c.layers; ++i) {
    if (penultimate && i == c.layers - 2) continue;
    params_.layers[i] = {random_matrix(c.d, c.d, rng), random_matrix(c.d, c.d, rng), random_matrix(c.d, c.d, rng)};
  }
  if (penultimate) params_.layer_ssl = make_gated_ssl_params({c.d, c.d_state, c.d, c.d_gating, c.gating}, rng);
  answer_adapter_ =
      c.effective_answer_dim() == c.d ? Tensor::identity(c.d) : random_matrix(c.effective_answer_dim(), c.d, rng);
}

GsmtModel::GsmtModel(GsmtConfig config, ModelParams params, Tensor answer_adapter)
    : config_(std::move(config)), params_(std::move(params)), answer_adapter_(std::move(answer_adapter)) {
  config_.validate();
  if (params_.layers.size() != config_.layers) {
    throw ConfigError("parameters hold " + std::to_string(params_.layers.size()) + " layers, config says " +
                      std::to_string(config_.layers));
  }
  const Shape adapter{config_.effective_answer_dim(), config_.d};
  if (answer_adapter_.shape() != adapter) {
    throw DimensionError("answer adapter has shape " + shape_string(answer_adapter_.shape()) + ", expected " +
                         shape_string(adapter));
  }
}

std::size_t GsmtModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named_tensors(const_cast<ModelParams&>(params_))) n += t->size();
  return n;
}

FusedTokens fuse_tokens(Var s_st, Var h_st, Var words, const FusionWeights<Var>& w) {
  auto check = [](const char* span, const Tensor& x, const Tensor& map) {
    if (x.cols() != map.rows()) {
      throw DimensionError(std::string("fuse_tokens: ") + span + " width " + std::to_string(x.cols()) +
                           " does not match projection input " + std::to_string(map.rows()));
    }
  };
  check("segment", s_st.value(), w.segment.value());
  check("patch", h_st.value(), w.patch.value());
  check("word", words.value(), w.word.value());
  FusedTokens out;
  out.segment_count = s_st.value().rows();
  out.patch_count = h_st.value().rows();
  out.word_count = words.value().rows();
  out.tokens = concat_rows({matmul(s_st, w.segment), matmul(h_st, w.patch), matmul(words, w.word)});
  return out;
}

void multimodal_attention(FusedTokens& fused, const std::vector<AttentionLayerWeights<Var>>& layers,
                          const GatedSslWeights<Var>& layer_ssl) {
  if (layers.empty()) throw ConfigError("at least one attention layer is required");
  fused.layers.clear();
  Var j = fused.tokens;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (is_set(l.w_q)) {
      j = add(j, attend(j, l.w_q, l.w_k, l.w_v));
    } else if (is_set(layer_ssl.w_u)) {
      j = add(j, gated_ssl_forward(layer_ssl, j));
    } else {
      throw ContractError("layer " + std::to_string(i) + " has no weights");
    }
    fused.layers.push_back(j);
  }
}

Var pool_layers(const std::vector<Var>& layer_outputs) {
  if (layer_outputs.empty()) throw ContractError("pool_layers needs at least one layer");
  Var m = layer_outputs.front();
  for (std::size_t i = 1; i < layer_outputs.size(); ++i) m = maximum(m, layer_outputs[i]);
  return max_pool_rows(m, m.value().rows());
}

Var score_answers(Var j_o, Var candidates) {
  if (j_o.value().rows() != 1 || j_o.value().cols() != candidates.value().cols()) {
    throw DimensionError("score_answers: pooled vector " + shape_string(j_o.value().shape()) +
                         " does not match candidates " + shape_string(candidates.value().shape()));
  }
  return matmul_nt(normalize_rows(j_o), normalize_rows(candidates));
}

std::size_t argmax_index(std::span<const double> scores) {
  if (scores.empty()) throw ContractError("argmax of an empty score list");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

C3Matrices c3_matrices(Var j_v, Var j_w) {
  if (j_v.value().cols() != j_w.value().cols()) {
    throw DimensionError("c3_matrices: span widths differ (" + std::to_string(j_v.value().cols()) + " vs " +
                         std::to_string(j_w.value().cols()) + ")");
  }
  return {matmul_nt(j_v, j_w), matmul_nt(j_w, j_v), matmul_nt(j_v, j_v), matmul_nt(j_w, j_w)};
}

Var symmetric_kl_rows(Var p, Var q, double eps) {
  if (p.value().shape() != q.value().shape()) {
    throw DimensionError("symmetric_kl_rows: shapes " + shape_string(p.value().shape()) + " and " +
                         shape_string(q.value().shape()));
  }
  // sum (P - Q)(log P - log Q) = KL(P||Q) + KL(Q||P)
  Var terms = mul(sub(p, q), sub(log_clamped(p, eps), log_clamped(q, eps)));
  return scale(sum(terms), 1.0 / static_cast<double>(p.value().rows()));
}

Var c3_loss(Var g_vv, Var g_vw, Var g_ww) {
  Var r_vv = matmul_nt(matmul(g_vw, g_ww), g_vw);
  if (r_vv.value().shape() != g_vv.value().shape()) {
    throw DimensionError("c3_loss: R_vv " + shape_string(r_vv.value().shape()) + " vs G_vv " +
                         shape_string(g_vv.value().shape()));
  }
  return symmetric_kl_rows(softmax_rows(r_vv), softmax_rows(g_vv));
}

Var total_loss(Var logits, std::size_t label, Var c3, double gamma) {
  if (!(gamma >= 0.0)) throw ConfigError("gamma must be non-negative");
  return add(cross_entropy(logits, label), scale(c3, gamma));
}

namespace {

std::vector<std::size_t> span_rows(std::size_t begin, std::size_t count) {
  std::vector<std::size_t> out(count);
  std::iota(out.begin(), out.end(), begin);
  return out;
}

}  // namespace

ForwardPass forward(const GsmtModel& model, const ModelWeights<Var>& weights, const Sample& sample,
                    const ForwardOptions& options) {
  const GsmtConfig& cfg = model.config();
  validate(sample, cfg);
  Tape& tape = weights.fusion.word.tape();
  const SegmentLayout layout = SegmentLayout::make(sample.frames, sample.patches, cfg.segments);

  Var x = tape.constant(sample.features);
  Var words = tape.constant(sample.question);
  Var h = global_mechanism_forward(weights.global, x);
  Var segments = pool_segments(pool_frames(h, layout), layout);
  Var q = pool_question(words);

  const SelectorOptions selector{cfg.temperature, options.training};
  std::mt19937_64 rng(options.noise_seed);
  const SelectionTrace* replay = options.replay;
  ForwardPass out;
  SegmentSelection seg = select_segments(q, segments, weights.selector.segment_query, weights.selector.segment_key,
                                         cfg.k, selector, rng, replay ? &replay->segments : nullptr,
                                         &out.trace.segments);
  std::vector<std::size_t> frames;
  for (std::size_t b : seg.pick.indices) {
    for (std::size_t f : layout.frames_of_segment(b)) frames.push_back(f);
  }
  PatchSelection patches = select_patches(q, h, layout, frames, weights.selector.patch_query,
                                          weights.selector.patch_key, cfg.j, selector, rng,
                                          replay ? &replay->patches : nullptr, &out.trace.patches);

  out.fused = fuse_tokens(seg.selected, patches.selected, words, weights.fusion);
  multimodal_attention(out.fused, weights.layers, weights.layer_ssl);

  Var candidates = tape.constant(ops::matmul(sample.answers.candidates, model.answer_adapter()));
  out.scores = score_answers(pool_layers(out.fused.layers), candidates);
  out.logits = scale(out.scores, cfg.logit_scale);

  Var layer = out.fused.layers.at(cfg.effective_c3_layer() - 1);
  Var j_v = gather_rows(layer, span_rows(out.fused.patch_begin(), out.fused.patch_count));
  Var j_w = gather_rows(layer, span_rows(out.fused.word_begin(), out.fused.word_count));
  C3Matrices g = c3_matrices(j_v, j_w);
  out.c3 = c3_loss(g.vv, g.vw, g.ww);
  out.ce = cross_entropy(out.logits, sample.answers.groundtruth);
  out.loss = add(out.ce, scale(out.c3, cfg.gamma));
  out.predicted = argmax_index(out.scores.value().data());

  out.selection.segment_indices = seg.pick.indices;
  out.selection.frames = frames;
  out.selection.segment_soft = seg.pick.soft.value();
  for (const TopKPick& p : patches.picks) {
    out.selection.patch_indices.push_back(p.indices);
    out.selection.patch_soft.push_back(p.soft.value());
  }
  return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

namespace {

[[noreturn]] void report_non_finite(const Tape& tape) {
  auto bad = tape.first_non_finite();
  if (bad) {
    throw NumericError("non-finite loss; first non-finite value at tape node " + std::to_string(bad->id) + " (" +
                       op_name(bad->kind) + ")");
  }
  throw NumericError("non-finite loss");
}

void require_batch(std::span<const Sample> batch) {
  if (batch.empty()) throw ContractError("empty batch");
}

}  // namespace

StepStats train_step(GsmtModel& model, std::span<const Sample> batch, double learning_rate,
                     std::uint64_t noise_seed) {
  require_batch(batch);
  if (!std::isfinite(learning_rate)) throw ConfigError("learning rate must be finite");
  Tape tape(Tape::Mode::record);
  auto weights = model.params().map<Var>("", as_parameters(tape));

  StepStats stats;
  std::vector<Var> losses;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ForwardOptions options;
    options.training = true;
    options.noise_seed = mix_seed(noise_seed, i);
    ForwardPass pass = forward(model, weights, batch[i], options);
    const double loss = pass.loss.value()[0];
    if (!std::isfinite(loss)) report_non_finite(tape);
    stats.loss += loss;
    stats.ce += pass.ce.value()[0];
    stats.c3 += pass.c3.value()[0];
    stats.correct += pass.predicted == batch[i].answers.groundtruth ? 1 : 0;
    losses.push_back(pass.loss);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  stats.loss *= inv;
  stats.ce *= inv;
  stats.c3 *= inv;
  stats.count = batch.size();

  Var total = losses.front();
  for (std::size_t i = 1; i < losses.size(); ++i) total = add(total, losses[i]);
  total = scale(total, inv);
  tape.backward(total);
  if (learning_rate == 0.0) return stats;

  ModelParams grads = weights.map<Tensor>("", gradients_of());
  auto params = named_tensors(model.params());
  auto gradients = named_tensors(grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<double> p = params[i].second->data();
    std::span<const double> g = gradients[i].second->data();
    for (std::size_t e = 0; e < p.size(); ++e) p[e] -= learning_rate * g[e];
  }
  return stats;
}

StepStats evaluate_loss(const GsmtModel& model, std::span<const Sample> batch) {
  require_batch(batch);
  StepStats stats;
  for (const Sample& s : batch) {
    Tape tape(Tape::Mode::inference);
    auto weights = model.params().map<Var>("", as_constants(tape));
    ForwardPass pass = forward(model, weights, s, {});
    stats.loss += pass.loss.value()[0];
    stats.ce += pass.ce.value()[0];
    stats.c3 += pass.c3.value()[0];
    stats.correct += pass.predicted == s.answers.groundtruth ? 1 : 0;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  stats.loss *= inv;
  stats.ce *= inv;
  stats.c3 *= inv;
  stats.count = batch.size();
  return stats;
}

std::size_t predict(const GsmtModel& model, const Sample& sample) {
  Tape tape(Tape::Mode::inference);
  auto weights = model.params().map<Var>("", as_constants(tape));
  return forward(model, weights, sample, {}).predicted;
}

}  // namespace gsmt
