#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gsmt/autodiff.hpp"
#include "gsmt/gated_ssl.hpp"
#include "gsmt/selection.hpp"
#include "gsmt/tensor.hpp"
#include "gsmt/weights.hpp"

namespace gsmt {

enum class SslPosition { pre_selection, penultimate };

SslPosition parse_ssl_position(const std::string& name);
std::string to_string(SslPosition position);

struct GsmtConfig {
  std::size_t d = 64;         // token width
  std::size_t d_state = 64;   // d_S
  std::size_t d_h = 64;       // visual hidden width
  std::size_t d_gating = 16;  // gate width, also the mechanism attention width
  std::size_t d_k = 64;       // selector query/key width
  std::size_t k = 4;          // selected segments
  std::size_t j = 12;         // selected patches per frame
  std::size_t segments = 8;   // I
  std::size_t layers = 2;     // N_L
  double gamma = 0.005;       // weight of the alignment term
  double temperature = 1.0;   // Gumbel-softmax temperature while training
  double logit_scale = 10.0;  // cosine scores are multiplied by this before cross-entropy
  MechanismKind mechanism = MechanismKind::gated_ssl;
  bool gating = true;
  SslPosition ssl_position = SslPosition::pre_selection;
  std::size_t c3_layer = 0;    // 1-based attention layer for the alignment term; 0 = last
  std::size_t answer_dim = 0;  // candidate embedding width; 0 = d

  void validate() const;
  std::size_t effective_answer_dim() const noexcept { return answer_dim ? answer_dim : d; }
  std::size_t effective_c3_layer() const noexcept { return c3_layer ? c3_layer : layers; }

  // d_S = d = d_h = 512, d_gating = 128, k = 4, j = 12, I = 8, N_L = 2, gamma = 0.005.
  static GsmtConfig reference();
};

struct AnswerSet {
  Tensor candidates;  // [|A| x answer_dim]
  std::size_t groundtruth = 0;
};

struct Sample {
  Tensor features;  // [T*N x d], frame-major
  std::size_t frames = 0;
  std::size_t patches = 0;
  Tensor question;  // [M x d]
  AnswerSet answers;
};

void validate(const Sample& sample, const GsmtConfig& config);

template <class T>
struct FusionWeights {
  T segment;  // [d_h x d]
  T patch;    // [d_h x d]
  T word;     // [d x d]

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    detail::visit_field(prefix + "segment", segment, f);
    detail::visit_field(prefix + "patch", patch, f);
    detail::visit_field(prefix + "word", word, f);
  }

  template <class U, class F>
  FusionWeights<U> map(const std::string& prefix, F&& f) const {
    return {detail::map_field<U>(prefix + "segment", segment, f), detail::map_field<U>(prefix + "patch", patch, f),
            detail::map_field<U>(prefix + "word", word, f)};
  }
};

template <class T>
struct AttentionLayerWeights {
  T w_q, w_k, w_v;  // [d x d]

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    detail::visit_field(prefix + "w_q", w_q, f);
    detail::visit_field(prefix + "w_k", w_k, f);
    detail::visit_field(prefix + "w_v", w_v, f);
  }

  template <class U, class F>
  AttentionLayerWeights<U> map(const std::string& prefix, F&& f) const {
    return {detail::map_field<U>(prefix + "w_q", w_q, f), detail::map_field<U>(prefix + "w_k", w_k, f),
            detail::map_field<U>(prefix + "w_v", w_v, f)};
  }
};

template <class T>
struct ModelWeights {
  MechanismWeights<T> global;
  SelectorWeights<T> selector;
  FusionWeights<T> fusion;
  // One entry per fusion layer; the penultimate entry is empty when the
  // state-space layer takes that slot.
  std::vector<AttentionLayerWeights<T>> layers;
  GatedSslWeights<T> layer_ssl;

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    global.visit(prefix + "global.", f);
    selector.visit(prefix + "selector.", f);
    fusion.visit(prefix + "fusion.", f);
    for (std::size_t i = 0; i < layers.size(); ++i) layers[i].visit(prefix + "layer" + std::to_string(i) + ".", f);
    layer_ssl.visit(prefix + "layer_ssl.", f);
  }

  template <class U, class F>
  ModelWeights<U> map(const std::string& prefix, F&& f) const {
    ModelWeights<U> out;
    out.global = global.template map<U>(prefix + "global.", f);
    out.selector = selector.template map<U>(prefix + "selector.", f);
    out.fusion = fusion.template map<U>(prefix + "fusion.", f);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out.layers.push_back(layers[i].template map<U>(prefix + "layer" + std::to_string(i) + ".", f));
    }
    out.layer_ssl = layer_ssl.template map<U>(prefix + "layer_ssl.", f);
    return out;
  }
};

using ModelParams = ModelWeights<Tensor>;

class GsmtModel {
 public:
  GsmtModel(GsmtConfig config, std::uint64_t seed);
  GsmtModel(GsmtConfig config, ModelParams params, Tensor answer_adapter);

  const GsmtConfig& config() const noexcept { return config_; }
  ModelParams& params() noexcept { return params_; }
  const ModelParams& params() const noexcept { return params_; }
  // Fixed (untrained) map from candidate embeddings to width d.
  const Tensor& answer_adapter() const noexcept { return answer_adapter_; }

  std::size_t parameter_count() const;

 private:
  GsmtConfig config_;
  ModelParams params_;
  Tensor answer_adapter_;
};

// Token sequence [S_st | H_st | words] after projection, plus the outputs of
// every fusion layer.
struct FusedTokens {
  Var tokens;
  std::size_t segment_count = 0;
  std::size_t patch_count = 0;
  std::size_t word_count = 0;
  std::vector<Var> layers;  // J^(1) .. J^(N_L)

  std::size_t patch_begin() const noexcept { return segment_count; }
  std::size_t word_begin() const noexcept { return segment_count + patch_count; }
  std::size_t size() const noexcept { return segment_count + patch_count + word_count; }
};

FusedTokens fuse_tokens(Var s_st, Var h_st, Var words, const FusionWeights<Var>& w);

// N_L residual single-head self-attention layers (J + attend(J)); when
// `layer_ssl` is populated it replaces the penultimate layer as J + SSL(J).
void multimodal_attention(FusedTokens& fused, const std::vector<AttentionLayerWeights<Var>>& layers,
                          const GatedSslWeights<Var>& layer_ssl);

// Elementwise max across layers, then across tokens: [1 x d].
Var pool_layers(const std::vector<Var>& layer_outputs);

// Cosine similarity of j_o [1 x d] against every candidate row [|A| x d].
Var score_answers(Var j_o, Var candidates);
// Index of the highest score; ties go to the lowest index.
std::size_t argmax_index(std::span<const double> scores);

struct C3Matrices {
  Var vw, wv, vv, ww;
};

C3Matrices c3_matrices(Var j_v, Var j_w);

// Mean over rows of KL(P||Q) + KL(Q||P), logs clamped at eps.
Var symmetric_kl_rows(Var p, Var q, double eps = 1e-8);

// m-KL(softmax(G_vw G_ww G_vw^T), softmax(G_vv)), softmax row-wise.
Var c3_loss(Var g_vv, Var g_vw, Var g_ww);

// cross_entropy(logits, label) + gamma * c3.
Var total_loss(Var logits, std::size_t label, Var c3, double gamma);

struct ForwardOptions {
  bool training = false;          // Gumbel noise on and temperature from the config
  std::uint64_t noise_seed = 0;
  const SelectionTrace* replay = nullptr;
};

struct ForwardPass {
  Var loss, ce, c3;
  Var logits;  // logit_scale * scores
  Var scores;  // cosine similarities
  std::size_t predicted = 0;
  SelectionResult selection;
  SelectionTrace trace;
  FusedTokens fused;
};

ForwardPass forward(const GsmtModel& model, const ModelWeights<Var>& weights, const Sample& sample,
                    const ForwardOptions& options);

struct StepStats {
  double loss = 0.0;
  double ce = 0.0;
  double c3 = 0.0;
  std::size_t correct = 0;
  std::size_t count = 0;
};

// Averaged gradient over the batch, then p -= lr * g. Returns the pre-update
// losses. Throws NumericError naming the first non-finite tape node.
StepStats train_step(GsmtModel& model, std::span<const Sample> batch, double learning_rate, std::uint64_t noise_seed);

// Noise-free loss statistics without updating.
StepStats evaluate_loss(const GsmtModel& model, std::span<const Sample> batch);

// Noise-free prediction on an inference tape.
std::size_t predict(const GsmtModel& model, const Sample& sample);

// Per-sample noise seed derived from a step seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) noexcept;

}  // namespace gsmt
