#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "gsmt/autodiff.hpp"
#include "gsmt/tensor.hpp"
#include "gsmt/weights.hpp"

namespace gsmt {

// Geometry of a clip: T frames of N patches, grouped into I segments of
// consecutive frames. T must be a multiple of I.
struct SegmentLayout {
  std::size_t frames = 0;    // T
  std::size_t patches = 0;   // N
  std::size_t segments = 0;  // I

  static SegmentLayout make(std::size_t frames, std::size_t patches, std::size_t segments);

  std::size_t length() const noexcept { return frames * patches; }                   // L
  std::size_t frames_per_segment() const noexcept { return frames / segments; }      // N_f
  std::size_t patches_per_segment() const noexcept { return length() / segments; }  // N_p

  // Frames {b N_f, ..., b N_f + N_f - 1}.
  std::vector<std::size_t> frames_of_segment(std::size_t segment) const;
};

// Max over each frame's patches: [L x d_h] -> [T x d_h].
Tensor pool_frames(const Tensor& h, const SegmentLayout& layout);
Var pool_frames(Var h, const SegmentLayout& layout);

// Max over each segment's frames: [T x d_h] -> [I x d_h].
Tensor pool_segments(const Tensor& f, const SegmentLayout& layout);
Var pool_segments(Var f, const SegmentLayout& layout);

// Max over words: [M x d] -> [1 x d].
Tensor pool_question(const Tensor& w);
Var pool_question(Var w);

template <class T>
struct SelectorWeights {
  T segment_query;  // [d x d_k]
  T segment_key;    // [d_h x d_k]
  T patch_query;    // [d x d_k]
  T patch_key;      // [d_h x d_k]

  template <class F>
  void visit(const std::string& prefix, F&& f) {
    detail::visit_field(prefix + "segment_query", segment_query, f);
    detail::visit_field(prefix + "segment_key", segment_key, f);
    detail::visit_field(prefix + "patch_query", patch_query, f);
    detail::visit_field(prefix + "patch_key", patch_key, f);
  }

  template <class U, class F>
  SelectorWeights<U> map(const std::string& prefix, F&& f) const {
    return {detail::map_field<U>(prefix + "segment_query", segment_query, f),
            detail::map_field<U>(prefix + "segment_key", segment_key, f),
            detail::map_field<U>(prefix + "patch_query", patch_query, f),
            detail::map_field<U>(prefix + "patch_key", patch_key, f)};
  }
};

using SelectorParams = SelectorWeights<Tensor>;

SelectorParams make_selector_params(std::size_t d, std::size_t d_h, std::size_t d_k, std::mt19937_64& rng);

struct SelectorOptions {
  double temperature = 1.0;
  bool noise = true;  // Gumbel perturbation; off for evaluation
};

// One top-k draw, kept so a forward pass can be replayed with the same
// discrete choice (finite-difference checks of the straight-through path).
struct TopKDraw {
  std::vector<std::size_t> indices;  // draw order
  Tensor noise;                      // [1 x n] Gumbel sample (zeros when disabled)
  Tensor soft;                       // [k x n] per-draw softmax rows at selection time
};

struct TopKPick {
  Var rows;                          // [k x d] selected rows, in `indices` order
  std::vector<std::size_t> indices;  // ascending when sorted, else draw order
  Var soft;                          // [k x n], rows aligned with `indices`
};

// k successive Gumbel-max draws without replacement over `scores` [1 x n]
// (pre-softmax logits), each masking earlier picks. Forward value is the
// hard pick of `rows`; gradient reaches the scores through the per-draw
// softmax rows (straight-through). Ties go to the lowest index.
//
// When `replay` is given its indices, noise and frozen soft rows are reused;
// `record` receives the draw.
TopKPick select_top_k(Var scores, Var rows, std::size_t k, const SelectorOptions& options, std::mt19937_64& rng,
                      bool sort_ascending, const TopKDraw* replay = nullptr, TopKDraw* record = nullptr);

struct SelectionTrace {
  TopKDraw segments;
  std::vector<TopKDraw> patches;  // one per selected frame
};

struct SelectionResult {
  std::vector<std::size_t> segment_indices;               // B, ascending
  std::vector<std::size_t> frames;                        // frames of B in temporal order
  std::vector<std::vector<std::size_t>> patch_indices;    // per frame, descending weight
  Tensor segment_soft;                                    // [k x I]
  std::vector<Tensor> patch_soft;                         // per frame, [j x N]
};

struct SegmentSelection {
  Var selected;  // S_st [k x d_h]
  Var scores;    // [1 x I]
  TopKPick pick;
};

// Q = q W_q, K = S W_k, scores = Q K^T / sqrt(d_k), then top-k.
SegmentSelection select_segments(Var q, Var segments, Var w_query, Var w_key, std::size_t k,
                                 const SelectorOptions& options, std::mt19937_64& rng,
                                 const TopKDraw* replay = nullptr, TopKDraw* record = nullptr);

struct PatchSelection {
  Var selected;  // H_st [frames * j x d_h]
  std::vector<std::size_t> frames;
  std::vector<TopKPick> picks;
};

// Top-j patches of every frame in `frames`, stacked in frame order.
PatchSelection select_patches(Var q, Var h, const SegmentLayout& layout, const std::vector<std::size_t>& frames,
                              Var w_query, Var w_key, std::size_t j, const SelectorOptions& options,
                              std::mt19937_64& rng, const std::vector<TopKDraw>* replay = nullptr,
                              std::vector<TopKDraw>* record = nullptr);

}  // namespace gsmt
