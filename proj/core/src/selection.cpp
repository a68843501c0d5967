#include "gsmt/selection.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gsmt/error.hpp"
#include "gsmt/gated_ssl.hpp"
#include "gsmt/ops.hpp"

namespace gsmt {

SegmentLayout SegmentLayout::make(std::size_t frames, std::size_t patches, std::size_t segments) {
  if (frames == 0 || patches == 0 || segments == 0) throw ConfigError("layout sizes must be positive");
  if (frames % segments != 0) {
    throw ConfigError("frame count " + std::to_string(frames) + " is not a multiple of the segment count " +
                      std::to_string(segments));
  }
  return {frames, patches, segments};
}

std::vector<std::size_t> SegmentLayout::frames_of_segment(std::size_t segment) const {
  std::vector<std::size_t> out(frames_per_segment());
  std::iota(out.begin(), out.end(), segment * frames_per_segment());
  return out;
}

namespace {

void check_rows(std::size_t rows, std::size_t expected, const char* what) {
  if (rows != expected) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(expected) + " rows, got " +
                         std::to_string(rows));
  }
}

// Uniform in (0, 1) from the top 53 bits, independent of library
// distribution implementations.
double open_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

constexpr double kMasked = -1e30;

}  // namespace

Tensor pool_frames(const Tensor& h, const SegmentLayout& layout) {
  check_rows(h.rows(), layout.length(), "pool_frames");
  return ops::max_pool_rows(h, layout.patches);
}

Var pool_frames(Var h, const SegmentLayout& layout) {
  check_rows(h.value().rows(), layout.length(), "pool_frames");
  return max_pool_rows(h, layout.patches);
}

Tensor pool_segments(const Tensor& f, const SegmentLayout& layout) {
  check_rows(f.rows(), layout.frames, "pool_segments");
  return ops::max_pool_rows(f, layout.frames_per_segment());
}

Var pool_segments(Var f, const SegmentLayout& layout) {
  check_rows(f.value().rows(), layout.frames, "pool_segments");
  return max_pool_rows(f, layout.frames_per_segment());
}

Tensor pool_question(const Tensor& w) { return ops::max_pool_rows(w, w.rows()); }

Var pool_question(Var w) { return max_pool_rows(w, w.value().rows()); }

SelectorParams make_selector_params(std::size_t d, std::size_t d_h, std::size_t d_k, std::mt19937_64& rng) {
  return {random_matrix(d, d_k, rng), random_matrix(d_h, d_k, rng), random_matrix(d, d_k, rng),
          random_matrix(d_h, d_k, rng)};
}

TopKPick select_top_k(Var scores, Var rows, std::size_t k, const SelectorOptions& options, std::mt19937_64& rng,
                      bool sort_ascending, const TopKDraw* replay, TopKDraw* record) {
  const Tensor& z = scores.value();
  if (z.rows() != 1) throw DimensionError("select_top_k: scores must be a single row, got " + shape_string(z.shape()));
  const std::size_t n = z.cols();
  check_rows(rows.value().rows(), n, "select_top_k");
  if (k == 0 || k > n) {
    throw ConfigError("cannot select " + std::to_string(k) + " of " + std::to_string(n) + " candidates");
  }
  if (!(options.temperature > 0.0)) throw ConfigError("selector temperature must be positive");

  Tensor noise({1, n});
  std::vector<std::size_t> picks;
  if (replay) {
    if (replay->indices.size() != k || replay->noise.size() != n || replay->soft.shape() != Shape{k, n}) {
      throw ContractError("select_top_k: replayed draw does not match this selection");
    }
    noise = replay->noise;
    picks = replay->indices;
  } else {
    if (options.noise) {
      for (double& g : noise.data()) g = -std::log(-std::log(open_uniform(rng)));
    }
    std::vector<bool> taken(n, false);
    for (std::size_t r = 0; r < k; ++r) {
      std::size_t best = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (best == n || z[i] + noise[i] > z[best] + noise[best]) best = i;
      }
      taken[best] = true;
      picks.push_back(best);
    }
  }

  Tensor offsets({k, n});
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t i = 0; i < n; ++i) offsets(r, i) = noise[i];
    for (std::size_t p = 0; p < r; ++p) offsets(r, picks[p]) = kMasked;
  }
  Tape& tape = scores.tape();
  Var repeated = gather_rows(scores, std::vector<std::size_t>(k, 0));
  Var soft = softmax_rows(scale(add(repeated, tape.constant(std::move(offsets))), 1.0 / options.temperature));
  const Tensor frozen = replay ? replay->soft : soft.value();
  if (record) *record = TopKDraw{picks, noise, frozen};

  if (!sort_ascending) {
    return {select_straight_through(picks, soft, frozen, rows), picks, soft};
  }
  std::vector<std::size_t> order(k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return picks[a] < picks[b]; });
  std::vector<std::size_t> sorted(k);
  for (std::size_t r = 0; r < k; ++r) sorted[r] = picks[order[r]];
  Var soft_sorted = gather_rows(soft, order);
  return {select_straight_through(sorted, soft_sorted, ops::gather_rows(frozen, order), rows), sorted, soft_sorted};
}

SegmentSelection select_segments(Var q, Var segments, Var w_query, Var w_key, std::size_t k,
                                 const SelectorOptions& options, std::mt19937_64& rng, const TopKDraw* replay,
                                 TopKDraw* record) {
  Var query = matmul(q, w_query);
  Var keys = matmul(segments, w_key);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(query.value().cols()));
  Var scores = scale(matmul_nt(query, keys), inv_sqrt);
  TopKPick pick = select_top_k(scores, segments, k, options, rng, true, replay, record);
  return {pick.rows, scores, std::move(pick)};
}

PatchSelection select_patches(Var q, Var h, const SegmentLayout& layout, const std::vector<std::size_t>& frames,
                              Var w_query, Var w_key, std::size_t j, const SelectorOptions& options,
                              std::mt19937_64& rng, const std::vector<TopKDraw>* replay,
                              std::vector<TopKDraw>* record) {
  check_rows(h.value().rows(), layout.length(), "select_patches");
  if (j == 0 || j > layout.patches) {
    throw ConfigError("cannot select " + std::to_string(j) + " of " + std::to_string(layout.patches) +
                      " patches per frame");
  }
  if (replay && replay->size() != frames.size()) {
    throw ContractError("select_patches: replay holds " + std::to_string(replay->size()) + " draws for " +
                        std::to_string(frames.size()) + " frames");
  }
  if (record) record->assign(frames.size(), TopKDraw{});

  Var query = matmul(q, w_query);
  Var keys = matmul(h, w_key);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(query.value().cols()));

  PatchSelection out;
  out.frames = frames;
  std::vector<Var> stacked;
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f] >= layout.frames) throw DimensionError("select_patches: frame index out of range");
    std::vector<std::size_t> patch_rows(layout.patches);
    std::iota(patch_rows.begin(), patch_rows.end(), frames[f] * layout.patches);
    Var frame_keys = gather_rows(keys, patch_rows);
    Var frame_h = gather_rows(h, patch_rows);
    Var scores = scale(matmul_nt(query, frame_keys), inv_sqrt);
    TopKPick pick = select_top_k(scores, frame_h, j, options, rng, false, replay ? &(*replay)[f] : nullptr,
                                 record ? &(*record)[f] : nullptr);
    stacked.push_back(pick.rows);
    out.picks.push_back(std::move(pick));
  }
  out.selected = concat_rows(stacked);
  return out;
}

}  // namespace gsmt
