#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gsmt/model.hpp"
#include "gsmt/tensor.hpp"

namespace gsmt {

enum class TaskKind { global_majority, temporal_order };

TaskKind parse_task(const std::string& name);
std::string to_string(TaskKind task);

struct SyntheticSpec {
  TaskKind task = TaskKind::global_majority;
  std::size_t frames = 16;          // T
  std::size_t patches = 16;         // N
  std::size_t segments = 8;         // I
  std::size_t window_segments = 4;  // k: a window is any k of the I segments
  std::size_t vocabulary = 5;       // V colors
  std::size_t dim = 64;             // feature width
  std::size_t words = 4;            // question length M
  double noise = 0.1;               // per-patch Gaussian sigma
  std::size_t samples = 2000;
  std::size_t eval_samples = 500;
  std::uint64_t seed = 7;
  // global-majority rejection: top count minus runner-up at most this (0 = any),
  // and at least this fraction of windows must not show the global label as
  // their unique majority.
  std::size_t max_margin = 1;
  double min_misleading = 0.5;

  void validate() const;
};

struct SyntheticSplit {
  std::vector<Sample> samples;
  // global-majority: color id per frame. temporal-order: per frame, a color id
  // in [0, V), or V for event A and V+1 for event B.
  std::vector<std::vector<std::size_t>> latents;
};

struct SyntheticData {
  Tensor answers;   // [|A| x dim], shared by all samples
  Tensor question;  // [M x dim], shared by all samples
  SyntheticSplit train;
  SyntheticSplit eval;
};

// Deterministic in the spec. Every emitted value is representable in binary32.
// Throws ConfigError when a sample cannot satisfy the rejection constraint
// within 10^6 draws.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

// Label recomputed from latents (majority color, or 0 when A precedes B).
std::size_t label_from_latents(const SyntheticSpec& spec, const std::vector<std::size_t>& latents);

// Fraction of the C(I, k) segment windows whose local counts do not have the
// global majority as their unique maximum.
double misleading_window_fraction(const SyntheticSpec& spec, const std::vector<std::size_t>& colors);

}  // namespace gsmt
