#include "gsmt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "gsmt/error.hpp"

namespace gsmt {

TaskKind parse_task(const std::string& name) {
  if (name == "global-majority") return TaskKind::global_majority;
  if (name == "temporal-order") return TaskKind::temporal_order;
  throw ConfigError("unknown task '" + name + "' (expected global-majority or temporal-order)");
}

std::string to_string(TaskKind task) {
  return task == TaskKind::global_majority ? "global-majority" : "temporal-order";
}

void SyntheticSpec::validate() const {
  if (frames == 0 || patches == 0 || segments == 0 || dim == 0 || words == 0) {
    throw ConfigError("synthetic sizes must be positive");
  }
  if (frames % segments != 0) {
    throw ConfigError("T (" + std::to_string(frames) + ") must be a multiple of I (" + std::to_string(segments) +
                      ")");
  }
  if (window_segments == 0 || window_segments > segments) throw ConfigError("window size must be in [1, I]");
  if (vocabulary < 2) throw ConfigError("vocabulary size must be at least 2");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise sigma must be non-negative");
  if (!(min_misleading >= 0.0 && min_misleading <= 1.0)) throw ConfigError("min_misleading must be in [0, 1]");
  if (task == TaskKind::temporal_order && segments < 2) throw ConfigError("temporal-order needs at least 2 segments");
}

namespace {

constexpr std::size_t kMaxDraws = 1'000'000;

double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

// Gram-Schmidt on Gaussian draws: the first min(rows, dim) rows are
// orthonormal, so no color leaks into another's score.
Tensor unit_rows(std::size_t rows, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor out({rows, dim});
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = out.row(r);
    for (double& v : row) v = n(rng);
    for (std::size_t q = 0; q < std::min(r, dim); ++q) {
      auto prev = out.row(q);
      double dot = 0.0;
      for (std::size_t c = 0; c < dim; ++c) dot += row[c] * prev[c];
      for (std::size_t c = 0; c < dim; ++c) row[c] -= dot * prev[c];
    }
    double norm = 0.0;
    for (double v : row) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : row) v /= norm;
  }
  for (double& v : out.data()) v = f32(v);
  return out;
}

// Index of the unique maximum, or counts.size() on a tie.
std::size_t unique_argmax(const std::vector<std::size_t>& counts) {
  std::size_t best = 0;
  bool tie = false;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] > counts[best]) {
      best = i;
      tie = false;
    } else if (counts[i] == counts[best]) {
      tie = true;
    }
  }
  return tie ? counts.size() : best;
}

std::vector<std::size_t> color_counts(const std::vector<std::size_t>& colors, std::size_t vocabulary) {
  std::vector<std::size_t> counts(vocabulary, 0);
  for (std::size_t c : colors) ++counts.at(c);
  return counts;
}

Tensor render(const SyntheticSpec& spec, const std::vector<std::size_t>& symbols, const Tensor& palette,
              std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, spec.noise);
  Tensor features({spec.frames * spec.patches, spec.dim});
  for (std::size_t t = 0; t < spec.frames; ++t) {
    for (std::size_t p = 0; p < spec.patches; ++p) {
      auto row = features.row(t * spec.patches + p);
      for (std::size_t c = 0; c < spec.dim; ++c) {
        const double jitter = spec.noise > 0.0 ? n(rng) : 0.0;
        row[c] = f32(palette(symbols[t], c) + jitter);
      }
    }
  }
  return features;
}

std::vector<std::size_t> draw_majority(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> color(0, spec.vocabulary - 1);
  std::vector<std::size_t> colors(spec.frames);
  for (std::size_t attempt = 0; attempt < kMaxDraws; ++attempt) {
    for (auto& c : colors) c = color(rng);
    auto counts = color_counts(colors, spec.vocabulary);
    const std::size_t top = unique_argmax(counts);
    if (top == counts.size()) continue;
    std::sort(counts.begin(), counts.end(), std::greater<>());
    if (spec.max_margin != 0 && counts[0] - counts[1] > spec.max_margin) continue;
    if (misleading_window_fraction(spec, colors) < spec.min_misleading) continue;
    return colors;
  }
  throw ConfigError("global-majority: no sample satisfied the rejection constraint after 10^6 draws");
}

std::vector<std::size_t> draw_order(const SyntheticSpec& spec, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> color(0, spec.vocabulary - 1);
  std::uniform_int_distribution<std::size_t> segment(0, spec.segments - 1);
  const std::size_t per = spec.frames / spec.segments;
  std::uniform_int_distribution<std::size_t> offset(0, per - 1);
  std::vector<std::size_t> symbols(spec.frames);
  for (auto& s : symbols) s = color(rng);
  const std::size_t sa = segment(rng);
  std::size_t sb = segment(rng);
  while (sb == sa) sb = segment(rng);
  symbols[sa * per + offset(rng)] = spec.vocabulary;
  symbols[sb * per + offset(rng)] = spec.vocabulary + 1;
  return symbols;
}

void fill_split(const SyntheticSpec& spec, std::size_t count, const Tensor& palette, const SyntheticData& shared,
                std::mt19937_64& rng, SyntheticSplit& split) {
  for (std::size_t i = 0; i < count; ++i) {
    auto latents = spec.task == TaskKind::global_majority ? draw_majority(spec, rng) : draw_order(spec, rng);
    Sample s;
    s.features = render(spec, latents, palette, rng);
    s.frames = spec.frames;
    s.patches = spec.patches;
    s.question = shared.question;
    s.answers = {shared.answers, label_from_latents(spec, latents)};
    split.samples.push_back(std::move(s));
    split.latents.push_back(std::move(latents));
  }
}

}  // namespace

double misleading_window_fraction(const SyntheticSpec& spec, const std::vector<std::size_t>& colors) {
  const std::size_t global = unique_argmax(color_counts(colors, spec.vocabulary));
  const std::size_t per = spec.frames / spec.segments;
  std::vector<bool> mask(spec.segments, false);
  std::fill(mask.begin(), mask.begin() + static_cast<std::ptrdiff_t>(spec.window_segments), true);
  std::size_t windows = 0;
  std::size_t misleading = 0;
  do {
    std::vector<std::size_t> counts(spec.vocabulary, 0);
    for (std::size_t s = 0; s < spec.segments; ++s) {
      if (!mask[s]) continue;
      for (std::size_t f = s * per; f < (s + 1) * per; ++f) ++counts[colors[f]];
    }
    ++windows;
    if (unique_argmax(counts) != global) ++misleading;
  } while (std::prev_permutation(mask.begin(), mask.end()));
  return static_cast<double>(misleading) / static_cast<double>(windows);
}

std::size_t label_from_latents(const SyntheticSpec& spec, const std::vector<std::size_t>& latents) {
  if (spec.task == TaskKind::global_majority) {
    const auto counts = color_counts(latents, spec.vocabulary);
    const std::size_t top = unique_argmax(counts);
    if (top == counts.size()) throw ContractError("latent sequence has no unique majority");
    return top;
  }
  const auto a = std::find(latents.begin(), latents.end(), spec.vocabulary);
  const auto b = std::find(latents.begin(), latents.end(), spec.vocabulary + 1);
  if (a == latents.end() || b == latents.end()) throw ContractError("latent sequence lacks the planted events");
  return a < b ? 0 : 1;
}

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  SyntheticData data;
  // Palette rows: V colors, then the two events for temporal-order.
  const std::size_t symbols = spec.vocabulary + (spec.task == TaskKind::temporal_order ? 2 : 0);
  Tensor palette = unit_rows(symbols, spec.dim, rng);
  data.question = unit_rows(spec.words, spec.dim, rng);
  if (spec.task == TaskKind::global_majority) {
    data.answers = Tensor({spec.vocabulary, spec.dim});
    std::copy(palette.data().begin(), palette.data().begin() + static_cast<std::ptrdiff_t>(data.answers.size()),
              data.answers.data().begin());
  } else {
    data.answers = unit_rows(2, spec.dim, rng);
  }
  fill_split(spec, spec.samples, palette, data, rng, data.train);
  fill_split(spec, spec.eval_samples, palette, data, rng, data.eval);
  return data;
}

}  // namespace gsmt
