#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "gsmt/config.hpp"
#include "gsmt/model.hpp"

namespace gsmt {

struct TrainMetrics {
  std::size_t step = 0;
  double loss = 0.0;
  double ce = 0.0;
  double c3 = 0.0;
  double train_acc = 0.0;
};

// {"step":..,"loss":..,"ce":..,"c3":..,"train_acc":..} on one line.
std::string to_json_line(const TrainMetrics& m);

struct Splits {
  std::vector<Sample> train;
  std::vector<Sample> eval;
};

// From `data`/train and `data`/eval when set, else the synthetic generator.
Splits load_splits(const RunConfig& config);

// Batch for a step, drawn with replacement; depends only on (seed, step).
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch, std::size_t n);

struct TrainOutcome {
  GsmtModel model;
  std::vector<TrainMetrics> log;
  std::size_t steps_done = 0;
};

// Runs steps [start, config.steps), where start is 0 or the resumed
// checkpoint's step. The first line reports the pre-update statistics of the
// first batch; later lines average the pre-update statistics of the steps
// since the previous line.
TrainOutcome train_model(const RunConfig& config, const std::vector<Sample>& train,
                         const std::function<void(const TrainMetrics&)>& on_log = {});

struct EvalReport {
  std::size_t n = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

// Noise-free accuracy. threads = 0 reads GSMT_THREADS, defaulting to the
// hardware concurrency.
EvalReport evaluate_accuracy(const GsmtModel& model, std::span<const Sample> samples, std::size_t threads = 0);

}  // namespace gsmt
