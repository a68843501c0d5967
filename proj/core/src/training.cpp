#include "gsmt/training.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <random>
#include <thread>

#include "json.hpp"

#include "gsmt/error.hpp"
#include "gsmt/io.hpp"
#include "gsmt/synthetic.hpp"

namespace gsmt {

std::string to_json_line(const TrainMetrics& m) {
  nlohmann::ordered_json j;
  j["step"] = m.step;
  j["loss"] = m.loss;
  j["ce"] = m.ce;
  j["c3"] = m.c3;
  j["train_acc"] = m.train_acc;
  return j.dump();
}

Splits load_splits(const RunConfig& config) {
  if (!config.data.empty()) {
    const std::filesystem::path dir(config.data);
    Splits s;
    s.train = load_dataset(dir / "train");
    if (std::filesystem::exists(dir / "eval" / "labels.txt")) s.eval = load_dataset(dir / "eval");
    return s;
  }
  SyntheticData data = generate_synthetic(config.synthetic);
  return {std::move(data.train.samples), std::move(data.eval.samples)};
}

std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t step, std::size_t batch, std::size_t n) {
  if (n == 0) throw ContractError("cannot draw a batch from an empty training set");
  std::mt19937_64 rng(mix_seed(seed ^ 0x6261746368ull, step));
  std::vector<std::size_t> out(batch);
  for (auto& i : out) i = static_cast<std::size_t>(rng() % n);
  return out;
}

namespace {

struct Window {
  double loss = 0, ce = 0, c3 = 0;
  std::size_t correct = 0, count = 0, steps = 0;

  void add(const StepStats& s) {
    loss += s.loss;
    ce += s.ce;
    c3 += s.c3;
    correct += s.correct;
    count += s.count;
    ++steps;
  }

  TrainMetrics report(std::size_t step) const {
    const double n = static_cast<double>(steps);
    return {step, loss / n, ce / n, c3 / n, static_cast<double>(correct) / static_cast<double>(count)};
  }
};

}  // namespace

TrainOutcome train_model(const RunConfig& config, const std::vector<Sample>& train,
                         const std::function<void(const TrainMetrics&)>& on_log) {
  config.validate();
  if (train.empty()) throw ContractError("training set is empty");
  std::size_t start = 0;
  TrainOutcome out{config.resume.empty() ? GsmtModel(config.model, config.seed)
                                         : model_from_checkpoint(config.model, load_checkpoint(config.resume)),
                   {},
                   0};
  if (!config.resume.empty()) {
    start = load_checkpoint(config.resume).step;
    if (start > config.steps) {
      throw ConfigError("checkpoint is at step " + std::to_string(start) + ", beyond steps = " +
                        std::to_string(config.steps));
    }
  }
  auto emit = [&](const TrainMetrics& m) {
    out.log.push_back(m);
    if (on_log) on_log(m);
  };
  auto step_batch = [&](std::size_t step) {
    std::vector<Sample> batch;
    for (std::size_t i : batch_indices(config.seed, step, config.batch_size, train.size())) batch.push_back(train[i]);
    return batch;
  };
  const std::uint64_t noise_seed = config.seed ^ 0x6e6f697365ull;

  if (start == config.steps) {
    auto batch = step_batch(start);
    Window w;
    w.add(train_step(out.model, batch, 0.0, mix_seed(noise_seed, start)));
    emit(w.report(start));
    out.steps_done = start;
    return out;
  }
  Window w;
  for (std::size_t step = start; step < config.steps; ++step) {
    auto batch = step_batch(step);
    const StepStats stats = train_step(out.model, batch, config.learning_rate, mix_seed(noise_seed, step));
    if (step == start) {
      Window first;
      first.add(stats);
      emit(first.report(step));
    }
    w.add(stats);
    const std::size_t done = step + 1;
    if (done % config.log_interval == 0 || done == config.steps) {
      emit(w.report(done));
      w = Window{};
    }
  }
  out.steps_done = config.steps;
  return out;
}

EvalReport evaluate_accuracy(const GsmtModel& model, std::span<const Sample> samples, std::size_t threads) {
  if (samples.empty()) throw ContractError("evaluation set is empty");
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("GSMT_THREADS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v > 0) threads = static_cast<std::size_t>(v);
    }
  }
  threads = std::min(threads, samples.size());
  std::vector<std::size_t> correct(threads, 0);
  std::vector<std::exception_ptr> errors(threads);
  auto work = [&](std::size_t t) {
    try {
      for (std::size_t i = t; i < samples.size(); i += threads) {
        correct[t] += predict(model, samples[i]) == samples[i].answers.groundtruth ? 1 : 0;
      }
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  EvalReport r;
  r.n = samples.size();
  for (std::size_t c : correct) r.correct += c;
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.n);
  return r;
}

}  // namespace gsmt
