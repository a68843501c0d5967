#include "gsmt/commands.hpp"

#include <cstdio>
#include <ostream>

#include "json.hpp"

#include "gsmt/error.hpp"
#include "gsmt/io.hpp"

namespace gsmt {

namespace fs = std::filesystem;

int cmd_train(const RunConfig& config, std::ostream& out) {
  const Splits splits = load_splits(config);
  TrainOutcome result = train_model(config, splits.train, [&](const TrainMetrics& m) {
    out << to_json_line(m) << '\n';
    out.flush();
  });
  if (!config.checkpoint.empty()) {
    save_checkpoint(config.checkpoint, checkpoint_of(result.model, result.steps_done));
  }
  return kExitOk;
}

int cmd_eval(const RunConfig& config, const fs::path& checkpoint, std::ostream& out) {
  const GsmtModel model = model_from_checkpoint(config.model, load_checkpoint(checkpoint));
  const Splits splits = load_splits(config);
  const EvalReport r = evaluate_accuracy(model, splits.eval);
  nlohmann::ordered_json j;
  j["n"] = r.n;
  j["correct"] = r.correct;
  j["accuracy"] = r.accuracy;
  out << j.dump() << '\n';
  return kExitOk;
}

std::size_t write_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  const SyntheticData data = generate_synthetic(spec);
  nlohmann::ordered_json manifest;
  manifest["task"] = to_string(spec.task);
  manifest["T"] = spec.frames;
  manifest["N"] = spec.patches;
  manifest["I"] = spec.segments;
  manifest["k"] = spec.window_segments;
  manifest["V"] = spec.vocabulary;
  manifest["d"] = spec.dim;
  manifest["M"] = spec.words;
  manifest["sigma"] = spec.noise;
  manifest["seed"] = spec.seed;
  manifest["max_margin"] = spec.max_margin;
  manifest["min_misleading"] = spec.min_misleading;
  std::size_t files = 0;
  for (const auto& [name, split] : {std::pair{"train", &data.train}, std::pair{"eval", &data.eval}}) {
    if (split->samples.empty()) continue;
    save_dataset(out_dir / name, split->samples);
    files += 2 * split->samples.size() + 2;
    manifest[name]["samples"] = split->samples.size();
    manifest[name]["latents"] = split->latents;
  }
  const std::string text = manifest.dump(1) + "\n";
  write_file(out_dir / "manifest.json", std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return files + 1;
}

int cmd_gen_synthetic(const SyntheticSpec& spec, const fs::path& out_dir, std::ostream& out) {
  const std::size_t files = write_synthetic(spec, out_dir);
  out << "{\"files\":" << files << "}\n";
  return kExitOk;
}

int cmd_verify(const VerifyOptions& options, std::ostream& out) {
  bool all = true;
  for (const SuiteResult& r : run_verify(options)) {
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %s  max_err=%.3e  tol=%.1e  (%s)", r.name.c_str(),
                  r.passed ? "PASS" : "FAIL", r.max_error, r.tolerance, r.note.c_str());
    out << line << '\n';
    all = all && r.passed;
  }
  return all ? kExitOk : kExitFailure;
}

int cmd_bench(const BenchOptions& options, const std::string& out_path, std::ostream& out) {
  const std::string csv = bench_csv(run_bench(options));
  if (out_path.empty()) {
    out << csv;
  } else {
    write_file(out_path, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  }
  return kExitOk;
}

std::vector<std::pair<std::string, RunConfig>> ablation_arms(const std::string& sweep, const RunConfig& base) {
  std::vector<std::pair<std::string, RunConfig>> arms;
  auto arm = [&](std::string value, auto&& edit) {
    RunConfig c = base;
    edit(c);
    c.checkpoint.clear();
    c.resume.clear();
    c.validate();
    arms.emplace_back(std::move(value), std::move(c));
  };
  if (sweep == "gating-dim") {
    for (std::size_t g : {4, 8, 16, 32}) {
      arm(std::to_string(g), [&](RunConfig& c) {
        c.model.d_gating = g;
        c.model.gating = true;
      });
    }
    arm("no-gating", [](RunConfig& c) { c.model.gating = false; });
  } else if (sweep == "mechanism") {
    for (auto k : {MechanismKind::gated_ssl, MechanismKind::self_attention, MechanismKind::conv1d,
                   MechanismKind::none}) {
      arm(to_string(k), [&](RunConfig& c) {
        c.model.mechanism = k;
        c.model.ssl_position = SslPosition::pre_selection;
      });
    }
  } else if (sweep == "ssl-position") {
    for (auto p : {SslPosition::pre_selection, SslPosition::penultimate}) {
      arm(to_string(p), [&](RunConfig& c) {
        c.model.ssl_position = p;
        c.model.mechanism = MechanismKind::gated_ssl;
      });
    }
  } else if (sweep == "gamma") {
    for (const char* g : {"0", "0.005", "0.05", "0.5"}) {
      arm(g, [&](RunConfig& c) { c.model.gamma = std::stod(g); });
    }
  } else {
    throw ConfigError("unknown sweep '" + sweep + "' (expected gating-dim, mechanism, ssl-position or gamma)");
  }
  return arms;
}

std::vector<AblationRow> run_ablation(const std::string& sweep, const RunConfig& base) {
  const auto arms = ablation_arms(sweep, base);
  const Splits splits = load_splits(base);
  if (splits.eval.empty()) throw ContractError("ablation needs an eval split");
  std::vector<AblationRow> rows;
  for (const auto& [value, config] : arms) {
    TrainOutcome t = train_model(config, splits.train);
    rows.push_back({value, t.log.back().train_acc, evaluate_accuracy(t.model, splits.eval).accuracy});
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "value,final_train_acc,eval_acc\n";
  for (const AblationRow& r : rows) {
    char line[128];
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f\n", r.value.c_str(), r.final_train_acc, r.eval_acc);
    out += line;
  }
  return out;
}

int cmd_ablate(const std::string& sweep, const RunConfig& base, const std::string& out_path, std::ostream& out) {
  const std::string csv = ablation_csv(run_ablation(sweep, base));
  if (out_path.empty()) {
    out << csv;
  } else {
    write_file(out_path, std::span(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
  }
  return kExitOk;
}

}  // namespace gsmt
