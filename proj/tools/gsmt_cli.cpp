#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "gsmt/commands.hpp"
#include "gsmt/error.hpp"

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gsmt: gated state-space multimodal transformer for long-form video QA"};
  app.require_subcommand(1);

  std::string config_path, checkpoint_path, out_path, sweep;
  auto* train = app.add_subcommand("train", "train a model; streams JSON metrics");
  train->add_option("--config", config_path, "run configuration")->required();

  auto* eval = app.add_subcommand("eval", "noise-free accuracy on the eval split");
  eval->add_option("--config", config_path, "run configuration")->required();
  eval->add_option("--checkpoint", checkpoint_path, "GCK1 checkpoint")->required();

  gsmt::SyntheticSpec spec;
  std::string task = "global-majority";
  auto* gen = app.add_subcommand("gen-synthetic", "write a planted-rule dataset");
  gen->add_option("--task", task, "global-majority or temporal-order")->required();
  gen->add_option("--out", out_path, "output directory")->required();
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--T", spec.frames, "frames");
  gen->add_option("--N", spec.patches, "patches per frame");
  gen->add_option("--I", spec.segments, "segments");
  gen->add_option("--k", spec.window_segments, "segments per window");
  gen->add_option("--V", spec.vocabulary, "vocabulary size");
  gen->add_option("--d", spec.dim, "feature width");
  gen->add_option("--M", spec.words, "question length");
  gen->add_option("--sigma", spec.noise, "patch noise");
  gen->add_option("--samples", spec.samples, "training samples");
  gen->add_option("--eval-samples", spec.eval_samples, "evaluation samples");
  gen->add_option("--max-margin", spec.max_margin, "largest majority margin (0 = any)");
  gen->add_option("--min-misleading", spec.min_misleading, "least fraction of misleading windows");

  gsmt::VerifyOptions verify_options;
  auto* verify = app.add_subcommand("verify", "run the oracle suites");
  verify->add_option("--seeds", verify_options.seeds, "seeds per suite");
  verify->add_flag("--inject-kernel-fault", verify_options.perturb_kernel, "perturb the closed-form kernel");

  std::string mechanisms = "self-attention,conv1d,gated-ssl", lengths = "256,512,1024,2048,4096";
  gsmt::BenchOptions bench_options;
  auto* bench = app.add_subcommand("bench", "buffer and latency scaling of the global mechanisms");
  bench->add_option("--mechanisms", mechanisms, "comma-separated mechanisms");
  bench->add_option("--lengths", lengths, "comma-separated powers of two");
  bench->add_option("--repeats", bench_options.repeats, "runs per point (median wall time)");
  bench->add_option("--out", out_path, "CSV path (default stdout)");

  auto* ablate = app.add_subcommand("ablate", "train one model per sweep value");
  ablate->add_option("--sweep", sweep, "gating-dim, mechanism, ssl-position or gamma")->required();
  ablate->add_option("--config", config_path, "run configuration")->required();
  ablate->add_option("--out", out_path, "CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? gsmt::kExitOk : gsmt::kExitUsage;
  }

  try {
    if (*train) return gsmt::cmd_train(gsmt::load_run_config(config_path), std::cout);
    if (*eval) return gsmt::cmd_eval(gsmt::load_run_config(config_path), checkpoint_path, std::cout);
    if (*gen) {
      spec.task = gsmt::parse_task(task);
      return gsmt::cmd_gen_synthetic(spec, out_path, std::cout);
    }
    if (*verify) return gsmt::cmd_verify(verify_options, std::cout);
    if (*bench) {
      bench_options.mechanisms.clear();
      for (const auto& m : split_list(mechanisms)) bench_options.mechanisms.push_back(gsmt::parse_mechanism(m));
      bench_options.lengths.clear();
      for (const auto& l : split_list(lengths)) bench_options.lengths.push_back(std::stoul(l));
      return gsmt::cmd_bench(bench_options, out_path, std::cout);
    }
    if (*ablate) return gsmt::cmd_ablate(sweep, gsmt::load_run_config(config_path), out_path, std::cout);
  } catch (const gsmt::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gsmt::kExitFailure;
  } catch (const gsmt::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gsmt::kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gsmt::kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return gsmt::kExitFailure;
  }
  return gsmt::kExitUsage;
}
