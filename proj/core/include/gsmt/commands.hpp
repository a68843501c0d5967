#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "gsmt/bench.hpp"
#include "gsmt/config.hpp"
#include "gsmt/synthetic.hpp"
#include "gsmt/training.hpp"
#include "gsmt/verify.hpp"

// Subcommand bodies. They write their reports to `out` and return the exit
// status for completed runs; errors propagate as exceptions (see error.hpp)
// for the caller to map to exit codes.
namespace gsmt {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// JSON lines {step, loss, ce, c3, train_acc}; checkpoint written when set.
int cmd_train(const RunConfig& config, std::ostream& out);

// {"n":..,"correct":..,"accuracy":..} over the eval split.
int cmd_eval(const RunConfig& config, const std::filesystem::path& checkpoint, std::ostream& out);

// Writes <out>/train, <out>/eval and <out>/manifest.json; prints the file count.
std::size_t write_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);
int cmd_gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir, std::ostream& out);

// One line per suite; exit 1 if any fails.
int cmd_verify(const VerifyOptions& options, std::ostream& out);

// CSV to `out_path`, or to `out` when the path is empty.
int cmd_bench(const BenchOptions& options, const std::string& out_path, std::ostream& out);

struct AblationRow {
  std::string value;
  double final_train_acc = 0.0;
  double eval_acc = 0.0;
};

// Sweeps: gating-dim, mechanism, ssl-position, gamma.
std::vector<std::pair<std::string, RunConfig>> ablation_arms(const std::string& sweep, const RunConfig& base);
std::vector<AblationRow> run_ablation(const std::string& sweep, const RunConfig& base);
// CSV `value,final_train_acc,eval_acc`.
std::string ablation_csv(const std::vector<AblationRow>& rows);
int cmd_ablate(const std::string& sweep, const RunConfig& base, const std::string& out_path, std::ostream& out);

}  // namespace gsmt
