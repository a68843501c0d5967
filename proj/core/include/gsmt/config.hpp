#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "gsmt/model.hpp"
#include "gsmt/synthetic.hpp"

namespace gsmt {

// Everything a train / eval / ablate run needs.
struct RunConfig {
  GsmtConfig model;
  // Used when `data` is empty; segments, window and width follow the model.
  SyntheticSpec synthetic;
  // Directory with train/ and eval/ subdirectories in the dataset layout.
  std::string data;
  std::size_t steps = 3000;
  std::size_t batch_size = 8;
  std::size_t log_interval = 100;
  double learning_rate = 0.2;
  std::uint64_t seed = 7;  // parameter init, batch order and selector noise
  std::string checkpoint;  // written at the end of training when set
  std::string resume;      // checkpoint to continue from

  void validate() const;
};

// `key = value` per line, `#` starts a comment. Unknown keys and malformed
// values are reported together, each with its line number.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Inverse of parse_run_config for every key.
std::string format_run_config(const RunConfig& config);

}  // namespace gsmt
