#include "gsmt/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "gsmt/error.hpp"
#include "gsmt/io.hpp"

namespace gsmt {

void RunConfig::validate() const {
  model.validate();
  if (data.empty()) synthetic.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (log_interval == 0) throw ConfigError("log_interval must be positive");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and non-negative");
  }
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& v) {
  T out{};
  auto [end, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || end != v.data() + v.size()) throw ConfigError("'" + v + "' is not a valid number");
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("'" + v + "' is not a boolean (true/false)");
}

using Setter = std::function<void(RunConfig&, const std::string&)>;
using Getter = std::function<std::string(const RunConfig&)>;

struct Key {
  Setter set;
  Getter get;
};

std::string format_double(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

template <class T>
Key size_key(T RunConfig::*group, std::size_t T::*field) {
  return {[=](RunConfig& c, const std::string& v) { c.*group.*field = parse_number<std::size_t>(v); },
          [=](const RunConfig& c) { return std::to_string(c.*group.*field); }};
}

template <class T>
Key double_key(T RunConfig::*group, double T::*field) {
  return {[=](RunConfig& c, const std::string& v) { c.*group.*field = parse_number<double>(v); },
          [=](const RunConfig& c) { return format_double(c.*group.*field); }};
}

const std::map<std::string, Key>& keys() {
  static const std::map<std::string, Key> table = [] {
    std::map<std::string, Key> k;
    using C = RunConfig;
    k["d"] = size_key(&C::model, &GsmtConfig::d);
    k["d_state"] = size_key(&C::model, &GsmtConfig::d_state);
    k["d_h"] = size_key(&C::model, &GsmtConfig::d_h);
    k["d_gating"] = size_key(&C::model, &GsmtConfig::d_gating);
    k["d_k"] = size_key(&C::model, &GsmtConfig::d_k);
    k["k"] = size_key(&C::model, &GsmtConfig::k);
    k["j"] = size_key(&C::model, &GsmtConfig::j);
    k["segments"] = size_key(&C::model, &GsmtConfig::segments);
    k["layers"] = size_key(&C::model, &GsmtConfig::layers);
    k["c3_layer"] = size_key(&C::model, &GsmtConfig::c3_layer);
    k["answer_dim"] = size_key(&C::model, &GsmtConfig::answer_dim);
    k["gamma"] = double_key(&C::model, &GsmtConfig::gamma);
    k["temperature"] = double_key(&C::model, &GsmtConfig::temperature);
    k["logit_scale"] = double_key(&C::model, &GsmtConfig::logit_scale);
    k["mechanism"] = {[](C& c, const std::string& v) { c.model.mechanism = parse_mechanism(v); },
                      [](const C& c) { return to_string(c.model.mechanism); }};
    k["gating"] = {[](C& c, const std::string& v) { c.model.gating = parse_bool(v); },
                   [](const C& c) { return std::string(c.model.gating ? "true" : "false"); }};
    k["ssl_position"] = {[](C& c, const std::string& v) { c.model.ssl_position = parse_ssl_position(v); },
                         [](const C& c) { return to_string(c.model.ssl_position); }};

    k["task"] = {[](C& c, const std::string& v) { c.synthetic.task = parse_task(v); },
                 [](const C& c) { return to_string(c.synthetic.task); }};
    k["frames"] = size_key(&C::synthetic, &SyntheticSpec::frames);
    k["patches"] = size_key(&C::synthetic, &SyntheticSpec::patches);
    k["vocabulary"] = size_key(&C::synthetic, &SyntheticSpec::vocabulary);
    k["words"] = size_key(&C::synthetic, &SyntheticSpec::words);
    k["train_samples"] = size_key(&C::synthetic, &SyntheticSpec::samples);
    k["eval_samples"] = size_key(&C::synthetic, &SyntheticSpec::eval_samples);
    k["max_margin"] = size_key(&C::synthetic, &SyntheticSpec::max_margin);
    k["noise"] = double_key(&C::synthetic, &SyntheticSpec::noise);
    k["min_misleading"] = double_key(&C::synthetic, &SyntheticSpec::min_misleading);
    k["data_seed"] = {[](C& c, const std::string& v) { c.synthetic.seed = parse_number<std::uint64_t>(v); },
                      [](const C& c) { return std::to_string(c.synthetic.seed); }};

    k["data"] = {[](C& c, const std::string& v) { c.data = v; }, [](const C& c) { return c.data; }};
    k["steps"] = {[](C& c, const std::string& v) { c.steps = parse_number<std::size_t>(v); },
                  [](const C& c) { return std::to_string(c.steps); }};
    k["batch_size"] = {[](C& c, const std::string& v) { c.batch_size = parse_number<std::size_t>(v); },
                       [](const C& c) { return std::to_string(c.batch_size); }};
    k["log_interval"] = {[](C& c, const std::string& v) { c.log_interval = parse_number<std::size_t>(v); },
                         [](const C& c) { return std::to_string(c.log_interval); }};
    k["learning_rate"] = {[](C& c, const std::string& v) { c.learning_rate = parse_number<double>(v); },
                          [](const C& c) { return format_double(c.learning_rate); }};
    k["seed"] = {[](C& c, const std::string& v) { c.seed = parse_number<std::uint64_t>(v); },
                 [](const C& c) { return std::to_string(c.seed); }};
    k["checkpoint"] = {[](C& c, const std::string& v) { c.checkpoint = v; },
                       [](const C& c) { return c.checkpoint; }};
    k["resume"] = {[](C& c, const std::string& v) { c.resume = v; }, [](const C& c) { return c.resume; }};
    return k;
  }();
  return table;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig config;
  std::vector<std::string> errors;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(number) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      errors.push_back(where + "expected 'key = value'");
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = keys().find(key);
    if (it == keys().end()) {
      errors.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    try {
      it->second.set(config, value);
    } catch (const std::exception& e) {
      errors.push_back(where + key + ": " + e.what());
    }
  }
  if (!errors.empty()) {
    std::string msg = "invalid configuration";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ConfigError(msg);
  }
  config.synthetic.segments = config.model.segments;
  config.synthetic.window_segments = config.model.k;
  config.synthetic.dim = config.model.d;
  config.validate();
  return config;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream probe(path);
  if (!probe) throw ConfigError("cannot open config " + path.string());
  const Bytes b = read_file(path);
  return parse_run_config(std::string(b.begin(), b.end()));
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& [name, key] : keys()) {
    const std::string v = key.get(config);
    if (v.empty()) continue;
    out += name + " = " + v + "\n";
  }
  return out;
}

}  // namespace gsmt
