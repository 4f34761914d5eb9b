#include "difflm/runconfig.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace difflm {

namespace {

constexpr std::array kCommands = {"gen-data", "nbest", "rescore", "joint",
                                  "eval",     "sweep", "ppl"};

constexpr std::array kKeys = {
    // paths
    "bench", "out", "corpus", "hyp", "rescored", "trace",
    // shared
    "seed", "workers",
    // benchmark generation
    "n-utts", "min-len", "max-len", "vocab-size", "frames-per-token", "noise",
    "blank-mass", "smoothing",
    // n-best extraction
    "beam", "n",
    // rescoring
    "kind", "K", "t-fixed", "share-masks", "lambda-ctc", "lambda-difflm",
    "lambda-prior",
    // joint decoding
    "t-start", "L", "final-rule",
    // sweeps
    "mode", "kinds", "K-grid", "lambda-grid", "t-start-grid", "L-grid", "seeds",
    "measure-time",
    // perplexity
    "process", "n-heldout", "grid",
};

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  if (out.empty()) throw std::runtime_error("cli: empty list value");
  return out;
}

std::string json_value_to_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number() || v.is_number_float()) return v.dump();
  throw std::runtime_error("cli: config values must be scalars");
}

}  // namespace

bool RunConfig::is_known_command(const std::string& command) {
  return std::find(kCommands.begin(), kCommands.end(), command) != kCommands.end();
}

bool RunConfig::is_known_key(const std::string& key) {
  return std::find(kKeys.begin(), kKeys.end(), key) != kKeys.end();
}

RunConfig RunConfig::from_args(const std::vector<std::string>& args) {
  RunConfig cfg;
  size_t i = 0;
  if (i < args.size() && args[i].rfind("--", 0) != 0) {
    cfg.command_ = args[i];
    ++i;
  }

  // Collect overrides first so the config file can be loaded before they
  // are applied on top.
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
  for (; i < args.size(); i += 2) {
    if (args[i].rfind("--", 0) != 0) {
      throw std::runtime_error("cli: expected --key, got: " + args[i]);
    }
    std::string key = args[i].substr(2);
    if (i + 1 >= args.size()) throw std::runtime_error("cli: missing value for key: " + key);
    if (key == "config") {
      config_path = args[i + 1];
      continue;
    }
    if (key == "command") {
      cfg.command_ = args[i + 1];
      continue;
    }
    if (!is_known_key(key)) throw std::runtime_error("cli: unknown key: " + key);
    overrides.emplace_back(std::move(key), args[i + 1]);
  }

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cli: cannot open config file: " + config_path);
    nlohmann::json doc = nlohmann::json::parse(in, nullptr, true, true);
    if (!doc.is_object()) throw std::runtime_error("cli: config file must hold an object");
    for (const auto& [key, value] : doc.items()) {
      if (key == "command") {
        if (cfg.command_.empty()) cfg.command_ = value.get<std::string>();
        continue;
      }
      if (!is_known_key(key)) throw std::runtime_error("cli: unknown key: " + key);
      cfg.values_[key] = json_value_to_string(value);
    }
  }
  for (auto& [key, value] : overrides) cfg.values_[key] = value;

  if (cfg.command_.empty()) throw std::runtime_error("cli: missing command");
  if (!is_known_command(cfg.command_)) {
    throw std::runtime_error("cli: unknown command: " + cfg.command_);
  }
  return cfg;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("cli: key " + key + " needs an integer, got: " + it->second);
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("cli: key " + key + " needs a number, got: " + it->second);
  }
}

uint64_t RunConfig::get_seed(const std::string& key, uint64_t fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    return std::stoull(it->second);
  } catch (const std::exception&) {
    throw std::runtime_error("cli: key " + key + " needs an unsigned integer, got: " +
                             it->second);
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::runtime_error("cli: key " + key + " needs a boolean, got: " + v);
}

std::vector<int> RunConfig::get_int_list(const std::string& key,
                                         const std::vector<int>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<int> out;
  for (const auto& item : split_list(it->second)) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw std::runtime_error("cli: key " + key + " needs integers, got: " + item);
    }
  }
  return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key,
                                               const std::vector<double>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<double> out;
  for (const auto& item : split_list(it->second)) {
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw std::runtime_error("cli: key " + key + " needs numbers, got: " + item);
    }
  }
  return out;
}

std::vector<uint64_t> RunConfig::get_seed_list(const std::string& key,
                                               const std::vector<uint64_t>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<uint64_t> out;
  for (const auto& item : split_list(it->second)) {
    try {
      out.push_back(std::stoull(item));
    } catch (const std::exception&) {
      throw std::runtime_error("cli: key " + key + " needs unsigned integers, got: " + item);
    }
  }
  return out;
}

std::vector<std::string> RunConfig::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  return split_list(it->second);
}

std::string RunConfig::require_path(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) {
    throw std::runtime_error("cli: missing required path: " + key);
  }
  return it->second;
}

std::string RunConfig::echo_json() const {
  nlohmann::json doc;
  doc["command"] = command_;
  for (const auto& [key, value] : values_) doc[key] = value;
  return doc.dump(2);
}

void RunConfig::save_echo(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cli: cannot write config echo: " + path);
  out << echo_json() << '\n';
}

}  // namespace difflm
