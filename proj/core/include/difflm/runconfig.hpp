#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace difflm {

// Flat run configuration: one command plus string-valued parameters
// resolved from an optional JSON file and "--key value" overrides, with
// overrides winning. Unknown keys and commands are rejected by name.
class RunConfig {
 public:
  static bool is_known_command(const std::string& command);
  static bool is_known_key(const std::string& key);

  // args = argv without the program name:
  //   [command] [--config <file>] [--key <value>]...
  // The command may instead come from the "command" key of the file.
  static RunConfig from_args(const std::vector<std::string>& args);

  const std::string& command() const { return command_; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  uint64_t get_seed(const std::string& key, uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;
  std::vector<double> get_double_list(const std::string& key,
                                      const std::vector<double>& fallback) const;
  std::vector<uint64_t> get_seed_list(const std::string& key,
                                      const std::vector<uint64_t>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback) const;
  // Errors with the key name when absent.
  std::string require_path(const std::string& key) const;

  // Fully resolved config as JSON; re-parsing it with from_args yields an
  // equal config.
  std::string echo_json() const;
  void save_echo(const std::string& path) const;

  bool operator==(const RunConfig& other) const {
    return command_ == other.command_ && values_ == other.values_;
  }

 private:
  std::string command_;
  std::map<std::string, std::string> values_;
};

}  // namespace difflm
