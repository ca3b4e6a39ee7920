#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xmodal/encoder.hpp"
#include "xmodal/metrics.hpp"
#include "xmodal/model.hpp"
#include "xmodal/synthgen.hpp"

namespace xmodal::cli {

// Flat key=value experiment configuration. Keys are namespaced by section
// (train., encoder., metric., synth., data.); unknown keys are rejected.
// Command-line flags are merged on top with set(). Path values resolve
// relative to the config file's directory.
class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.contains(key); }

  std::string require(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Path value resolved against the config file location (or cwd when the
  // config came only from flags).
  std::filesystem::path resolve_path(const std::string& key) const;

  TrainConfig train_config() const;
  EncoderConfig encoder_config() const;
  MetricConfig metric_config() const;
  SynthConfig synth_config() const;

  // Throws InputError naming the first missing key.
  void require_keys(const std::vector<std::string>& keys) const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
};

std::vector<int> parse_k_list(const std::string& text);

}  // namespace xmodal::cli
