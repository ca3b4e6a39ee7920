#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "xmodal/error.hpp"

namespace xmodal::cli {

namespace {

const std::set<std::string> kKnownKeys = {
    "train.lr",
    "train.weight_decay",
    "train.decay_mode",
    "train.epochs",
    "train.batch",
    "train.lambda_center",
    "train.augmentation",
    "train.backbone",
    "train.ema_centers",
    "train.ema_alpha",
    "encoder.canvas_h",
    "encoder.canvas_w",
    "encoder.superpixel",
    "encoder.word_gap",
    "encoder.value_min",
    "encoder.value_max",
    "metric.ks",
    "metric.scale",
    "metric.exclude_pairs",
    "synth.classes",
    "synth.images_per_class",
    "synth.texts_per_class",
    "synth.concept_dim",
    "synth.noise_sigma",
    "synth.overlap_rho",
    "synth.vocab_size",
    "synth.words_per_text",
    "synth.canvas_h",
    "synth.canvas_w",
    "data.manifest",
    "data.vocab",
};

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError(format_msg("cannot open config ", path.string()));
  RunConfig cfg;
  cfg.base_dir_ = std::filesystem::absolute(path).parent_path();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw InputError(format_msg(path.string(), ":", line_no,
                                  ": expected key=value, got '", stripped, "'"));
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (!kKnownKeys.contains(key)) {
      throw InputError(
          format_msg(path.string(), ":", line_no, ": unknown key '", key, "'"));
    }
    cfg.values_[key] = value;
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!kKnownKeys.contains(key)) {
    throw InputError(format_msg("unknown config key '", key, "'"));
  }
  values_[key] = value;
}

std::string RunConfig::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw InputError(format_msg("missing config key: ", key));
  }
  return it->second;
}

std::string RunConfig::get(const std::string& key,
                           const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    int v = std::stoi(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw InputError(
        format_msg("config key ", key, ": invalid integer '", it->second, "'"));
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  try {
    std::size_t used = 0;
    double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(it->second);
    return v;
  } catch (const std::exception&) {
    throw InputError(
        format_msg("config key ", key, ": invalid number '", it->second, "'"));
  }
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw InputError(format_msg("config key ", key, ": invalid boolean '", v, "'"));
}

std::filesystem::path RunConfig::resolve_path(const std::string& key) const {
  std::filesystem::path p = require(key);
  if (p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig cfg;
  cfg.lr = get_double("train.lr", cfg.lr);
  cfg.weight_decay = get_double("train.weight_decay", cfg.weight_decay);
  const std::string decay = get("train.decay_mode", "lr");
  if (decay == "lr") {
    cfg.decay = DecayMode::LrSchedule;
  } else if (decay == "l2") {
    cfg.decay = DecayMode::L2Penalty;
  } else {
    throw InputError(format_msg("train.decay_mode: expected lr|l2, got '",
                                decay, "'"));
  }
  cfg.epochs = get_int("train.epochs", cfg.epochs);
  cfg.batch = get_int("train.batch", cfg.batch);
  cfg.lambda_center = get_double("train.lambda_center", cfg.lambda_center);
  cfg.augmentation =
      augmentation_from_string(get("train.augmentation", "cfg-std"));
  cfg.backbone = get("train.backbone", cfg.backbone);
  cfg.ema_centers = get_bool("train.ema_centers", cfg.ema_centers);
  cfg.ema_alpha = get_double("train.ema_alpha", cfg.ema_alpha);
  return cfg;
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig cfg;
  cfg.canvas_h = get_int("encoder.canvas_h", cfg.canvas_h);
  cfg.canvas_w = get_int("encoder.canvas_w", cfg.canvas_w);
  cfg.superpixel = get_int("encoder.superpixel", cfg.superpixel);
  cfg.word_gap = get_int("encoder.word_gap", cfg.word_gap);
  cfg.value_min = get_double("encoder.value_min", cfg.value_min);
  cfg.value_max = get_double("encoder.value_max", cfg.value_max);
  return cfg;
}

MetricConfig RunConfig::metric_config() const {
  MetricConfig cfg;
  if (has("metric.ks")) cfg.ks = parse_k_list(require("metric.ks"));
  cfg.scale = report_scale_from_string(get("metric.scale", "unit"));
  cfg.exclude_pairs = get_bool("metric.exclude_pairs", cfg.exclude_pairs);
  cfg.validate();
  return cfg;
}

SynthConfig RunConfig::synth_config() const {
  SynthConfig cfg;
  cfg.classes = get_int("synth.classes", cfg.classes);
  cfg.images_per_class = get_int("synth.images_per_class", cfg.images_per_class);
  cfg.texts_per_class = get_int("synth.texts_per_class", cfg.texts_per_class);
  cfg.concept_dim = get_int("synth.concept_dim", cfg.concept_dim);
  cfg.noise_sigma = get_double("synth.noise_sigma", cfg.noise_sigma);
  cfg.overlap_rho = get_double("synth.overlap_rho", cfg.overlap_rho);
  cfg.vocab_size = get_int("synth.vocab_size", cfg.vocab_size);
  cfg.words_per_text = get_int("synth.words_per_text", cfg.words_per_text);
  cfg.canvas_h = get_int("synth.canvas_h", cfg.canvas_h);
  cfg.canvas_w = get_int("synth.canvas_w", cfg.canvas_w);
  return cfg;
}

void RunConfig::require_keys(const std::vector<std::string>& keys) const {
  for (const auto& key : keys) require(key);
}

std::vector<int> parse_k_list(const std::string& text) {
  std::vector<int> ks;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t pos = text.find(',', start);
    if (pos == std::string::npos) pos = text.size();
    const std::string tok = trim(text.substr(start, pos - start));
    if (!tok.empty()) {
      if (!std::all_of(tok.begin(), tok.end(),
                       [](unsigned char c) { return std::isdigit(c); })) {
        throw InputError(format_msg("invalid K value '", tok, "'"));
      }
      ks.push_back(std::stoi(tok));
    }
    start = pos + 1;
  }
  if (ks.empty()) throw InputError("empty K list");
  return ks;
}

}  // namespace xmodal::cli
