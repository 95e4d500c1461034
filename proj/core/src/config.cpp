#include "lomar/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include "lomar/error.hpp"

namespace lomar {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  if (v.empty()) throw ConfigError(key, "expected a number");
  char* end = nullptr;
  errno = 0;
  const double out = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE || !std::isfinite(out)) {
    throw ConfigError(key, "expected a finite number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(std::size_t v) { return std::to_string(v); }

struct Entry {
  std::string key;
  std::function<void(TrainConfig&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

#define SIZE_KEY(name, field) \
  Entry{name, [](TrainConfig& c, const std::string& v) { c.field = to_size(name, v); }, [](const TrainConfig& c) { return fmt(c.field); }}
#define REAL_KEY(name, field) \
  Entry{name, [](TrainConfig& c, const std::string& v) { c.field = to_double(name, v); }, [](const TrainConfig& c) { return fmt(c.field); }}
#define BOOL_KEY(name, field) \
  Entry{name, [](TrainConfig& c, const std::string& v) { c.field = to_bool(name, v); }, [](const TrainConfig& c) { return fmt(c.field); }}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      Entry{"seed", [](TrainConfig& c, const std::string& v) { c.seed = to_u64("seed", v); },
            [](const TrainConfig& c) { return std::to_string(c.seed); }},
      REAL_KEY("train.base_lr", base_lr),
      REAL_KEY("train.weight_decay", weight_decay),
      REAL_KEY("train.beta1", beta1),
      REAL_KEY("train.beta2", beta2),
      REAL_KEY("train.adam_eps", adam_eps),
      BOOL_KEY("train.lr_scaling", lr_scaling),
      SIZE_KEY("train.batch_size", batch_size),
      SIZE_KEY("train.epochs", epochs),
      SIZE_KEY("train.warmup_epochs", warmup_epochs),
      SIZE_KEY("train.max_steps", max_steps),
      SIZE_KEY("train.checkpoint_every", checkpoint_every),
      Entry{"train.precision",
            [](TrainConfig& c, const std::string& v) { c.precision = static_cast<int>(to_size("train.precision", v)); },
            [](const TrainConfig& c) { return std::to_string(c.precision); }},
      SIZE_KEY("train.threads", threads),
      Entry{"train.loss_scope",
            [](TrainConfig& c, const std::string& v) {
              if (v == "masked") c.loss_scope = LossScope::masked;
              else if (v == "all") c.loss_scope = LossScope::all;
              else throw ConfigError("train.loss_scope", "expected masked or all, got '" + v + "'");
            },
            [](const TrainConfig& c) { return std::string(c.loss_scope == LossScope::masked ? "masked" : "all"); }},
      SIZE_KEY("sampler.k", sampler.k),
      SIZE_KEY("sampler.n_views", sampler.n_views),
      REAL_KEY("sampler.mask_ratio", sampler.mask_ratio),
      SIZE_KEY("encoder.embed_dim", encoder.embed_dim),
      SIZE_KEY("encoder.num_heads", encoder.num_heads),
      SIZE_KEY("encoder.num_layers", encoder.num_layers),
      REAL_KEY("encoder.mlp_ratio", encoder.mlp_ratio),
      BOOL_KEY("encoder.per_layer_rpe", encoder.per_layer_rpe),
      REAL_KEY("encoder.ln_eps", encoder.ln_eps),
      SIZE_KEY("head.hidden", head_hidden),
      BOOL_KEY("head.mask_token", mask_token),
      SIZE_KEY("data.image_size", data.image_size),
      SIZE_KEY("data.patch_size", data.patch_size),
      SIZE_KEY("data.corpus_size", data.corpus_size),
      SIZE_KEY("data.num_classes", data.num_classes),
      Entry{"data.dir", [](TrainConfig& c, const std::string& v) { c.data.dir = v; },
            [](const TrainConfig& c) { return c.data.dir; }},
      BOOL_KEY("data.augment", data.augment),
      REAL_KEY("data.crop_min_scale", data.crop_min_scale),
      Entry{"data.target_norm",
            [](TrainConfig& c, const std::string& v) {
              if (v == "joint") c.data.target_norm = TargetNorm::joint;
              else if (v == "per_channel") c.data.target_norm = TargetNorm::per_channel;
              else throw ConfigError("data.target_norm", "expected joint or per_channel, got '" + v + "'");
            },
            [](const TrainConfig& c) {
              return std::string(c.data.target_norm == TargetNorm::joint ? "joint" : "per_channel");
            }},
      REAL_KEY("data.pixel_mean", data.pixel_mean),
      REAL_KEY("data.pixel_std", data.pixel_std),
      SIZE_KEY("probe.samples", probe.samples),
      REAL_KEY("probe.train_fraction", probe.train_fraction),
      SIZE_KEY("probe.epochs", probe.epochs),
      REAL_KEY("probe.lr", probe.lr),
      REAL_KEY("probe.weight_decay", probe.weight_decay),
  };
  return entries;
}

#undef SIZE_KEY
#undef REAL_KEY
#undef BOOL_KEY

const Entry& lookup(const std::string& key) {
  for (const auto& e : registry()) {
    if (e.key == key) return e;
  }
  throw ConfigError(key, "unknown key");
}

void require(bool ok, const char* key, const std::string& message) {
  if (!ok) throw ConfigError(key, message);
}

}  // namespace

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : registry()) keys.push_back(e.key);
  return keys;
}

void validate_config(const TrainConfig& c) {
  require(c.base_lr > 0.0, "train.base_lr", "must be positive");
  require(c.weight_decay >= 0.0, "train.weight_decay", "must be non-negative");
  require(c.beta1 >= 0.0 && c.beta1 < 1.0, "train.beta1", "must be in [0, 1)");
  require(c.beta2 >= 0.0 && c.beta2 < 1.0, "train.beta2", "must be in [0, 1)");
  require(c.adam_eps > 0.0, "train.adam_eps", "must be positive");
  require(c.batch_size > 0, "train.batch_size", "must be positive");
  require(c.epochs > 0, "train.epochs", "must be positive");
  require(c.warmup_epochs < c.epochs, "train.warmup_epochs", "must be smaller than train.epochs");
  require(c.precision == 32 || c.precision == 64, "train.precision", "must be 32 or 64");
  require(c.sampler.k > 0, "sampler.k", "must be positive");
  require(c.sampler.n_views > 0, "sampler.n_views", "must be positive");
  require(c.sampler.mask_ratio >= 0.0 && c.sampler.mask_ratio <= 1.0, "sampler.mask_ratio", "must be in [0, 1]");
  require(c.loss_scope == LossScope::all || masked_count(c.sampler.k, c.sampler.mask_ratio) > 0, "sampler.mask_ratio",
          "masks no patch of a window, so the masked loss is undefined");
  require(c.encoder.embed_dim > 0, "encoder.embed_dim", "must be positive");
  require(c.encoder.num_heads > 0 && c.encoder.embed_dim % c.encoder.num_heads == 0, "encoder.num_heads",
          "must divide encoder.embed_dim");
  require(c.encoder.mlp_ratio > 0.0 && c.encoder.mlp_hidden() > 0, "encoder.mlp_ratio", "must be positive");
  require(c.encoder.ln_eps > 0.0, "encoder.ln_eps", "must be positive");
  require(c.data.patch_size > 0, "data.patch_size", "must be positive");
  require(c.data.image_size > 0 && c.data.image_size % c.data.patch_size == 0, "data.image_size",
          "must be a positive multiple of data.patch_size");
  require(c.sampler.k <= c.data.image_size / c.data.patch_size, "sampler.k", "window exceeds the patch grid");
  require(c.data.corpus_size > 0, "data.corpus_size", "must be positive");
  require(c.data.num_classes >= 2 && c.data.num_classes <= 10, "data.num_classes", "must be in [2, 10]");
  require(c.data.crop_min_scale > 0.0 && c.data.crop_min_scale <= 1.0, "data.crop_min_scale", "must be in (0, 1]");
  require(c.data.pixel_std > 0.0, "data.pixel_std", "must be positive");
  require(c.probe.samples >= 2, "probe.samples", "must be at least 2");
  require(c.probe.train_fraction > 0.0 && c.probe.train_fraction < 1.0, "probe.train_fraction", "must be in (0, 1)");
  require(c.probe.lr > 0.0, "probe.lr", "must be positive");
  require(c.probe.weight_decay >= 0.0, "probe.weight_decay", "must be non-negative");
}

TrainConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  // Later assignments win: file lines in order, then overrides.
  std::vector<std::pair<std::string, std::string>> assignments;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno), "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno), "expected key = value");
    const std::string name = trim(line.substr(0, eq));
    assignments.emplace_back(section.empty() ? name : section + "." + name, trim(line.substr(eq + 1)));
  }
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError(o, "override must be key=value");
    assignments.emplace_back(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }

  TrainConfig cfg;
  bool views_set = false;
  for (const auto& [key, value] : assignments) {
    lookup(key).set(cfg, value);
    views_set |= key == "sampler.n_views";
  }
  if (!views_set) cfg.sampler.n_views = default_views(cfg.sampler.k);
  cfg.encoder.k = cfg.sampler.k;
  validate_config(cfg);
  return cfg;
}

std::string format_config(const TrainConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& e : registry()) {
    const auto dot = e.key.find('.');
    const std::string sec = dot == std::string::npos ? "" : e.key.substr(0, dot);
    const std::string name = dot == std::string::npos ? e.key : e.key.substr(dot + 1);
    if (sec != section) {
      out += "\n[" + sec + "]\n";
      section = sec;
    }
    out += name + " = " + e.get(cfg) + "\n";
  }
  return out;
}

}  // namespace lomar
