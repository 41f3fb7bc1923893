#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "fedsim/attacks.hpp"
#include "fedsim/common.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/defenses.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct DatasetConfig {
  std::string kind = "synth";  // synth | file
  std::string path;
  std::string format = "movielens";  // movielens | csv
  std::string split = "random";      // random | temporal
  int num_users = 200;
  int num_items = 300;
  double density = 0.05;
  double popularity_skew = 1.0;
  double test_fraction = 0.2;
  int neg_ratio = 4;
};

// One experiment, fully described: every knob has a default so an empty
// config file is a valid synthetic-data run.
struct RunConfig {
  std::string name = "run";
  DatasetConfig dataset;

  std::string model = "ncf";  // ncf | lightgcn
  std::string head = "mlp";   // mlp | dot
  int embed_dim = 32;
  std::vector<int> layer_dims = {64, 32, 16};

  int epochs = 30;
  int local_epochs = 2;
  double lr = 0.001;
  double sample_fraction = 1.0;
  double item_init_scale = 0.1;
  double user_init_scale = 0.1;

  std::string attack = "none";
  int attack_start = 8;
  double xi = 0.001;        // malicious fraction of the user base
  int malicious_count = 0;  // nonzero overrides xi
  std::string targets = "auto";  // auto = least-interacted items, or comma ids
  int num_targets = 2;
  int alpha = 30;
  int attack_top_k = 5;
  int num_alternatives = 5;
  int fit_iters = 50;
  double fit_lr = 0.01;
  int poison_iters = 10;
  double poison_lr = 0.05;
  double poison_theta_lr = 0.0;  // 0 means: train.lr / 20

  std::string defense = "none";
  double rho = 1.0;
  double gamma = 0.1;
  int trim = 1;

  int er_k = 5;
  int hr_k = 20;
  std::uint64_t seed = 42;

  void validate() const;
};

namespace detail {

inline std::string fmt_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline int config_int(const std::string& value, const std::string& key) {
  try {
    size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw ConfigError("invalid integer for " + key + ": '" + value + "'");
  }
}

inline std::uint64_t config_u64(const std::string& value, const std::string& key) {
  try {
    size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid seed for " + key + ": '" + value + "'");
  }
}

inline double config_real(const std::string& value, const std::string& key) {
  try {
    size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid number for " + key + ": '" + value + "'");
  }
}

inline std::vector<int> config_int_list(const std::string& value, const std::string& key) {
  std::vector<int> out;
  std::string cur;
  for (char ch : value) {
    if (ch == ',') {
      out.push_back(config_int(trim(cur), key));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!trim(cur).empty()) out.push_back(config_int(trim(cur), key));
  if (out.empty()) throw ConfigError("empty list for " + key);
  return out;
}

inline std::string join_ints(const std::vector<int>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(xs[i]);
  }
  return out;
}

}  // namespace detail

inline void RunConfig::validate() const {
  if (name.empty()) throw ConfigError("name must not be empty");
  if (dataset.kind != "synth" && dataset.kind != "file")
    throw ConfigError("dataset.kind must be synth or file, got '" + dataset.kind + "'");
  if (dataset.kind == "file" && dataset.path.empty())
    throw ConfigError("dataset.path required when dataset.kind = file");
  if (dataset.format != "movielens" && dataset.format != "csv")
    throw ConfigError("dataset.format must be movielens or csv");
  if (dataset.split != "random" && dataset.split != "temporal")
    throw ConfigError("dataset.split must be random or temporal");
  if (dataset.num_users < 1) throw ConfigError("dataset.num_users must be >= 1");
  if (dataset.num_items < 1) throw ConfigError("dataset.num_items must be >= 1");
  if (!(dataset.density > 0.0) || dataset.density > 1.0)
    throw ConfigError("dataset.density must be in (0, 1]");
  if (dataset.popularity_skew < 0.0) throw ConfigError("dataset.popularity_skew must be >= 0");
  if (!(dataset.test_fraction > 0.0) || !(dataset.test_fraction < 1.0))
    throw ConfigError("dataset.test_fraction must be in (0, 1)");
  if (dataset.neg_ratio < 1) throw ConfigError("dataset.neg_ratio must be >= 1");

  if (model != "ncf" && model != "lightgcn")
    throw ConfigError("model must be ncf or lightgcn, got '" + model + "'");
  if (head != "mlp" && head != "dot") throw ConfigError("head must be mlp or dot");
  ModelSpec ms;
  ms.kind = (model == "ncf") ? ModelKind::Ncf : ModelKind::Lightgcn;
  ms.head = (head == "mlp") ? ScoreHead::Mlp : ScoreHead::Dot;
  ms.embed_dim = embed_dim;
  ms.layer_dims = layer_dims;
  ms.validate();

  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(sample_fraction > 0.0) || sample_fraction > 1.0)
    throw ConfigError("sample_fraction must be in (0, 1]");
  if (!(item_init_scale > 0.0)) throw ConfigError("item_init_scale must be > 0");
  if (!(user_init_scale > 0.0)) throw ConfigError("user_init_scale must be > 0");

  parse_attack_name(attack);
  if (attack_start < 1) throw ConfigError("attack_start must be >= 1");
  if (xi < 0.0 || xi >= 1.0) throw ConfigError("xi must be in [0, 1)");
  if (malicious_count < 0) throw ConfigError("malicious_count must be >= 0");
  if (targets != "auto") detail::config_int_list(targets, "targets");
  if (num_targets < 1) throw ConfigError("num_targets must be >= 1");
  if (alpha < 1) throw ConfigError("alpha must be >= 1");
  if (attack_top_k < 1) throw ConfigError("attack_top_k must be >= 1");
  if (num_alternatives < 0) throw ConfigError("num_alternatives must be >= 0");
  if (fit_iters < 1) throw ConfigError("fit_iters must be >= 1");
  if (!(fit_lr > 0.0)) throw ConfigError("fit_lr must be > 0");
  if (poison_iters < 1) throw ConfigError("poison_iters must be >= 1");
  if (!(poison_lr > 0.0)) throw ConfigError("poison_lr must be > 0");
  if (poison_theta_lr < 0.0) throw ConfigError("poison_theta_lr must be >= 0");

  parse_defense_name(defense);
  if (!(rho > 0.0)) throw ConfigError("rho must be > 0");
  if (!(gamma > 0.0) || gamma > 1.0) throw ConfigError("gamma must be in (0, 1]");
  if (trim < 0) throw ConfigError("trim must be >= 0");

  if (er_k < 1) throw ConfigError("er_k must be >= 1");
  if (hr_k < 1) throw ConfigError("hr_k must be >= 1");
}

// Flat `section.key = value` lines; '#' starts a comment; unknown keys are
// errors so typos never silently fall back to defaults.
inline RunConfig parse_config(const std::string& text) {
  RunConfig c;
  int line_no = 0;
  std::string line;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t end = text.find('\n', start);
    line = text.substr(start, end == std::string::npos ? std::string::npos : end - start);
    start = (end == std::string::npos) ? text.size() + 1 : end + 1;
    ++line_no;

    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");

    if (key == "name") c.name = value;
    else if (key == "dataset.kind") c.dataset.kind = value;
    else if (key == "dataset.path") c.dataset.path = value;
    else if (key == "dataset.format") c.dataset.format = value;
    else if (key == "dataset.split") c.dataset.split = value;
    else if (key == "dataset.num_users") c.dataset.num_users = detail::config_int(value, key);
    else if (key == "dataset.num_items") c.dataset.num_items = detail::config_int(value, key);
    else if (key == "dataset.density") c.dataset.density = detail::config_real(value, key);
    else if (key == "dataset.popularity_skew")
      c.dataset.popularity_skew = detail::config_real(value, key);
    else if (key == "dataset.test_fraction")
      c.dataset.test_fraction = detail::config_real(value, key);
    else if (key == "dataset.neg_ratio") c.dataset.neg_ratio = detail::config_int(value, key);
    else if (key == "model.name") c.model = value;
    else if (key == "model.head") c.head = value;
    else if (key == "model.embed_dim") c.embed_dim = detail::config_int(value, key);
    else if (key == "model.layer_dims") c.layer_dims = detail::config_int_list(value, key);
    else if (key == "train.epochs") c.epochs = detail::config_int(value, key);
    else if (key == "train.local_epochs") c.local_epochs = detail::config_int(value, key);
    else if (key == "train.lr") c.lr = detail::config_real(value, key);
    else if (key == "train.sample_fraction")
      c.sample_fraction = detail::config_real(value, key);
    else if (key == "train.item_init_scale")
      c.item_init_scale = detail::config_real(value, key);
    else if (key == "train.user_init_scale")
      c.user_init_scale = detail::config_real(value, key);
    else if (key == "attack.name") c.attack = value;
    else if (key == "attack.start") c.attack_start = detail::config_int(value, key);
    else if (key == "attack.xi") c.xi = detail::config_real(value, key);
    else if (key == "attack.count") c.malicious_count = detail::config_int(value, key);
    else if (key == "attack.targets") c.targets = value;
    else if (key == "attack.num_targets") c.num_targets = detail::config_int(value, key);
    else if (key == "attack.alpha") c.alpha = detail::config_int(value, key);
    else if (key == "attack.top_k") c.attack_top_k = detail::config_int(value, key);
    else if (key == "attack.num_alternatives")
      c.num_alternatives = detail::config_int(value, key);
    else if (key == "attack.fit_iters") c.fit_iters = detail::config_int(value, key);
    else if (key == "attack.fit_lr") c.fit_lr = detail::config_real(value, key);
    else if (key == "attack.poison_iters") c.poison_iters = detail::config_int(value, key);
    else if (key == "attack.poison_lr") c.poison_lr = detail::config_real(value, key);
    else if (key == "attack.poison_theta_lr") c.poison_theta_lr = detail::config_real(value, key);
    else if (key == "defense.name") c.defense = value;
    else if (key == "defense.rho") c.rho = detail::config_real(value, key);
    else if (key == "defense.gamma") c.gamma = detail::config_real(value, key);
    else if (key == "defense.trim") c.trim = detail::config_int(value, key);
    else if (key == "eval.er_k") c.er_k = detail::config_int(value, key);
    else if (key == "eval.hr_k") c.hr_k = detail::config_int(value, key);
    else if (key == "seed") c.seed = detail::config_u64(value, key);
    else
      throw ConfigError("unknown key: " + key + " (line " + std::to_string(line_no) + ")");
  }
  c.validate();
  return c;
}

// Canonical text form; parse(serialize(c)) reproduces c exactly.
inline std::string serialize_config(const RunConfig& c) {
  std::string s;
  auto put = [&s](const std::string& key, const std::string& value) {
    s += key;
    s += " = ";
    s += value;
    s += "\n";
  };
  put("name", c.name);
  put("dataset.kind", c.dataset.kind);
  if (!c.dataset.path.empty()) put("dataset.path", c.dataset.path);
  put("dataset.format", c.dataset.format);
  put("dataset.split", c.dataset.split);
  put("dataset.num_users", std::to_string(c.dataset.num_users));
  put("dataset.num_items", std::to_string(c.dataset.num_items));
  put("dataset.density", detail::fmt_double(c.dataset.density));
  put("dataset.popularity_skew", detail::fmt_double(c.dataset.popularity_skew));
  put("dataset.test_fraction", detail::fmt_double(c.dataset.test_fraction));
  put("dataset.neg_ratio", std::to_string(c.dataset.neg_ratio));
  put("model.name", c.model);
  put("model.head", c.head);
  put("model.embed_dim", std::to_string(c.embed_dim));
  put("model.layer_dims", detail::join_ints(c.layer_dims));
  put("train.epochs", std::to_string(c.epochs));
  put("train.local_epochs", std::to_string(c.local_epochs));
  put("train.lr", detail::fmt_double(c.lr));
  put("train.sample_fraction", detail::fmt_double(c.sample_fraction));
  put("train.item_init_scale", detail::fmt_double(c.item_init_scale));
  put("train.user_init_scale", detail::fmt_double(c.user_init_scale));
  put("attack.name", c.attack);
  put("attack.start", std::to_string(c.attack_start));
  put("attack.xi", detail::fmt_double(c.xi));
  put("attack.count", std::to_string(c.malicious_count));
  put("attack.targets", c.targets);
  put("attack.num_targets", std::to_string(c.num_targets));
  put("attack.alpha", std::to_string(c.alpha));
  put("attack.top_k", std::to_string(c.attack_top_k));
  put("attack.num_alternatives", std::to_string(c.num_alternatives));
  put("attack.fit_iters", std::to_string(c.fit_iters));
  put("attack.fit_lr", detail::fmt_double(c.fit_lr));
  put("attack.poison_iters", std::to_string(c.poison_iters));
  put("attack.poison_lr", detail::fmt_double(c.poison_lr));
  put("attack.poison_theta_lr", detail::fmt_double(c.poison_theta_lr));
  put("defense.name", c.defense);
  put("defense.rho", detail::fmt_double(c.rho));
  put("defense.gamma", detail::fmt_double(c.gamma));
  put("defense.trim", std::to_string(c.trim));
  put("eval.er_k", std::to_string(c.er_k));
  put("eval.hr_k", std::to_string(c.hr_k));
  put("seed", std::to_string(c.seed));
  return s;
}

}  // namespace fedsim
