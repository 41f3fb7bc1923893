#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/attacks.hpp"
#include "fedsim/config.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/defenses.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/protocol.hpp"

namespace fedsim {

inline constexpr const char* kVersion = "fedsim 0.1.0";

inline ModelSpec model_spec_from(const RunConfig& c) {
  ModelSpec s;
  s.kind = (c.model == "ncf") ? ModelKind::Ncf : ModelKind::Lightgcn;
  s.head = (c.head == "mlp") ? ScoreHead::Mlp : ScoreHead::Dot;
  s.embed_dim = c.embed_dim;
  s.layer_dims = c.layer_dims;
  return s;
}

inline InteractionDataset load_run_dataset(const RunConfig& c) {
  if (c.dataset.kind == "synth")
    return synth_dataset(c.dataset.num_users, c.dataset.num_items, c.dataset.density,
                         c.dataset.popularity_skew, c.seed, c.dataset.test_fraction,
                         c.dataset.neg_ratio);
  const RatingFormat fmt =
      (c.dataset.format == "movielens") ? RatingFormat::MovielensDat : RatingFormat::Csv;
  const SplitMode split =
      (c.dataset.split == "temporal") ? SplitMode::Temporal : SplitMode::Random;
  LoadedRatings loaded = load_ratings(c.dataset.path, fmt);
  return build_dataset(loaded, c.dataset.test_fraction, c.dataset.neg_ratio, c.seed, split);
}

// "auto" picks the least-interacted items, the natural promotion targets;
// explicit ids are validated and sorted.
inline std::vector<int> resolve_targets(const RunConfig& c, const InteractionDataset& ds) {
  if (c.targets == "auto")
    return pick_target_items(ds, std::min(c.num_targets, ds.num_items));
  std::vector<int> ids = detail::config_int_list(c.targets, "attack.targets");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw ConfigError("attack.targets: duplicate id");
  for (int t : ids)
    if (t < 0 || t >= ds.num_items)
      throw ConfigError("attack.targets: item " + std::to_string(t) + " outside dataset");
  return ids;
}

inline int malicious_count_for(const RunConfig& c, int num_users) {
  if (parse_attack_name(c.attack) == AttackKind::None) return 0;
  if (c.malicious_count > 0) return c.malicious_count;
  return std::max(1, static_cast<int>(std::llround(c.xi * num_users)));
}

struct RunOutput {
  RunConfig config;
  std::vector<int> targets;
  int num_malicious = 0;
  int num_users = 0;
  int num_items = 0;
  TrainingResult result;
};

inline RunOutput execute_run(const RunConfig& c) {
  c.validate();
  RunOutput out;
  out.config = c;

  const InteractionDataset ds = load_run_dataset(c);
  const ModelSpec spec = model_spec_from(c);
  out.targets = resolve_targets(c, ds);
  out.num_malicious = malicious_count_for(c, ds.num_users);
  out.num_users = ds.num_users;
  out.num_items = ds.num_items;

  TrainSettings st;
  st.epochs = c.epochs;
  st.local_epochs = c.local_epochs;
  st.lr = c.lr;
  st.sample_fraction = c.sample_fraction;
  st.attack_start = c.attack_start;
  st.num_malicious = out.num_malicious;
  st.er_k = c.er_k;
  st.hr_k = c.hr_k;
  st.item_init_scale = c.item_init_scale;
  st.user_init_scale = c.user_init_scale;
  st.seed = c.seed;

  const AttackKind akind = parse_attack_name(c.attack);
  AttackConfig acfg;
  acfg.targets = out.targets;
  acfg.alpha = c.alpha;
  acfg.neg_ratio = c.dataset.neg_ratio;
  acfg.top_k = c.attack_top_k;
  acfg.num_alternatives = c.num_alternatives;
  acfg.fit_iters = c.fit_iters;
  acfg.fit_lr = c.fit_lr;
  acfg.poison_iters = c.poison_iters;
  acfg.poison_lr = c.poison_lr;
  // Unless overridden, malicious tower steps run well below the server rate
  // so even a large cohort's combined tower upload stays at one client's scale.
  acfg.theta_lr = c.poison_theta_lr > 0.0 ? c.poison_theta_lr : c.lr / 20.0;
  acfg.server_lr = c.lr;
  acfg.local_epochs = c.local_epochs;
  acfg.validate(ds.num_items);
  const AttackFn attack = make_attack(akind, acfg);

  const DefenseKind dkind = parse_defense_name(c.defense);
  DefenseFn defense;
  if (dkind != DefenseKind::None) {
    DefenseConfig dcfg;
    dcfg.rho = c.rho;
    dcfg.gamma = c.gamma;
    dcfg.trim = c.trim;
    dcfg.validate();
    auto bank = std::make_shared<MemoryBank>(ds.num_items, c.embed_dim);
    defense = [dkind, dcfg, bank](const std::vector<GradientUpdate>& ups) {
      return defense_dispatch(dkind, ups, *bank, dcfg);
    };
  }

  out.result = run_training(ds, spec, st, out.targets, attack, defense);
  return out;
}

inline std::string render_metrics_csv(const RunOutput& run) {
  const RunConfig& c = run.config;
  std::string s = "epoch";
  const std::string er = "er@" + std::to_string(c.er_k);
  for (int t : run.targets) s += "," + er + "_item" + std::to_string(t);
  s += "," + er + "_mean,hr@" + std::to_string(c.hr_k) + ",loss";
  s += ",clipped_clients,released_rows,bank_mass,release_mean_norm,release_max_norm,"
       "release_norm_excess,conservation_residual\n";

  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.10g", x);
    s += buf;
  };
  for (const RoundReport& r : run.result.reports) {
    s += std::to_string(r.epoch);
    for (size_t i = 0; i < run.targets.size(); ++i) {
      s += ",";
      if (i < r.er_per_target.size() && r.er_per_target[i].has_value())
        num(*r.er_per_target[i]);
      else
        s += "nan";
    }
    s += ",";
    num(r.er_mean);
    s += ",";
    num(r.hr);
    s += ",";
    num(r.loss);
    s += "," + std::to_string(r.defense.clipped_clients);
    s += "," + std::to_string(r.defense.released_rows);
    s += ",";
    num(r.defense.bank_mass);
    s += ",";
    num(r.defense.release_mean_norm);
    s += ",";
    num(r.defense.release_max_norm);
    s += ",";
    num(r.defense.release_norm_excess);
    s += ",";
    num(r.defense.conservation_residual);
    s += "\n";
  }
  return s;
}

inline std::string render_run_json(const RunOutput& run) {
  nlohmann::ordered_json j;
  j["name"] = run.config.name;
  j["version"] = kVersion;
  j["seed"] = run.config.seed;
  j["num_users"] = run.num_users;
  j["num_items"] = run.num_items;
  j["num_malicious"] = run.num_malicious;
  j["targets"] = run.targets;
  j["config"] = serialize_config(run.config);
  if (!run.result.reports.empty()) {
    const RoundReport& last = run.result.reports.back();
    j["final"] = {{"epoch", last.epoch},
                  {"er_mean", last.er_mean},
                  {"hr", last.hr},
                  {"loss", last.loss}};
  }
  return j.dump(2) + "\n";
}

inline std::string render_events_jsonl(const RunOutput& run) {
  std::string s;
  for (const RoundReport& r : run.result.reports) {
    nlohmann::ordered_json j;
    j["event"] = "epoch";
    j["epoch"] = r.epoch;
    j["participants"] = r.participants.size();
    j["loss"] = r.loss;
    j["er_mean"] = r.er_mean;
    j["hr"] = r.hr;
    if (r.defense.released_rows > 0) j["released_rows"] = r.defense.released_rows;
    s += j.dump() + "\n";
  }
  return s;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StructuralError("cannot write " + path.string());
  out << text;
  if (!out) throw StructuralError("write failed: " + path.string());
}

inline void write_run_outputs(const RunOutput& run, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "metrics.csv", render_metrics_csv(run));
  write_text_file(dir / "run.json", render_run_json(run));
  write_text_file(dir / "events.jsonl", render_events_jsonl(run));
}

struct RunSummary {
  std::string name;
  std::string dir;
  bool ok = false;
  std::string error;
  double final_er = 0.0;
  double final_hr = 0.0;
};

// Executes one config file end to end; failures are reported, not thrown,
// so a grid keeps going.
inline RunSummary run_config_file(const std::filesystem::path& config_path,
                                  const std::filesystem::path& out_base,
                                  std::optional<std::uint64_t> seed_override) {
  RunSummary sum;
  sum.name = config_path.stem().string();
  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config: " + config_path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    RunConfig c = parse_config(ss.str());
    if (c.name == "run") c.name = sum.name;  // default name comes from the file
    if (seed_override) c.seed = *seed_override;
    sum.name = c.name;

    RunOutput out = execute_run(c);
    const std::filesystem::path dir = out_base / c.name;
    write_run_outputs(out, dir);
    sum.dir = dir.string();
    if (!out.result.reports.empty()) {
      sum.final_er = out.result.reports.back().er_mean;
      sum.final_hr = out.result.reports.back().hr;
    }
    sum.ok = true;
  } catch (const std::exception& e) {
    sum.error = e.what();
  }
  return sum;
}

inline int run_many(const std::vector<std::filesystem::path>& configs,
                    const std::filesystem::path& out_base,
                    std::optional<std::uint64_t> seed_override) {
  if (configs.empty()) {
    std::fprintf(stderr, "no configs to run\n");
    return 1;
  }
  bool any_failed = false;
  std::printf("%-24s %-8s %10s %10s  %s\n", "run", "status", "er_mean", "hr", "output");
  for (const auto& path : configs) {
    RunSummary s = run_config_file(path, out_base, seed_override);
    if (s.ok) {
      std::printf("%-24s %-8s %10.4f %10.4f  %s\n", s.name.c_str(), "ok", s.final_er, s.final_hr,
                  s.dir.c_str());
    } else {
      any_failed = true;
      std::printf("%-24s %-8s %10s %10s  %s\n", s.name.c_str(), "FAILED", "-", "-",
                  s.error.c_str());
    }
    std::fflush(stdout);
  }
  return any_failed ? 1 : 0;
}

inline int run_grid_dir(const std::filesystem::path& dir, const std::filesystem::path& out_base,
                        std::optional<std::uint64_t> seed_override) {
  if (!std::filesystem::is_directory(dir)) {
    std::fprintf(stderr, "not a directory: %s\n", dir.string().c_str());
    return 1;
  }
  std::vector<std::filesystem::path> configs;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".cfg")
      configs.push_back(entry.path());
  std::sort(configs.begin(), configs.end());
  if (configs.empty()) {
    std::fprintf(stderr, "no .cfg files in %s\n", dir.string().c_str());
    return 1;
  }
  return run_many(configs, out_base, seed_override);
}

}  // namespace fedsim
