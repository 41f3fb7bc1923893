#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "fedsim/attacks.hpp"
#include "fedsim/defenses.hpp"
#include "fedsim/gradcheck.hpp"
#include "fedsim/model.hpp"
#include "fedsim/runner.hpp"

namespace fedsim {

// ---- adapters between model inputs and the finite-difference harness ----

inline ParamSet pack_model_params(const PublicParams& pub, std::span<const double> user_emb) {
  ParamSet ps;
  Matrix u(1, static_cast<int>(user_emb.size()));
  std::copy(user_emb.begin(), user_emb.end(), u.a.begin());
  ps.add("user", std::move(u));
  ps.add("items", pub.item_embeddings);
  for (size_t i = 0; i < pub.theta.size(); ++i)
    ps.add("theta." + pub.theta.entry(i).name, pub.theta.entry(i).value);
  return ps;
}

inline PublicParams unpack_public(const ParamSet& ps, const PublicParams& like) {
  PublicParams pub;
  pub.item_embeddings = ps.at("items");
  pub.theta = like.theta;
  for (size_t i = 0; i < like.theta.size(); ++i) {
    const std::string& name = like.theta.entry(i).name;
    pub.theta.at(name) = ps.at("theta." + name);
  }
  return pub;
}

inline GradMap pack_model_grads(const std::vector<double>& grad_user,
                                const std::map<int, std::vector<double>>& grad_items,
                                const GradMap& grad_theta, int num_items, int dim) {
  GradMap g;
  Matrix u(1, dim);
  std::copy(grad_user.begin(), grad_user.end(), u.a.begin());
  g.emplace_back("user", std::move(u));
  Matrix items = zeros(num_items, dim);
  for (const auto& [j, row] : grad_items)
    for (int t = 0; t < dim; ++t) items.at(j, t) = row[t];
  g.emplace_back("items", std::move(items));
  for (const auto& [name, m] : grad_theta) g.emplace_back("theta." + name, m);
  return g;
}

// Small random model instance with mid-range predictions, so both losses
// stay smooth at every probe point.
struct FdProbe {
  ModelSpec spec;
  PublicParams pub;
  std::vector<double> user;
  std::vector<int> user_pos;
};

inline FdProbe make_fd_probe(ModelKind kind, ScoreHead head, std::uint64_t seed) {
  FdProbe p;
  p.spec.kind = kind;
  p.spec.head = head;
  p.spec.embed_dim = 4;
  p.spec.layer_dims = {8, 5, 1};
  p.pub = init_public_params(p.spec, 9, 0.6, seed);
  std::mt19937_64 rng(mix_seed(seed, 0x9d));
  p.user = randn(1, p.spec.embed_dim, 0.6, rng).a;
  p.user_pos = {1, 4, 7};
  return p;
}

inline double fd_rec_loss_error(ModelKind kind, ScoreHead head, std::uint64_t seed,
                                double h = 1e-4) {
  const FdProbe p = make_fd_probe(kind, head, seed);
  const std::vector<Example> batch = {{1, 1.0}, {4, 1.0}, {7, 1.0}, {0, 0.0}, {3, 0.0}, {5, 0.0}};
  RecGrads g = rec_loss_and_grads(p.spec, p.pub, p.user, p.user_pos, batch);
  ParamSet ps = pack_model_params(p.pub, p.user);
  GradMap gm =
      pack_model_grads(g.grad_user, g.grad_items, g.grad_theta, p.pub.num_items(), p.spec.embed_dim);
  auto f = [&](const ParamSet& q) {
    PublicParams pub = unpack_public(q, p.pub);
    return rec_loss_and_grads(p.spec, pub, q.at("user").row(0), p.user_pos, batch).loss;
  };
  return finite_diff_check(f, std::move(ps), gm, h);
}

inline double fd_attack_loss_error(ModelKind kind, ScoreHead head, std::uint64_t seed,
                                   double h = 1e-4) {
  const FdProbe p = make_fd_probe(kind, head, seed);
  const std::vector<int> targets = {2, 6};
  const std::vector<int> competitors = {0, 4, 8};
  AttackLoss al = attack_loss(p.spec, p.pub, p.user, p.user_pos, targets, competitors);
  ParamSet ps = pack_model_params(p.pub, p.user);
  GradMap gm = pack_model_grads(al.grads.grad_user, al.grads.grad_items, al.grads.grad_theta,
                                p.pub.num_items(), p.spec.embed_dim);
  auto f = [&](const ParamSet& q) {
    PublicParams pub = unpack_public(q, p.pub);
    return attack_loss(p.spec, pub, q.at("user").row(0), p.user_pos, targets, competitors).loss;
  };
  return finite_diff_check(f, std::move(ps), gm, h);
}

// ---- the `check` command: fast invariant smoke tests ----

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

namespace detail {

inline GradientUpdate random_update(int num_items, int dim, double scale, std::mt19937_64& rng) {
  GradientUpdate up;
  std::normal_distribution<double> nd(0.0, scale);
  std::uniform_int_distribution<int> n_rows(1, 5), pick(0, num_items - 1);
  const int rows = n_rows(rng);
  for (int r = 0; r < rows; ++r) {
    std::vector<double> row(dim);
    for (double& x : row) x = nd(rng);
    up.add_item_row(pick(rng), row);
  }
  return up;
}

inline RunConfig smoke_config() {
  RunConfig c;
  c.name = "smoke";
  c.dataset.num_users = 30;
  c.dataset.num_items = 40;
  c.dataset.density = 0.2;
  c.embed_dim = 8;
  c.layer_dims = {16, 8};
  c.epochs = 5;
  c.attack = "psmu";
  c.attack_start = 2;
  c.xi = 0.1;
  c.num_targets = 2;
  c.alpha = 5;
  c.fit_iters = 10;
  c.poison_iters = 3;
  c.defense = "hics";
  return c;
}

}  // namespace detail

inline std::vector<CheckResult> run_selfcheck() {
  std::vector<CheckResult> results;
  auto add = [&](const std::string& name, bool pass, const std::string& detail) {
    results.push_back({name, pass, detail});
  };
  char buf[128];

  for (ModelKind kind : {ModelKind::Ncf, ModelKind::Lightgcn}) {
    const std::string base = std::string("grad/") + to_string(kind);
    double worst_rec = 0.0, worst_att = 0.0;
    for (std::uint64_t seed : {11u, 12u}) {
      worst_rec = std::max(worst_rec, fd_rec_loss_error(kind, ScoreHead::Mlp, seed));
      worst_att = std::max(worst_att, fd_attack_loss_error(kind, ScoreHead::Mlp, seed));
    }
    std::snprintf(buf, sizeof buf, "max rel err %.3g", worst_rec);
    add(base + "-rec-loss", worst_rec < 1e-4, buf);
    std::snprintf(buf, sizeof buf, "max rel err %.3g", worst_att);
    add(base + "-attack-loss", worst_att < 1e-4, buf);
  }

  {
    std::mt19937_64 rng(424242);
    const double rho = 1.0;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int m = 1 + static_cast<int>(rng() % 20);
      std::vector<GradientUpdate> clipped;
      for (int i = 0; i < m; ++i)
        clipped.push_back(clip_per_client(detail::random_update(12, 4, 3.0, rng), rho));
      double mass = 0.0;
      for (const auto& up : clipped) mass += up.item_frobenius_norm();
      worst = std::max(worst, mass - rho * m);
    }
    std::snprintf(buf, sizeof buf, "worst excess %.3g", worst);
    add("clip/mass-bound", worst <= 1e-9, buf);
  }

  {
    RunOutput run = execute_run(detail::smoke_config());
    double worst_res = 0.0, worst_excess = 0.0;
    for (const RoundReport& r : run.result.reports) {
      worst_res = std::max(worst_res, r.defense.conservation_residual);
      worst_excess = std::max(worst_excess, r.defense.release_norm_excess);
    }
    std::snprintf(buf, sizeof buf, "residual %.3g, release excess %.3g", worst_res, worst_excess);
    add("bank/conservation", worst_res <= 1e-12 && worst_excess <= 1e-9, buf);
  }

  {
    const std::string a = render_metrics_csv(execute_run(detail::smoke_config()));
    const std::string b = render_metrics_csv(execute_run(detail::smoke_config()));
    add("run/determinism", a == b, a == b ? "identical metrics" : "metrics diverged");
  }

  return results;
}

inline int print_selfcheck(const std::vector<CheckResult>& results) {
  bool all = true;
  for (const CheckResult& r : results) {
    std::printf("%-26s %s  (%s)\n", r.name.c_str(), r.pass ? "ok" : "FAIL", r.detail.c_str());
    all = all && r.pass;
  }
  std::printf("%s\n", all ? "all checks passed" : "CHECKS FAILED");
  return all ? 0 : 1;
}

}  // namespace fedsim
