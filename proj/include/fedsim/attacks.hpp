#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fedsim/common.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/model.hpp"
#include "fedsim/protocol.hpp"
#include "fedsim/update.hpp"

namespace fedsim {

enum class AttackKind { None, Psmu, PsmuNoAp, Random, ExplicitBoost, GaussianProxy };

inline AttackKind parse_attack_name(const std::string& name) {
  if (name == "none") return AttackKind::None;
  if (name == "psmu") return AttackKind::Psmu;
  if (name == "psmu-no-ap") return AttackKind::PsmuNoAp;
  if (name == "random") return AttackKind::Random;
  if (name == "explicit-boost") return AttackKind::ExplicitBoost;
  if (name == "gaussian-proxy") return AttackKind::GaussianProxy;
  throw ConfigError("unknown attack: " + name);
}

inline const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::None: return "none";
    case AttackKind::Psmu: return "psmu";
    case AttackKind::PsmuNoAp: return "psmu-no-ap";
    case AttackKind::Random: return "random";
    case AttackKind::ExplicitBoost: return "explicit-boost";
    case AttackKind::GaussianProxy: return "gaussian-proxy";
  }
  throw StructuralError("unreachable attack kind");
}

struct AttackConfig {
  std::vector<int> targets;  // sorted ascending, unique
  int alpha = 30;            // filler positives per synthetic profile
  int neg_ratio = 4;
  int top_k = 5;             // length of the recommendation list under attack
  int num_alternatives = 5;  // extra look-alike competitors to suppress
  int fit_iters = 50;
  double fit_lr = 0.01;
  int poison_iters = 10;
  double poison_lr = 0.05;
  double theta_lr = 0.001;   // step on shared weights; kept at server scale for stealth
  double server_lr = 0.001;  // step the server applies; uploads are scaled for it
  int local_epochs = 2;      // benign-style passes for the random baseline

  void validate(int num_items) const {
    if (!std::is_sorted(targets.begin(), targets.end()))
      throw ConfigError("attack: targets must be sorted");
    if (std::adjacent_find(targets.begin(), targets.end()) != targets.end())
      throw ConfigError("attack: duplicate target");
    for (int t : targets)
      if (t < 0 || t >= num_items)
        throw ConfigError("attack: target " + std::to_string(t) + " outside item range");
    if (alpha < 1) throw ConfigError("attack: alpha must be >= 1");
    if (neg_ratio < 0) throw ConfigError("attack: neg_ratio must be >= 0");
    if (top_k < 1) throw ConfigError("attack: top_k must be >= 1");
    if (num_alternatives < 0) throw ConfigError("attack: num_alternatives must be >= 0");
    if (fit_iters < 1) throw ConfigError("attack: fit_iters must be >= 1");
    if (!(fit_lr > 0.0)) throw ConfigError("attack: fit_lr must be > 0");
    if (poison_iters < 1) throw ConfigError("attack: poison_iters must be >= 1");
    if (!(poison_lr > 0.0)) throw ConfigError("attack: poison_lr must be > 0");
    if (!(theta_lr > 0.0)) throw ConfigError("attack: theta_lr must be > 0");
    if (!(server_lr > 0.0)) throw ConfigError("attack: server_lr must be > 0");
    if (local_epochs < 1) throw ConfigError("attack: local_epochs must be >= 1");
  }
};

struct FakeProfile {
  std::vector<int> pos;  // sorted
  std::vector<int> neg;  // sorted
};

// A fresh synthetic interaction slice: alpha random filler items as
// positives (optionally the targets too) and neg_ratio negatives per
// positive, all drawn without replacement from the non-target items.
inline FakeProfile sample_fake_profile(int num_items, const std::vector<int>& targets, int alpha,
                                       int neg_ratio, bool targets_as_positives,
                                       std::mt19937_64& rng) {
  std::vector<int> pool;
  pool.reserve(num_items);
  for (int j = 0; j < num_items; ++j)
    if (!std::binary_search(targets.begin(), targets.end(), j)) pool.push_back(j);
  if (pool.empty()) throw StructuralError("fake profile: every item is a target");
  std::shuffle(pool.begin(), pool.end(), rng);

  FakeProfile p;
  const size_t n_pos = std::min<size_t>(alpha, pool.size());
  p.pos.assign(pool.begin(), pool.begin() + n_pos);
  if (targets_as_positives) p.pos.insert(p.pos.end(), targets.begin(), targets.end());
  std::sort(p.pos.begin(), p.pos.end());

  const size_t n_neg =
      std::min(static_cast<size_t>(neg_ratio) * p.pos.size(), pool.size() - n_pos);
  p.neg.assign(pool.begin() + n_pos, pool.begin() + n_pos + n_neg);
  std::sort(p.neg.begin(), p.neg.end());
  return p;
}

// Non-target items this user already favors (scored strictly above its
// median item score) that look most like a target in embedding space:
// ranked by highest cosine to any target row, ties to the smaller id.
inline std::vector<int> select_alternatives(const ModelSpec& spec, const PublicParams& params,
                                            std::span<const double> user_emb,
                                            const std::vector<int>& user_pos,
                                            const std::vector<int>& targets, int count) {
  if (count < 0) throw StructuralError("select_alternatives: negative count");
  if (count == 0 || targets.empty()) return {};
  if (!std::is_sorted(targets.begin(), targets.end()))
    throw StructuralError("select_alternatives: targets must be sorted");

  const std::vector<double> scores = score_all(spec, params, user_emb, user_pos);
  std::vector<double> sorted_scores = scores;
  std::sort(sorted_scores.begin(), sorted_scores.end());
  const size_t n = sorted_scores.size();
  const double median =
      (n % 2) ? sorted_scores[n / 2] : 0.5 * (sorted_scores[n / 2 - 1] + sorted_scores[n / 2]);

  std::vector<std::pair<double, int>> ranked;  // (max cosine to a target, item)
  for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
    if (std::binary_search(targets.begin(), targets.end(), j)) continue;
    if (!(scores[j] > median)) continue;
    auto vj = params.item_embeddings.row(j);
    const double nj = l2_norm(vj);
    double best = std::numeric_limits<double>::lowest();
    for (int t : targets) {
      auto vt = params.item_embeddings.row(t);
      const double nt = l2_norm(vt);
      const double c = (nj > 0.0 && nt > 0.0) ? dot(vj, vt) / (nj * nt) : 0.0;
      best = std::max(best, c);
    }
    ranked.emplace_back(best, j);
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  if (static_cast<int>(ranked.size()) > count) ranked.resize(count);
  std::vector<int> out;
  out.reserve(ranked.size());
  for (const auto& [sim, j] : ranked) out.push_back(j);
  return out;
}

struct AttackLoss {
  double loss = 0.0;
  BatchGrads grads;
};

// Pairwise pressure to place every target above every competitor in this
// user's predicted preferences: sum of sigmoid(rhat_competitor - rhat_target)
// over all pairs, with exact gradients through both predictions.
inline AttackLoss attack_loss(const ModelSpec& spec, const PublicParams& params,
                              std::span<const double> user_emb, const std::vector<int>& user_pos,
                              const std::vector<int>& targets,
                              const std::vector<int>& competitors) {
  if (targets.empty()) throw StructuralError("attack_loss: no targets");
  if (competitors.empty()) throw StructuralError("attack_loss: no competitors");
  if (!std::is_sorted(targets.begin(), targets.end()))
    throw StructuralError("attack_loss: targets must be sorted");
  for (int j : competitors)
    if (std::binary_search(targets.begin(), targets.end(), j))
      throw StructuralError("attack_loss: item " + std::to_string(j) +
                            " is both target and competitor");

  std::vector<int> items = targets;
  items.insert(items.end(), competitors.begin(), competitors.end());
  ScoreBatch sb(spec, params, user_emb, user_pos, std::move(items));

  AttackLoss out;
  const size_t nt = targets.size();
  std::vector<double> dz(sb.items().size(), 0.0);
  for (size_t a = 0; a < nt; ++a) {
    const double rt = sb.rhat(a);
    for (size_t b = nt; b < sb.items().size(); ++b) {
      const double rj = sb.rhat(b);
      const double s = detail::sigmoid(rj - rt);
      out.loss += s;
      const double ds = s * (1.0 - s);
      dz[b] += ds * rj * (1.0 - rj);
      dz[a] -= ds * rt * (1.0 - rt);
    }
  }
  out.grads = sb.backward(dz);
  return out;
}

namespace detail {

// Item rows and the tower descend at separate rates: target rows take the
// aggressive steps while shared weights move at server scale, keeping the
// tower part of the upload at the size of one ordinary client's.
inline void apply_grads_locally(PublicParams& local, const ModelSpec& spec,
                                const std::map<int, std::vector<double>>& grad_items,
                                const GradMap& grad_theta, double item_lr, double theta_lr) {
  for (const auto& [item, row] : grad_items)
    for (int t = 0; t < spec.embed_dim; ++t)
      local.item_embeddings.at(item, t) -= item_lr * row[t];
  sgd_step(local.theta, grad_theta, theta_lr);
}

// Pseudo-gradient upload with the item part masked to the target rows; the
// tower part goes up whole. Scaled so the server's step replays the local
// drift exactly.
inline GradientUpdate masked_upload(const PublicParams& before, const PublicParams& after,
                                    const std::vector<int>& targets, double server_lr) {
  GradientUpdate up;
  const int d = before.item_embeddings.cols;
  for (int t : targets) {
    std::vector<double> row(d);
    for (int c = 0; c < d; ++c)
      row[c] = (before.item_embeddings.at(t, c) - after.item_embeddings.at(t, c)) / server_lr;
    up.item_rows.emplace(t, std::move(row));
  }
  for (size_t i = 0; i < before.theta.size(); ++i) {
    const auto& e = before.theta.entry(i);
    const Matrix& post = after.theta.at(e.name);
    Matrix g = zeros(e.value.rows, e.value.cols);
    for (size_t k = 0; k < g.a.size(); ++k) g.a[k] = (e.value.a[k] - post.a[k]) / server_lr;
    up.theta.emplace_back(e.name, std::move(g));
  }
  if (!up.items_finite()) throw NumericError("attack: non-finite upload");
  return up;
}

// Shared poisoning tail: find the items competing with the targets for this
// user's list, then drive the attack loss down on local parameter copies and
// upload the masked drift. No competitors means nothing to push against.
inline GradientUpdate poison_with_user(const AttackConfig& cfg, const ModelSpec& spec,
                                       const PublicParams& pub, std::span<const double> user_emb,
                                       const std::vector<int>& user_pos, bool use_alternatives) {
  if (cfg.targets.empty()) return {};
  const std::vector<double> scores = score_all(spec, pub, user_emb, user_pos);
  std::set<int> comp;
  for (int j : top_k(scores, cfg.top_k, &user_pos))
    if (!std::binary_search(cfg.targets.begin(), cfg.targets.end(), j)) comp.insert(j);
  if (use_alternatives)
    for (int j : select_alternatives(spec, pub, user_emb, user_pos, cfg.targets,
                                     cfg.num_alternatives))
      comp.insert(j);
  if (comp.empty()) return {};

  const std::vector<int> competitors(comp.begin(), comp.end());
  PublicParams local = pub;
  for (int it = 0; it < cfg.poison_iters; ++it) {
    AttackLoss al = attack_loss(spec, local, user_emb, user_pos, cfg.targets, competitors);
    if (!std::isfinite(al.loss)) throw NumericError("attack: non-finite attack loss");
    apply_grads_locally(local, spec, al.grads.grad_items, al.grads.grad_theta, cfg.poison_lr,
                        cfg.theta_lr);
  }
  return masked_upload(pub, local, cfg.targets, cfg.server_lr);
}

}  // namespace detail

inline GradientUpdate psmu_round(const AttackConfig& cfg, const ModelSpec& spec,
                                 const PublicParams& pub, std::mt19937_64& rng,
                                 bool use_alternatives) {
  FakeProfile prof =
      sample_fake_profile(pub.num_items(), cfg.targets, cfg.alpha, cfg.neg_ratio, false, rng);
  const std::vector<double> u =
      fit_user_embedding(spec, pub, prof.pos, prof.neg, cfg.fit_iters, cfg.fit_lr, rng);
  return detail::poison_with_user(cfg, spec, pub, u, prof.pos, use_alternatives);
}

// Like psmu without alternatives, but the synthetic user is a standard
// normal draw instead of a fitted embedding.
inline GradientUpdate gaussian_proxy_round(const AttackConfig& cfg, const ModelSpec& spec,
                                           const PublicParams& pub, std::mt19937_64& rng) {
  FakeProfile prof =
      sample_fake_profile(pub.num_items(), cfg.targets, cfg.alpha, cfg.neg_ratio, false, rng);
  const Matrix u = randn(1, spec.embed_dim, 1.0, rng);
  return detail::poison_with_user(cfg, spec, pub, u.a, prof.pos, false);
}

// Fits a synthetic user, then directly pushes the targets' predicted
// preferences toward 1 on local copies and uploads the masked drift.
inline GradientUpdate explicit_boost_round(const AttackConfig& cfg, const ModelSpec& spec,
                                           const PublicParams& pub, std::mt19937_64& rng) {
  if (cfg.targets.empty()) return {};
  FakeProfile prof =
      sample_fake_profile(pub.num_items(), cfg.targets, cfg.alpha, cfg.neg_ratio, false, rng);
  const std::vector<double> u =
      fit_user_embedding(spec, pub, prof.pos, prof.neg, cfg.fit_iters, cfg.fit_lr, rng);

  std::vector<Example> batch;
  batch.reserve(cfg.targets.size());
  for (int t : cfg.targets) batch.push_back({t, 1.0});
  PublicParams local = pub;
  for (int it = 0; it < cfg.poison_iters; ++it) {
    RecGrads g = rec_loss_and_grads(spec, local, u, prof.pos, batch);
    if (!std::isfinite(g.loss)) throw NumericError("attack: non-finite boost loss");
    detail::apply_grads_locally(local, spec, g.grad_items, g.grad_theta, cfg.poison_lr,
                                cfg.theta_lr);
  }
  return detail::masked_upload(pub, local, cfg.targets, cfg.server_lr);
}

// Behaves exactly like a benign client whose profile is the targets plus
// random fillers: same local training, full unmasked upload.
inline GradientUpdate random_attack_round(const AttackConfig& cfg, ClientState& client,
                                          const ModelSpec& spec, const PublicParams& pub,
                                          std::mt19937_64& rng) {
  FakeProfile prof =
      sample_fake_profile(pub.num_items(), cfg.targets, cfg.alpha, cfg.neg_ratio, true, rng);
  LocalStepResult r = local_train(client.embedding, client.embed_adam, prof.pos, prof.neg, spec,
                                  pub, cfg.local_epochs, cfg.server_lr, client.id);
  return std::move(r.update);
}

inline AttackFn make_attack(AttackKind kind, AttackConfig cfg) {
  switch (kind) {
    case AttackKind::None:
      return nullptr;
    case AttackKind::Psmu:
      return [cfg](ClientState&, const ModelSpec& spec, const PublicParams& pub, int,
                   std::mt19937_64& rng) { return psmu_round(cfg, spec, pub, rng, true); };
    case AttackKind::PsmuNoAp:
      return [cfg](ClientState&, const ModelSpec& spec, const PublicParams& pub, int,
                   std::mt19937_64& rng) { return psmu_round(cfg, spec, pub, rng, false); };
    case AttackKind::GaussianProxy:
      return [cfg](ClientState&, const ModelSpec& spec, const PublicParams& pub, int,
                   std::mt19937_64& rng) { return gaussian_proxy_round(cfg, spec, pub, rng); };
    case AttackKind::ExplicitBoost:
      return [cfg](ClientState&, const ModelSpec& spec, const PublicParams& pub, int,
                   std::mt19937_64& rng) { return explicit_boost_round(cfg, spec, pub, rng); };
    case AttackKind::Random:
      return [cfg](ClientState& c, const ModelSpec& spec, const PublicParams& pub, int,
                   std::mt19937_64& rng) { return random_attack_round(cfg, c, spec, pub, rng); };
  }
  throw StructuralError("unreachable attack kind");
}

}  // namespace fedsim
