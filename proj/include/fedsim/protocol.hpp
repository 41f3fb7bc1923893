#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fedsim/adam.hpp"
#include "fedsim/common.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/defenses.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/metrics.hpp"
#include "fedsim/model.hpp"
#include "fedsim/update.hpp"

namespace fedsim {

enum class ClientRole { Benign, Malicious };

struct ClientState {
  int id = -1;
  ClientRole role = ClientRole::Benign;
  std::vector<double> embedding;  // private; never leaves the client
  AdamState embed_adam;
};

inline ClientState make_client(int id, ClientRole role, int dim, double init_scale,
                               std::uint64_t seed) {
  ClientState c;
  c.id = id;
  c.role = role;
  std::mt19937_64 rng(mix_seed(mix_seed(seed, stream::kClientInit), static_cast<std::uint64_t>(id)));
  Matrix e = randn(1, dim, init_scale, rng);
  c.embedding = std::move(e.a);
  c.embed_adam = make_adam_state(1, dim);
  return c;
}

struct LocalStepResult {
  GradientUpdate update;
  double mean_loss = 0.0;  // per-example loss before this round's local steps
  int clamp_count = 0;
};

// Local training shared by real clients and client-like attackers: some
// full-batch passes over a (positives, negatives) slice. The private
// embedding moves by Adam; public parameters move on a local copy by
// plain gradient descent, and the upload is the pseudo-gradient
// (before - after) / lr, so the server's aggregation step replays the
// local training exactly.
inline LocalStepResult local_train(std::vector<double>& embedding, AdamState& embed_adam,
                                   const std::vector<int>& pos, const std::vector<int>& neg,
                                   const ModelSpec& spec, const PublicParams& pub,
                                   int local_epochs, double lr, int client_id) {
  if (local_epochs < 0) throw StructuralError("local_train: negative local_epochs");
  LocalStepResult out;
  out.update.client = client_id;
  if (local_epochs == 0) return out;

  std::vector<Example> batch;
  batch.reserve(pos.size() + neg.size());
  for (int j : pos) batch.push_back({j, 1.0});
  for (int j : neg) batch.push_back({j, 0.0});
  if (batch.empty()) throw StructuralError("local_train: client has no data");

  PublicParams local = pub;
  std::set<int> touched;
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (int e = 0; e < local_epochs; ++e) {
    RecGrads g = rec_loss_and_grads(spec, local, embedding, pos, batch);
    if (!std::isfinite(g.loss))
      throw NumericError("local_train: non-finite loss at client " + std::to_string(client_id));
    for (double x : g.grad_user)
      if (!std::isfinite(x))
        throw NumericError("local_train: non-finite gradient at client " +
                           std::to_string(client_id));
    if (e == 0) out.mean_loss = g.loss * inv_n;
    out.clamp_count += g.clamp_count;

    // Local steps descend the per-example mean so a client's influence does
    // not grow with its profile size; the summed-gradient direction is kept.
    for (double& x : g.grad_user) x *= inv_n;
    adam_step(std::span<double>(embedding), std::span<const double>(g.grad_user), embed_adam, lr);
    for (const auto& [item, row] : g.grad_items) {
      touched.insert(item);
      for (int t = 0; t < spec.embed_dim; ++t)
        local.item_embeddings.at(item, t) -= lr * inv_n * row[t];
    }
    sgd_step(local.theta, g.grad_theta, lr * inv_n);
  }

  for (int item : touched) {
    std::vector<double> row(spec.embed_dim);
    for (int t = 0; t < spec.embed_dim; ++t)
      row[t] = (pub.item_embeddings.at(item, t) - local.item_embeddings.at(item, t)) / lr;
    out.update.item_rows.emplace(item, std::move(row));
  }
  for (size_t i = 0; i < pub.theta.size(); ++i) {
    const auto& before = pub.theta.entry(i);
    const Matrix& after = local.theta.at(before.name);
    Matrix g = zeros(before.value.rows, before.value.cols);
    for (size_t k = 0; k < g.a.size(); ++k) g.a[k] = (before.value.a[k] - after.a[k]) / lr;
    out.update.theta.emplace_back(before.name, std::move(g));
  }
  if (!out.update.items_finite())
    throw NumericError("local_train: non-finite upload at client " + std::to_string(client_id));
  return out;
}

inline LocalStepResult benign_local_step(ClientState& client, const InteractionDataset& ds,
                                         const ModelSpec& spec, const PublicParams& pub,
                                         int local_epochs, double lr) {
  if (client.role != ClientRole::Benign)
    throw StructuralError("benign_local_step: client " + std::to_string(client.id) +
                          " is not benign");
  if (client.id < 0 || client.id >= ds.num_users)
    throw StructuralError("benign_local_step: client id outside dataset");
  return local_train(client.embedding, client.embed_adam, ds.train_pos[client.id],
                     ds.train_neg[client.id], spec, pub, local_epochs, lr, client.id);
}

// Server step: subtract lr times the summed uploads from the public parameters.
inline void aggregate(PublicParams& pub, const std::vector<GradientUpdate>& updates, double lr) {
  if (updates.empty()) throw StructuralError("aggregate: no updates");
  if (!(lr > 0.0)) throw StructuralError("aggregate: lr must be > 0");
  const int dim = pub.item_embeddings.cols;
  for (const GradientUpdate& up : updates) {
    for (const auto& [item, row] : up.item_rows) {
      if (item < 0 || item >= pub.item_embeddings.rows)
        throw StructuralError("aggregate: item id out of range");
      if (static_cast<int>(row.size()) != dim)
        throw StructuralError("aggregate: gradient row width mismatch");
      for (int t = 0; t < dim; ++t) pub.item_embeddings.at(item, t) -= lr * row[t];
    }
    for (const auto& [name, g] : up.theta) {
      Matrix& v = pub.theta.at(name);
      check_same_shape(v, g, "aggregate theta " + name);
      for (size_t k = 0; k < v.a.size(); ++k) v.a[k] -= lr * g.a[k];
    }
  }
}

// Attack plugin: produces one malicious client's upload for the round.
// It sees only the public parameters and its own state.
using AttackFn = std::function<GradientUpdate(ClientState& client, const ModelSpec& spec,
                                              const PublicParams& pub, int epoch,
                                              std::mt19937_64& rng)>;

// Defense plugin: transforms the round's uploads into what gets aggregated.
using DefenseFn = std::function<DefenseOutcome(const std::vector<GradientUpdate>&)>;

struct TrainSettings {
  int epochs = 30;
  int local_epochs = 2;
  double lr = 0.001;
  double sample_fraction = 1.0;
  int attack_start = 8;  // 1-based epoch at which malicious clients join
  int num_malicious = 0;
  int er_k = 5;
  int hr_k = 20;
  double item_init_scale = 0.1;
  double user_init_scale = 0.1;
  std::uint64_t seed = 42;

  void validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (local_epochs < 0) throw ConfigError("train: local_epochs must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("train: lr must be > 0");
    if (!(sample_fraction > 0.0 && sample_fraction <= 1.0))
      throw ConfigError("train: sample_fraction must be in (0,1]");
    if (attack_start < 1) throw ConfigError("train: attack_start must be >= 1");
    if (num_malicious < 0) throw ConfigError("train: num_malicious must be >= 0");
    if (er_k < 1 || hr_k < 1) throw ConfigError("train: metric cutoffs must be >= 1");
    if (!(item_init_scale > 0.0) || !(user_init_scale > 0.0))
      throw ConfigError("train: init scales must be > 0");
  }
};

struct RoundReport {
  int epoch = 0;  // 1-based
  std::vector<int> participants;
  std::vector<std::optional<double>> er_per_target;
  double er_mean = 0.0;
  double hr = 0.0;
  double loss = 0.0;  // mean per-example loss over benign participants
  DefenseStats defense;
};

struct TrainingResult {
  std::vector<RoundReport> reports;
  PublicParams params;
  std::vector<ClientState> clients;  // benign then malicious
  Matrix benign_embeddings;          // row per benign user, final state
};

inline std::mt19937_64 client_round_rng(std::uint64_t seed, int epoch, int client_id) {
  return std::mt19937_64(mix_seed(mix_seed(seed, stream::kSampling),
                                  static_cast<std::uint64_t>(epoch),
                                  static_cast<std::uint64_t>(client_id)));
}

// Training loop: per epoch, sample participants, run benign local steps and
// the attack plugin, pass uploads through the defense, aggregate, evaluate.
// Everything derives from the master seed; client order is always id order.
inline TrainingResult run_training(const InteractionDataset& ds, const ModelSpec& spec,
                                   const TrainSettings& st, const std::vector<int>& targets,
                                   const AttackFn& attack, const DefenseFn& defense) {
  st.validate();
  spec.validate();
  if (st.num_malicious > 0 && !attack)
    throw ConfigError("run_training: malicious clients configured without an attack");

  TrainingResult res;
  res.params = init_public_params(spec, ds.num_items, st.item_init_scale, st.seed);

  std::vector<ClientState>& clients = res.clients;
  clients.reserve(ds.num_users + st.num_malicious);
  for (int u = 0; u < ds.num_users; ++u)
    clients.push_back(make_client(u, ClientRole::Benign, spec.embed_dim, st.user_init_scale,
                                  st.seed));
  for (int m = 0; m < st.num_malicious; ++m)
    clients.push_back(make_client(ds.num_users + m, ClientRole::Malicious, spec.embed_dim,
                                  st.user_init_scale, st.seed));

  std::vector<int> benign_ids(ds.num_users);
  std::iota(benign_ids.begin(), benign_ids.end(), 0);

  auto benign_matrix = [&]() {
    Matrix m = zeros(ds.num_users, spec.embed_dim);
    for (int u = 0; u < ds.num_users; ++u)
      for (int t = 0; t < spec.embed_dim; ++t) m.at(u, t) = clients[u].embedding[t];
    return m;
  };

  for (int epoch = 1; epoch <= st.epochs; ++epoch) {
    std::vector<int> pool = benign_ids;
    if (epoch >= st.attack_start)
      for (int m = 0; m < st.num_malicious; ++m) pool.push_back(ds.num_users + m);

    std::vector<int> participants;
    if (st.sample_fraction >= 1.0) {
      participants = pool;
    } else {
      const int want = std::max(
          1, static_cast<int>(std::llround(st.sample_fraction * static_cast<double>(pool.size()))));
      std::mt19937_64 rng(mix_seed(mix_seed(st.seed, stream::kRound),
                                   static_cast<std::uint64_t>(epoch)));
      std::shuffle(pool.begin(), pool.end(), rng);
      participants.assign(pool.begin(), pool.begin() + std::min<size_t>(want, pool.size()));
      std::sort(participants.begin(), participants.end());
    }

    std::vector<GradientUpdate> updates;
    updates.reserve(participants.size());
    double loss_sum = 0.0;
    int loss_count = 0;
    for (int id : participants) {
      ClientState& c = clients[id];
      if (c.role == ClientRole::Benign) {
        LocalStepResult r = benign_local_step(c, ds, spec, res.params, st.local_epochs, st.lr);
        loss_sum += r.mean_loss;
        ++loss_count;
        updates.push_back(std::move(r.update));
      } else {
        std::mt19937_64 rng = client_round_rng(st.seed, epoch, id);
        try {
          updates.push_back(attack(c, spec, res.params, epoch, rng));
        } catch (const std::exception& e) {
          throw StructuralError("attack failed at epoch " + std::to_string(epoch) + ": " +
                                e.what());
        }
        updates.back().client = id;
        check_update_bounds(updates.back(), ds.num_items);
      }
    }

    DefenseOutcome outcome;
    try {
      outcome = defense ? defense(updates) : DefenseOutcome{updates, {}};
    } catch (const std::exception& e) {
      throw StructuralError("defense failed at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    aggregate(res.params, outcome.updates, st.lr);

    Matrix embs = benign_matrix();
    RoundReport rep;
    rep.epoch = epoch;
    rep.participants = participants;
    if (!targets.empty()) {
      ExposureResult er =
          exposure_ratio(spec, res.params, embs, ds, benign_ids, targets, st.er_k);
      rep.er_per_target = std::move(er.per_target);
      rep.er_mean = er.mean;
    }
    rep.hr = hit_ratio(spec, res.params, embs, ds, benign_ids, st.hr_k);
    rep.loss = loss_count ? loss_sum / loss_count : 0.0;
    rep.defense = outcome.stats;
    res.reports.push_back(std::move(rep));
  }
  res.benign_embeddings = benign_matrix();
  return res;
}

}  // namespace fedsim
