#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "fedsim/adam.hpp"
#include "fedsim/common.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

enum class ModelKind { Ncf, Lightgcn };
enum class ScoreHead { Mlp, Dot };

inline const char* to_string(ModelKind k) { return k == ModelKind::Ncf ? "ncf" : "lightgcn"; }
inline const char* to_string(ScoreHead h) { return h == ScoreHead::Mlp ? "mlp" : "dot"; }

struct ModelSpec {
  ModelKind kind = ModelKind::Ncf;
  ScoreHead head = ScoreHead::Mlp;
  int embed_dim = 32;
  std::vector<int> layer_dims = {64, 32, 16};  // scoring tower widths, input first

  void validate() const {
    if (embed_dim < 1) throw ConfigError("model: embed_dim must be >= 1");
    if (head == ScoreHead::Mlp) {
      if (layer_dims.empty()) throw ConfigError("model: mlp head needs layer widths");
      if (layer_dims[0] != 2 * embed_dim)
        throw ConfigError("model: first tower width must be 2*embed_dim, got " +
                          std::to_string(layer_dims[0]));
      for (int w : layer_dims)
        if (w < 1) throw ConfigError("model: tower widths must be positive");
    }
  }
};

// Parameters every client shares: the item-embedding table and the scoring
// tower. Per-user embeddings are private and live with each client.
struct PublicParams {
  Matrix item_embeddings;  // num_items x embed_dim
  ParamSet theta;          // tower weights; empty for the dot head

  int num_items() const { return item_embeddings.rows; }
};

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) {
    double e = std::exp(-z);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::string weight_name(int layer) { return "w" + std::to_string(layer + 1); }
inline std::string bias_name(int layer) { return "b" + std::to_string(layer + 1); }

}  // namespace detail

inline PublicParams init_public_params(const ModelSpec& spec, int num_items,
                                       double item_init_scale, std::uint64_t seed) {
  spec.validate();
  if (num_items < 1) throw StructuralError("init_public_params: need at least one item");
  if (!(item_init_scale > 0.0))
    throw StructuralError("init_public_params: item_init_scale must be > 0");
  PublicParams p;
  std::mt19937_64 rng(mix_seed(seed, stream::kPublicInit));
  p.item_embeddings = randn(num_items, spec.embed_dim, item_init_scale, rng);
  if (spec.head == ScoreHead::Mlp) {
    const int layers = static_cast<int>(spec.layer_dims.size());
    for (int l = 0; l < layers; ++l) {
      const int in = spec.layer_dims[l];
      const int out = (l + 1 < layers) ? spec.layer_dims[l + 1] : 1;
      p.theta.add(detail::weight_name(l), randn(in, out, std::sqrt(1.0 / in), rng));
      p.theta.add(detail::bias_name(l), zeros(1, out));
    }
  }
  return p;
}

// Gradients of some scalar loss with respect to everything a client can
// touch: its own embedding, the item rows involved, and the tower.
struct BatchGrads {
  std::vector<double> grad_user;
  std::map<int, std::vector<double>> grad_items;
  GradMap grad_theta;
};

// Scores a list of items for one user and supports backprop of arbitrary
// per-item seeds through the tower and the graph propagation. The user's
// positives drive the single propagation layer when the model is lightgcn;
// they must be sorted ascending. Scores are pre-sigmoid logits: monotone in
// the predicted preference, so ranking can use them directly.
class ScoreBatch {
 public:
  ScoreBatch(const ModelSpec& spec, const PublicParams& params,
             std::span<const double> user_emb, const std::vector<int>& user_pos,
             std::vector<int> items)
      : spec_(&spec), params_(&params), user_pos_(&user_pos), items_(std::move(items)) {
    spec.validate();
    const int d = spec.embed_dim;
    if (static_cast<int>(user_emb.size()) != d)
      throw StructuralError("score: user embedding has width " +
                            std::to_string(user_emb.size()) + ", model wants " +
                            std::to_string(d));
    if (!std::is_sorted(user_pos.begin(), user_pos.end()))
      throw StructuralError("score: user positives must be sorted");
    const int num_items = params.item_embeddings.rows;
    if (params.item_embeddings.cols != d)
      throw StructuralError("score: item table width does not match embed_dim");

    user_raw_.assign(user_emb.begin(), user_emb.end());
    user_prop_ = user_raw_;
    if (spec.kind == ModelKind::Lightgcn) {
      const size_t n = user_pos.size();
      coef_ = n ? 0.5 / std::sqrt(static_cast<double>(n)) : 0.0;
      for (double& x : user_prop_) x *= 0.5;
      for (int k : user_pos) {
        if (k < 0 || k >= num_items) throw StructuralError("score: positive item out of range");
        auto row = params.item_embeddings.row(k);
        for (int t = 0; t < d; ++t) user_prop_[t] += coef_ * row[t];
      }
    }

    z_.resize(items_.size());
    vprime_.resize(items_.size());
    if (spec.head == ScoreHead::Mlp) acts_.resize(items_.size());
    for (size_t k = 0; k < items_.size(); ++k) {
      const int j = items_[k];
      if (j < 0 || j >= num_items) throw StructuralError("score: item out of range");
      auto row = params.item_embeddings.row(j);
      std::vector<double> v(row.begin(), row.end());
      if (spec.kind == ModelKind::Lightgcn) {
        for (double& x : v) x *= 0.5;
        if (std::binary_search(user_pos.begin(), user_pos.end(), j))
          for (int t = 0; t < d; ++t) v[t] += coef_ * user_raw_[t];
      }
      z_[k] = (spec.head == ScoreHead::Dot) ? forward_dot(v) : forward_tower(v, acts_[k]);
      if (!std::isfinite(z_[k]))
        throw NumericError("score: non-finite score for item " + std::to_string(j));
      vprime_[k] = std::move(v);
    }
  }

  const std::vector<int>& items() const { return items_; }
  const std::vector<double>& z() const { return z_; }
  double rhat(size_t k) const { return detail::sigmoid(z_[k]); }

  // dz[k] seeds d(loss)/d(score of item k).
  BatchGrads backward(const std::vector<double>& dz) const {
    if (dz.size() != items_.size()) throw StructuralError("backward: seed count mismatch");
    const ModelSpec& spec = *spec_;
    const int d = spec.embed_dim;
    BatchGrads g;
    g.grad_user.assign(d, 0.0);
    std::vector<Matrix*> gw, gb;
    if (spec.head == ScoreHead::Mlp) {
      const int layers = static_cast<int>(spec.layer_dims.size());
      g.grad_theta.reserve(2 * layers);
      for (int l = 0; l < layers; ++l) {
        const Matrix& w = params_->theta.at(detail::weight_name(l));
        const Matrix& b = params_->theta.at(detail::bias_name(l));
        g.grad_theta.emplace_back(detail::weight_name(l), zeros(w.rows, w.cols));
        g.grad_theta.emplace_back(detail::bias_name(l), zeros(b.rows, b.cols));
      }
      for (auto& [name, m] : g.grad_theta)
        (name[0] == 'w' ? gw : gb).push_back(&m);
    }

    std::vector<double> guser_prop(d, 0.0);  // sum over items of d(loss)/d(propagated user)
    std::vector<double> gu(d), gv(d);
    for (size_t k = 0; k < items_.size(); ++k) {
      if (dz[k] == 0.0) continue;
      if (spec.head == ScoreHead::Dot) {
        for (int t = 0; t < d; ++t) {
          gu[t] = dz[k] * vprime_[k][t];
          gv[t] = dz[k] * user_prop_[t];
        }
      } else {
        backward_tower(acts_[k], dz[k], gw, gb, gu, gv);
      }
      const int j = items_[k];
      auto& gj = g.grad_items.try_emplace(j, d, 0.0).first->second;
      if (spec.kind == ModelKind::Ncf) {
        for (int t = 0; t < d; ++t) gj[t] += gv[t];
      } else {
        for (int t = 0; t < d; ++t) gj[t] += 0.5 * gv[t];
        if (std::binary_search(user_pos_->begin(), user_pos_->end(), j))
          for (int t = 0; t < d; ++t) g.grad_user[t] += coef_ * gv[t];
      }
      for (int t = 0; t < d; ++t) guser_prop[t] += gu[t];
    }

    if (spec.kind == ModelKind::Ncf) {
      for (int t = 0; t < d; ++t) g.grad_user[t] += guser_prop[t];
    } else {
      for (int t = 0; t < d; ++t) g.grad_user[t] += 0.5 * guser_prop[t];
      for (int p : *user_pos_) {
        auto& gp = g.grad_items.try_emplace(p, d, 0.0).first->second;
        for (int t = 0; t < d; ++t) gp[t] += coef_ * guser_prop[t];
      }
    }
    return g;
  }

 private:
  double forward_dot(const std::vector<double>& v) const {
    return std::inner_product(user_prop_.begin(), user_prop_.end(), v.begin(), 0.0);
  }

  double forward_tower(const std::vector<double>& v, std::vector<std::vector<double>>& acts) const {
    const ModelSpec& spec = *spec_;
    const int layers = static_cast<int>(spec.layer_dims.size());
    acts.clear();
    acts.reserve(layers + 1);
    std::vector<double> x;
    x.reserve(user_prop_.size() + v.size());
    x.insert(x.end(), user_prop_.begin(), user_prop_.end());
    x.insert(x.end(), v.begin(), v.end());
    acts.push_back(std::move(x));
    for (int l = 0; l < layers; ++l) {
      const Matrix& w = params_->theta.at(detail::weight_name(l));
      const Matrix& b = params_->theta.at(detail::bias_name(l));
      const auto& in = acts.back();
      if (static_cast<int>(in.size()) != w.rows)
        throw StructuralError("score: tower width mismatch at " + detail::weight_name(l));
      if (b.rows != 1 || b.cols != w.cols)
        throw StructuralError("score: bias shape mismatch at " + detail::bias_name(l));
      std::vector<double> out(w.cols);
      const bool last = (l + 1 == layers);
      for (int c = 0; c < w.cols; ++c) {
        double s = b.at(0, c);
        for (int r = 0; r < w.rows; ++r) s += in[r] * w.at(r, c);
        out[c] = last ? s : std::tanh(s);
      }
      acts.push_back(std::move(out));
    }
    if (acts.back().size() != 1)
      throw StructuralError("score: tower must end in a single output");
    return acts.back()[0];
  }

  void backward_tower(const std::vector<std::vector<double>>& acts, double dz,
                      const std::vector<Matrix*>& gw, const std::vector<Matrix*>& gb,
                      std::vector<double>& gu, std::vector<double>& gv) const {
    const ModelSpec& spec = *spec_;
    const int layers = static_cast<int>(spec.layer_dims.size());
    const int d = spec.embed_dim;
    std::vector<double> delta{dz};
    for (int l = layers - 1; l >= 0; --l) {
      const Matrix& w = params_->theta.at(detail::weight_name(l));
      const auto& in = acts[l];
      Matrix& dw = *gw[l];
      Matrix& db = *gb[l];
      for (int c = 0; c < w.cols; ++c) {
        db.at(0, c) += delta[c];
        for (int r = 0; r < w.rows; ++r) dw.at(r, c) += in[r] * delta[c];
      }
      std::vector<double> din(w.rows, 0.0);
      for (int r = 0; r < w.rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < w.cols; ++c) s += w.at(r, c) * delta[c];
        din[r] = (l > 0) ? s * (1.0 - in[r] * in[r]) : s;
      }
      delta = std::move(din);
    }
    for (int t = 0; t < d; ++t) {
      gu[t] = delta[t];
      gv[t] = delta[d + t];
    }
  }

  const ModelSpec* spec_;
  const PublicParams* params_;
  const std::vector<int>* user_pos_;
  std::vector<int> items_;
  std::vector<double> user_raw_;
  std::vector<double> user_prop_;
  double coef_ = 0.0;  // lightgcn mixing weight 0.5/sqrt(|positives|)
  std::vector<double> z_;
  std::vector<std::vector<double>> vprime_;
  std::vector<std::vector<std::vector<double>>> acts_;
};

// Predicted preferences sigmoid(logit) for every item in the catalog.
inline std::vector<double> score_all(const ModelSpec& spec, const PublicParams& params,
                                     std::span<const double> user_emb,
                                     const std::vector<int>& user_pos) {
  std::vector<int> items(params.item_embeddings.rows);
  std::iota(items.begin(), items.end(), 0);
  ScoreBatch sb(spec, params, user_emb, user_pos, std::move(items));
  std::vector<double> out(sb.z().size());
  for (size_t k = 0; k < out.size(); ++k) out[k] = sb.rhat(k);
  return out;
}

inline double score(const ModelSpec& spec, const PublicParams& params,
                    std::span<const double> user_emb, const std::vector<int>& user_pos,
                    int item) {
  ScoreBatch sb(spec, params, user_emb, user_pos, {item});
  return sb.rhat(0);
}

struct Example {
  int item = 0;
  double label = 0.0;
};

struct RecGrads {
  double loss = 0.0;
  std::vector<double> grad_user;
  std::map<int, std::vector<double>> grad_items;
  GradMap grad_theta;
  int clamp_count = 0;
};

// Summed binary cross-entropy over the batch plus its exact gradients. The
// loss value clamps predictions away from 0 and 1 before the logs; the
// gradient seed stays the exact (prediction - label) per example.
inline RecGrads rec_loss_and_grads(const ModelSpec& spec, const PublicParams& params,
                                   std::span<const double> user_emb,
                                   const std::vector<int>& user_pos,
                                   const std::vector<Example>& batch) {
  if (batch.empty()) throw StructuralError("rec_loss_and_grads: empty batch");
  std::vector<int> items;
  items.reserve(batch.size());
  for (const Example& e : batch) {
    if (e.label != 0.0 && e.label != 1.0)
      throw StructuralError("rec_loss_and_grads: labels must be 0 or 1");
    items.push_back(e.item);
  }
  ScoreBatch sb(spec, params, user_emb, user_pos, std::move(items));

  RecGrads out;
  constexpr double kEps = 1e-7;
  std::vector<double> dz(batch.size());
  for (size_t k = 0; k < batch.size(); ++k) {
    const double r = batch[k].label;
    double rhat = sb.rhat(k);
    if (rhat < kEps || rhat > 1.0 - kEps) {
      rhat = std::clamp(rhat, kEps, 1.0 - kEps);
      ++out.clamp_count;
    }
    out.loss -= r * std::log(rhat) + (1.0 - r) * std::log1p(-rhat);
    dz[k] = sb.rhat(k) - r;
  }
  BatchGrads g = sb.backward(dz);
  out.grad_user = std::move(g.grad_user);
  out.grad_items = std::move(g.grad_items);
  out.grad_theta = std::move(g.grad_theta);
  return out;
}

// Fits a fresh private embedding to a fixed interaction slice with the
// public parameters frozen: Adam steps on the recommendation loss starting
// from a small random initialization. Positives must be sorted; they double
// as the local graph when the model propagates.
inline std::vector<double> fit_user_embedding(const ModelSpec& spec, const PublicParams& params,
                                              const std::vector<int>& positives,
                                              const std::vector<int>& negatives, int iters,
                                              double lr, std::mt19937_64& rng) {
  if (positives.empty()) throw StructuralError("fit_user_embedding: no positives");
  if (iters < 1) throw StructuralError("fit_user_embedding: iters must be >= 1");
  std::vector<Example> batch;
  batch.reserve(positives.size() + negatives.size());
  for (int j : positives) batch.push_back({j, 1.0});
  for (int j : negatives) batch.push_back({j, 0.0});
  Matrix emb = randn(1, spec.embed_dim, 0.01, rng);
  AdamState st = make_adam_state(1, spec.embed_dim);
  for (int it = 0; it < iters; ++it) {
    RecGrads g = rec_loss_and_grads(spec, params, emb.row(0), positives, batch);
    adam_step(std::span<double>(emb.a), std::span<const double>(g.grad_user), st, lr);
  }
  return emb.a;
}

// Highest-scoring item ids, ties broken by smaller id. Items present in
// the sorted exclude list are skipped; fewer than k survivors means the
// result is just shorter.
inline std::vector<int> top_k(const std::vector<double>& scores, int k,
                              const std::vector<int>* exclude_sorted = nullptr) {
  if (k < 1) throw StructuralError("top_k: k must be >= 1");
  std::vector<int> ids;
  ids.reserve(scores.size());
  for (int j = 0; j < static_cast<int>(scores.size()); ++j) {
    if (exclude_sorted &&
        std::binary_search(exclude_sorted->begin(), exclude_sorted->end(), j))
      continue;
    ids.push_back(j);
  }
  auto better = [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  };
  if (static_cast<int>(ids.size()) > k) {
    std::partial_sort(ids.begin(), ids.begin() + k, ids.end(), better);
    ids.resize(k);
  } else {
    std::sort(ids.begin(), ids.end(), better);
  }
  return ids;
}

}  // namespace fedsim
