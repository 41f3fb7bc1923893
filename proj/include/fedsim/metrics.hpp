#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

#include "fedsim/common.hpp"
#include "fedsim/dataset.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

struct ExposureResult {
  std::vector<std::optional<double>> per_target;  // unset when no user is eligible
  double mean = 0.0;
};

// Per target: the fraction of benign users who never interacted with it yet
// see it in their top-k; mean over targets that have at least one eligible
// user. Rankings exclude each user's training positives.
inline ExposureResult exposure_ratio(const ModelSpec& spec, const PublicParams& params,
                                     const Matrix& user_embeddings, const InteractionDataset& ds,
                                     const std::vector<int>& benign_users,
                                     const std::vector<int>& targets, int k) {
  if (targets.empty()) throw StructuralError("exposure_ratio: no targets");
  if (k < 1) throw StructuralError("exposure_ratio: k must be >= 1");
  std::vector<long> hits(targets.size(), 0), eligible(targets.size(), 0);
  for (int u : benign_users) {
    if (u < 0 || u >= ds.num_users) throw StructuralError("exposure_ratio: bad user id");
    std::vector<double> scores = score_all(spec, params, user_embeddings.row(u), ds.train_pos[u]);
    std::vector<int> recs = top_k(scores, k, &ds.train_pos[u]);
    for (size_t t = 0; t < targets.size(); ++t) {
      if (ds.interacted(u, targets[t])) continue;
      ++eligible[t];
      if (std::find(recs.begin(), recs.end(), targets[t]) != recs.end()) ++hits[t];
    }
  }
  ExposureResult out;
  out.per_target.resize(targets.size());
  double sum = 0.0;
  int defined = 0;
  for (size_t t = 0; t < targets.size(); ++t) {
    if (eligible[t] == 0) continue;
    out.per_target[t] = static_cast<double>(hits[t]) / static_cast<double>(eligible[t]);
    sum += *out.per_target[t];
    ++defined;
  }
  if (defined == 0)
    throw StructuralError("exposure_ratio: every target was interacted with by every user");
  out.mean = sum / defined;
  return out;
}

// Fraction of (user, held-out item) pairs whose top-k recommendations
// contain the held-out item. Rankings exclude training positives only, so
// the held-out items themselves stay rankable.
inline double hit_ratio(const ModelSpec& spec, const PublicParams& params,
                        const Matrix& user_embeddings, const InteractionDataset& ds,
                        const std::vector<int>& users, int k) {
  if (k < 1) throw StructuralError("hit_ratio: k must be >= 1");
  long hits = 0, total = 0;
  for (int u : users) {
    if (u < 0 || u >= ds.num_users) throw StructuralError("hit_ratio: bad user id");
    if (ds.test_items[u].empty()) continue;
    std::vector<double> scores = score_all(spec, params, user_embeddings.row(u), ds.train_pos[u]);
    std::vector<int> recs = top_k(scores, k, &ds.train_pos[u]);
    for (int t : ds.test_items[u]) {
      ++total;
      if (std::find(recs.begin(), recs.end(), t) != recs.end()) ++hits;
    }
  }
  if (total == 0) throw StructuralError("hit_ratio: no held-out interactions");
  return static_cast<double>(hits) / static_cast<double>(total);
}

// The top_m most frequent items across a population's recommendation
// lists, ties broken by smaller item id; returned sorted by id.
inline std::vector<int> popularity_top(const std::vector<std::vector<int>>& rec_lists, int top_m) {
  if (top_m < 1) throw StructuralError("popularity_top: top_m must be >= 1");
  if (rec_lists.empty()) throw StructuralError("popularity_top: empty population");
  std::map<int, long> freq;
  for (const auto& recs : rec_lists)
    for (int j : recs) ++freq[j];
  if (freq.empty()) throw StructuralError("popularity_top: no recommended items");
  std::vector<std::pair<int, long>> items(freq.begin(), freq.end());
  std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(items.size()) > top_m) items.resize(top_m);
  std::vector<int> out;
  out.reserve(items.size());
  for (const auto& [j, c] : items) out.push_back(j);
  std::sort(out.begin(), out.end());
  return out;
}

// Jaccard similarity between the popular-item sets of two recommendation
// populations: near 1 means the second population is indistinguishable
// from the first at the popularity level.
inline double jaccard_popularity(const std::vector<std::vector<int>>& lists_a,
                                 const std::vector<std::vector<int>>& lists_b, int top_m) {
  std::vector<int> a = popularity_top(lists_a, top_m);
  std::vector<int> b = popularity_top(lists_b, top_m);
  std::vector<int> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

// Popularity-overlap diagnostic: builds n_synth throwaway users (alpha
// random positives, 1:4 negatives, embedding fitted against the frozen
// public parameters), then compares their popular items against the real
// benign population's.
inline double jaccard_popularity(const ModelSpec& spec, const PublicParams& params,
                                 const Matrix& user_embeddings, const InteractionDataset& ds,
                                 const std::vector<int>& benign_users, int n_synth, int alpha,
                                 int fit_iters, double fit_lr, int k, std::uint64_t seed) {
  if (n_synth < 1) throw StructuralError("jaccard_popularity: n_synth must be >= 1");
  if (alpha < 1 || alpha >= ds.num_items)
    throw StructuralError("jaccard_popularity: alpha out of range");
  std::vector<std::vector<int>> real_lists;
  real_lists.reserve(benign_users.size());
  for (int u : benign_users) {
    std::vector<double> scores = score_all(spec, params, user_embeddings.row(u), ds.train_pos[u]);
    real_lists.push_back(top_k(scores, k, &ds.train_pos[u]));
  }

  std::vector<std::vector<int>> synth_lists;
  synth_lists.reserve(n_synth);
  std::vector<int> all_items(ds.num_items);
  std::iota(all_items.begin(), all_items.end(), 0);
  for (int s = 0; s < n_synth; ++s) {
    std::mt19937_64 rng(mix_seed(seed, stream::kJaccard, static_cast<std::uint64_t>(s)));
    std::vector<int> pool = all_items;
    std::shuffle(pool.begin(), pool.end(), rng);
    std::vector<int> pos(pool.begin(), pool.begin() + alpha);
    std::sort(pos.begin(), pos.end());
    const size_t want = std::min(pool.size() - alpha, static_cast<size_t>(4) * alpha);
    std::vector<int> neg(pool.begin() + alpha, pool.begin() + alpha + want);
    std::vector<double> emb = fit_user_embedding(spec, params, pos, neg, fit_iters, fit_lr, rng);
    std::vector<double> scores = score_all(spec, params, emb, pos);
    synth_lists.push_back(top_k(scores, k, &pos));
  }
  return jaccard_popularity(real_lists, synth_lists, k);
}

}  // namespace fedsim
