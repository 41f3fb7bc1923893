#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "fedsim/model.hpp"
#include "fedsim/selfcheck.hpp"

using namespace fedsim;

namespace {

ModelSpec tiny_spec(ModelKind kind, ScoreHead head) {
  ModelSpec spec;
  spec.kind = kind;
  spec.head = head;
  spec.embed_dim = 3;
  spec.layer_dims = {6, 4};
  return spec;
}

// Forward pass rebuilt with nothing but plain loops, as an oracle.
double plain_score(const ModelSpec& spec, const PublicParams& pub,
                   const std::vector<double>& user, const std::vector<int>& pos, int item) {
  const int d = spec.embed_dim;
  std::vector<double> u = user;
  std::vector<double> v(pub.item_embeddings.row(item).begin(),
                        pub.item_embeddings.row(item).end());
  if (spec.kind == ModelKind::Lightgcn) {
    const double coef = pos.empty() ? 0.0 : 0.5 / std::sqrt(static_cast<double>(pos.size()));
    std::vector<double> up(d, 0.0), vp(d, 0.0);
    for (int t = 0; t < d; ++t) up[t] = 0.5 * user[t];
    for (int k : pos)
      for (int t = 0; t < d; ++t) up[t] += coef * pub.item_embeddings.at(k, t);
    bool item_is_pos = std::find(pos.begin(), pos.end(), item) != pos.end();
    for (int t = 0; t < d; ++t) {
      vp[t] = 0.5 * v[t];
      if (item_is_pos) vp[t] += coef * user[t];
    }
    u = up;
    v = vp;
  }

  double z = 0.0;
  if (spec.head == ScoreHead::Dot) {
    for (int t = 0; t < d; ++t) z += u[t] * v[t];
  } else {
    std::vector<double> x = u;
    x.insert(x.end(), v.begin(), v.end());
    const int layers = static_cast<int>(spec.layer_dims.size());
    for (int l = 0; l < layers; ++l) {
      const Matrix& w = pub.theta.at("w" + std::to_string(l + 1));
      const Matrix& b = pub.theta.at("b" + std::to_string(l + 1));
      std::vector<double> y(w.cols);
      for (int c = 0; c < w.cols; ++c) {
        double s = b.at(0, c);
        for (int r = 0; r < w.rows; ++r) s += x[r] * w.at(r, c);
        y[c] = (l + 1 < layers) ? std::tanh(s) : s;
      }
      x = y;
    }
    z = x[0];
  }
  return 1.0 / (1.0 + std::exp(-z));
}

}  // namespace

TEST(Model, FiniteDifferenceRecLoss) {
  for (ModelKind kind : {ModelKind::Ncf, ModelKind::Lightgcn})
    for (ScoreHead head : {ScoreHead::Mlp, ScoreHead::Dot})
      for (std::uint64_t seed : {3u, 17u})
        EXPECT_LT(fd_rec_loss_error(kind, head, seed), 1e-4)
            << to_string(kind) << "/" << to_string(head) << " seed " << seed;
}

TEST(Model, ScoreMatchesPlainLoops) {
  std::vector<int> pos = {0, 2, 5};
  for (ModelKind kind : {ModelKind::Ncf, ModelKind::Lightgcn}) {
    for (ScoreHead head : {ScoreHead::Mlp, ScoreHead::Dot}) {
      ModelSpec spec = tiny_spec(kind, head);
      PublicParams pub = init_public_params(spec, 8, 0.7, 99);
      std::mt19937_64 rng(5);
      std::vector<double> user = randn(1, spec.embed_dim, 0.7, rng).a;
      for (int item = 0; item < 8; ++item) {
        double got = score(spec, pub, user, pos, item);
        double want = plain_score(spec, pub, user, pos, item);
        EXPECT_NEAR(got, want, 1e-12) << to_string(kind) << "/" << to_string(head);
      }
    }
  }
}

TEST(Model, ZeroParametersScoreHalf) {
  for (ModelKind kind : {ModelKind::Ncf, ModelKind::Lightgcn}) {
    for (ScoreHead head : {ScoreHead::Mlp, ScoreHead::Dot}) {
      ModelSpec spec = tiny_spec(kind, head);
      PublicParams pub = init_public_params(spec, 4, 0.5, 7);
      std::fill(pub.item_embeddings.a.begin(), pub.item_embeddings.a.end(), 0.0);
      for (size_t i = 0; i < pub.theta.size(); ++i)
        std::fill(pub.theta.entry(i).value.a.begin(), pub.theta.entry(i).value.a.end(), 0.0);
      std::vector<double> user(spec.embed_dim, 0.0);
      EXPECT_DOUBLE_EQ(score(spec, pub, user, {1}, 2), 0.5);
    }
  }
}

TEST(Model, LossAtHalfIsLog2PerExample) {
  ModelSpec spec = tiny_spec(ModelKind::Ncf, ScoreHead::Mlp);
  PublicParams pub = init_public_params(spec, 6, 0.5, 13);
  for (size_t i = 0; i < pub.theta.size(); ++i)
    std::fill(pub.theta.entry(i).value.a.begin(), pub.theta.entry(i).value.a.end(), 0.0);
  std::vector<double> user(spec.embed_dim, 0.3);
  std::vector<Example> batch = {{0, 1.0}, {1, 0.0}, {2, 1.0}, {3, 0.0}, {4, 0.0}};
  RecGrads g = rec_loss_and_grads(spec, pub, user, {0, 2}, batch);
  EXPECT_NEAR(g.loss, batch.size() * std::log(2.0), 1e-12);
  EXPECT_EQ(g.clamp_count, 0);
}

TEST(Model, GradientTouchesOnlyBatchRows) {
  ModelSpec spec = tiny_spec(ModelKind::Ncf, ScoreHead::Mlp);
  PublicParams pub = init_public_params(spec, 10, 0.5, 21);
  std::mt19937_64 rng(2);
  std::vector<double> user = randn(1, spec.embed_dim, 0.5, rng).a;
  std::vector<int> pos = {1, 3, 8};
  std::vector<Example> batch = {{3, 1.0}, {6, 0.0}, {9, 0.0}};
  RecGrads g = rec_loss_and_grads(spec, pub, user, pos, batch);
  std::set<int> keys;
  for (const auto& [j, row] : g.grad_items) keys.insert(j);
  EXPECT_EQ(keys, (std::set<int>{3, 6, 9}));

  // With propagation the user's positives join the gradient support.
  spec.kind = ModelKind::Lightgcn;
  RecGrads g2 = rec_loss_and_grads(spec, pub, user, pos, batch);
  keys.clear();
  for (const auto& [j, row] : g2.grad_items) keys.insert(j);
  EXPECT_EQ(keys, (std::set<int>{1, 3, 6, 8, 9}));
}

TEST(Model, TopKMatchesFullSort) {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<int> val(0, 9);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 30);
    std::vector<double> scores(n);
    for (double& s : scores) s = val(rng) * 0.125;  // heavy ties
    std::vector<int> exclude;
    for (int j = 0; j < n; ++j)
      if (rng() % 4 == 0) exclude.push_back(j);
    const int k = 1 + static_cast<int>(rng() % n);

    std::vector<int> ids;
    for (int j = 0; j < n; ++j)
      if (!std::binary_search(exclude.begin(), exclude.end(), j)) ids.push_back(j);
    std::sort(ids.begin(), ids.end(), [&](int a, int b) {
      if (scores[a] != scores[b]) return scores[a] > scores[b];
      return a < b;
    });
    if (static_cast<int>(ids.size()) > k) ids.resize(k);

    EXPECT_EQ(top_k(scores, k, &exclude), ids);
  }
  EXPECT_THROW(top_k({1.0, 2.0}, 0), StructuralError);
}

TEST(Model, FitUserEmbeddingBeatsUninformed) {
  ModelSpec spec = tiny_spec(ModelKind::Ncf, ScoreHead::Mlp);
  PublicParams pub = init_public_params(spec, 20, 0.8, 40);
  std::vector<int> pos = {2, 5, 11};
  std::vector<int> neg = {0, 4, 7, 9, 14, 17};
  std::vector<Example> batch;
  for (int j : pos) batch.push_back({j, 1.0});
  for (int j : neg) batch.push_back({j, 0.0});

  std::mt19937_64 rng(8);
  std::vector<double> emb = fit_user_embedding(spec, pub, pos, neg, 300, 0.05, rng);
  double fitted = rec_loss_and_grads(spec, pub, emb, pos, batch).loss;
  std::vector<double> zero(spec.embed_dim, 0.0);
  double blind = rec_loss_and_grads(spec, pub, zero, pos, batch).loss;
  EXPECT_LT(fitted, blind);

  EXPECT_THROW(fit_user_embedding(spec, pub, {}, neg, 10, 0.05, rng), StructuralError);
  EXPECT_THROW(fit_user_embedding(spec, pub, pos, neg, 0, 0.05, rng), StructuralError);
}

TEST(Model, ExtremeScoresClampLossOnly) {
  ModelSpec spec = tiny_spec(ModelKind::Ncf, ScoreHead::Dot);
  PublicParams pub = init_public_params(spec, 3, 0.5, 5);
  std::fill(pub.item_embeddings.a.begin(), pub.item_embeddings.a.end(), 40.0);
  std::vector<double> user(spec.embed_dim, 40.0);  // dot = 4800, sigmoid rounds to 1
  std::vector<Example> batch = {{0, 0.0}};
  RecGrads g = rec_loss_and_grads(spec, pub, user, {}, batch);
  EXPECT_EQ(g.clamp_count, 1);
  EXPECT_TRUE(std::isfinite(g.loss));
  EXPECT_GT(g.loss, 10.0);
}

TEST(Model, ValidationErrors) {
  ModelSpec spec = tiny_spec(ModelKind::Ncf, ScoreHead::Mlp);
  spec.layer_dims = {5, 4};  // must open at 2 * embed_dim = 6
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.layer_dims = {};
  EXPECT_THROW(spec.validate(), ConfigError);
  spec.layer_dims = {6, 4};
  spec.embed_dim = 0;
  EXPECT_THROW(spec.validate(), ConfigError);

  ModelSpec ok = tiny_spec(ModelKind::Ncf, ScoreHead::Mlp);
  PublicParams pub = init_public_params(ok, 5, 0.5, 3);
  std::vector<double> user(ok.embed_dim, 0.1);
  std::vector<double> wide(ok.embed_dim + 1, 0.1);
  EXPECT_THROW(score(ok, pub, wide, {}, 0), StructuralError);
  EXPECT_THROW(score(ok, pub, user, {2, 1}, 0), StructuralError);  // unsorted positives
  EXPECT_THROW(score(ok, pub, user, {}, 5), StructuralError);      // item out of range
  EXPECT_THROW(rec_loss_and_grads(ok, pub, user, {}, {}), StructuralError);
  EXPECT_THROW(rec_loss_and_grads(ok, pub, user, {}, {{0, 0.5}}), StructuralError);
}
