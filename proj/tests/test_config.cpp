#include <gtest/gtest.h>

#include <string>

#include "fedsim/config.hpp"

using namespace fedsim;

TEST(Config, EmptyTextIsAValidRun) {
  RunConfig c = parse_config("");
  EXPECT_EQ(c.dataset.kind, "synth");
  EXPECT_EQ(c.model, "ncf");
  EXPECT_EQ(c.attack, "none");
  EXPECT_EQ(c.defense, "none");
  EXPECT_EQ(c.epochs, 30);
  EXPECT_EQ(c.seed, 42u);
  c.validate();
}

TEST(Config, ParsesEverySection) {
  const std::string text =
      "# an experiment\n"
      "name = trial-3\n"
      "dataset.kind = synth\n"
      "dataset.num_users = 50   # trailing comment\n"
      "dataset.num_items = 80\n"
      "dataset.density = 0.1\n"
      "dataset.popularity_skew = 0.5\n"
      "dataset.test_fraction = 0.25\n"
      "dataset.neg_ratio = 3\n"
      "\n"
      "model.name = lightgcn\n"
      "model.head = dot\n"
      "model.embed_dim = 16\n"
      "model.layer_dims = 32, 16, 8\n"
      "train.epochs = 12\n"
      "train.local_epochs = 1\n"
      "train.lr = 0.005\n"
      "train.sample_fraction = 0.5\n"
      "attack.name = psmu\n"
      "attack.start = 4\n"
      "attack.xi = 0.02\n"
      "attack.targets = 7, 9\n"
      "attack.poison_lr = 0.03\n"
      "attack.poison_theta_lr = 0.0001\n"
      "defense.name = hics\n"
      "defense.rho = 2.5\n"
      "defense.gamma = 0.2\n"
      "eval.er_k = 10\n"
      "eval.hr_k = 15\n"
      "seed = 1234\n";
  RunConfig c = parse_config(text);
  EXPECT_EQ(c.name, "trial-3");
  EXPECT_EQ(c.dataset.num_users, 50);
  EXPECT_EQ(c.dataset.num_items, 80);
  EXPECT_DOUBLE_EQ(c.dataset.density, 0.1);
  EXPECT_DOUBLE_EQ(c.dataset.popularity_skew, 0.5);
  EXPECT_DOUBLE_EQ(c.dataset.test_fraction, 0.25);
  EXPECT_EQ(c.dataset.neg_ratio, 3);
  EXPECT_EQ(c.model, "lightgcn");
  EXPECT_EQ(c.head, "dot");
  EXPECT_EQ(c.embed_dim, 16);
  EXPECT_EQ(c.layer_dims, (std::vector<int>{32, 16, 8}));
  EXPECT_EQ(c.epochs, 12);
  EXPECT_EQ(c.local_epochs, 1);
  EXPECT_DOUBLE_EQ(c.lr, 0.005);
  EXPECT_DOUBLE_EQ(c.sample_fraction, 0.5);
  EXPECT_EQ(c.attack, "psmu");
  EXPECT_EQ(c.attack_start, 4);
  EXPECT_DOUBLE_EQ(c.xi, 0.02);
  EXPECT_EQ(c.targets, "7, 9");
  EXPECT_DOUBLE_EQ(c.poison_lr, 0.03);
  EXPECT_DOUBLE_EQ(c.poison_theta_lr, 0.0001);
  EXPECT_EQ(c.defense, "hics");
  EXPECT_DOUBLE_EQ(c.rho, 2.5);
  EXPECT_DOUBLE_EQ(c.gamma, 0.2);
  EXPECT_EQ(c.er_k, 10);
  EXPECT_EQ(c.hr_k, 15);
  EXPECT_EQ(c.seed, 1234u);
}

TEST(Config, SerializeParseRoundTrip) {
  RunConfig c = parse_config("");
  c.name = "round-trip";
  c.model = "lightgcn";
  c.head = "dot";
  c.embed_dim = 12;
  c.layer_dims = {24, 6};
  c.lr = 0.0025;
  c.attack = "psmu-no-ap";
  c.xi = 0.015;
  c.targets = "3,5,8";
  c.poison_theta_lr = 0.00005;
  c.defense = "l2-clip-su";
  c.rho = 3.75;
  c.gamma = 1.0;
  c.seed = 777;

  const std::string text = serialize_config(c);
  RunConfig back = parse_config(text);
  EXPECT_EQ(serialize_config(back), text);
  EXPECT_EQ(back.name, c.name);
  EXPECT_DOUBLE_EQ(back.lr, c.lr);
  EXPECT_DOUBLE_EQ(back.poison_theta_lr, c.poison_theta_lr);
  EXPECT_EQ(back.layer_dims, c.layer_dims);
  EXPECT_EQ(back.targets, c.targets);
  EXPECT_EQ(back.seed, c.seed);
}

TEST(Config, UnknownKeyNamesTheLine) {
  try {
    parse_config("train.epochs = 5\ntrain.leanring_rate = 0.1\n");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("train.leanring_rate"), std::string::npos);
    EXPECT_NE(msg.find("line 2"), std::string::npos);
  }
}

TEST(Config, MalformedLines) {
  EXPECT_THROW(parse_config("just some words\n"), ConfigError);
  EXPECT_THROW(parse_config("= 5\n"), ConfigError);
  EXPECT_THROW(parse_config("train.epochs = five\n"), ConfigError);
  EXPECT_THROW(parse_config("train.lr = 0.x1\n"), ConfigError);
  EXPECT_THROW(parse_config("model.layer_dims = \n"), ConfigError);
  EXPECT_THROW(parse_config("seed = 7b\n"), ConfigError);
}

TEST(Config, RangeChecks) {
  EXPECT_THROW(parse_config("attack.xi = 1.5\n"), ConfigError);
  EXPECT_THROW(parse_config("attack.xi = -0.1\n"), ConfigError);
  EXPECT_THROW(parse_config("defense.gamma = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("defense.gamma = 1.2\n"), ConfigError);
  EXPECT_THROW(parse_config("defense.rho = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("train.epochs = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("train.lr = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("dataset.density = 0\n"), ConfigError);
  EXPECT_THROW(parse_config("dataset.test_fraction = 1\n"), ConfigError);
  EXPECT_THROW(parse_config("model.name = vae\n"), ConfigError);
  EXPECT_THROW(parse_config("attack.name = sybil\n"), ConfigError);
  EXPECT_THROW(parse_config("defense.name = moat\n"), ConfigError);
  EXPECT_THROW(parse_config("dataset.kind = file\n"), ConfigError);  // file without a path
  EXPECT_THROW(parse_config("model.embed_dim = 8\n"), ConfigError);  // tower opens at 64
  EXPECT_THROW(parse_config("attack.targets = 1,x\n"), ConfigError);
}
