#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "fedsim/dataset.hpp"

using namespace fedsim;

namespace {

std::string write_temp(const std::string& name, const std::string& body) {
  std::string path = std::string(::testing::TempDir()) + name;
  std::ofstream out(path);
  out << body;
  return path;
}

}  // namespace

TEST(Dataset, SynthShapeAndDisjointness) {
  InteractionDataset ds = synth_dataset(40, 60, 0.1, 1.0, 7);
  EXPECT_EQ(ds.num_users, 40);
  EXPECT_EQ(ds.num_items, 60);
  ASSERT_EQ(ds.train_pos.size(), 40u);
  ASSERT_EQ(ds.train_neg.size(), 40u);
  ASSERT_EQ(ds.test_items.size(), 40u);
  for (int u = 0; u < ds.num_users; ++u) {
    std::set<int> pos(ds.train_pos[u].begin(), ds.train_pos[u].end());
    std::set<int> neg(ds.train_neg[u].begin(), ds.train_neg[u].end());
    std::set<int> test(ds.test_items[u].begin(), ds.test_items[u].end());
    EXPECT_EQ(pos.size(), ds.train_pos[u].size());
    EXPECT_FALSE(pos.empty());
    EXPECT_FALSE(test.empty());
    for (int j : test) EXPECT_FALSE(pos.count(j));
    // Negatives are items the user never interacted with at all.
    for (int j : neg) {
      EXPECT_FALSE(pos.count(j));
      EXPECT_FALSE(test.count(j));
      EXPECT_FALSE(ds.interacted(u, j));
    }
    for (int j : pos) EXPECT_TRUE(ds.interacted(u, j));
    for (int j : test) EXPECT_TRUE(ds.interacted(u, j));
    EXPECT_TRUE(std::is_sorted(ds.train_pos[u].begin(), ds.train_pos[u].end()));
    EXPECT_TRUE(std::is_sorted(ds.train_neg[u].begin(), ds.train_neg[u].end()));
  }
}

TEST(Dataset, SynthDeterministicAndSeedSensitive) {
  InteractionDataset a = synth_dataset(25, 40, 0.12, 1.0, 99);
  InteractionDataset b = synth_dataset(25, 40, 0.12, 1.0, 99);
  InteractionDataset c = synth_dataset(25, 40, 0.12, 1.0, 100);
  EXPECT_EQ(a.train_pos, b.train_pos);
  EXPECT_EQ(a.train_neg, b.train_neg);
  EXPECT_EQ(a.test_items, b.test_items);
  EXPECT_NE(a.train_pos, c.train_pos);
}

TEST(Dataset, SynthPopularityFollowsSkew) {
  InteractionDataset ds = synth_dataset(200, 100, 0.1, 1.2, 5);
  std::vector<long> freq(ds.num_items, 0);
  for (int u = 0; u < ds.num_users; ++u) {
    for (int j : ds.train_pos[u]) ++freq[j];
    for (int j : ds.test_items[u]) ++freq[j];
  }
  long head = 0, tail = 0;
  for (int j = 0; j < 10; ++j) head += freq[j];
  for (int j = ds.num_items - 10; j < ds.num_items; ++j) tail += freq[j];
  EXPECT_GT(head, 4 * tail);
}

TEST(Dataset, TenInteractionsSplitEightTwo) {
  // 10 interactions per user at test_fraction 0.2: 2 held out, 8 train
  // positives, and 4 negatives per positive.
  std::vector<RatingRecord> records;
  for (int u = 0; u < 3; ++u)
    for (int j = 0; j < 10; ++j) records.push_back({u, 6 * j + u, 1.0, 1000 + j});
  InteractionDataset ds = build_dataset(records, 0.2, 4, 11);
  for (int u = 0; u < 3; ++u) {
    EXPECT_EQ(ds.train_pos[u].size(), 8u);
    EXPECT_EQ(ds.test_items[u].size(), 2u);
    EXPECT_EQ(ds.train_neg[u].size(), 32u);
  }
  // Tiny catalog: the pool caps the negatives at what exists.
  std::vector<RatingRecord> tiny;
  for (int j = 0; j < 10; ++j) tiny.push_back({0, j, 1.0, 1000 + j});
  tiny.push_back({1, 10, 1.0, 1000});
  tiny.push_back({1, 11, 1.0, 1001});
  InteractionDataset small = build_dataset(tiny, 0.2, 4, 11);
  EXPECT_EQ(small.train_neg[0].size(), 2u);  // only items 10 and 11 are unseen
}

TEST(Dataset, TemporalSplitHoldsOutLatest) {
  std::vector<RatingRecord> records;
  for (int j = 0; j < 10; ++j) records.push_back({0, j, 1.0, j});
  // Items 8 and 9 carry the largest timestamps.
  InteractionDataset ds = build_dataset(records, 0.2, 1, 3, SplitMode::Temporal);
  EXPECT_EQ(ds.test_items[0], (std::vector<int>{8, 9}));
}

TEST(Dataset, MovieLensLineParse) {
  std::string path = write_temp("ml.dat",
                                "1::10::5::978300760\n"
                                "1::20::3::978300761\n"
                                "1::30::4::978300762\n"
                                "1::40::4::978300763\n"
                                "1::50::4::978300764\n"
                                "2::10::4::978300765\n"
                                "2::20::4::978300766\n"
                                "2::30::4::978300767\n"
                                "2::40::4::978300768\n"
                                "2::60::4::978300769\n");
  LoadedRatings lr = load_ratings(path, RatingFormat::MovielensDat);
  EXPECT_EQ(lr.records.size(), 10u);
  EXPECT_EQ(lr.user_ids.size(), 2u);
  EXPECT_EQ(lr.item_ids.size(), 6u);
  EXPECT_EQ(lr.records[0].user, 0);
  EXPECT_EQ(lr.records[0].item, 0);
  EXPECT_DOUBLE_EQ(lr.records[0].rating, 5.0);
  EXPECT_EQ(lr.records[0].timestamp, 978300760);
  std::remove(path.c_str());
}

TEST(Dataset, CsvParseAndBadLine) {
  std::string good = write_temp("r.csv", "user,item,rating,timestamp\n7,3,1.0,5\n8,4,1.0,6\n");
  LoadedRatings lr = load_ratings(good, RatingFormat::Csv);
  EXPECT_EQ(lr.records.size(), 2u);
  std::remove(good.c_str());

  std::string bad = write_temp("bad.csv", "user,item,rating\n7,notanumber,1.0\n");
  EXPECT_THROW(load_ratings(bad, RatingFormat::Csv), ParseError);
  std::remove(bad.c_str());

  EXPECT_THROW(load_ratings("/does/not/exist.csv", RatingFormat::Csv), ParseError);
}

TEST(Dataset, PickTargetItemsLeastPopular) {
  InteractionDataset ds = synth_dataset(100, 50, 0.1, 1.5, 21);
  std::vector<long> freq(ds.num_items, 0);
  for (int u = 0; u < ds.num_users; ++u) {
    for (int j : ds.train_pos[u]) ++freq[j];
    for (int j : ds.test_items[u]) ++freq[j];
  }
  std::vector<int> targets = pick_target_items(ds, 3);
  ASSERT_EQ(targets.size(), 3u);
  EXPECT_TRUE(std::is_sorted(targets.begin(), targets.end()));
  // No non-target item may be strictly less popular than a chosen target.
  long worst_target = 0;
  for (int t : targets) worst_target = std::max(worst_target, freq[t]);
  long best_other = std::numeric_limits<long>::max();
  for (int j = 0; j < ds.num_items; ++j)
    if (std::find(targets.begin(), targets.end(), j) == targets.end())
      best_other = std::min(best_other, freq[j]);
  EXPECT_LE(worst_target, best_other);
  EXPECT_THROW(pick_target_items(ds, 0), StructuralError);
  EXPECT_THROW(pick_target_items(ds, ds.num_items + 1), StructuralError);
}

TEST(Dataset, BuildRejectsBadParameters) {
  std::vector<RatingRecord> records;
  for (int j = 0; j < 10; ++j) records.push_back({0, j, 1.0, j});
  EXPECT_THROW(build_dataset(records, 0.0, 4, 1), StructuralError);
  EXPECT_THROW(build_dataset(records, 1.0, 4, 1), StructuralError);
  EXPECT_THROW(build_dataset(records, 0.2, 0, 1), StructuralError);
  EXPECT_THROW(synth_dataset(0, 10, 0.1, 1.0, 1), StructuralError);
  EXPECT_THROW(synth_dataset(10, 10, 0.9999, 1.0, 1), StructuralError);
}
