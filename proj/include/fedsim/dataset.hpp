#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "fedsim/common.hpp"

namespace fedsim {

struct RatingRecord {
  int user = 0;
  int item = 0;
  double rating = 0.0;
  std::optional<std::int64_t> timestamp;
};

enum class RatingFormat { MovielensDat, Csv };

enum class SplitMode { Random, Temporal };

// Implicit-feedback dataset after binarization, per-user train/test split
// and frozen negative sampling. Users and items are contiguous ids;
// the original file ids are kept in the *_ids maps.
struct InteractionDataset {
  int num_users = 0;
  int num_items = 0;
  std::vector<std::vector<int>> train_pos;   // per user, sorted
  std::vector<std::vector<int>> test_items;  // per user, sorted
  std::vector<std::vector<int>> train_neg;   // per user, sorted
  std::vector<std::int64_t> user_ids;        // contiguous id -> original id
  std::vector<std::int64_t> item_ids;
  int split_warnings = 0;  // users too small to split

  bool interacted(int user, int item) const {
    const auto& p = train_pos[user];
    if (std::binary_search(p.begin(), p.end(), item)) return true;
    const auto& t = test_items[user];
    return std::binary_search(t.begin(), t.end(), item);
  }
};

namespace detail {

inline std::vector<std::string> split_on(const std::string& line, const std::string& sep) {
  std::vector<std::string> out;
  size_t pos = 0;
  while (true) {
    size_t next = line.find(sep, pos);
    if (next == std::string::npos) {
      out.push_back(line.substr(pos));
      break;
    }
    out.push_back(line.substr(pos, next - pos));
    pos = next + sep.size();
  }
  return out;
}

inline std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::int64_t parse_int(const std::string& s, int line_no, const char* what) {
  try {
    size_t used = 0;
    long long v = std::stoll(trim(s), &used);
    if (used != trim(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
}

inline double parse_real(const std::string& s, int line_no, const char* what) {
  try {
    size_t used = 0;
    double v = std::stod(trim(s), &used);
    if (used != trim(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
}

}  // namespace detail

// Reads a ratings file and re-indexes user/item ids to contiguous ranges in
// order of first appearance. RatingRecord.user/item are the re-indexed ids;
// the returned maps recover the originals.
struct LoadedRatings {
  std::vector<RatingRecord> records;
  std::vector<std::int64_t> user_ids;
  std::vector<std::int64_t> item_ids;
};

inline LoadedRatings load_ratings(const std::string& path, RatingFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open ratings file: " + path);

  LoadedRatings out;
  std::unordered_map<std::int64_t, int> user_index, item_index;
  auto reindex = [](std::unordered_map<std::int64_t, int>& index,
                    std::vector<std::int64_t>& ids, std::int64_t orig) {
    auto it = index.find(orig);
    if (it != index.end()) return it->second;
    int id = static_cast<int>(ids.size());
    index.emplace(orig, id);
    ids.push_back(orig);
    return id;
  };

  std::string line;
  int line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string t = detail::trim(line);
    if (t.empty()) continue;
    std::vector<std::string> fields;
    if (format == RatingFormat::MovielensDat) {
      fields = detail::split_on(t, "::");
      if (fields.size() != 4)
        throw ParseError("line " + std::to_string(line_no) + ": expected user::item::rating::timestamp");
    } else {
      if (!saw_header) {
        saw_header = true;
        std::string lowered = t;
        std::transform(lowered.begin(), lowered.end(), lowered.begin(), ::tolower);
        if (lowered.rfind("user,item,rating", 0) != 0)
          throw ParseError("line " + std::to_string(line_no) + ": expected header user,item,rating[,timestamp]");
        continue;
      }
      fields = detail::split_on(t, ",");
      if (fields.size() != 3 && fields.size() != 4)
        throw ParseError("line " + std::to_string(line_no) + ": expected 3 or 4 comma-separated fields");
    }
    RatingRecord rec;
    std::int64_t orig_user = detail::parse_int(fields[0], line_no, "user id");
    std::int64_t orig_item = detail::parse_int(fields[1], line_no, "item id");
    if (orig_user < 0 || orig_item < 0)
      throw ParseError("line " + std::to_string(line_no) + ": negative id");
    rec.rating = detail::parse_real(fields[2], line_no, "rating");
    if (fields.size() == 4 && !detail::trim(fields[3]).empty())
      rec.timestamp = detail::parse_int(fields[3], line_no, "timestamp");
    rec.user = reindex(user_index, out.user_ids, orig_user);
    rec.item = reindex(item_index, out.item_ids, orig_item);
    out.records.push_back(rec);
  }
  if (out.records.empty()) throw StructuralError("ratings file has no records: " + path);
  return out;
}

// Binarize, split per user and freeze uniformly sampled negatives.
// Per-user split keeps HR@K defined for every user. Negatives are drawn
// without replacement from the user's non-interacted items; when the pool
// is smaller than neg_ratio * |train|, the whole pool is used.
inline InteractionDataset build_dataset(const LoadedRatings& loaded, double test_fraction,
                                        int neg_ratio, std::uint64_t seed,
                                        SplitMode split = SplitMode::Random) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw StructuralError("build_dataset: test_fraction must be in (0,1)");
  if (neg_ratio < 1) throw StructuralError("build_dataset: neg_ratio must be >= 1");

  InteractionDataset ds;
  ds.user_ids = loaded.user_ids;
  ds.item_ids = loaded.item_ids;
  ds.num_users = static_cast<int>(loaded.user_ids.size());
  ds.num_items = static_cast<int>(loaded.item_ids.size());

  // Deduplicated per-user interactions, first occurrence wins.
  struct Seen {
    int item;
    std::optional<std::int64_t> ts;
  };
  std::vector<std::vector<Seen>> per_user(ds.num_users);
  std::vector<std::unordered_set<int>> seen(ds.num_users);
  for (const RatingRecord& r : loaded.records) {
    if (seen[r.user].insert(r.item).second) per_user[r.user].push_back({r.item, r.timestamp});
  }

  ds.train_pos.resize(ds.num_users);
  ds.test_items.resize(ds.num_users);
  ds.train_neg.resize(ds.num_users);

  std::mt19937_64 rng(mix_seed(seed, stream::kDataset));
  for (int u = 0; u < ds.num_users; ++u) {
    auto& items = per_user[u];
    const int n = static_cast<int>(items.size());
    int n_test = static_cast<int>(std::floor(test_fraction * n));
    if (n < 2) {
      n_test = 0;
      ++ds.split_warnings;
    }

    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (split == SplitMode::Temporal) {
      // Most recent interactions held out; missing timestamps sort first.
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        std::int64_t ta = items[a].ts.value_or(std::numeric_limits<std::int64_t>::min());
        std::int64_t tb = items[b].ts.value_or(std::numeric_limits<std::int64_t>::min());
        return ta < tb;
      });
    } else {
      std::shuffle(order.begin(), order.end(), rng);
    }
    for (int k = 0; k < n; ++k) {
      int item = items[order[k]].item;
      if (k < n - n_test)
        ds.train_pos[u].push_back(item);
      else
        ds.test_items[u].push_back(item);
    }
    std::sort(ds.train_pos[u].begin(), ds.train_pos[u].end());
    std::sort(ds.test_items[u].begin(), ds.test_items[u].end());

    // Negative pool: everything the user never interacted with.
    std::vector<int> pool;
    pool.reserve(ds.num_items - n);
    for (int j = 0; j < ds.num_items; ++j)
      if (!seen[u].count(j)) pool.push_back(j);
    const size_t want = static_cast<size_t>(neg_ratio) * ds.train_pos[u].size();
    std::shuffle(pool.begin(), pool.end(), rng);
    if (pool.size() > want) pool.resize(want);
    std::sort(pool.begin(), pool.end());
    ds.train_neg[u] = std::move(pool);
  }
  return ds;
}

inline InteractionDataset build_dataset(const std::vector<RatingRecord>& records,
                                        double test_fraction, int neg_ratio, std::uint64_t seed,
                                        SplitMode split = SplitMode::Random) {
  // Records straight from memory: ids are taken as already contiguous.
  LoadedRatings loaded;
  loaded.records = records;
  std::int64_t max_user = -1, max_item = -1;
  for (const auto& r : records) {
    max_user = std::max<std::int64_t>(max_user, r.user);
    max_item = std::max<std::int64_t>(max_item, r.item);
  }
  loaded.user_ids.resize(max_user + 1);
  loaded.item_ids.resize(max_item + 1);
  std::iota(loaded.user_ids.begin(), loaded.user_ids.end(), 0);
  std::iota(loaded.item_ids.begin(), loaded.item_ids.end(), 0);
  return build_dataset(loaded, test_fraction, neg_ratio, seed, split);
}

// Synthetic implicit-feedback data: item popularity follows a Zipf law with
// the given skew, every user gets at least 5 interactions. Item count stays
// exactly num_items even if tail items receive no interactions, which is
// what makes them natural promotion targets.
inline InteractionDataset synth_dataset(int num_users, int num_items, double density,
                                        double popularity_skew, std::uint64_t seed,
                                        double test_fraction = 0.2, int neg_ratio = 4) {
  if (num_users < 1 || num_items < 1) throw StructuralError("synth_dataset: empty universe");
  if (!(density > 0.0 && density < 1.0))
    throw StructuralError("synth_dataset: density must be in (0,1)");
  if (popularity_skew < 0.0) throw StructuralError("synth_dataset: popularity_skew must be >= 0");

  const int per_user = std::max(5, static_cast<int>(std::llround(density * num_items)));
  if (per_user >= num_items)
    throw StructuralError("synth_dataset: users would interact with the whole catalog");

  std::vector<double> weights(num_items);
  for (int j = 0; j < num_items; ++j)
    weights[j] = 1.0 / std::pow(static_cast<double>(j + 1), popularity_skew);

  std::mt19937_64 rng(mix_seed(seed, stream::kDataset, 0xabcdULL));
  std::discrete_distribution<int> pick(weights.begin(), weights.end());

  std::vector<RatingRecord> records;
  records.reserve(static_cast<size_t>(num_users) * per_user);
  for (int u = 0; u < num_users; ++u) {
    std::unordered_set<int> chosen;
    while (static_cast<int>(chosen.size()) < per_user) {
      int j = pick(rng);
      if (chosen.insert(j).second) {
        RatingRecord r;
        r.user = u;
        r.item = j;
        r.rating = 1.0;
        records.push_back(r);
      }
    }
  }
  // Build LoadedRatings directly so tail items with zero interactions
  // still count toward num_items.
  LoadedRatings loaded;
  loaded.records = std::move(records);
  loaded.user_ids.resize(num_users);
  loaded.item_ids.resize(num_items);
  std::iota(loaded.user_ids.begin(), loaded.user_ids.end(), 0);
  std::iota(loaded.item_ids.begin(), loaded.item_ids.end(), 0);
  return build_dataset(loaded, test_fraction, neg_ratio, mix_seed(seed, 0x5157ULL), SplitMode::Random);
}

// Attack targets: the globally least-interacted items (train + test),
// ties broken by smallest item id.
inline std::vector<int> pick_target_items(const InteractionDataset& ds, int count) {
  if (count < 1 || count > ds.num_items) throw StructuralError("pick_target_items: bad count");
  std::vector<long> freq(ds.num_items, 0);
  for (int u = 0; u < ds.num_users; ++u) {
    for (int j : ds.train_pos[u]) ++freq[j];
    for (int j : ds.test_items[u]) ++freq[j];
  }
  std::vector<int> ids(ds.num_items);
  std::iota(ids.begin(), ids.end(), 0);
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    if (freq[a] != freq[b]) return freq[a] < freq[b];
    return a < b;
  });
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace fedsim
