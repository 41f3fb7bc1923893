#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "fedsim/adam.hpp"
#include "fedsim/common.hpp"
#include "fedsim/matrix.hpp"
#include "fedsim/update.hpp"

namespace fedsim {

enum class DefenseKind { None, L2Clip, L2ClipSu, Hics, ItemKrum, Median, TrimmedMean };

inline DefenseKind parse_defense_name(const std::string& name) {
  if (name == "none") return DefenseKind::None;
  if (name == "l2-clip") return DefenseKind::L2Clip;
  if (name == "l2-clip-su") return DefenseKind::L2ClipSu;
  if (name == "hics") return DefenseKind::Hics;
  if (name == "item-krum") return DefenseKind::ItemKrum;
  if (name == "median") return DefenseKind::Median;
  if (name == "trimmed-mean") return DefenseKind::TrimmedMean;
  throw ConfigError("unknown defense '" + name + "'");
}

inline const char* to_string(DefenseKind k) {
  switch (k) {
    case DefenseKind::None: return "none";
    case DefenseKind::L2Clip: return "l2-clip";
    case DefenseKind::L2ClipSu: return "l2-clip-su";
    case DefenseKind::Hics: return "hics";
    case DefenseKind::ItemKrum: return "item-krum";
    case DefenseKind::Median: return "median";
    case DefenseKind::TrimmedMean: return "trimmed-mean";
  }
  return "?";
}

struct DefenseConfig {
  double rho = 1.0;    // per-client clip bound on the item-gradient mass
  double gamma = 0.1;  // fraction of item rows released per round
  double p = 2.0;      // clip norm order
  bool per_row_clip = false;
  int trim = 1;                    // trimmed mean: values dropped from each end
  bool contributors_only = false;  // median/trimmed-mean over contributing clients only

  void validate() const {
    if (!(rho > 0.0)) throw ConfigError("defense: rho must be > 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("defense: gamma must be in (0,1]");
    if (!(p >= 1.0)) throw ConfigError("defense: norm order must be >= 1");
    if (trim < 0) throw ConfigError("defense: trim must be >= 0");
  }
};

// Accumulated clipped gradients the server has withheld so far.
struct MemoryBank {
  Matrix w;

  MemoryBank() = default;
  MemoryBank(int num_items, int dim) : w(zeros(num_items, dim)) {}
};

struct DefenseStats {
  int clipped_clients = 0;
  int released_rows = 0;
  double bank_mass = 0.0;              // Frobenius norm of the bank after release
  double conservation_residual = 0.0;  // max entrywise error of the bank identity
  double release_mean_norm = 0.0;      // mean released-row norm before the re-clip
  double release_max_norm = 0.0;       // max released-row norm after the re-clip
  double release_norm_excess = 0.0;    // release_max_norm - release_mean_norm
};

namespace detail {

inline double update_lp_norm(const GradientUpdate& up, double p) {
  if (p == 2.0) return up.item_frobenius_norm();
  double s = 0.0;
  for (const auto& [item, row] : up.item_rows)
    for (double x : row) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

inline double row_lp_norm(const std::vector<double>& row, double p) {
  if (p == 2.0) {
    double s = 0.0;
    for (double x : row) s += x * x;
    return std::sqrt(s);
  }
  double s = 0.0;
  for (double x : row) s += std::pow(std::abs(x), p);
  return std::pow(s, 1.0 / p);
}

}  // namespace detail

// Rescales the client's item-embedding gradient so its joint norm is at
// most rho; the tower gradients pass through untouched. Per-row mode clips
// each row to rho independently instead.
inline GradientUpdate clip_per_client(const GradientUpdate& update, double rho, double p = 2.0,
                                      bool per_row = false, bool* clipped = nullptr) {
  if (!(rho > 0.0)) throw StructuralError("clip_per_client: rho must be > 0");
  GradientUpdate out = update;
  bool any = false;
  if (per_row) {
    for (auto& [item, row] : out.item_rows) {
      const double n = detail::row_lp_norm(row, p);
      if (n > rho) {
        const double f = rho / n;
        for (double& x : row) x *= f;
        any = true;
      }
    }
  } else {
    const double n = detail::update_lp_norm(out, p);
    if (n > rho) {
      out.scale_items(rho / n);
      any = true;
    }
  }
  if (clipped) *clipped = any;
  return out;
}

// Plain entrywise sum of the item-gradient rows, densified.
inline Matrix sum_item_rows(const std::vector<GradientUpdate>& updates, int num_items, int dim) {
  Matrix sum = zeros(num_items, dim);
  for (const GradientUpdate& up : updates) {
    for (const auto& [item, row] : up.item_rows) {
      if (item < 0 || item >= num_items)
        throw StructuralError("aggregation: item id out of range");
      if (static_cast<int>(row.size()) != dim)
        throw StructuralError("aggregation: gradient row width mismatch");
      for (int t = 0; t < dim; ++t) sum.at(item, t) += row[t];
    }
  }
  return sum;
}

// Sum of the tower gradients by name, first-seen name order.
inline GradMap sum_theta(const std::vector<GradientUpdate>& updates) {
  GradMap out;
  for (const GradientUpdate& up : updates) {
    for (const auto& [name, g] : up.theta) {
      Matrix* acc = nullptr;
      for (auto& [n, m] : out)
        if (n == name) acc = &m;
      if (!acc) {
        out.emplace_back(name, g);
      } else {
        check_same_shape(*acc, g, "theta gradient " + name);
        for (size_t i = 0; i < acc->a.size(); ++i) acc->a[i] += g.a[i];
      }
    }
  }
  return out;
}

// Clip each client, bank the sum, release the gamma fraction of rows with
// the largest norms (ties to the smaller id), optionally re-clip released
// rows to their mean pre-clip norm. Returns the released rows densified.
inline Matrix hics_round(const std::vector<GradientUpdate>& updates, MemoryBank& bank,
                         const DefenseConfig& cfg, bool adaptive, DefenseStats& stats) {
  cfg.validate();
  const int num_items = bank.w.rows;
  const int dim = bank.w.cols;

  std::vector<GradientUpdate> clipped;
  clipped.reserve(updates.size());
  for (const GradientUpdate& up : updates) {
    bool was = false;
    clipped.push_back(clip_per_client(up, cfg.rho, cfg.p, cfg.per_row_clip, &was));
    if (was) ++stats.clipped_clients;
  }
  const Matrix round_sum = sum_item_rows(clipped, num_items, dim);
  const Matrix bank_before = bank.w;
  for (size_t i = 0; i < bank.w.a.size(); ++i) bank.w.a[i] += round_sum.a[i];

  const int release_count =
      std::min(num_items, static_cast<int>(std::ceil(cfg.gamma * num_items)));
  std::vector<double> norms(num_items);
  for (int j = 0; j < num_items; ++j) norms[j] = l2_norm(bank.w.row(j));
  std::vector<int> order(num_items);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (norms[a] != norms[b]) return norms[a] > norms[b];
    return a < b;
  });
  order.resize(release_count);
  std::sort(order.begin(), order.end());

  Matrix released = zeros(num_items, dim);
  double norm_sum = 0.0;
  for (int j : order) {
    for (int t = 0; t < dim; ++t) {
      released.at(j, t) = bank.w.at(j, t);
      bank.w.at(j, t) = 0.0;
    }
    norm_sum += norms[j];
  }
  stats.released_rows = release_count;
  stats.release_mean_norm = norm_sum / release_count;

  // Bank identity: released rows plus what stays must equal the previous
  // bank plus this round's clipped sum.
  double residual = 0.0;
  for (size_t i = 0; i < bank.w.a.size(); ++i) {
    const double lhs = released.a[i] + bank.w.a[i];
    const double rhs = bank_before.a[i] + round_sum.a[i];
    residual = std::max(residual, std::abs(lhs - rhs));
  }
  stats.conservation_residual = residual;

  if (adaptive) {
    const double bound = stats.release_mean_norm;
    for (int j : order) {
      const double n = l2_norm(released.row(j));
      if (n > bound && n > 0.0) {
        const double f = bound / n;
        for (int t = 0; t < dim; ++t) released.at(j, t) *= f;
      }
    }
  }
  double max_norm = 0.0;
  for (int j : order) max_norm = std::max(max_norm, l2_norm(released.row(j)));
  stats.release_max_norm = max_norm;
  stats.release_norm_excess = max_norm - stats.release_mean_norm;
  stats.bank_mass = frobenius_norm(bank.w);
  return released;
}

// Per item, over the clients that uploaded a row for it: the single row
// closest to the mean of the other contributors' rows. One contributor
// means that row is used as-is. Rows are returned unscaled.
inline Matrix item_krum(const std::vector<GradientUpdate>& updates, int num_items, int dim) {
  std::map<int, std::vector<const std::vector<double>*>> rows_by_item;
  for (const GradientUpdate& up : updates) {
    for (const auto& [item, row] : up.item_rows) {
      if (item < 0 || item >= num_items) throw StructuralError("item_krum: item id out of range");
      if (static_cast<int>(row.size()) != dim)
        throw StructuralError("item_krum: gradient row width mismatch");
      rows_by_item[item].push_back(&row);
    }
  }
  Matrix out = zeros(num_items, dim);
  for (const auto& [item, rows] : rows_by_item) {
    const size_t m = rows.size();
    const std::vector<double>* winner = rows[0];
    if (m > 1) {
      std::vector<double> sum(dim, 0.0);
      for (const auto* r : rows)
        for (int t = 0; t < dim; ++t) sum[t] += (*r)[t];
      double best = std::numeric_limits<double>::infinity();
      for (const auto* r : rows) {
        // distance to the mean of the others = ||m*x - sum|| / (m-1)
        double d2 = 0.0;
        for (int t = 0; t < dim; ++t) {
          const double v = static_cast<double>(m) * (*r)[t] - sum[t];
          d2 += v * v;
        }
        if (d2 < best) {
          best = d2;
          winner = r;
        }
      }
    }
    for (int t = 0; t < dim; ++t) out.at(item, t) = (*winner)[t];
  }
  return out;
}

namespace detail {

// Per-coordinate values across clients for one item row; clients without
// the row contribute zero unless contributors_only is set.
inline Matrix coordinatewise(const std::vector<GradientUpdate>& updates, int num_items, int dim,
                             bool contributors_only,
                             const std::function<double(std::vector<double>&)>& reduce) {
  std::map<int, std::vector<const std::vector<double>*>> rows_by_item;
  for (const GradientUpdate& up : updates) {
    for (const auto& [item, row] : up.item_rows) {
      if (item < 0 || item >= num_items)
        throw StructuralError("coordinate aggregation: item id out of range");
      if (static_cast<int>(row.size()) != dim)
        throw StructuralError("coordinate aggregation: gradient row width mismatch");
      rows_by_item[item].push_back(&row);
    }
  }
  const size_t n_clients = updates.size();
  Matrix out = zeros(num_items, dim);
  std::vector<double> vals;
  for (const auto& [item, rows] : rows_by_item) {
    const size_t n = contributors_only ? rows.size() : n_clients;
    for (int t = 0; t < dim; ++t) {
      vals.clear();
      for (const auto* r : rows) vals.push_back((*r)[t]);
      vals.resize(n, 0.0);
      out.at(item, t) = reduce(vals);
    }
  }
  return out;
}

}  // namespace detail

inline Matrix coordinate_median(const std::vector<GradientUpdate>& updates, int num_items,
                                int dim, bool contributors_only = false) {
  if (updates.empty()) throw StructuralError("coordinate_median: no updates");
  return detail::coordinatewise(updates, num_items, dim, contributors_only,
                                [](std::vector<double>& vals) {
                                  std::sort(vals.begin(), vals.end());
                                  const size_t n = vals.size();
                                  if (n % 2 == 1) return vals[n / 2];
                                  return 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
                                });
}

inline Matrix trimmed_mean(const std::vector<GradientUpdate>& updates, int num_items, int dim,
                           int trim, bool contributors_only = false) {
  if (updates.empty()) throw StructuralError("trimmed_mean: no updates");
  if (trim < 0) throw StructuralError("trimmed_mean: trim must be >= 0");
  if (!contributors_only && 2 * static_cast<size_t>(trim) >= updates.size())
    throw StructuralError("trimmed_mean: trim leaves no values");
  return detail::coordinatewise(updates, num_items, dim, contributors_only,
                                [trim](std::vector<double>& vals) {
                                  if (2 * static_cast<size_t>(trim) >= vals.size())
                                    throw StructuralError("trimmed_mean: trim leaves no values");
                                  std::sort(vals.begin(), vals.end());
                                  double s = 0.0;
                                  for (size_t i = trim; i < vals.size() - trim; ++i) s += vals[i];
                                  return s / static_cast<double>(vals.size() - 2 * trim);
                                });
}

struct DefenseOutcome {
  std::vector<GradientUpdate> updates;  // what the server aggregates
  DefenseStats stats;
};

namespace detail {

inline GradientUpdate densified_to_update(const Matrix& grads, GradMap theta) {
  GradientUpdate up;
  up.client = -1;
  for (int j = 0; j < grads.rows; ++j) {
    bool nonzero = false;
    auto row = grads.row(j);
    for (double x : row)
      if (x != 0.0) {
        nonzero = true;
        break;
      }
    if (nonzero) up.item_rows.emplace(j, std::vector<double>(row.begin(), row.end()));
  }
  up.theta = std::move(theta);
  return up;
}

}  // namespace detail

// Routes a round's uploads through the named rule. The tower gradients are
// always aggregated as a plain sum; every rule transforms only the
// item-embedding side. Representative-row rules are scaled by the client
// count so the server's sum-then-step aggregation keeps its usual magnitude.
inline DefenseOutcome defense_dispatch(DefenseKind kind,
                                       const std::vector<GradientUpdate>& updates,
                                       MemoryBank& bank, const DefenseConfig& cfg) {
  cfg.validate();
  if (updates.empty()) throw StructuralError("defense_dispatch: no updates");
  const int num_items = bank.w.rows;
  const int dim = bank.w.cols;
  DefenseOutcome out;
  switch (kind) {
    case DefenseKind::None:
      out.updates = updates;
      return out;
    case DefenseKind::L2Clip: {
      for (const GradientUpdate& up : updates) {
        bool was = false;
        out.updates.push_back(clip_per_client(up, cfg.rho, cfg.p, cfg.per_row_clip, &was));
        if (was) ++out.stats.clipped_clients;
      }
      return out;
    }
    case DefenseKind::L2ClipSu:
    case DefenseKind::Hics: {
      const bool adaptive = (kind == DefenseKind::Hics);
      Matrix released = hics_round(updates, bank, cfg, adaptive, out.stats);
      out.updates.push_back(detail::densified_to_update(released, sum_theta(updates)));
      return out;
    }
    case DefenseKind::ItemKrum: {
      Matrix rep = item_krum(updates, num_items, dim);
      scale(rep, static_cast<double>(updates.size()));
      out.updates.push_back(detail::densified_to_update(rep, sum_theta(updates)));
      return out;
    }
    case DefenseKind::Median: {
      Matrix rep = coordinate_median(updates, num_items, dim, cfg.contributors_only);
      scale(rep, static_cast<double>(updates.size()));
      out.updates.push_back(detail::densified_to_update(rep, sum_theta(updates)));
      return out;
    }
    case DefenseKind::TrimmedMean: {
      Matrix rep = trimmed_mean(updates, num_items, dim, cfg.trim, cfg.contributors_only);
      scale(rep, static_cast<double>(updates.size()));
      out.updates.push_back(detail::densified_to_update(rep, sum_theta(updates)));
      return out;
    }
  }
  throw ConfigError("defense_dispatch: unhandled defense kind");
}

}  // namespace fedsim
