#pragma once

#include <map>
#include <string>
#include <vector>

#include "fedsim/common.hpp"
#include "fedsim/matrix.hpp"

namespace fedsim {

// One client's upload for a round: sparse item-embedding gradient rows
// keyed by item id (ordered, so iteration is deterministic) plus dense
// gradients for the shared scoring parameters.
struct GradientUpdate {
  int client = -1;
  std::map<int, std::vector<double>> item_rows;
  std::vector<std::pair<std::string, Matrix>> theta;

  void add_item_row(int item, const std::vector<double>& g) {
    auto [it, inserted] = item_rows.try_emplace(item, g);
    if (!inserted) {
      auto& acc = it->second;
      if (acc.size() != g.size()) throw StructuralError("item gradient width mismatch");
      for (size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
    }
  }

  double item_frobenius_norm() const {
    double s = 0.0;
    for (const auto& [item, row] : item_rows)
      for (double x : row) s += x * x;
    return std::sqrt(s);
  }

  void scale_items(double f) {
    for (auto& [item, row] : item_rows)
      for (double& x : row) x *= f;
  }

  bool items_finite() const {
    for (const auto& [item, row] : item_rows)
      for (double x : row)
        if (!std::isfinite(x)) return false;
    return true;
  }
};

inline void check_update_bounds(const GradientUpdate& up, int num_items) {
  for (const auto& [item, row] : up.item_rows)
    if (item < 0 || item >= num_items)
      throw StructuralError("gradient update references item " + std::to_string(item) +
                            " outside catalog of " + std::to_string(num_items));
}

}  // namespace fedsim
