#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "rrto/error.hpp"

namespace rrto {

/// Dense row-major 2-d field, one value per element. Row 0 is the top
/// row of the domain, column 0 the left column.
struct Grid {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int r, int c, double fill = 0.0)
      : rows(r), cols(c), values(static_cast<std::size_t>(r) * c, fill) {}
  Grid(int r, int c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
    detail::require(values.size() == static_cast<std::size_t>(r) * c,
                    "Grid: value count " + std::to_string(values.size()) + " does not match " +
                        std::to_string(r) + "x" + std::to_string(c));
  }

  std::size_t size() const { return values.size(); }
  double& operator()(int r, int c) { return values[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return values[static_cast<std::size_t>(r) * cols + c]; }

  double mean() const {
    return values.empty() ? 0.0
                          : std::accumulate(values.begin(), values.end(), 0.0) /
                                static_cast<double>(values.size());
  }
  double max() const { return *std::max_element(values.begin(), values.end()); }

  /// Main diagonal, top-left to bottom-right.
  std::vector<double> diagonal() const {
    std::vector<double> d(static_cast<std::size_t>(std::min(rows, cols)));
    for (int i = 0; i < static_cast<int>(d.size()); ++i) d[i] = (*this)(i, i);
    return d;
  }

  std::span<const double> view() const { return values; }
  bool operator==(const Grid&) const = default;
};

/// Per-element relative densities, entries in [0, 1].
struct DensityField {
  Grid grid;

  double volume_fraction() const { return grid.mean(); }
  bool in_unit_range() const {
    return std::all_of(grid.values.begin(), grid.values.end(),
                       [](double v) { return v >= 0.0 && v <= 1.0; });
  }
};

/// Element-averaged von Mises stress, entries >= 0.
struct StressField {
  Grid grid;
};

}  // namespace rrto
