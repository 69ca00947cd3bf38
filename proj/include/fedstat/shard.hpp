#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "fedstat/stats.hpp"
#include "fedstat/tensor.hpp"

namespace fedstat {

/// One client's private data. For synthetic tasks the last column of X is
/// the constant 1; for image tasks there is no bias column.
struct ClientShard {
  std::size_t client_id = 0;
  /// Ground-truth group. Only baselines and reports may look at it.
  std::size_t cluster_id = 0;
  Tensor2 x_train;
  std::vector<double> y_train;
  Tensor2 x_test;
  std::vector<double> y_test;
  bool has_bias_column = true;
  /// 0 for scalar targets, otherwise labels are class indices.
  std::size_t num_classes = 0;
  std::optional<LocalStats> stats;

  std::size_t feature_cols() const { return x_train.cols() - (has_bias_column ? 1 : 0); }
  const std::vector<double>& mu() const;

  bool operator==(const ClientShard& other) const;
};

}  // namespace fedstat
