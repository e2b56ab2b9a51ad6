#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rrto/error.hpp"
#include "rrto/nn/tensor.hpp"

namespace rrto::nn {

/// Per-column standardization (x - mean) / std, population std with a floor.
class StandardScaler {
 public:
  static constexpr double kStdFloor = 1e-12;

  bool fitted() const { return !mean_.empty(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& scale() const { return std_; }

  void fit(const RowMat& x) {
    if (x.rows() < 1 || x.cols() < 1) throw ContractError("StandardScaler::fit: empty data");
    const Eigen::RowVectorXd mu = x.colwise().mean();
    const Eigen::RowVectorXd var = (x.rowwise() - mu).array().square().colwise().mean();
    mean_.assign(mu.data(), mu.data() + mu.size());
    std_.resize(mean_.size());
    for (Eigen::Index j = 0; j < var.size(); ++j) std_[j] = std::max(std::sqrt(var(j)), kStdFloor);
  }

  RowMat transform(const RowMat& x) const {
    check(x, "transform");
    RowMat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (Eigen::Index j = 0; j < x.cols(); ++j) y(i, j) = (x(i, j) - mean_[j]) / std_[j];
    return y;
  }

  RowMat inverse(const RowMat& y) const {
    check(y, "inverse");
    RowMat x(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      for (Eigen::Index j = 0; j < y.cols(); ++j) x(i, j) = y(i, j) * std_[j] + mean_[j];
    return x;
  }

  nlohmann::json to_json() const { return {{"mean", mean_}, {"std", std_}}; }
  static StandardScaler from_json(const nlohmann::json& j) {
    StandardScaler s;
    j.at("mean").get_to(s.mean_);
    j.at("std").get_to(s.std_);
    if (s.mean_.size() != s.std_.size()) throw FormatError("scaler: mean/std length mismatch");
    return s;
  }

 private:
  void check(const RowMat& x, const char* op) const {
    if (!fitted()) throw StateError(std::string("StandardScaler::") + op + " before fit");
    if (x.cols() != static_cast<Eigen::Index>(mean_.size()))
      throw ContractError(std::string("StandardScaler::") + op + ": expected " +
                          std::to_string(mean_.size()) + " columns, got " + std::to_string(x.cols()));
  }

  std::vector<double> mean_, std_;
};

}  // namespace rrto::nn
