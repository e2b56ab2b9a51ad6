#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rrto/error.hpp"

namespace rrto::nn {

using Shape = std::vector<int>;
/// Over-aligned storage: vectorized Eigen reductions peel by address, so a
/// fixed base alignment is what makes results independent of the allocator.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

inline std::string to_string(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ')';
  return os.str();
}

/// Dense row-major f64 tensor of rank 1..4. The leading axis is the batch.
struct Tensor {
  Shape shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(numel(shape), fill) {
    detail::require(!shape.empty() && shape.size() <= 4, "Tensor: rank must be 1..4");
  }
  Tensor(Shape s, Buffer v) : shape(std::move(s)), data(std::move(v)) {
    detail::require(!shape.empty() && shape.size() <= 4, "Tensor: rank must be 1..4");
    detail::require(data.size() == numel(shape), "Tensor: data length does not match shape " +
                                                     to_string(shape));
  }

  Tensor(Shape s, const std::vector<double>& v) : Tensor(std::move(s), Buffer(v.begin(), v.end())) {}

  static Tensor from_matrix(const RowMat& m) {
    return Tensor({static_cast<int>(m.rows()), static_cast<int>(m.cols())},
                  Buffer(m.data(), m.data() + m.size()));
  }

  int batch() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t size() const { return data.size(); }
  /// Per-sample feature count.
  std::size_t sample_size() const { return batch() ? data.size() / batch() : 0; }
  /// Per-sample shape (batch axis dropped).
  Shape sample_shape() const { return Shape(shape.begin() + 1, shape.end()); }

  double* sample(int b) { return data.data() + b * sample_size(); }
  const double* sample(int b) const { return data.data() + b * sample_size(); }

  /// (batch, features) view.
  MatMap matrix() {
    return MatMap(data.data(), batch(), static_cast<Eigen::Index>(sample_size()));
  }
  ConstMatMap matrix() const {
    return ConstMatMap(data.data(), batch(), static_cast<Eigen::Index>(sample_size()));
  }

  Tensor reshaped(Shape s) const {
    detail::require(numel(s) == data.size(),
                    "Tensor: cannot reshape " + to_string(shape) + " to " + to_string(s));
    return Tensor(std::move(s), data);
  }

  /// Rows [begin, end) of the batch axis.
  Tensor slice(int begin, int end) const {
    detail::require(0 <= begin && begin <= end && end <= batch(), "Tensor: bad batch slice");
    Shape s = shape;
    s[0] = end - begin;
    const std::size_t n = sample_size();
    return Tensor(std::move(s), Buffer(data.begin() + begin * n, data.begin() + end * n));
  }

  /// Gathers the listed batch rows.
  Tensor gather(const std::vector<int>& rows) const {
    Shape s = shape;
    s[0] = static_cast<int>(rows.size());
    Tensor out(std::move(s));
    const std::size_t n = sample_size();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      detail::require(rows[i] >= 0 && rows[i] < batch(), "Tensor: gather index out of range");
      std::copy_n(sample(rows[i]), n, out.sample(static_cast<int>(i)));
    }
    return out;
  }

  bool operator==(const Tensor&) const = default;
};

}  // namespace rrto::nn
