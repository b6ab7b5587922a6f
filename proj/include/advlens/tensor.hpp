#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace advlens {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  /// Number of leading-axis entries (batch size).
  std::size_t batch() const { return shape_.empty() ? 0 : shape_[0]; }
  /// Shape without the leading axis.
  Shape sample_shape() const;
  /// Elements per leading-axis entry.
  std::size_t sample_size() const;
  std::span<const double> sample(std::size_t i) const;
  std::span<double> sample(std::size_t i);

  Tensor reshaped(Shape shape) const;
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// Stack equally-shaped samples into a batch tensor.
Tensor stack(const std::vector<std::span<const double>>& samples, const Shape& sample_shape);

/// Gather the given leading-axis rows of a batch.
Tensor gather(const Tensor& batch, std::span<const std::size_t> rows);

}  // namespace advlens
