#include "advlens/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "advlens/error.hpp"

namespace advlens {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw ConfigError("tensor shape " + shape_string(shape_) + " does not match " +
                      std::to_string(data_.size()) + " values");
  }
}

Shape Tensor::sample_shape() const {
  if (shape_.empty()) return {};
  return Shape(shape_.begin() + 1, shape_.end());
}

std::size_t Tensor::sample_size() const {
  return shape_.empty() ? 0 : shape_size(sample_shape());
}

std::span<const double> Tensor::sample(std::size_t i) const {
  const std::size_t n = sample_size();
  return std::span<const double>(data_).subspan(i * n, n);
}

std::span<double> Tensor::sample(std::size_t i) {
  const std::size_t n = sample_size();
  return std::span<double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor stack(const std::vector<std::span<const double>>& samples, const Shape& sample_shape) {
  const std::size_t n = shape_size(sample_shape);
  Shape shape{samples.size()};
  shape.insert(shape.end(), sample_shape.begin(), sample_shape.end());
  Tensor out(shape);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].size() != n) throw ConfigError("stack: sample " + std::to_string(i) + " has wrong size");
    std::copy(samples[i].begin(), samples[i].end(), out.sample(i).begin());
  }
  return out;
}

Tensor gather(const Tensor& batch, std::span<const std::size_t> rows) {
  Shape shape = batch.shape();
  shape.at(0) = rows.size();
  Tensor out(shape);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    auto src = batch.sample(rows[k]);
    std::copy(src.begin(), src.end(), out.sample(k).begin());
  }
  return out;
}

}  // namespace advlens
