#include "dspl/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace dspl {

std::size_t numel(const Dims& dims) {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

static void check_dims(const Dims& dims) {
  if (dims.empty() || dims.size() > Tensor::kMaxRank)
    throw ShapeError("tensor rank must be 1..4, got " + std::to_string(dims.size()));
  for (auto d : dims)
    if (d == 0) throw ShapeError("tensor extents must be >= 1, got " + dims_to_string(dims));
}

Tensor::Tensor(Dims dims, double fill) : dims_(std::move(dims)) {
  check_dims(dims_);
  data_.assign(numel(dims_), fill);
}

Tensor::Tensor(Dims dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  check_dims(dims_);
  if (data_.size() != numel(dims_))
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match dims " + dims_to_string(dims_));
}

Tensor Tensor::vector(std::vector<double> values) {
  Dims d{values.size()};
  return Tensor(std::move(d), std::move(values));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Dims dims) const { return Tensor(std::move(dims), data_); }

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw ContractError("squared_distance: length mismatch " + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

}  // namespace dspl
