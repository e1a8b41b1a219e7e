#ifndef DSPL_TENSOR_HPP_
#define DSPL_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dspl {

/// Dimension mismatch between a tensor and what a consumer expects.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Broken caller contract (bad arguments, stale tape, mismatched lengths).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Invalid user configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Dims = std::vector<std::size_t>;

std::size_t numel(const Dims& dims);
std::string dims_to_string(const Dims& dims);

/// Dense row-major array of doubles with rank 1 to 4.
class Tensor {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Tensor() = default;
  explicit Tensor(Dims dims, double fill = 0.0);
  Tensor(Dims dims, std::vector<double> data);

  static Tensor vector(std::vector<double> values);

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 accessor for (row, col, channel) layouts.
  double& at(std::size_t r, std::size_t c, std::size_t ch) {
    return data_[(r * dims_[1] + c) * dims_[2] + ch];
  }
  double at(std::size_t r, std::size_t c, std::size_t ch) const {
    return data_[(r * dims_[1] + c) * dims_[2] + ch];
  }

  void fill(double v);
  Tensor reshaped(Dims dims) const;

  bool operator==(const Tensor& other) const = default;

 private:
  Dims dims_;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
/// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

}  // namespace dspl

#endif  // DSPL_TENSOR_HPP_
