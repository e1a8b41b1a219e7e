#ifndef DSPL_TRAINER_HPP_
#define DSPL_TRAINER_HPP_

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dspl/data.hpp"
#include "dspl/losses.hpp"
#include "dspl/network.hpp"
#include "dspl/spl.hpp"

namespace dspl {

/// Non-finite loss or gradient during training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, std::size_t triplet_index)
      : std::runtime_error(what), triplet_index_(triplet_index) {}
  std::size_t triplet_index() const { return triplet_index_; }

 private:
  std::size_t triplet_index_;
};

/// Which terms of the objective are switched on.
enum class TrainMode {
  Baseline,  // relative term only, u = 1
  SplOnly,   // + self-paced weights
  SymOnly,   // + symmetric regularizer
  Dspl,      // both
};

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);
std::string to_string(GradientMode mode);
GradientMode gradient_mode_from_string(const std::string& name);

/// How per-triplet gradients are combined: summed, or averaged over the batch.
enum class Reduction { Sum, Mean };
std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& name);

inline bool uses_self_paced_weights(TrainMode m) {
  return m == TrainMode::SplOnly || m == TrainMode::Dspl;
}
inline bool uses_symmetric_term(TrainMode m) {
  return m == TrainMode::SymOnly || m == TrainMode::Dspl;
}

struct TrainConfig {
  double learning_rate = 0.01;  // tau
  std::size_t iterations = 500; // H
  LossParams loss;
  SplState spl;
  std::size_t anchors_per_batch = 5;
  std::size_t triplets_per_anchor = 200;
  TrainMode mode = TrainMode::Dspl;
  GradientMode gradient_mode = GradientMode::Exact;
  Reduction reduction = Reduction::Sum;
  std::uint64_t seed = 1;

  void validate() const;
};

struct TrainRecord {
  std::size_t h = 0;
  double lambda = 0.0;
  double mean_loss = 0.0;   // mean relative term R over the batch
  double frac_active = 0.0;
  std::optional<double> mean_weight_clean;
  std::optional<double> mean_weight_outlier;
  double mean_abs_D = 0.0;
};

nlohmann::json to_json(const TrainRecord& r);
/// One compact JSON object per line.
std::string to_jsonl(const std::vector<TrainRecord>& records);

struct StepDetail {
  std::vector<LossBreakdown> losses;
  std::vector<double> weights;
  std::vector<LayerParams> gradient;  // full dL/dOmega, including 2 xi Omega
};

/// Per-triplet losses, weights and the accumulated gradient for one batch,
/// without touching the model.
StepDetail compute_step(const NetworkModel& model, const Dataset& data, const TripletBatch& batch,
                        const TrainConfig& cfg, const SplState& state);

struct StepResult {
  NetworkModel model;
  TrainRecord record;
};

/// One self-paced gradient descent step on a batch.
StepResult train_step(const NetworkModel& model, const Dataset& data, const TripletBatch& batch,
                      const TrainConfig& cfg, const SplState& state, std::size_t h = 0);

struct TrainResult {
  NetworkModel model;
  std::vector<TrainRecord> records;
  SplState final_state;
};

using RecordCallback = std::function<void(const TrainRecord&)>;

TrainResult train(const NetworkModel& model, const Dataset& train_split, const TrainConfig& cfg,
                  const RecordCallback& on_record = {});

/// sum_k ||W^k||_F^2 + ||b^k||^2
double parameter_regularizer(const NetworkModel& model);

}  // namespace dspl

#endif  // DSPL_TRAINER_HPP_
