#include "dspl/trainer.hpp"

#include <cmath>
#include <map>

#include <spdlog/spdlog.h>

namespace dspl {

std::string to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Baseline: return "baseline";
    case TrainMode::SplOnly: return "spl_only";
    case TrainMode::SymOnly: return "sym_only";
    case TrainMode::Dspl: return "dspl";
  }
  return "?";
}

TrainMode train_mode_from_string(const std::string& name) {
  for (auto m : {TrainMode::Baseline, TrainMode::SplOnly, TrainMode::SymOnly, TrainMode::Dspl})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown training mode '" + name +
                    "' (expected baseline|spl_only|sym_only|dspl)");
}

std::string to_string(GradientMode mode) {
  return mode == GradientMode::Exact ? "exact" : "paper_literal";
}

GradientMode gradient_mode_from_string(const std::string& name) {
  if (name == "exact") return GradientMode::Exact;
  if (name == "paper_literal") return GradientMode::PaperLiteral;
  throw ConfigError("unknown gradient mode '" + name + "' (expected exact|paper_literal)");
}

std::string to_string(Reduction r) { return r == Reduction::Sum ? "sum" : "mean"; }

Reduction reduction_from_string(const std::string& name) {
  if (name == "sum") return Reduction::Sum;
  if (name == "mean") return Reduction::Mean;
  throw ConfigError("unknown reduction '" + name + "' (expected sum|mean)");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("learning rate must be a finite value >= 0");
  if (anchors_per_batch == 0 || triplets_per_anchor == 0)
    throw ConfigError("anchors_per_batch and triplets_per_anchor must be >= 1");
  loss.validate();
  spl.validate();
}

nlohmann::json to_json(const TrainRecord& r) {
  nlohmann::json j;
  j["h"] = r.h;
  j["lambda"] = r.lambda;
  j["mean_loss"] = r.mean_loss;
  j["frac_active"] = r.frac_active;
  j["mean_weight_clean"] =
      r.mean_weight_clean ? nlohmann::json(*r.mean_weight_clean) : nlohmann::json(nullptr);
  j["mean_weight_outlier"] =
      r.mean_weight_outlier ? nlohmann::json(*r.mean_weight_outlier) : nlohmann::json(nullptr);
  j["mean_abs_D"] = r.mean_abs_D;
  return j;
}

std::string to_jsonl(const std::vector<TrainRecord>& records) {
  std::string out;
  for (const auto& r : records) out += to_json(r).dump() + "\n";
  return out;
}

double parameter_regularizer(const NetworkModel& model) {
  double s = 0.0;
  for (const auto& p : model.params()) {
    s += dot(p.weight.data(), p.weight.data());
    s += dot(p.bias.data(), p.bias.data());
  }
  return s;
}

StepDetail compute_step(const NetworkModel& model, const Dataset& data, const TripletBatch& batch,
                        const TrainConfig& cfg, const SplState& state) {
  const auto& triplets = batch.triplets;
  // Forward each distinct sample once, in ascending sample position.
  std::map<std::size_t, std::size_t> slot;
  for (const auto& t : triplets) {
    if (!is_valid_triplet(data, t))
      throw ContractError("batch contains an invalid triplet for this dataset");
    slot.emplace(t.anchor, 0);
    slot.emplace(t.positive, 0);
    slot.emplace(t.negative, 0);
  }
  std::vector<ForwardResult> fwd;
  fwd.reserve(slot.size());
  for (auto& [pos, idx] : slot) {
    idx = fwd.size();
    fwd.push_back(forward(model, data.samples[pos].payload));
  }
  const auto emb = [&](std::size_t pos) -> std::span<const double> {
    return fwd[slot.at(pos)].embedding.data();
  };

  StepDetail out;
  out.losses.resize(triplets.size());
  out.weights.assign(triplets.size(), 1.0);
  LossParams lp = cfg.loss;
  if (!uses_symmetric_term(cfg.mode)) lp.zeta = 0.0;

  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    out.losses[i] = evaluate_triplet(emb(t.anchor), emb(t.positive), emb(t.negative), lp);
    const auto& l = out.losses[i];
    if (!std::isfinite(l.relative.argument) || !std::isfinite(l.symmetric.value))
      throw DivergenceError("non-finite loss at triplet " + std::to_string(i), i);
    if (uses_self_paced_weights(cfg.mode)) out.weights[i] = solve_weight(l.relative.value, state);
  }

  // Embedding gradients, accumulated in ascending triplet index.
  const std::size_t dim = model.embedding_dim();
  const double scale = (cfg.reduction == Reduction::Mean && !triplets.empty())
                           ? 1.0 / static_cast<double>(triplets.size())
                           : 1.0;
  LossParams scaled = lp;
  scaled.zeta *= scale;
  std::vector<Tensor> grad_emb(fwd.size(), Tensor(model.output_dims()));
  for (std::size_t i = 0; i < triplets.size(); ++i) {
    const auto& t = triplets[i];
    auto ga = grad_emb[slot.at(t.anchor)].data();
    auto gp = grad_emb[slot.at(t.positive)].data();
    auto gn = grad_emb[slot.at(t.negative)].data();
    accumulate_triplet_grad(emb(t.anchor), emb(t.positive), emb(t.negative), out.losses[i],
                            scaled, scale * out.weights[i], cfg.gradient_mode, ga, gp, gn);
    for (std::size_t k = 0; k < dim; ++k)
      if (!std::isfinite(ga[k]) || !std::isfinite(gp[k]) || !std::isfinite(gn[k]))
        throw DivergenceError("non-finite gradient at triplet " + std::to_string(i), i);
  }

  out.gradient = zero_like_params(model);
  for (std::size_t s = 0; s < fwd.size(); ++s)
    backward_accumulate(model, fwd[s].tape, grad_emb[s], out.gradient);

  const double decay = 2.0 * cfg.loss.xi;
  for (std::size_t k = 0; k < out.gradient.size(); ++k) {
    axpy(decay, model.params()[k].weight.data(), out.gradient[k].weight.data());
    axpy(decay, model.params()[k].bias.data(), out.gradient[k].bias.data());
  }
  return out;
}

StepResult train_step(const NetworkModel& model, const Dataset& data, const TripletBatch& batch,
                      const TrainConfig& cfg, const SplState& state, std::size_t h) {
  StepDetail detail = compute_step(model, data, batch, cfg, state);

  StepResult res{model, {}};
  auto& params = res.model.mutable_params();
  for (std::size_t k = 0; k < params.size(); ++k) {
    for (double g : detail.gradient[k].weight.data())
      if (!std::isfinite(g)) throw DivergenceError("non-finite parameter gradient", batch.triplets.size());
    axpy(-cfg.learning_rate, detail.gradient[k].weight.data(), params[k].weight.data());
    axpy(-cfg.learning_rate, detail.gradient[k].bias.data(), params[k].bias.data());
  }

  TrainRecord& r = res.record;
  r.h = h;
  r.lambda = state.lambda;
  const std::size_t n = batch.triplets.size();
  double sum_r = 0.0, sum_d = 0.0, w_clean = 0.0, w_out = 0.0;
  std::size_t active = 0, n_clean = 0, n_out = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& l = detail.losses[i];
    sum_r += l.relative.value;
    sum_d += l.symmetric.abs_deviation;
    active += l.relative.active ? 1 : 0;
    if (is_outlier_triplet(data, batch.triplets[i])) {
      w_out += detail.weights[i];
      ++n_out;
    } else {
      w_clean += detail.weights[i];
      ++n_clean;
    }
  }
  if (n > 0) {
    r.mean_loss = sum_r / static_cast<double>(n);
    r.mean_abs_D = sum_d / static_cast<double>(n);
    r.frac_active = static_cast<double>(active) / static_cast<double>(n);
  }
  if (n_clean) r.mean_weight_clean = w_clean / static_cast<double>(n_clean);
  if (n_out) r.mean_weight_outlier = w_out / static_cast<double>(n_out);
  return res;
}

TrainResult train(const NetworkModel& model, const Dataset& train_split, const TrainConfig& cfg,
                  const RecordCallback& on_record) {
  cfg.validate();
  TrainResult res{model, {}, cfg.spl};
  res.records.reserve(cfg.iterations);
  for (std::size_t h = 0; h < cfg.iterations; ++h) {
    const auto batch = sample_triplets(train_split, cfg.anchors_per_batch,
                                       cfg.triplets_per_anchor, cfg.seed, h);
    auto step = train_step(res.model, train_split, batch, cfg, res.final_state, h);
    res.model = std::move(step.model);
    spdlog::debug("h={} lambda={:.4f} mean_loss={:.5f} active={:.3f}", h, step.record.lambda,
                  step.record.mean_loss, step.record.frac_active);
    if (on_record) on_record(step.record);
    res.records.push_back(step.record);
    if (uses_self_paced_weights(cfg.mode)) res.final_state = update_age(res.final_state);
  }
  return res;
}

}  // namespace dspl
