// Acceptance suite: one PASS/FAIL line per criterion.
//   dspl_acceptance            run all ten
//   dspl_acceptance 4 5        run a subset
// Exit status is the number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dspl/cli.hpp"
#include "dspl/config.hpp"
#include "dspl/eval.hpp"
#include "dspl/io.hpp"
#include "dspl/losses.hpp"
#include "dspl/spl.hpp"
#include "dspl/trainer.hpp"
#include "fd_check.hpp"
#include "retrieval_oracle.hpp"

using namespace dspl;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string list(const std::vector<double>& v, const char* f = "%.3f") {
  std::string s;
  for (double x : v) s += (s.empty() ? "" : " ") + fmt(f, x);
  return s;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------
// 1. closed form vs grid oracle

Outcome closed_form_vs_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    SplState s;
    s.lambda = 0.05 + 4.95 * u01(rng);
    s.vartheta = 0.05 + 0.9 * u01(rng);
    s.order = 1.1 + 3.0 * u01(rng);
    const double r = 1.3 * s.zero_weight_threshold() * u01(rng);
    worst = std::max(worst, std::abs(solve_weight(r, s) - oracle_weight(r, s, 100000)));
  }
  // continuity: each threshold against its floating-point neighbour on the other branch
  double jump = 0.0;
  for (int k = 0; k < 10000; ++k) {
    SplState s;
    s.lambda = 0.05 + 4.95 * u01(rng);
    s.vartheta = 0.05 + 0.9 * u01(rng);
    s.order = 1.001 + 7.0 * u01(rng);
    const double lo = s.full_weight_threshold(), hi = s.zero_weight_threshold();
    jump = std::max(jump, std::abs(solve_weight(lo, s) - solve_weight(std::nextafter(lo, 0.0), s)));
    jump = std::max(jump, std::abs(solve_weight(hi, s) - solve_weight(std::nextafter(hi, 1e300), s)));
  }
  return {worst <= 2e-5 && jump <= 1e-9,
          "10^4 draws (lambda in [0.05,5], vartheta in [0.05,0.95], t in [1.1,4.1], R in "
          "[0,1.3 lambda/vartheta]) on a 10^5-step grid: max |diff| " +
              fmt("%.2e", worst) + " (tol 2e-5); max branch jump over 10^4 states with t in "
              "[1.001,8.001] " + fmt("%.1e", jump) + " (tol 1e-9)"};
}

// ---------------------------------------------------------------------------
// 2. gradients vs central differences

double loss_level_fd(std::size_t& probes) {
  std::mt19937_64 rng(202);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  // Fourth-order central stencil. At dim 128 the objective is ~300 while some
  // gradient entries are ~1e-4 (cancelling terms of size ~30); the two-point
  // rule cannot resolve those to 1e-6 at any step.
  const double h = 1e-3;
  double worst = 0.0;
  probes = 0;
  for (std::size_t dim : {2, 8, 32, 128}) {
    std::size_t here = 0;
    while (here < 1000) {
      std::vector<double> a(dim), p(dim), n(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        a[i] = g(rng);
        p[i] = g(rng);
        n[i] = g(rng);
      }
      LossParams lp;
      lp.margin = 0.5 + 2.0 * u01(rng);
      lp.gamma = 0.2 + 2.0 * u01(rng);
      lp.zeta = u01(rng);
      const double u = u01(rng);
      const auto l = evaluate_triplet(a, p, n, lp);
      if (std::abs(l.relative.argument) < 1e-3 || l.symmetric.abs_deviation < 1e-3) continue;
      const auto grad = triplet_grad(a, p, n, lp, u, GradientMode::Exact);
      const std::size_t slot = rng() % 3, i = rng() % dim;
      bool crossed = false;
      const auto f = [&](double d) {
        auto aa = a, pp = p, nn = n;
        (slot == 0 ? aa : slot == 1 ? pp : nn)[i] += d;
        const auto ll = evaluate_triplet(aa, pp, nn, lp);
        crossed = crossed || ll.relative.active != l.relative.active ||
                  (ll.symmetric.deviation > 0) != (l.symmetric.deviation > 0);
        return u * ll.relative.value + lp.zeta * ll.symmetric.value;
      };
      const double num = (8.0 * (f(h) - f(-h)) - (f(2 * h) - f(-2 * h))) / (12.0 * h);
      if (crossed) continue;
      const double ana = (slot == 0 ? grad.anchor : slot == 1 ? grad.positive : grad.negative)[i];
      worst = std::max(worst, dspl::testing::rel_error(ana, num));
      ++here;
    }
    probes += here;
  }
  return worst;
}

NetworkSpec single(Dims in, LayerSpec l) {
  NetworkSpec s{std::move(in), {}, {}};
  s.add(std::move(l));
  return s;
}

// Keeps probing until `want` probes away from kinks have been taken.
dspl::testing::FdStats fd_until(const NetworkSpec& spec, std::uint64_t seed, std::size_t want) {
  dspl::testing::FdStats total;
  for (std::uint64_t round = 0; total.probes < want; ++round) {
    const auto [m, x] = dspl::testing::smooth_point(spec, seed + 1000 * round);
    const auto st = dspl::testing::fd_check_network(m, x, want - total.probes, seed + round);
    total.probes += st.probes;
    total.skipped += st.skipped;
    total.worst = std::max(total.worst, st.worst);
    if (round > 50) break;
  }
  return total;
}

Outcome gradients_vs_fd() {
  std::size_t loss_probes = 0;
  const double loss_worst = loss_level_fd(loss_probes);
  bool ok = loss_probes >= 1000 && loss_worst < 1e-6;
  std::string detail = "triplet loss: " + std::to_string(loss_probes) + " probes, worst rel " +
                       fmt("%.1e", loss_worst) + " (tol 1e-6); layers:";

  std::vector<std::pair<std::string, NetworkSpec>> layers;
  layers.emplace_back("dense", single({7}, LayerSpec::dense(0, 5)));
  layers.emplace_back("conv-same", single({6, 6, 2}, LayerSpec::conv2d(0, 3, 3, 3, Padding::Same)));
  layers.emplace_back("conv-valid", single({6, 5, 2}, LayerSpec::conv2d(0, 2, 3, 2, Padding::Valid)));
  layers.emplace_back("maxpool", single({6, 6, 2}, LayerSpec::maxpool(0, 3, 3, 3)));
  layers.emplace_back("relu", single({9}, LayerSpec::relu(0)));
  {
    NetworkSpec s{{6, 4, 2}, {}, {}};
    const auto a = s.add(LayerSpec::part_split(0, 3, 0));
    const auto b = s.add(LayerSpec::part_split(0, 3, 2));
    s.add(LayerSpec::eltwise_add({a, b}));
    layers.emplace_back("split+add", s);
  }
  {
    NetworkSpec s{{5}, {}, {}};
    const auto a = s.add(LayerSpec::dense(0, 3));
    const auto b = s.add(LayerSpec::dense(0, 2));
    s.add(LayerSpec::concat({a, b, 0}));
    layers.emplace_back("concat", s);
  }
  std::uint64_t seed = 300;
  for (const auto& [name, spec] : layers) {
    const auto st = fd_until(spec, seed++, 1000);
    ok = ok && st.probes >= 1000 && st.worst < 1e-6;
    detail += " " + name + " " + fmt("%.1e", st.worst);
  }
  detail += " (1000 probes each, tol 1e-6);";

  NetworkSpec net{{6, 6, 2}, {}, {}};
  auto n = net.add(LayerSpec::conv2d(0, 3, 3, 3, Padding::Same));
  n = net.add(LayerSpec::relu(n));
  n = net.add(LayerSpec::maxpool(n, 2, 2, 2));
  n = net.add(LayerSpec::conv2d(n, 2, 2, 2, Padding::Valid));
  n = net.add(LayerSpec::relu(n));
  net.add(LayerSpec::dense(n, 4));
  const auto st = fd_until(net, 400, 1000);
  ok = ok && st.probes >= 1000 && st.worst < 1e-5;
  detail += " 3-layer conv net: " + std::to_string(st.probes) + " probes (" +
            std::to_string(st.skipped) + " skipped near kinks), worst rel " +
            fmt("%.1e", st.worst) + " (tol 1e-5)";
  return {ok, detail};
}

// ---------------------------------------------------------------------------
// 3. limits of the polynomial regularizer

Outcome weighting_limits() {
  double worst_hard = 0.0;
  std::size_t points = 0;
  for (double vartheta : {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.65}) {
    for (double lambda : {0.3, 0.6, 1.0, 2.5}) {
      SplState s;
      s.order = 1.001;
      s.lambda = lambda;
      s.vartheta = vartheta;
      const double thr = s.full_weight_threshold();
      const double top = 3.0 * s.zero_weight_threshold();
      for (int k = 0; k <= 20000; ++k) {
        const double r = top * k / 20000.0;
        if (std::abs(r - thr) <= 0.01 * thr) continue;
        worst_hard = std::max(worst_hard, std::abs(solve_weight(r, s) - (r < thr ? 1.0 : 0.0)));
        ++points;
      }
    }
  }
  // t = 2: interior weight equals 1/vartheta - R/lambda
  std::mt19937_64 rng(303);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  double worst_affine = 0.0;
  for (int k = 0; k < 10000; ++k) {
    SplState s;
    s.lambda = 0.05 + 4.95 * u01(rng);
    s.vartheta = 0.05 + 0.9 * u01(rng);
    const double lo = s.full_weight_threshold(), hi = s.zero_weight_threshold();
    const double r = lo + (hi - lo) * u01(rng);
    const double exact = 1.0 / s.vartheta - r / s.lambda;
    // in units of the rounding of 1/vartheta
    worst_affine = std::max(worst_affine, std::abs(solve_weight(r, s) - exact) /
                                              (std::numeric_limits<double>::epsilon() / s.vartheta));
  }
  return {worst_hard < 0.01 && worst_affine <= 4.0,
          "t=1.001, vartheta in [0.1,0.65], " + std::to_string(points) +
              " points outside +-1% of lambda(1/vartheta-1): max |w - hard| " +
              fmt("%.2e", worst_hard) + " (tol 0.01); t=2 interior vs 1/vartheta - R/lambda: " +
              fmt("%.1f", worst_affine) + " ulp of 1/vartheta (tol 4)"};
}

// ---------------------------------------------------------------------------
// 4-6. desk benchmark

RunConfig bench_config(std::uint64_t seed) {
  auto c = load_run_config(fs::path(DSPL_SOURCE_DIR) / "configs" / "desk_benchmark.toml");
  c.data.seed = seed;
  c.split_seed = seed;
  c.model.init_seed = seed;
  c.train.seed = seed;
  c.eval.seed = seed;
  return c;
}

struct BenchRun {
  TrainResult trained;
  Metrics metrics;
};

BenchRun bench_run(const RunConfig& c) {
  const auto ds = generate_synthetic(c.data);
  const auto split = split_zero_shot(ds, c.train_fraction, c.split_seed);
  const auto model = build_model(c.model, ds.payload_dims);
  auto trained = train(model, split.train, c.train);
  auto metrics = evaluate(trained.model, split.test, c.eval);
  return {std::move(trained), std::move(metrics)};
}

Outcome noise_suppression() {
  std::vector<double> ratios, clean, outlier;
  std::size_t pass = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = bench_config(seed);
    const auto r = bench_run(c).trained.records;
    const std::size_t window = std::max<std::size_t>(1, r.size() / 10);
    double wc = 0.0, wo = 0.0;
    for (std::size_t h = r.size() - window; h < r.size(); ++h) {
      wc += r[h].mean_weight_clean.value_or(0.0);
      wo += r[h].mean_weight_outlier.value_or(0.0);
    }
    clean.push_back(wc / window);
    outlier.push_back(wo / window);
    ratios.push_back(wo / wc);
    if (wo / wc <= 0.5) ++pass;
  }
  return {pass >= 4, "outlier/clean mean weight over the final 10% of iterations, seeds 1-5: " +
                         list(ratios) + " (clean " + list(clean) + "; outlier " + list(outlier) +
                         "); " + std::to_string(pass) + "/5 at <= 0.5 (need 4)"};
}

Outcome ablation_ordering() {
  const TrainMode modes[] = {TrainMode::Baseline, TrainMode::SplOnly, TrainMode::SymOnly,
                             TrainMode::Dspl};
  std::vector<double> top1[4];
  for (std::uint64_t seed = 1; seed <= 5; ++seed)
    for (int k = 0; k < 4; ++k) {
      auto c = bench_config(seed);
      c.train.mode = modes[k];
      top1[k].push_back(bench_run(c).metrics.cmc[0]);
    }
  const double base = median(top1[0]), spl = median(top1[1]), sym = median(top1[2]),
               dspl = median(top1[3]);
  std::string detail = "median Top-1 over seeds 1-5: baseline " + fmt("%.3f", base) + " [" +
                       list(top1[0]) + "], spl_only " + fmt("%.3f", spl) + " [" + list(top1[1]) +
                       "], sym_only " + fmt("%.3f", sym) + " [" + list(top1[2]) + "], dspl " +
                       fmt("%.3f", dspl) + " [" + list(top1[3]) + "]; dspl - baseline = " +
                       fmt("%+.1f", 100 * (dspl - base)) + " pp (need >= +2.0)";
  detail += std::string("; reported only: dspl >= spl_only ") + (dspl >= spl ? "yes" : "no") +
            ", dspl >= sym_only " + (dspl >= sym ? "yes" : "no");
  return {dspl - base >= 0.02 - 1e-12, detail};
}

// Mean |D| of `model` over a fixed set of training triplets.
double mean_abs_deviation(const NetworkModel& model, const Dataset& train_split,
                          const TripletBatch& batch, const LossParams& lp) {
  double s = 0.0;
  for (const auto& t : batch.triplets) {
    const auto a = predict(model, train_split.samples[t.anchor].payload);
    const auto p = predict(model, train_split.samples[t.positive].payload);
    const auto n = predict(model, train_split.samples[t.negative].payload);
    s += symmetric_term(a.data(), p.data(), n.data(), lp.gamma).abs_deviation;
  }
  return s / static_cast<double>(batch.triplets.size());
}

Outcome symmetric_effect() {
  std::vector<double> with, without, rec_with, rec_without;
  bool ok = true;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto c = bench_config(seed);
    const auto ds = generate_synthetic(c.data);
    const auto split = split_zero_shot(ds, c.train_fraction, c.split_seed);
    const auto model = build_model(c.model, ds.payload_dims);
    // same triplets for both runs, drawn past the last training batch
    const auto held = sample_triplets(split.train, c.train.anchors_per_batch,
                                      c.train.triplets_per_anchor, seed, c.train.iterations);
    const auto a = train(model, split.train, c.train);
    c.train.loss.zeta = 0.0;
    const auto b = train(model, split.train, c.train);
    with.push_back(mean_abs_deviation(a.model, split.train, held, c.train.loss));
    without.push_back(mean_abs_deviation(b.model, split.train, held, c.train.loss));
    rec_with.push_back(a.records.back().mean_abs_D);
    rec_without.push_back(b.records.back().mean_abs_D);
    ok = ok && with.back() < without.back();
  }
  return {ok, "final mean |D| over 1000 training triplets, dspl zeta=0.1 vs zeta=0, seeds 1-5: [" +
                  list(with) + "] vs [" + list(without) +
                  "] (strictly lower required for every seed); last-batch records: [" +
                  list(rec_with) + "] vs [" + list(rec_without) + "]"};
}

// ---------------------------------------------------------------------------
// 7. maturity on a frozen model

Outcome maturity() {
  const auto c = bench_config(1);
  const auto ds = generate_synthetic(c.data);
  const auto split = split_zero_shot(ds, c.train_fraction, c.split_seed);
  const auto model = bench_run(c).trained.model;
  const auto batch = sample_triplets(split.train, 5, 200, 77, 0);
  std::vector<double> losses;
  for (const auto& t : batch.triplets) {
    const auto a = predict(model, split.train.samples[t.anchor].payload);
    const auto p = predict(model, split.train.samples[t.positive].payload);
    const auto n = predict(model, split.train.samples[t.negative].payload);
    losses.push_back(relative_term(a.data(), p.data(), n.data(), c.train.loss.margin).value);
  }
  const double max_loss = *std::max_element(losses.begin(), losses.end());
  // first h with max R < lambda_h (1/vartheta - 1)
  SplState s = c.train.spl;
  std::size_t predicted = 0;
  while (!(max_loss < s.full_weight_threshold())) {
    s = update_age(s);
    ++predicted;
  }
  s = c.train.spl;
  std::vector<double> w(losses.size());
  std::size_t h = 0;
  const std::size_t cap = 100000;
  for (; h < cap; ++h) {
    solve_weights(losses, s, w);
    if (std::all_of(w.begin(), w.end(), [](double v) { return v == 1.0; })) break;
    s = update_age(s);
  }
  // and it stays there
  bool stays = h < cap;
  for (int extra = 0; extra < 20 && stays; ++extra) {
    s = update_age(s);
    solve_weights(losses, s, w);
    stays = std::all_of(w.begin(), w.end(), [](double v) { return v == 1.0; });
  }
  return {h < cap && h == predicted && stays,
          "1000 triplets on the trained seed-1 model, max R " + fmt("%.3f", max_loss) +
              ": all weights exactly 1 after " + std::to_string(h) + " age updates (predicted " +
              std::to_string(predicted) + "), unchanged for 20 more"};
}

// ---------------------------------------------------------------------------
// 8. metric oracle

Outcome metric_oracle() {
  std::mt19937_64 rng(808);
  const std::vector<std::size_t> ks{1, 2, 3, 5, 10, 20};
  std::size_t mismatches = 0, max_rows = 0;
  for (int k = 0; k < 100; ++k) {
    const auto [probes, gallery] = dspl::testing::random_instance(rng, 50);
    max_rows = std::max(max_rows, probes.size() + gallery.size());
    const auto o = dspl::testing::oracle_rank(probes, gallery);
    double oracle_map = 0.0;
    for (double ap : o.average_precision) oracle_map += ap;
    oracle_map /= static_cast<double>(o.average_precision.size());
    if (cmc(probes, gallery, ks) != dspl::testing::oracle_cmc(o, ks)) ++mismatches;
    if (map_score(probes, gallery, Protocol::SingleQuery) != oracle_map) ++mismatches;
  }
  return {mismatches == 0 && max_rows <= 50,
          "100 random instances (<= " + std::to_string(max_rows) +
              " samples, integer coordinates so ties occur): " + std::to_string(mismatches) +
              " CMC/mAP values differing from the brute-force count (exact comparison)"};
}

// ---------------------------------------------------------------------------
// 9. full-size architecture

Outcome architecture() {
  const auto p = preset_fig4();
  const auto m = init_params(NetworkModel(p.spec), 1);
  std::mt19937_64 rng(909);
  const auto x = dspl::testing::random_tensor({230, 80, 3}, rng);
  const auto y = predict(m, x);
  const auto shapes = infer_shapes(p.spec);
  bool finite = true;
  for (double v : y.data()) finite = finite && std::isfinite(v);
  const bool ok = y.dims() == Dims{800} && p.parts == 4 && p.fusion_dim == 400 &&
                  shapes[p.fusion_concat_node] == Dims{400} && finite;
  return {ok, "230x80x3 -> " + dims_to_string(y.dims()) + ", parts " + std::to_string(p.parts) +
                  ", fusion " + dims_to_string(shapes[p.fusion_concat_node]) + ", " +
                  std::to_string(m.params().size()) + " parameter slots"};
}

// ---------------------------------------------------------------------------
// 10. determinism

std::string slurp(const fs::path& p) { return fs::exists(p) ? read_text_file(p) : std::string(); }

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / "dspl_acceptance_determinism";
  fs::remove_all(dir);
  const std::string config = (fs::path(DSPL_SOURCE_DIR) / "configs" / "desk_benchmark.toml").string();
  std::ostringstream out, err;
  int code = run_cli({"dspl", "gen-data", "--config", config, "--out", (dir / "data").string()}, out, err);
  for (const char* name : {"a", "b"}) {
    if (code != kExitOk) break;
    code = run_cli({"dspl", "train", "--data", (dir / "data").string(), "--config", config,
                    "--mode", "dspl", "--seed", "5", "--out", (dir / name).string()},
                   out, err);
  }
  if (code != kExitOk) return {false, "cli exited " + std::to_string(code) + ": " + err.str()};
  const auto pa = slurp(dir / "a" / "params.dspt"), pb = slurp(dir / "b" / "params.dspt");
  const auto ra = slurp(dir / "a" / "records.jsonl"), rb = slurp(dir / "b" / "records.jsonl");
  const bool ok = !pa.empty() && !ra.empty() && pa == pb && ra == rb;
  fs::remove_all(dir);
  return {ok, "two train runs with identical flags: params.dspt " + std::to_string(pa.size()) +
                  " bytes " + (pa == pb ? "identical" : "DIFFER") + ", records.jsonl " +
                  std::to_string(ra.size()) + " bytes " + (ra == rb ? "identical" : "DIFFER")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;  // runtime limit, 0 = none
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "closed form matches grid oracle", 30, closed_form_vs_oracle},
      {2, "gradients match finite differences", 120, gradients_vs_fd},
      {3, "weighting-scheme limits", 0, weighting_limits},
      {4, "noise suppression", 300, noise_suppression},
      {5, "ablation ordering", 900, ablation_ordering},
      {6, "symmetric regularizer lowers |D|", 300, symmetric_effect},
      {7, "maturity", 0, maturity},
      {8, "metric oracle", 0, metric_oracle},
      {9, "architecture fidelity", 30, architecture},
      {10, "determinism", 0, determinism},
  };
  std::vector<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.push_back(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : all) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), c.id) == wanted.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::string timing = fmt("%.1f s", secs);
    if (c.budget_s > 0) {
      timing += fmt(" of %.0f s budget", c.budget_s);
      if (secs > c.budget_s) {
        o.pass = false;
        timing += ", OVER BUDGET";
      }
    }
    std::printf("criterion %d: %s  %s -- %s [%s]\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                o.detail.c_str(), timing.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures;
}
