#include "dspl/cli.hpp"

#include <cstdlib>
#include <future>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "dspl/config.hpp"
#include "dspl/eval.hpp"
#include "dspl/io.hpp"
#include "dspl/trainer.hpp"

namespace dspl {

namespace {

/// Data or model that cannot be used together (exit 3).
class IncompatibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void configure_logging() {
  const char* level = std::getenv("DSPL_LOG");
  const std::string name = level ? level : "error";
  if (name == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else if (name == "info") {
    spdlog::set_level(spdlog::level::info);
  } else {
    spdlog::set_level(spdlog::level::err);
  }
}

Dataset load_data_or_fail(const std::string& path) {
  try {
    return load_dataset(path);
  } catch (const std::exception& e) {
    throw IncompatibleError("cannot load dataset '" + path + "': " + e.what());
  }
}

NetworkModel load_model_or_fail(const std::string& path) {
  try {
    return load_model(path);
  } catch (const std::exception& e) {
    throw IncompatibleError("cannot load model '" + path + "': " + e.what());
  }
}

RunConfig config_or_default(const std::string& path) {
  return path.empty() ? RunConfig{} : load_run_config(path);
}

/// Config used to train the model in `model_dir`, if it was saved alongside.
RunConfig config_for_model(const std::string& config_path, const std::string& model_dir) {
  if (!config_path.empty()) return load_run_config(config_path);
  const auto saved = std::filesystem::path(model_dir) / "config.json";
  if (std::filesystem::exists(saved)) return load_run_config(saved);
  return {};
}

Split split_for(const Dataset& ds, const RunConfig& cfg) {
  return split_zero_shot(ds, cfg.train_fraction, cfg.split_seed);
}

void check_compatible(const NetworkModel& model, const Dataset& ds) {
  if (model.input_dims() != ds.payload_dims)
    throw IncompatibleError("model input " + dims_to_string(model.input_dims()) +
                            " does not match dataset payload " + dims_to_string(ds.payload_dims));
}

struct PipelineResult {
  NetworkModel model;
  std::vector<TrainRecord> records;
  Metrics metrics;
};

PipelineResult train_and_eval(const RunConfig& cfg, const Dataset& ds) {
  const auto split = split_for(ds, cfg);
  auto model = build_model(cfg.model, ds.payload_dims);
  auto trained = train(model, split.train, cfg.train);
  auto metrics = evaluate(trained.model, split.test, cfg.eval);
  return {std::move(trained.model), std::move(trained.records), std::move(metrics)};
}

// ---------------------------------------------------------------------------

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed, const std::string& format, std::ostream& out) {
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.data.seed = *seed;
  const auto ds = generate_synthetic(cfg.data);
  try {
    if (format == "csv") {
      const std::filesystem::path file(out_dir);
      if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
      save_dataset_csv(file, ds);
    } else {
      save_dataset(out_dir, ds);
    }
  } catch (const std::filesystem::filesystem_error& e) {
    throw ConfigError(std::string("cannot write dataset: ") + e.what());
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot write dataset: ") + e.what());
  }
  out << "dataset " << ds.name << ": " << ds.samples.size() << " samples, "
      << ds.identities().size() << " identities, " << ds.outlier_count() << " outliers, payload "
      << dims_to_string(ds.payload_dims) << " (" << ds.mode() << ") -> " << out_dir << "\n";
  return kExitOk;
}

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& mode, const std::string& grad_mode, const std::string& out_dir,
              std::optional<std::uint64_t> seed, std::optional<std::size_t> iterations,
              std::ostream& out, std::ostream& err) {
  RunConfig cfg = config_or_default(config_path);
  if (!mode.empty()) cfg.train.mode = train_mode_from_string(mode);
  if (!grad_mode.empty()) cfg.train.gradient_mode = gradient_mode_from_string(grad_mode);
  if (seed) cfg.train.seed = *seed;
  if (iterations) cfg.train.iterations = *iterations;
  cfg.output_dir = out_dir;
  cfg.validate();

  const auto ds = load_data_or_fail(data_path);
  const auto split = split_for(ds, cfg);
  NetworkModel model;
  try {
    model = build_model(cfg.model, ds.payload_dims);
  } catch (const ConfigError& e) {
    throw IncompatibleError(std::string("model does not fit the dataset: ") + e.what());
  }

  const std::filesystem::path dir(out_dir);
  try {
    std::filesystem::create_directories(dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw ConfigError(std::string("cannot create output directory: ") + e.what());
  }
  std::vector<TrainRecord> records;
  try {
    auto result = train(model, split.train, cfg.train,
                        [&](const TrainRecord& r) { records.push_back(r); });
    save_model(dir, result.model);
  } catch (const DivergenceError& e) {
    write_text_file(dir / "records.jsonl", to_jsonl(records));
    err << "training diverged: " << e.what() << "\n";
    if (!records.empty()) err << "last record: " << to_json(records.back()).dump() << "\n";
    return kExitDivergence;
  }
  write_text_file(dir / "records.jsonl", to_jsonl(records));
  write_text_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
  out << "trained " << to_string(cfg.train.mode) << " for " << records.size()
      << " iterations on " << split.train.samples.size() << " samples -> " << out_dir << "\n";
  if (!records.empty()) out << to_json(records.back()).dump() << "\n";
  return kExitOk;
}

int cmd_eval(const std::string& model_dir, const std::string& data_path,
             const std::string& config_path, const std::string& protocol,
             const std::vector<std::size_t>& topk, std::optional<std::size_t> trials,
             std::optional<std::uint64_t> seed, const std::string& out_file, std::ostream& out) {
  RunConfig cfg = config_for_model(config_path, model_dir);
  if (!protocol.empty()) cfg.eval.protocol = protocol_from_string(protocol);
  if (!topk.empty()) cfg.eval.topk = topk;
  if (trials) cfg.eval.trials = *trials;
  if (seed) cfg.eval.seed = *seed;
  cfg.eval.validate();

  const auto model = load_model_or_fail(model_dir);
  const auto ds = load_data_or_fail(data_path);
  check_compatible(model, ds);
  const auto split = split_for(ds, cfg);
  Metrics m;
  try {
    m = evaluate(model, split.test, cfg.eval);
  } catch (const ProtocolError& e) {
    throw IncompatibleError(e.what());
  }
  const std::string text = m.to_json().dump() + "\n";
  if (!out_file.empty()) write_text_file(out_file, text);
  out << text;
  return kExitOk;
}

void set_sweep_param(RunConfig& cfg, const std::string& param, double value) {
  if (param == "M") {
    cfg.train.loss.margin = value;
  } else if (param == "zeta") {
    cfg.train.loss.zeta = value;
  } else if (param == "lambda") {
    cfg.train.spl.lambda = value;
  } else if (param == "vartheta") {
    cfg.train.spl.vartheta = value;
  } else {
    throw ConfigError("unknown sweep parameter '" + param + "' (expected M|zeta|lambda|vartheta)");
  }
}

struct SweepRow {
  double value = 0.0;
  double top1 = 0.0;
  double map = 0.0;
  int status = kExitOk;
  std::string error;
};

SweepRow sweep_point(RunConfig cfg, const std::string& param, double value, const Dataset& ds) {
  SweepRow row;
  row.value = value;
  try {
    set_sweep_param(cfg, param, value);
    cfg.validate();
    const auto r = train_and_eval(cfg, ds);
    const auto it = std::find(cfg.eval.topk.begin(), cfg.eval.topk.end(), std::size_t{1});
    if (it != cfg.eval.topk.end()) {
      row.top1 = r.metrics.cmc[static_cast<std::size_t>(it - cfg.eval.topk.begin())];
    } else {
      auto ecfg = cfg.eval;
      ecfg.topk = {1};
      row.top1 = evaluate(r.model, split_for(ds, cfg).test, ecfg).cmc[0];
    }
    row.map = r.metrics.map;
  } catch (const DivergenceError& e) {
    row.status = kExitDivergence;
    row.error = e.what();
  } catch (const ConfigError& e) {
    row.status = kExitUsage;
    row.error = e.what();
  } catch (const std::exception& e) {
    row.status = kExitIncompatible;
    row.error = e.what();
  }
  return row;
}

int cmd_sweep(const std::string& param, const std::vector<double>& values,
              const std::string& config_path, const std::string& data_path,
              const std::string& out_file, bool parallel, std::ostream& out, std::ostream& err) {
  if (values.empty()) throw ConfigError("--values must list at least one value");
  RunConfig base = config_or_default(config_path);
  {
    RunConfig probe = base;
    set_sweep_param(probe, param, values.front());  // validates the name
  }
  const Dataset ds = data_path.empty() ? generate_synthetic(base.data) : load_data_or_fail(data_path);

  std::vector<SweepRow> rows(values.size());
  if (parallel) {
    std::vector<std::future<SweepRow>> jobs;
    for (double v : values)
      jobs.push_back(std::async(std::launch::async, sweep_point, base, param, v, std::cref(ds)));
    for (std::size_t i = 0; i < jobs.size(); ++i) rows[i] = jobs[i].get();
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) rows[i] = sweep_point(base, param, values[i], ds);
  }

  std::ostringstream csv;
  csv << "param,value,top1,map,status\n";
  int code = kExitOk;
  for (const auto& r : rows) {
    csv << param << ',' << format_double(r.value) << ',';
    if (r.status == kExitOk) {
      csv << format_double(r.top1) << ',' << format_double(r.map) << ",ok\n";
    } else {
      csv << ",,failed\n";
      err << "sweep " << param << "=" << format_double(r.value) << " failed: " << r.error << "\n";
      if (code == kExitOk) code = r.status;
    }
  }
  if (!out_file.empty()) write_text_file(out_file, csv.str());
  out << csv.str();
  return code;
}

int cmd_rank_dump(const std::string& model_dir, const std::string& data_path,
                  const std::string& config_path, std::int64_t probe_id, std::size_t top,
                  std::ostream& out) {
  const RunConfig cfg = config_for_model(config_path, model_dir);
  const auto model = load_model_or_fail(model_dir);
  const auto ds = load_data_or_fail(data_path);
  check_compatible(model, ds);
  const auto split = split_for(ds, cfg);
  if (split.test.find(probe_id) == Dataset::npos)
    throw ConfigError("probe " + std::to_string(probe_id) + " is not in the test split");
  const auto rows = rank_dump(model, split.test, probe_id, top);
  out << "rank,sample_id,identity_id,distance,correct\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    out << i + 1 << ',' << rows[i].sample_id << ',' << rows[i].identity_id << ','
        << format_double(rows[i].distance) << ',' << (rows[i].correct ? "correct" : "incorrect")
        << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  configure_logging();
  CLI::App app{"Self-paced triplet metric learning toolkit", "dspl"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic identity dataset");
  std::string gen_config, gen_out, gen_format = "dir";
  std::optional<std::uint64_t> gen_seed;
  gen->add_option("--config", gen_config, "Run config (JSON or TOML)")->required();
  gen->add_option("--out", gen_out, "Output dataset directory (or CSV file with --format csv)")
      ->required();
  gen->add_option("--seed", gen_seed, "Override data.seed");
  gen->add_option("--format", gen_format, "dir | csv")->check(CLI::IsMember({"dir", "csv"}));

  // train
  auto* tr = app.add_subcommand("train", "Train a model with the self-paced gradient loop");
  std::string tr_data, tr_config, tr_mode, tr_grad, tr_out;
  std::optional<std::uint64_t> tr_seed;
  std::optional<std::size_t> tr_iters;
  tr->add_option("--data", tr_data, "Dataset directory or CSV")->required();
  tr->add_option("--config", tr_config, "Run config; defaults are used when omitted");
  tr->add_option("--mode", tr_mode, "baseline | spl_only | sym_only | dspl (default: config)");
  tr->add_option("--grad-mode", tr_grad, "exact | paper_literal (default: config)");
  tr->add_option("--out", tr_out, "Output model directory")->required();
  tr->add_option("--seed", tr_seed, "Override train.seed");
  tr->add_option("--iterations", tr_iters, "Override train.iterations");

  // eval
  auto* ev = app.add_subcommand("eval", "Evaluate a model on the test split");
  std::string ev_model, ev_data, ev_config, ev_protocol, ev_out;
  std::vector<std::size_t> ev_topk;
  std::optional<std::size_t> ev_trials;
  std::optional<std::uint64_t> ev_seed;
  ev->add_option("--model", ev_model, "Model directory")->required();
  ev->add_option("--data", ev_data, "Dataset directory or CSV")->required();
  ev->add_option("--config", ev_config, "Run config (default: the model's saved config)");
  ev->add_option("--protocol", ev_protocol, "single_shot | single_query | multi_query");
  ev->add_option("--topk", ev_topk, "Comma-separated ranks (default 1,5,10,15,20)")
      ->delimiter(',');
  ev->add_option("--trials", ev_trials, "Repeated single-shot trials (default 10)");
  ev->add_option("--seed", ev_seed, "Evaluation seed");
  ev->add_option("--out", ev_out, "Also write the metrics JSON here");

  // sweep
  auto* sw = app.add_subcommand("sweep", "Train and evaluate once per parameter value");
  std::string sw_param, sw_config, sw_data, sw_out;
  std::vector<double> sw_values;
  bool sw_parallel = false;
  sw->add_option("--param", sw_param, "M | zeta | lambda | vartheta")->required();
  sw->add_option("--values", sw_values, "Comma-separated values")->delimiter(',');
  sw->add_option("--config", sw_config, "Base run config");
  sw->add_option("--data", sw_data, "Dataset (default: generated from the config)");
  sw->add_option("--out", sw_out, "Also write the CSV here");
  sw->add_flag("--parallel", sw_parallel, "Run sweep points concurrently");

  // rank-dump
  auto* rd = app.add_subcommand("rank-dump", "List the nearest gallery samples for one probe");
  std::string rd_model, rd_data, rd_config;
  std::int64_t rd_probe = -1;
  std::size_t rd_top = 10;
  rd->add_option("--model", rd_model, "Model directory")->required();
  rd->add_option("--data", rd_data, "Dataset directory or CSV")->required();
  rd->add_option("--config", rd_config, "Run config (default: the model's saved config)");
  rd->add_option("--probe-id", rd_probe, "Probe sample_id from the test split")->required();
  rd->add_option("--top", rd_top, "Number of matches to list");

  // config dump
  auto* cf = app.add_subcommand("config", "Configuration utilities");
  cf->require_subcommand(1);
  auto* dump = cf->add_subcommand("dump", "Print the full config with every default");
  std::string dump_config;
  dump->add_option("--config", dump_config, "Config to merge over the defaults");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kExitUsage;
  }

  try {
    if (*gen) return cmd_gen_data(gen_config, gen_out, gen_seed, gen_format, out);
    if (*tr)
      return cmd_train(tr_data, tr_config, tr_mode, tr_grad, tr_out, tr_seed, tr_iters, out, err);
    if (*ev)
      return cmd_eval(ev_model, ev_data, ev_config, ev_protocol, ev_topk, ev_trials, ev_seed,
                      ev_out, out);
    if (*sw) return cmd_sweep(sw_param, sw_values, sw_config, sw_data, sw_out, sw_parallel, out, err);
    if (*rd) return cmd_rank_dump(rd_model, rd_data, rd_config, rd_probe, rd_top, out);
    if (*dump) {
      out << to_json(config_or_default(dump_config)).dump(2) << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IncompatibleError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIncompatible;
  } catch (const ShapeError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIncompatible;
  } catch (const ProtocolError& e) {
    err << "error: " << e.what() << "\n";
    return kExitIncompatible;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace dspl
