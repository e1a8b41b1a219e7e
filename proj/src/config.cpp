#include "dspl/config.hpp"

#include <set>

#define TOML_EXCEPTIONS 1
#include <toml.hpp>

#include "dspl/io.hpp"

namespace dspl {

namespace {

// Reads keys out of one JSON object and rejects whatever was not consumed.
class Section {
 public:
  Section(const nlohmann::json& root, std::string name) : name_(std::move(name)) {
    if (!root.contains(name_)) return;
    node_ = &root.at(name_);
    if (!node_->is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    if (!node_ || !node_->contains(key)) return;
    seen_.insert(key);
    try {
      out = node_->at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  void read_double(const char* key, double& out) {
    if (!node_ || !node_->contains(key)) return;
    seen_.insert(key);
    const auto& v = node_->at(key);
    if (!v.is_number()) throw ConfigError("config key '" + name_ + "." + key + "' must be a number");
    out = v.get<double>();
  }

  void read_size(const char* key, std::size_t& out) {
    if (!node_ || !node_->contains(key)) return;
    seen_.insert(key);
    const auto& v = node_->at(key);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
      throw ConfigError("config key '" + name_ + "." + key + "' must be a non-negative integer");
    out = v.get<std::size_t>();
  }

  void read_seed(const char* key, std::uint64_t& out) {
    if (!node_ || !node_->contains(key)) return;
    seen_.insert(key);
    const auto& v = node_->at(key);
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() &&
                                   v.get<std::int64_t>() < 0))
      throw ConfigError("config key '" + name_ + "." + key + "' must be a non-negative integer");
    out = v.get<std::uint64_t>();
  }

  void finish() const {
    if (!node_) return;
    for (const auto& [key, _] : node_->items())
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + name_ + "." + key + "'");
  }

 private:
  std::string name_;
  const nlohmann::json* node_ = nullptr;
  std::set<std::string> seen_;
};

nlohmann::json toml_node_to_json(const toml::node& node) {
  if (auto t = node.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = toml_node_to_json(v);
    return j;
  }
  if (auto a = node.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : *a) j.push_back(toml_node_to_json(v));
    return j;
  }
  if (auto v = node.as_integer()) return v->get();
  if (auto v = node.as_floating_point()) return v->get();
  if (auto v = node.as_boolean()) return v->get();
  if (auto v = node.as_string()) return v->get();
  throw ConfigError("unsupported TOML value type (dates and times are not config values)");
}

}  // namespace

void RunConfig::validate() const {
  data.validate();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("data.train_fraction must be in (0, 1)");
  if (model.parts == 0 || model.part_dim == 0)
    throw ConfigError("model.parts and model.part_dim must be >= 1");
  if (!(model.init_std.first >= 0.0 && model.init_std.last >= 0.0))
    throw ConfigError("model init std must be >= 0");
  train.validate();
  eval.validate();
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["data"] = {{"name", c.data.name},
               {"identities", c.data.identities},
               {"samples_per_camera", c.data.samples_per_camera},
               {"latent_dim", c.data.latent_dim},
               {"payload_dims", c.data.payload_dims},
               {"camera_seeds", c.data.camera_seeds},
               {"view_shift", c.data.view_shift},
               {"noise", c.data.noise},
               {"outlier_fraction", c.data.outlier_fraction},
               {"seed", c.data.seed},
               {"train_fraction", c.train_fraction},
               {"split_seed", c.split_seed}};
  j["model"] = {{"parts", c.model.parts},
                {"part_dim", c.model.part_dim},
                {"global_dim", c.model.desk.global_dim},
                {"local_dim", c.model.desk.local_dim},
                {"global_filters", c.model.desk.global_filters},
                {"global_kernel1", c.model.desk.global_kernel1},
                {"global_kernel2", c.model.desk.global_kernel2},
                {"global_pool", c.model.desk.global_pool},
                {"local_filters", c.model.desk.local_filters},
                {"local_pool", c.model.desk.local_pool},
                {"init_std_first", c.model.init_std.first},
                {"init_std_last", c.model.init_std.last},
                {"init_seed", c.model.init_seed}};
  const auto& t = c.train;
  j["train"] = {{"learning_rate", t.learning_rate},
                {"iterations", t.iterations},
                {"margin", t.loss.margin},
                {"gamma", t.loss.gamma},
                {"zeta", t.loss.zeta},
                {"xi", t.loss.xi},
                {"lambda", t.spl.lambda},
                {"vartheta", t.spl.vartheta},
                {"order", t.spl.order},
                {"omega", t.spl.omega},
                {"anchors_per_batch", t.anchors_per_batch},
                {"triplets_per_anchor", t.triplets_per_anchor},
                {"mode", to_string(t.mode)},
                {"gradient_mode", to_string(t.gradient_mode)},
                {"reduction", to_string(t.reduction)},
                {"seed", t.seed}};
  j["eval"] = {{"protocol", to_string(c.eval.protocol)},
               {"topk", c.eval.topk},
               {"trials", c.eval.trials},
               {"seed", c.eval.seed},
               {"exclude_outliers", c.eval.exclude_outliers}};
  j["output"] = {{"dir", c.output_dir}};
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j, const RunConfig& base) {
  if (!j.is_object()) throw ConfigError("config root must be an object");
  static const std::set<std::string> sections{"data", "model", "train", "eval", "output"};
  for (const auto& [key, _] : j.items())
    if (!sections.count(key)) throw ConfigError("unknown config section '" + key + "'");

  RunConfig c = base;
  Section d(j, "data");
  d.read("name", c.data.name);
  d.read_size("identities", c.data.identities);
  d.read_size("samples_per_camera", c.data.samples_per_camera);
  d.read_size("latent_dim", c.data.latent_dim);
  d.read("payload_dims", c.data.payload_dims);
  d.read("camera_seeds", c.data.camera_seeds);
  d.read_double("view_shift", c.data.view_shift);
  d.read_double("noise", c.data.noise);
  d.read_double("outlier_fraction", c.data.outlier_fraction);
  d.read_seed("seed", c.data.seed);
  d.read_double("train_fraction", c.train_fraction);
  d.read_seed("split_seed", c.split_seed);
  d.finish();

  Section m(j, "model");
  m.read_size("parts", c.model.parts);
  m.read_size("part_dim", c.model.part_dim);
  m.read_size("global_dim", c.model.desk.global_dim);
  m.read_size("local_dim", c.model.desk.local_dim);
  m.read_size("global_filters", c.model.desk.global_filters);
  m.read_size("global_kernel1", c.model.desk.global_kernel1);
  m.read_size("global_kernel2", c.model.desk.global_kernel2);
  m.read_size("global_pool", c.model.desk.global_pool);
  m.read_size("local_filters", c.model.desk.local_filters);
  m.read_size("local_pool", c.model.desk.local_pool);
  m.read_double("init_std_first", c.model.init_std.first);
  m.read_double("init_std_last", c.model.init_std.last);
  m.read_seed("init_seed", c.model.init_seed);
  m.finish();

  Section t(j, "train");
  auto& tr = c.train;
  t.read_double("learning_rate", tr.learning_rate);
  t.read_size("iterations", tr.iterations);
  t.read_double("margin", tr.loss.margin);
  t.read_double("gamma", tr.loss.gamma);
  t.read_double("zeta", tr.loss.zeta);
  t.read_double("xi", tr.loss.xi);
  t.read_double("lambda", tr.spl.lambda);
  t.read_double("vartheta", tr.spl.vartheta);
  t.read_double("order", tr.spl.order);
  t.read_double("omega", tr.spl.omega);
  t.read_size("anchors_per_batch", tr.anchors_per_batch);
  t.read_size("triplets_per_anchor", tr.triplets_per_anchor);
  std::string mode = to_string(tr.mode), gmode = to_string(tr.gradient_mode),
              reduction = to_string(tr.reduction);
  t.read("mode", mode);
  t.read("gradient_mode", gmode);
  t.read("reduction", reduction);
  tr.reduction = reduction_from_string(reduction);
  tr.mode = train_mode_from_string(mode);
  tr.gradient_mode = gradient_mode_from_string(gmode);
  t.read_seed("seed", tr.seed);
  t.finish();

  Section e(j, "eval");
  std::string protocol = to_string(c.eval.protocol);
  e.read("protocol", protocol);
  c.eval.protocol = protocol_from_string(protocol);
  e.read("topk", c.eval.topk);
  e.read_size("trials", c.eval.trials);
  e.read_seed("seed", c.eval.seed);
  e.read("exclude_outliers", c.eval.exclude_outliers);
  e.finish();

  Section o(j, "output");
  o.read("dir", c.output_dir);
  o.finish();

  c.validate();
  return c;
}

nlohmann::json toml_to_json(const std::string& text) {
  try {
    const toml::table table = toml::parse(text);
    return toml_node_to_json(table);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("TOML parse error: ") + std::string(e.description()));
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text_file(path);
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  if (path.extension() == ".toml") {
    j = toml_to_json(text);
  } else {
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("config '" + path.string() + "': " + e.what());
    }
  }
  return run_config_from_json(j);
}

NetworkModel build_model(const ModelConfig& cfg, const Dims& input_dims) {
  auto preset = preset_desk(input_dims, cfg.parts, cfg.part_dim, cfg.desk);
  return init_params(NetworkModel(std::move(preset.spec)), cfg.init_seed, cfg.init_std);
}

}  // namespace dspl
