#include "dspl/io.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dspl {

namespace {

static_assert(std::endian::native == std::endian::little,
              "DSPT encoding assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
    throw IoError("DSPT: unexpected end of stream");
  return v;
}

}  // namespace

void write_dspt(std::ostream& os, const std::vector<NamedTensor>& tensors) {
  os.write("DSPT", 4);
  put<std::uint16_t>(os, kDsptVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw IoError("DSPT: tensor name too long");
    put<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.dims()) put<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(t.data().data()),
             static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!os) throw IoError("DSPT: write failed");
}

std::vector<NamedTensor> read_dspt(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DSPT", 4) != 0)
    throw IoError("DSPT: bad magic");
  const auto version = get<std::uint16_t>(is);
  if (version != kDsptVersion) throw IoError("DSPT: unsupported version " + std::to_string(version));
  const auto count = get<std::uint32_t>(is);
  std::vector<NamedTensor> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get<std::uint16_t>(is);
    std::string name(len, '\0');
    if (len && !is.read(name.data(), len)) throw IoError("DSPT: truncated name");
    const auto rank = get<std::uint8_t>(is);
    if (rank == 0 || rank > Tensor::kMaxRank)
      throw IoError("DSPT: tensor '" + name + "' has invalid rank " + std::to_string(rank));
    Dims dims(rank);
    for (auto& d : dims) d = get<std::uint32_t>(is);
    std::vector<double> data(numel(dims));
    if (!is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(double))))
      throw IoError("DSPT: truncated payload for '" + name + "'");
    try {
      out.emplace_back(std::move(name), Tensor(std::move(dims), std::move(data)));
    } catch (const ShapeError& e) {
      throw IoError(std::string("DSPT: ") + e.what());
    }
  }
  return out;
}

void save_dspt(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  write_dspt(os, tensors);
}

std::vector<NamedTensor> load_dspt(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return read_dspt(is);
}

nlohmann::json spec_to_json(const NetworkSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) {
    nlohmann::json j{{"kind", to_string(l.kind)}, {"inputs", l.inputs}};
    if (!l.name.empty()) j["name"] = l.name;
    switch (l.kind) {
      case LayerKind::Dense: j["out_dim"] = l.out_dim; break;
      case LayerKind::Conv2d:
        j["filters"] = l.filters;
        j["kh"] = l.kh;
        j["kw"] = l.kw;
        j["padding"] = to_string(l.padding);
        break;
      case LayerKind::MaxPool:
        j["kh"] = l.kh;
        j["kw"] = l.kw;
        j["stride"] = l.stride;
        break;
      case LayerKind::PartSplit:
        j["parts"] = l.parts;
        j["part"] = l.part;
        j["axis"] = "height";
        break;
      default: break;
    }
    layers.push_back(std::move(j));
  }
  return {{"input_dims", spec.input_dims}, {"layers", layers}, {"output", spec.output_node()}};
}

NetworkSpec spec_from_json(const nlohmann::json& j) {
  try {
    NetworkSpec spec;
    spec.input_dims = j.at("input_dims").get<Dims>();
    for (const auto& lj : j.at("layers")) {
      LayerSpec l;
      l.kind = layer_kind_from_string(lj.at("kind").get<std::string>());
      l.inputs = lj.at("inputs").get<std::vector<std::size_t>>();
      l.name = lj.value("name", std::string{});
      l.out_dim = lj.value("out_dim", std::size_t{0});
      l.filters = lj.value("filters", std::size_t{0});
      l.kh = lj.value("kh", std::size_t{0});
      l.kw = lj.value("kw", std::size_t{0});
      l.padding = padding_from_string(lj.value("padding", std::string{"valid"}));
      l.stride = lj.value("stride", std::size_t{1});
      l.parts = lj.value("parts", std::size_t{0});
      l.part = lj.value("part", std::size_t{0});
      spec.layers.push_back(std::move(l));
    }
    if (j.contains("output")) {
      const auto out = j.at("output").get<std::size_t>();
      if (out != spec.layers.size()) spec.output = out;
    }
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("spec.json: ") + e.what());
  }
}

void save_model(const std::filesystem::path& dir, const NetworkModel& model) {
  std::filesystem::create_directories(dir);
  write_text_file(dir / "spec.json", spec_to_json(model.spec()).dump(2) + "\n");
  std::vector<NamedTensor> tensors;
  for (std::size_t k = 0; k < model.params().size(); ++k) {
    const auto& p = model.params()[k];
    if (p.weight.empty()) continue;
    const std::string base = "layer" + std::to_string(k + 1);
    tensors.emplace_back(base + ".weight", p.weight);
    tensors.emplace_back(base + ".bias", p.bias);
  }
  save_dspt(dir / "params.dspt", tensors);
}

NetworkModel load_model(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text_file(dir / "spec.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("spec.json: " + std::string(e.what()));
  }
  NetworkModel model(spec_from_json(j));
  auto tensors = load_dspt(dir / "params.dspt");
  auto params = model.params();
  std::size_t used = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!model.spec().layers[k].has_params()) continue;
    const std::string base = "layer" + std::to_string(k + 1);
    for (auto& [name, t] : tensors) {
      if (name == base + ".weight") {
        params[k].weight = std::move(t);
        ++used;
      } else if (name == base + ".bias") {
        params[k].bias = std::move(t);
        ++used;
      }
    }
  }
  if (used != tensors.size())
    throw IoError("params.dspt: " + std::to_string(tensors.size() - used) +
                  " tensors do not belong to any layer");
  return NetworkModel(model.spec(), std::move(params));
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
    throw IoError("cannot parse number '" + std::string(text) + "'");
  return v;
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << content;
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace dspl
