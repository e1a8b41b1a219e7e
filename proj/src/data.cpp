#include "dspl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dspl/io.hpp"

namespace dspl {

namespace {

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

// Row-major (rows x cols) Gaussian matrix with entries N(0, scale^2).
std::vector<double> gaussian_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                                    double scale) {
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> m(rows * cols);
  for (auto& v : m) v = g(rng);
  return m;
}

struct ViewTransform {
  std::vector<double> matrix;  // out x latent
  std::vector<double> offset;  // out
};

Tensor render(const ViewTransform& view, const std::vector<double>& latent, const Dims& dims,
              double noise, std::mt19937_64& rng) {
  const std::size_t out = numel(dims);
  const std::size_t L = latent.size();
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(out);
  for (std::size_t i = 0; i < out; ++i) {
    double s = view.offset[i];
    for (std::size_t j = 0; j < L; ++j) s += view.matrix[i * L + j] * latent[j];
    v[i] = s + noise * g(rng);
  }
  return Tensor(dims, std::move(v));
}

}  // namespace

std::vector<std::int64_t> Dataset::identities() const {
  std::set<std::int64_t> ids;
  for (const auto& s : samples) ids.insert(s.identity_id);
  return {ids.begin(), ids.end()};
}

std::size_t Dataset::outlier_count() const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [](const Sample& s) { return s.is_outlier; }));
}

std::size_t Dataset::find(std::int64_t sample_id) const {
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].sample_id == sample_id) return i;
  return npos;
}

void Dataset::validate() const {
  std::set<std::int64_t> ids;
  for (const auto& s : samples) {
    if (s.payload.dims() != payload_dims)
      throw ShapeError("sample " + std::to_string(s.sample_id) + " has payload dims " +
                       dims_to_string(s.payload.dims()) + ", dataset declares " +
                       dims_to_string(payload_dims));
    if (s.camera_id != 0 && s.camera_id != 1)
      throw ConfigError("sample " + std::to_string(s.sample_id) + " has camera " +
                        std::to_string(s.camera_id) + ", expected 0 or 1");
    if (!ids.insert(s.sample_id).second)
      throw ConfigError("duplicate sample_id " + std::to_string(s.sample_id));
  }
}

void SyntheticConfig::validate() const {
  if (identities < 2) throw ConfigError("synthetic data needs at least 2 identities");
  if (samples_per_camera < 1) throw ConfigError("samples_per_camera must be >= 1");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (payload_dims.empty() || payload_dims.size() > Tensor::kMaxRank)
    throw ConfigError("payload dims must have rank 1..4");
  if (numel(payload_dims) < latent_dim)
    throw ConfigError("payload shape " + dims_to_string(payload_dims) +
                      " is smaller than latent_dim " + std::to_string(latent_dim));
  if (!(noise >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0))
    throw ConfigError("outlier fraction must be in [0, 1)");
  if (!(view_shift >= 0.0)) throw ConfigError("view_shift must be >= 0");
}

Dataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  const std::size_t L = cfg.latent_dim;
  const std::size_t D = numel(cfg.payload_dims);
  const double scale = 1.0 / std::sqrt(static_cast<double>(L));

  auto rng = make_rng(cfg.seed, 0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<double>> latents(cfg.identities, std::vector<double>(L));
  for (auto& z : latents)
    for (auto& v : z) v = g(rng);

  const auto base = gaussian_matrix(rng, D, L, scale);
  std::array<ViewTransform, 2> views;
  for (int c = 0; c < 2; ++c) {
    auto crng = make_rng(cfg.camera_seeds[c], 1);
    const auto shift = gaussian_matrix(crng, D, L, scale * cfg.view_shift);
    views[c].matrix.resize(D * L);
    for (std::size_t i = 0; i < D * L; ++i) views[c].matrix[i] = base[i] + shift[i];
    views[c].offset = gaussian_matrix(crng, D, 1, cfg.view_shift);
  }

  Dataset ds;
  ds.name = cfg.name;
  ds.payload_dims = cfg.payload_dims;
  std::int64_t next_id = 0;
  for (std::size_t id = 0; id < cfg.identities; ++id)
    for (int c = 0; c < 2; ++c)
      for (std::size_t k = 0; k < cfg.samples_per_camera; ++k) {
        Sample s;
        s.sample_id = next_id++;
        s.identity_id = static_cast<std::int64_t>(id);
        s.camera_id = c;
        s.payload = render(views[c], latents[id], cfg.payload_dims, cfg.noise, rng);
        ds.samples.push_back(std::move(s));
      }

  const auto n_out = static_cast<std::size_t>(
      std::floor(cfg.outlier_fraction * static_cast<double>(ds.samples.size())));
  if (n_out > 0) {
    std::vector<std::size_t> order(ds.samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::uniform_int_distribution<std::size_t> other(0, cfg.identities - 2);
    for (std::size_t k = 0; k < n_out; ++k) {
      Sample& s = ds.samples[order[k]];
      std::size_t src = other(rng);
      if (src >= static_cast<std::size_t>(s.identity_id)) ++src;
      s.payload = render(views[s.camera_id], latents[src], cfg.payload_dims, 5.0 * cfg.noise, rng);
      s.is_outlier = true;
    }
  }
  return ds;
}

Split split_zero_shot(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  auto ids = dataset.identities();
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ConfigError("train fraction must be in (0, 1)");
  const auto n_train =
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  if (n_train < 2 || ids.size() - n_train < 2)
    throw ConfigError("zero-shot split needs at least 2 identities per side; " +
                      std::to_string(ids.size()) + " identities at fraction " +
                      format_double(train_fraction) + " gives " + std::to_string(n_train) +
                      " train");
  auto rng = make_rng(seed, 2);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::set<std::int64_t> train_ids(ids.begin(), ids.begin() + static_cast<long>(n_train));

  Split out;
  out.train.name = dataset.name + ".train";
  out.test.name = dataset.name + ".test";
  out.train.payload_dims = out.test.payload_dims = dataset.payload_dims;
  for (const auto& s : dataset.samples)
    (train_ids.count(s.identity_id) ? out.train : out.test).samples.push_back(s);
  return out;
}

bool is_valid_triplet(const Dataset& ds, const Triplet& t) {
  const auto n = ds.samples.size();
  if (t.anchor >= n || t.positive >= n || t.negative >= n) return false;
  const auto& a = ds.samples[t.anchor];
  return t.anchor != t.positive && a.identity_id == ds.samples[t.positive].identity_id &&
         a.identity_id != ds.samples[t.negative].identity_id;
}

bool is_outlier_triplet(const Dataset& ds, const Triplet& t) {
  return ds.samples[t.anchor].is_outlier || ds.samples[t.positive].is_outlier ||
         ds.samples[t.negative].is_outlier;
}

TripletBatch sample_triplets(const Dataset& train, std::size_t anchors_per_batch,
                             std::size_t triplets_per_anchor, std::uint64_t seed,
                             std::uint64_t batch_index) {
  if (anchors_per_batch == 0 || triplets_per_anchor == 0)
    throw ConfigError("anchors_per_batch and triplets_per_anchor must be >= 1");
  // Sample positions grouped by identity; each identity owns a contiguous range.
  std::map<std::int64_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < train.samples.size(); ++i)
    groups[train.samples[i].identity_id].push_back(i);
  if (groups.size() < 2) throw ConfigError("triplet sampling needs at least 2 identities");

  std::vector<std::size_t> by_identity;
  std::vector<std::pair<std::size_t, std::size_t>> range_of(train.samples.size());
  for (const auto& [id, members] : groups) {
    const std::size_t begin = by_identity.size();
    by_identity.insert(by_identity.end(), members.begin(), members.end());
    for (auto m : members) range_of[m] = {begin, by_identity.size()};
  }

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < train.samples.size(); ++i)
    if (range_of[i].second - range_of[i].first >= 2) candidates.push_back(i);
  if (candidates.size() < anchors_per_batch)
    throw ConfigError("cannot draw " + std::to_string(anchors_per_batch) +
                      " distinct anchors: only " + std::to_string(candidates.size()) +
                      " samples have a same-identity partner");

  auto rng = make_rng(seed, 0x7269706c6574ULL + batch_index);
  // Partial Fisher-Yates: uniform anchors without replacement.
  for (std::size_t k = 0; k < anchors_per_batch; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
    std::swap(candidates[k], candidates[pick(rng)]);
  }

  TripletBatch batch;
  batch.triplets.reserve(anchors_per_batch * triplets_per_anchor);
  const std::size_t n = by_identity.size();
  for (std::size_t k = 0; k < anchors_per_batch; ++k) {
    const std::size_t a = candidates[k];
    const auto [begin, end] = range_of[a];
    const std::size_t own = end - begin;
    std::uniform_int_distribution<std::size_t> pos(0, own - 2);
    std::uniform_int_distribution<std::size_t> neg(0, n - own - 1);
    for (std::size_t j = 0; j < triplets_per_anchor; ++j) {
      // positive: uniform over the identity's members other than the anchor
      std::size_t p = by_identity[begin + pos(rng)];
      if (p == a) p = by_identity[end - 1];
      std::size_t q = neg(rng);
      if (q >= begin) q += own;
      batch.triplets.push_back({a, p, by_identity[q]});
    }
  }
  batch.weights.assign(batch.triplets.size(), 1.0);
  return batch;
}

// ---------------------------------------------------------------------------
// Files

void save_dataset(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  nlohmann::json samples = nlohmann::json::array();
  std::vector<NamedTensor> tensors;
  tensors.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    samples.push_back({{"sample_id", s.sample_id},
                       {"identity_id", s.identity_id},
                       {"camera_id", s.camera_id},
                       {"is_outlier", s.is_outlier},
                       {"file", "payloads.dspt"}});
    tensors.emplace_back(std::to_string(s.sample_id), s.payload);
  }
  nlohmann::json manifest{{"name", ds.name},
                          {"mode", ds.mode()},
                          {"payload_dims", ds.payload_dims},
                          {"samples", samples}};
  save_dspt(dir / "payloads.dspt", tensors);
  write_text_file(dir / "manifest.json", manifest.dump(1) + "\n");
}

void save_dataset_csv(const std::filesystem::path& file, const Dataset& ds) {
  if (ds.payload_dims.size() != 1) throw ConfigError("CSV datasets must be vector mode");
  std::ostringstream os;
  os << "sample_id,identity_id,camera_id,is_outlier";
  for (std::size_t i = 0; i < ds.payload_dims[0]; ++i) os << ",x" << i;
  os << '\n';
  for (const auto& s : ds.samples) {
    os << s.sample_id << ',' << s.identity_id << ',' << s.camera_id << ','
       << (s.is_outlier ? 1 : 0);
    for (double v : s.payload.data()) os << ',' << format_double(v);
    os << '\n';
  }
  write_text_file(file, os.str());
}

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Dataset load_csv(const std::filesystem::path& file) {
  std::istringstream is(read_text_file(file));
  std::string line;
  if (!std::getline(is, line)) throw IoError("'" + file.string() + "' is empty");
  const auto header = split_commas(line);
  if (header.size() < 5 || header[0] != "sample_id" || header[1] != "identity_id" ||
      header[2] != "camera_id" || header[3] != "is_outlier")
    throw IoError("'" + file.string() + "': unexpected CSV header");
  const std::size_t d = header.size() - 4;
  for (std::size_t i = 0; i < d; ++i)
    if (header[4 + i] != "x" + std::to_string(i))
      throw IoError("'" + file.string() + "': unexpected column '" + header[4 + i] + "'");
  Dataset ds;
  ds.name = file.stem().string();
  ds.payload_dims = {d};
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != header.size())
      throw IoError("'" + file.string() + "' line " + std::to_string(lineno) + ": expected " +
                    std::to_string(header.size()) + " fields");
    Sample s;
    try {
      s.sample_id = std::stoll(cells[0]);
      s.identity_id = std::stoll(cells[1]);
      s.camera_id = std::stoi(cells[2]);
      s.is_outlier = std::stoi(cells[3]) != 0;
    } catch (const std::exception&) {
      throw IoError("'" + file.string() + "' line " + std::to_string(lineno) +
                    ": malformed integer field");
    }
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = parse_double(cells[4 + i]);
    s.payload = Tensor::vector(std::move(v));
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path) {
  if (std::filesystem::is_regular_file(path)) return load_csv(path);
  if (!std::filesystem::is_directory(path))
    throw IoError("dataset path '" + path.string() + "' does not exist");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(path / "manifest.json"));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("manifest.json: " + std::string(e.what()));
  }
  Dataset ds;
  std::map<std::string, std::map<std::string, Tensor>> files;
  try {
    ds.name = manifest.at("name").get<std::string>();
    ds.payload_dims = manifest.at("payload_dims").get<Dims>();
    const auto mode = manifest.at("mode").get<std::string>();
    if (mode != ds.mode())
      throw IoError("manifest mode '" + mode + "' does not match payload dims " +
                    dims_to_string(ds.payload_dims));
    for (const auto& sj : manifest.at("samples")) {
      Sample s;
      s.sample_id = sj.at("sample_id").get<std::int64_t>();
      s.identity_id = sj.at("identity_id").get<std::int64_t>();
      s.camera_id = sj.at("camera_id").get<int>();
      s.is_outlier = sj.at("is_outlier").get<bool>();
      const auto file = sj.at("file").get<std::string>();
      auto it = files.find(file);
      if (it == files.end()) {
        std::map<std::string, Tensor> named;
        for (auto& [name, t] : load_dspt(path / file)) named.emplace(name, std::move(t));
        it = files.emplace(file, std::move(named)).first;
      }
      auto t = it->second.find(std::to_string(s.sample_id));
      if (t == it->second.end())
        throw IoError("payload for sample " + std::to_string(s.sample_id) + " missing in " + file);
      s.payload = std::move(t->second);
      ds.samples.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest.json: " + std::string(e.what()));
  }
  ds.validate();
  return ds;
}

}  // namespace dspl
