#include "dspl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace dspl {

void EmbeddingTable::push_back(std::int64_t sample_id, std::int64_t identity, int camera,
                               bool outlier, std::vector<double> row) {
  sample_ids.push_back(sample_id);
  identity_ids.push_back(identity);
  camera_ids.push_back(camera);
  outliers.push_back(outlier);
  rows.push_back(std::move(row));
}

EmbeddingTable EmbeddingTable::select(std::span<const std::size_t> indices) const {
  EmbeddingTable out;
  for (auto i : indices)
    out.push_back(sample_ids[i], identity_ids[i], camera_ids[i], outliers[i], rows[i]);
  return out;
}

EmbeddingTable embed_all(const NetworkModel& model, std::span<const Sample> samples) {
  EmbeddingTable t;
  for (const auto& s : samples) {
    if (s.payload.dims() != model.input_dims())
      throw ContractError("sample " + std::to_string(s.sample_id) + " payload dims " +
                          dims_to_string(s.payload.dims()) + " do not match model input " +
                          dims_to_string(model.input_dims()));
    t.push_back(s.sample_id, s.identity_id, s.camera_id, s.is_outlier,
                predict(model, s.payload).values());
  }
  return t;
}

RankingResult rank_gallery(const EmbeddingTable& probes, const EmbeddingTable& gallery) {
  const std::set<std::int64_t> gallery_ids(gallery.identity_ids.begin(),
                                           gallery.identity_ids.end());
  std::set<std::int64_t> missing;
  for (auto id : probes.identity_ids)
    if (!gallery_ids.count(id)) missing.insert(id);
  if (!missing.empty()) {
    std::string list;
    for (auto id : missing) list += (list.empty() ? "" : ", ") + std::to_string(id);
    throw ProtocolError("probe identities absent from the gallery: " + list);
  }

  RankingResult res;
  const std::size_t G = gallery.size();
  std::vector<std::size_t> idx(G);
  std::vector<double> dist(G);
  for (std::size_t p = 0; p < probes.size(); ++p) {
    for (std::size_t g = 0; g < G; ++g) dist[g] = squared_distance(probes.rows[p], gallery.rows[g]);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      return gallery.sample_ids[a] < gallery.sample_ids[b];
    });
    std::vector<std::int64_t> order(G);
    std::size_t first = 0, hits = 0;
    double precision_sum = 0.0;
    for (std::size_t r = 0; r < G; ++r) {
      order[r] = gallery.sample_ids[idx[r]];
      if (gallery.identity_ids[idx[r]] == probes.identity_ids[p]) {
        ++hits;
        if (!first) first = r + 1;
        precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
      }
    }
    res.order.push_back(std::move(order));
    res.first_match_rank.push_back(first);
    res.average_precision.push_back(precision_sum / static_cast<double>(hits));
  }
  return res;
}

std::vector<double> cmc_from_ranking(const RankingResult& ranking,
                                     std::span<const std::size_t> ks) {
  std::vector<double> out;
  const auto n = ranking.first_match_rank.size();
  for (auto k : ks) {
    const auto hits = std::count_if(ranking.first_match_rank.begin(),
                                    ranking.first_match_rank.end(),
                                    [k](std::size_t r) { return r <= k; });
    out.push_back(n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0);
  }
  return out;
}

std::vector<double> cmc(const EmbeddingTable& probes, const EmbeddingTable& gallery,
                        std::span<const std::size_t> ks) {
  return cmc_from_ranking(rank_gallery(probes, gallery), ks);
}

std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::SingleShot: return "single_shot";
    case Protocol::SingleQuery: return "single_query";
    case Protocol::MultiQuery: return "multi_query";
  }
  return "?";
}

Protocol protocol_from_string(const std::string& name) {
  for (auto p : {Protocol::SingleShot, Protocol::SingleQuery, Protocol::MultiQuery})
    if (to_string(p) == name) return p;
  throw ConfigError("unknown protocol '" + name +
                    "' (expected single_shot|single_query|multi_query)");
}

EmbeddingTable aggregate_queries(const EmbeddingTable& probes) {
  std::map<std::pair<std::int64_t, int>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < probes.size(); ++i)
    groups[{probes.identity_ids[i], probes.camera_ids[i]}].push_back(i);
  EmbeddingTable out;
  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return probes.sample_ids[a] < probes.sample_ids[b];
    });
    std::vector<double> mean(probes.rows[members[0]].size(), 0.0);
    for (auto m : members) axpy(1.0, probes.rows[m], mean);
    for (auto& v : mean) v /= static_cast<double>(members.size());
    std::int64_t min_id = probes.sample_ids[members[0]];
    for (auto m : members) min_id = std::min(min_id, probes.sample_ids[m]);
    out.push_back(min_id, key.first, key.second, false, std::move(mean));
  }
  return out;
}

double map_score(const EmbeddingTable& probes, const EmbeddingTable& gallery, Protocol protocol) {
  const auto ranking = protocol == Protocol::MultiQuery
                           ? rank_gallery(aggregate_queries(probes), gallery)
                           : rank_gallery(probes, gallery);
  const auto& ap = ranking.average_precision;
  if (ap.empty()) return 0.0;
  return std::accumulate(ap.begin(), ap.end(), 0.0) / static_cast<double>(ap.size());
}

void EvalConfig::validate() const {
  if (topk.empty()) throw ConfigError("topk must list at least one rank");
  for (auto k : topk)
    if (k == 0) throw ConfigError("topk entries must be >= 1");
  if (trials == 0) throw ConfigError("trials must be >= 1");
}

nlohmann::json Metrics::to_json() const {
  return {{"protocol", to_string(protocol)}, {"topk", topk}, {"cmc", cmc},
          {"map", map},                      {"trials", trials}, {"seed", seed}};
}

Metrics evaluate_table(const EmbeddingTable& table, const EvalConfig& cfg) {
  cfg.validate();
  Metrics m;
  m.protocol = cfg.protocol;
  m.topk = cfg.topk;
  m.seed = cfg.seed;
  m.cmc.assign(cfg.topk.size(), 0.0);

  std::vector<std::size_t> cam0, cam1;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (cfg.exclude_outliers && table.outliers[i]) continue;
    (table.camera_ids[i] == 0 ? cam0 : cam1).push_back(i);
  }

  if (cfg.protocol != Protocol::SingleShot) {
    const auto gallery = table.select(cam0);
    auto probes = table.select(cam1);
    if (cfg.protocol == Protocol::MultiQuery) probes = aggregate_queries(probes);
    const auto ranking = rank_gallery(probes, gallery);
    m.cmc = cmc_from_ranking(ranking, cfg.topk);
    const auto& ap = ranking.average_precision;
    m.map = ap.empty() ? 0.0
                       : std::accumulate(ap.begin(), ap.end(), 0.0) / static_cast<double>(ap.size());
    m.trials = 1;
    return m;
  }

  // Single shot: one camera-0 gallery entry and one camera-1 probe per identity.
  std::map<std::int64_t, std::pair<std::vector<std::size_t>, std::vector<std::size_t>>> by_id;
  for (auto i : cam0) by_id[table.identity_ids[i]].first.push_back(i);
  for (auto i : cam1) by_id[table.identity_ids[i]].second.push_back(i);
  const auto by_sample_id = [&](std::size_t a, std::size_t b) {
    return table.sample_ids[a] < table.sample_ids[b];
  };
  std::vector<std::int64_t> usable;
  for (auto& [id, views] : by_id) {
    std::sort(views.first.begin(), views.first.end(), by_sample_id);
    std::sort(views.second.begin(), views.second.end(), by_sample_id);
    if (!views.first.empty() && !views.second.empty()) usable.push_back(id);
  }
  if (usable.size() < 2)
    throw ProtocolError("single-shot evaluation needs at least 2 identities seen by both cameras");

  for (std::size_t trial = 0; trial < cfg.trials; ++trial) {
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(trial)};
    std::mt19937_64 rng(seq);
    std::vector<std::size_t> g_idx, p_idx;
    for (auto id : usable) {
      const auto& [c0, c1] = by_id.at(id);
      g_idx.push_back(c0[std::uniform_int_distribution<std::size_t>(0, c0.size() - 1)(rng)]);
      p_idx.push_back(c1[std::uniform_int_distribution<std::size_t>(0, c1.size() - 1)(rng)]);
    }
    const auto ranking = rank_gallery(table.select(p_idx), table.select(g_idx));
    const auto c = cmc_from_ranking(ranking, cfg.topk);
    for (std::size_t k = 0; k < c.size(); ++k) m.cmc[k] += c[k];
    const auto& ap = ranking.average_precision;
    m.map += std::accumulate(ap.begin(), ap.end(), 0.0) / static_cast<double>(ap.size());
  }
  for (auto& v : m.cmc) v /= static_cast<double>(cfg.trials);
  m.map /= static_cast<double>(cfg.trials);
  m.trials = cfg.trials;
  return m;
}

Metrics evaluate(const NetworkModel& model, const Dataset& test, const EvalConfig& cfg) {
  return evaluate_table(embed_all(model, test.samples), cfg);
}

std::vector<RankedMatch> rank_dump(const NetworkModel& model, const Dataset& test,
                                   std::int64_t probe_id, std::size_t top) {
  const auto pos = test.find(probe_id);
  if (pos == Dataset::npos)
    throw ProtocolError("probe " + std::to_string(probe_id) + " is not in the test split");
  const auto& probe = test.samples[pos];
  const auto probe_emb = predict(model, probe.payload);
  std::vector<RankedMatch> rows;
  for (const auto& s : test.samples) {
    if (s.camera_id == probe.camera_id) continue;
    const auto e = predict(model, s.payload);
    rows.push_back({s.sample_id, s.identity_id, std::sqrt(squared_distance(probe_emb.data(), e.data())),
                    s.identity_id == probe.identity_id});
  }
  std::sort(rows.begin(), rows.end(), [](const RankedMatch& a, const RankedMatch& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    return a.sample_id < b.sample_id;
  });
  if (rows.size() > top) rows.resize(top);
  return rows;
}

}  // namespace dspl
