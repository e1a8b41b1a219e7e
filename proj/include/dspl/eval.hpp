#ifndef DSPL_EVAL_HPP_
#define DSPL_EVAL_HPP_

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dspl/data.hpp"
#include "dspl/network.hpp"

namespace dspl {

/// Probe/gallery sets that violate the retrieval protocol.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Embeddings with the labels needed for retrieval.
struct EmbeddingTable {
  std::vector<std::int64_t> sample_ids;
  std::vector<std::int64_t> identity_ids;
  std::vector<int> camera_ids;
  std::vector<bool> outliers;
  std::vector<std::vector<double>> rows;

  std::size_t size() const { return rows.size(); }
  void push_back(std::int64_t sample_id, std::int64_t identity, int camera, bool outlier,
                 std::vector<double> row);
  EmbeddingTable select(std::span<const std::size_t> indices) const;
};

EmbeddingTable embed_all(const NetworkModel& model, std::span<const Sample> samples);

struct RankingResult {
  /// Per probe: gallery sample_ids by ascending distance, ties by sample_id.
  std::vector<std::vector<std::int64_t>> order;
  /// Per probe: 1-based rank of the first same-identity gallery entry.
  std::vector<std::size_t> first_match_rank;
  std::vector<double> average_precision;
};

/// Throws ProtocolError listing every probe identity absent from the gallery.
RankingResult rank_gallery(const EmbeddingTable& probes, const EmbeddingTable& gallery);

/// CMC(k) for each k in `ks`.
std::vector<double> cmc(const EmbeddingTable& probes, const EmbeddingTable& gallery,
                        std::span<const std::size_t> ks);
std::vector<double> cmc_from_ranking(const RankingResult& ranking,
                                     std::span<const std::size_t> ks);

enum class Protocol { SingleShot, SingleQuery, MultiQuery };
std::string to_string(Protocol p);
Protocol protocol_from_string(const std::string& name);

/// Mean embedding per (identity, camera), ordered by (identity, camera).
EmbeddingTable aggregate_queries(const EmbeddingTable& probes);

/// Mean average precision; MultiQuery aggregates probes first. SingleShot is
/// treated as SingleQuery on the given sets.
double map_score(const EmbeddingTable& probes, const EmbeddingTable& gallery, Protocol protocol);

struct EvalConfig {
  Protocol protocol = Protocol::SingleShot;
  std::vector<std::size_t> topk{1, 5, 10, 15, 20};
  std::size_t trials = 10;
  std::uint64_t seed = 1;
  /// Leave generator-flagged outliers out of probe and gallery sets.
  bool exclude_outliers = true;

  void validate() const;
};

struct Metrics {
  Protocol protocol = Protocol::SingleShot;
  std::vector<std::size_t> topk;
  std::vector<double> cmc;
  double map = 0.0;
  std::size_t trials = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// Camera 1 samples probe a camera 0 gallery.
Metrics evaluate_table(const EmbeddingTable& table, const EvalConfig& cfg);
Metrics evaluate(const NetworkModel& model, const Dataset& test, const EvalConfig& cfg);

struct RankedMatch {
  std::int64_t sample_id = 0;
  std::int64_t identity_id = 0;
  double distance = 0.0;
  bool correct = false;
};

/// Gallery = every test sample from the other camera.
std::vector<RankedMatch> rank_dump(const NetworkModel& model, const Dataset& test,
                                   std::int64_t probe_id, std::size_t top);

}  // namespace dspl

#endif  // DSPL_EVAL_HPP_
