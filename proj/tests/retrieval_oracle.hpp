#ifndef DSPL_TESTS_RETRIEVAL_ORACLE_HPP_
#define DSPL_TESTS_RETRIEVAL_ORACLE_HPP_

// Brute-force retrieval metrics: every rank is obtained by counting the gallery
// entries that beat it, no sorting.

#include <algorithm>
#include <random>
#include <vector>

#include "dspl/eval.hpp"

namespace dspl::testing {

struct OracleResult {
  std::vector<std::size_t> first_match_rank;
  std::vector<double> average_precision;
};

inline OracleResult oracle_rank(const EmbeddingTable& probes, const EmbeddingTable& gallery) {
  OracleResult out;
  for (std::size_t p = 0; p < probes.size(); ++p) {
    const auto beats = [&](std::size_t a, std::size_t b) {  // a ranked before b
      const double da = squared_distance(probes.rows[p], gallery.rows[a]);
      const double db = squared_distance(probes.rows[p], gallery.rows[b]);
      return da < db || (da == db && gallery.sample_ids[a] < gallery.sample_ids[b]);
    };
    std::vector<std::size_t> match_ranks;
    for (std::size_t g = 0; g < gallery.size(); ++g) {
      if (gallery.identity_ids[g] != probes.identity_ids[p]) continue;
      std::size_t rank = 1;
      for (std::size_t o = 0; o < gallery.size(); ++o)
        if (o != g && beats(o, g)) ++rank;
      match_ranks.push_back(rank);
    }
    std::sort(match_ranks.begin(), match_ranks.end());
    double sum = 0.0;
    for (std::size_t k = 0; k < match_ranks.size(); ++k)
      sum += static_cast<double>(k + 1) / static_cast<double>(match_ranks[k]);
    out.first_match_rank.push_back(match_ranks.empty() ? 0 : match_ranks.front());
    out.average_precision.push_back(sum / static_cast<double>(match_ranks.size()));
  }
  return out;
}

inline std::vector<double> oracle_cmc(const OracleResult& r, const std::vector<std::size_t>& ks) {
  std::vector<double> out;
  for (auto k : ks) {
    std::size_t hits = 0;
    for (auto rank : r.first_match_rank) hits += rank <= k ? 1 : 0;
    out.push_back(static_cast<double>(hits) / static_cast<double>(r.first_match_rank.size()));
  }
  return out;
}

// Random probe/gallery pair with at most `max_samples` rows in total. Small
// integer coordinates make distance ties common.
inline std::pair<EmbeddingTable, EmbeddingTable> random_instance(std::mt19937_64& rng,
                                                                 std::size_t max_samples) {
  std::uniform_int_distribution<std::size_t> n_ids(2, 12), dim(1, 4);
  std::uniform_int_distribution<int> coord(-2, 2);
  const std::size_t ids = n_ids(rng), d = dim(rng);
  EmbeddingTable probes, gallery;
  std::int64_t next = 0;
  const auto row = [&] {
    std::vector<double> v(d);
    for (auto& x : v) x = coord(rng);
    return v;
  };
  for (std::size_t id = 0; id < ids; ++id) {
    const std::size_t ng = 1 + rng() % 3;
    for (std::size_t k = 0; k < ng; ++k) gallery.push_back(next++, static_cast<std::int64_t>(id), 0, false, row());
  }
  const std::size_t room = max_samples > gallery.size() ? max_samples - gallery.size() : 1;
  const std::size_t n_probes = 1 + rng() % std::min(room, 3 * ids);
  for (std::size_t k = 0; k < n_probes; ++k)
    probes.push_back(next++, static_cast<std::int64_t>(rng() % ids), 1, false, row());
  // shuffle gallery sample ids so ties are not resolved by insertion order
  std::shuffle(gallery.sample_ids.begin(), gallery.sample_ids.end(), rng);
  return {probes, gallery};
}

}  // namespace dspl::testing

#endif  // DSPL_TESTS_RETRIEVAL_ORACLE_HPP_
