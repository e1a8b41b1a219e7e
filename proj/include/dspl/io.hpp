#ifndef DSPL_IO_HPP_
#define DSPL_IO_HPP_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dspl/network.hpp"
#include "dspl/tensor.hpp"

namespace dspl {

/// Unreadable, unwritable or malformed file.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedTensor = std::pair<std::string, Tensor>;

// DSPT container: "DSPT", u16 version, u32 count, then per tensor
// {u16 name length, name, u8 rank, u32 dims..., f64 payload}. All little-endian.
inline constexpr std::uint16_t kDsptVersion = 1;

void write_dspt(std::ostream& os, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_dspt(std::istream& is);
void save_dspt(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_dspt(const std::filesystem::path& path);

nlohmann::json spec_to_json(const NetworkSpec& spec);
NetworkSpec spec_from_json(const nlohmann::json& j);

/// Writes `spec.json` and `params.dspt` into `dir` (created if missing).
void save_model(const std::filesystem::path& dir, const NetworkModel& model);
NetworkModel load_model(const std::filesystem::path& dir);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double v);
double parse_double(std::string_view text);

void write_text_file(const std::filesystem::path& path, const std::string& content);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dspl

#endif  // DSPL_IO_HPP_
