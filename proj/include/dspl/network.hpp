#ifndef DSPL_NETWORK_HPP_
#define DSPL_NETWORK_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dspl/tensor.hpp"

namespace dspl {

enum class LayerKind { Dense, Conv2d, MaxPool, Relu, EltwiseAdd, Concat, PartSplit };
enum class Padding { Valid, Same };

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);
std::string to_string(Padding padding);
Padding padding_from_string(const std::string& name);

/// One node of the layer graph. Node 0 is the network input; the layer at
/// position k of NetworkSpec::layers is node k + 1. Inputs must reference
/// nodes with a smaller id, which keeps the graph acyclic by construction.
struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::vector<std::size_t> inputs;
  std::string name;

  std::size_t out_dim = 0;  // dense
  std::size_t filters = 0;  // conv2d
  std::size_t kh = 0;       // conv2d, maxpool
  std::size_t kw = 0;
  Padding padding = Padding::Valid;
  std::size_t stride = 1;  // maxpool
  std::size_t parts = 0;   // part_split: P
  std::size_t part = 0;    // part_split: which of the P row bands this node emits

  bool has_params() const { return kind == LayerKind::Dense || kind == LayerKind::Conv2d; }

  static LayerSpec dense(std::size_t input, std::size_t out_dim, std::string name = {});
  static LayerSpec conv2d(std::size_t input, std::size_t filters, std::size_t kh, std::size_t kw,
                          Padding padding, std::string name = {});
  static LayerSpec maxpool(std::size_t input, std::size_t kh, std::size_t kw, std::size_t stride,
                           std::string name = {});
  static LayerSpec relu(std::size_t input, std::string name = {});
  static LayerSpec eltwise_add(std::vector<std::size_t> inputs, std::string name = {});
  static LayerSpec concat(std::vector<std::size_t> inputs, std::string name = {});
  static LayerSpec part_split(std::size_t input, std::size_t parts, std::size_t part,
                              std::string name = {});

  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  Dims input_dims;
  std::vector<LayerSpec> layers;
  /// Node id of the output; defaults to the last layer (or the input when empty).
  std::optional<std::size_t> output;

  std::size_t output_node() const { return output.value_or(layers.size()); }
  std::size_t node_count() const { return layers.size() + 1; }

  /// Appends a layer and returns its node id.
  std::size_t add(LayerSpec layer);

  bool operator==(const NetworkSpec&) const = default;
};

/// Row band [begin, end) of part `part` when `rows` rows are split into
/// `parts` bands; the last band absorbs the remainder.
std::pair<std::size_t, std::size_t> part_rows(std::size_t rows, std::size_t parts,
                                              std::size_t part);

/// Statically inferred dims of every node. Throws ShapeError naming the
/// offending layer when the graph is inconsistent.
std::vector<Dims> infer_shapes(const NetworkSpec& spec);

/// Weight and bias of one layer; both empty for parameter-free layers.
struct LayerParams {
  Tensor weight;
  Tensor bias;

  bool operator==(const LayerParams&) const = default;
};

Dims weight_dims(const LayerSpec& layer, const Dims& input_dims);

class NetworkModel {
 public:
  NetworkModel() = default;
  /// Validates the spec and allocates zero-filled parameters.
  explicit NetworkModel(NetworkSpec spec);
  NetworkModel(NetworkSpec spec, std::vector<LayerParams> params);

  const NetworkSpec& spec() const { return spec_; }
  const std::vector<LayerParams>& params() const { return params_; }
  /// Mutable access invalidates every tape recorded against this model.
  std::vector<LayerParams>& mutable_params();

  const std::vector<Dims>& shapes() const { return shapes_; }
  const Dims& input_dims() const { return spec_.input_dims; }
  const Dims& output_dims() const { return shapes_[spec_.output_node()]; }
  std::size_t embedding_dim() const { return numel(output_dims()); }
  std::size_t parameter_count() const;

  std::uint64_t generation() const { return generation_; }

  bool operator==(const NetworkModel& other) const {
    return spec_ == other.spec_ && params_ == other.params_;
  }

 private:
  void validate_params() const;

  NetworkSpec spec_;
  std::vector<LayerParams> params_;
  std::vector<Dims> shapes_;
  std::uint64_t generation_ = 0;
};

/// Activation record of one forward pass.
struct Tape {
  std::uint64_t generation = 0;
  std::vector<Tensor> values;                      // per node
  std::vector<std::vector<std::size_t>> argmax;    // per node, maxpool only
};

struct ForwardResult {
  Tensor embedding;
  Tape tape;
};

struct Gradients {
  std::vector<LayerParams> params;
  Tensor input;
};

ForwardResult forward(const NetworkModel& model, const Tensor& input);
/// Forward pass without keeping the tape.
Tensor predict(const NetworkModel& model, const Tensor& input);

Gradients backward(const NetworkModel& model, const Tape& tape, const Tensor& grad_out);
/// Adds d(grad_out . embedding)/d(params) into `acc`, which must be shaped like
/// model.params() (see zero_like_params).
void backward_accumulate(const NetworkModel& model, const Tape& tape, const Tensor& grad_out,
                         std::vector<LayerParams>& acc);
std::vector<LayerParams> zero_like_params(const NetworkModel& model);

struct StdSchedule {
  double first = 0.01;
  double last = 0.001;
};

/// Zero-mean Gaussian weights whose std moves linearly from `first` on the
/// first parameterized layer to `last` on the final one; biases are zero.
NetworkModel init_params(const NetworkModel& model, std::uint64_t seed,
                         StdSchedule schedule = {});

struct PresetInfo {
  NetworkSpec spec;
  std::size_t parts = 0;
  std::size_t fusion_dim = 0;        // width of the concatenated part features
  std::size_t fusion_concat_node = 0;
  std::size_t embedding_dim = 0;
};

/// The full-size part-based network for 230x80x3 images.
PresetInfo preset_fig4();

struct DeskOptions {
  // image mode
  std::size_t global_filters = 8;
  std::size_t global_kernel1 = 3;
  std::size_t global_kernel2 = 3;
  std::size_t global_pool = 2;
  std::size_t local_filters = 4;
  std::size_t local_pool = 3;
  // vector mode
  std::size_t global_dim = 32;
  std::size_t local_dim = 16;
};

/// Same topology as preset_fig4 with configurable extents. Rank-3 inputs
/// use the conv path; rank-1 inputs replace convolutions with dense layers.
PresetInfo preset_desk(const Dims& input_dims, std::size_t parts, std::size_t part_dim,
                       const DeskOptions& options = {});

}  // namespace dspl

#endif  // DSPL_NETWORK_HPP_
