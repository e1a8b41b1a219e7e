#include "dspl/network.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <random>

namespace dspl {

namespace {

std::atomic<std::uint64_t> g_generation{1};

std::uint64_t next_generation() { return g_generation.fetch_add(1, std::memory_order_relaxed); }

std::string layer_label(const NetworkSpec& spec, std::size_t node) {
  const auto& layer = spec.layers[node - 1];
  std::string label = "layer " + std::to_string(node) + " (" + to_string(layer.kind);
  if (!layer.name.empty()) label += " '" + layer.name + "'";
  return label + ")";
}

std::size_t conv_out(std::size_t in, std::size_t k, Padding p) {
  return p == Padding::Same ? in : in - k + 1;
}

std::size_t pad_before(std::size_t k, Padding p) { return p == Padding::Same ? (k - 1) / 2 : 0; }

}  // namespace

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "dense";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Relu: return "relu";
    case LayerKind::EltwiseAdd: return "eltwise_add";
    case LayerKind::Concat: return "concat";
    case LayerKind::PartSplit: return "part_split";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto k : {LayerKind::Dense, LayerKind::Conv2d, LayerKind::MaxPool, LayerKind::Relu,
                 LayerKind::EltwiseAdd, LayerKind::Concat, LayerKind::PartSplit})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown layer kind '" + name + "'");
}

std::string to_string(Padding padding) { return padding == Padding::Same ? "same" : "valid"; }

Padding padding_from_string(const std::string& name) {
  if (name == "same") return Padding::Same;
  if (name == "valid") return Padding::Valid;
  throw ConfigError("unknown padding '" + name + "'");
}

LayerSpec LayerSpec::dense(std::size_t input, std::size_t out_dim, std::string name) {
  LayerSpec l;
  l.kind = LayerKind::Dense;
  l.inputs = {input};
  l.out_dim = out_dim;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::conv2d(std::size_t input, std::size_t filters, std::size_t kh,
                            std::size_t kw, Padding padding, std::string name) {
  LayerSpec l;
  l.kind = LayerKind::Conv2d;
  l.inputs = {input};
  l.filters = filters;
  l.kh = kh;
  l.kw = kw;
  l.padding = padding;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::maxpool(std::size_t input, std::size_t kh, std::size_t kw,
                             std::size_t stride, std::string name) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool;
  l.inputs = {input};
  l.kh = kh;
  l.kw = kw;
  l.stride = stride;
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::relu(std::size_t input, std::string name) {
  LayerSpec l;
  l.kind = LayerKind::Relu;
  l.inputs = {input};
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::eltwise_add(std::vector<std::size_t> inputs, std::string name) {
  LayerSpec l;
  l.kind = LayerKind::EltwiseAdd;
  l.inputs = std::move(inputs);
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::concat(std::vector<std::size_t> inputs, std::string name) {
  LayerSpec l;
  l.kind = LayerKind::Concat;
  l.inputs = std::move(inputs);
  l.name = std::move(name);
  return l;
}

LayerSpec LayerSpec::part_split(std::size_t input, std::size_t parts, std::size_t part,
                                std::string name) {
  LayerSpec l;
  l.kind = LayerKind::PartSplit;
  l.inputs = {input};
  l.parts = parts;
  l.part = part;
  l.name = std::move(name);
  return l;
}

std::size_t NetworkSpec::add(LayerSpec layer) {
  layers.push_back(std::move(layer));
  return layers.size();
}

std::pair<std::size_t, std::size_t> part_rows(std::size_t rows, std::size_t parts,
                                              std::size_t part) {
  if (parts == 0 || part >= parts || rows < parts)
    throw ShapeError("part_split: cannot take part " + std::to_string(part) + " of " +
                     std::to_string(parts) + " from " + std::to_string(rows) + " rows");
  const std::size_t base = rows / parts;
  const std::size_t begin = part * base;
  const std::size_t end = part + 1 == parts ? rows : begin + base;
  return {begin, end};
}

Dims weight_dims(const LayerSpec& layer, const Dims& input_dims) {
  switch (layer.kind) {
    case LayerKind::Dense: return {layer.out_dim, numel(input_dims)};
    case LayerKind::Conv2d: return {layer.filters, layer.kh, layer.kw, input_dims.at(2)};
    default: return {};
  }
}

std::vector<Dims> infer_shapes(const NetworkSpec& spec) {
  if (spec.input_dims.empty() || spec.input_dims.size() > Tensor::kMaxRank ||
      numel(spec.input_dims) == 0)
    throw ShapeError("network input dims " + dims_to_string(spec.input_dims) + " are invalid");
  std::vector<Dims> shapes{spec.input_dims};
  shapes.reserve(spec.node_count());
  for (std::size_t node = 1; node <= spec.layers.size(); ++node) {
    const auto& layer = spec.layers[node - 1];
    const auto fail = [&](const std::string& why) {
      throw ShapeError(layer_label(spec, node) + ": " + why);
    };
    if (layer.inputs.empty()) fail("no inputs");
    for (auto in : layer.inputs)
      if (in >= node) fail("input node " + std::to_string(in) + " is not an earlier node");
    const bool unary = layer.kind != LayerKind::EltwiseAdd && layer.kind != LayerKind::Concat;
    if (unary && layer.inputs.size() != 1) fail("expects exactly one input");
    const Dims& in = shapes[layer.inputs[0]];
    Dims out;
    switch (layer.kind) {
      case LayerKind::Dense:
        if (layer.out_dim == 0) fail("out_dim must be positive");
        out = {layer.out_dim};
        break;
      case LayerKind::Conv2d: {
        if (in.size() != 3) fail("expects rank-3 input, got " + dims_to_string(in));
        if (layer.filters == 0 || layer.kh == 0 || layer.kw == 0) fail("empty kernel");
        if (layer.padding == Padding::Valid && (in[0] < layer.kh || in[1] < layer.kw))
          fail("kernel larger than input " + dims_to_string(in));
        out = {conv_out(in[0], layer.kh, layer.padding), conv_out(in[1], layer.kw, layer.padding),
               layer.filters};
        break;
      }
      case LayerKind::MaxPool: {
        if (in.size() != 3) fail("expects rank-3 input, got " + dims_to_string(in));
        if (layer.kh == 0 || layer.kw == 0 || layer.stride == 0) fail("empty window");
        if (in[0] < layer.kh || in[1] < layer.kw)
          fail("window larger than input " + dims_to_string(in));
        out = {(in[0] - layer.kh) / layer.stride + 1, (in[1] - layer.kw) / layer.stride + 1,
               in[2]};
        break;
      }
      case LayerKind::Relu: out = in; break;
      case LayerKind::EltwiseAdd:
        for (auto i : layer.inputs)
          if (shapes[i] != in)
            fail("input dims differ: " + dims_to_string(in) + " vs " + dims_to_string(shapes[i]));
        out = in;
        break;
      case LayerKind::Concat: {
        out = in;
        out[0] = 0;
        for (auto i : layer.inputs) {
          const Dims& d = shapes[i];
          if (d.size() != in.size() || !std::equal(d.begin() + 1, d.end(), in.begin() + 1))
            fail("trailing dims differ: " + dims_to_string(in) + " vs " + dims_to_string(d));
          out[0] += d[0];
        }
        break;
      }
      case LayerKind::PartSplit: {
        if (layer.parts == 0 || layer.part >= layer.parts) fail("invalid part index");
        if (in[0] < layer.parts)
          fail("cannot split " + std::to_string(in[0]) + " rows into " +
               std::to_string(layer.parts) + " parts");
        const auto [b, e] = part_rows(in[0], layer.parts, layer.part);
        out = in;
        out[0] = e - b;
        break;
      }
    }
    shapes.push_back(std::move(out));
  }
  if (spec.output_node() >= spec.node_count())
    throw ShapeError("output node " + std::to_string(spec.output_node()) + " does not exist");
  return shapes;
}

NetworkModel::NetworkModel(NetworkSpec spec)
    : spec_(std::move(spec)), shapes_(infer_shapes(spec_)), generation_(next_generation()) {
  params_.resize(spec_.layers.size());
  for (std::size_t k = 0; k < spec_.layers.size(); ++k) {
    const auto& layer = spec_.layers[k];
    if (!layer.has_params()) continue;
    const Dims wd = weight_dims(layer, shapes_[layer.inputs[0]]);
    params_[k].weight = Tensor(wd);
    params_[k].bias = Tensor(Dims{wd[0]});
  }
}

NetworkModel::NetworkModel(NetworkSpec spec, std::vector<LayerParams> params)
    : spec_(std::move(spec)),
      params_(std::move(params)),
      shapes_(infer_shapes(spec_)),
      generation_(next_generation()) {
  validate_params();
}

void NetworkModel::validate_params() const {
  if (params_.size() != spec_.layers.size())
    throw ShapeError("parameter list has " + std::to_string(params_.size()) + " entries for " +
                     std::to_string(spec_.layers.size()) + " layers");
  for (std::size_t k = 0; k < spec_.layers.size(); ++k) {
    const auto& layer = spec_.layers[k];
    const auto& p = params_[k];
    if (!layer.has_params()) {
      if (!p.weight.empty() || !p.bias.empty())
        throw ShapeError(layer_label(spec_, k + 1) + ": unexpected parameters");
      continue;
    }
    const Dims wd = weight_dims(layer, shapes_[layer.inputs[0]]);
    if (p.weight.dims() != wd || p.bias.dims() != Dims{wd[0]})
      throw ShapeError(layer_label(spec_, k + 1) + ": parameter dims " +
                       dims_to_string(p.weight.dims()) + " do not match expected " +
                       dims_to_string(wd));
  }
}

std::vector<LayerParams>& NetworkModel::mutable_params() {
  generation_ = next_generation();
  return params_;
}

std::size_t NetworkModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.weight.size() + p.bias.size();
  return n;
}

// ---------------------------------------------------------------------------
// Layer kernels. Image tensors are (height, width, channels), row-major.

namespace {

void dense_forward(const LayerParams& p, const Tensor& x, Tensor& y) {
  const std::size_t out = p.weight.dims()[0];
  const std::size_t in = p.weight.dims()[1];
  const double* w = p.weight.data().data();
  const double* xv = x.data().data();
  for (std::size_t o = 0; o < out; ++o) {
    double s = p.bias[o];
    const double* row = w + o * in;
    for (std::size_t i = 0; i < in; ++i) s += row[i] * xv[i];
    y[o] = s;
  }
}

void dense_backward(const LayerParams& p, const Tensor& x, const Tensor& gy, LayerParams& gp,
                    Tensor* gx) {
  const std::size_t out = p.weight.dims()[0];
  const std::size_t in = p.weight.dims()[1];
  const double* w = p.weight.data().data();
  const double* xv = x.data().data();
  double* gw = gp.weight.data().data();
  for (std::size_t o = 0; o < out; ++o) {
    const double g = gy[o];
    gp.bias[o] += g;
    if (g == 0.0) continue;
    double* grow = gw + o * in;
    for (std::size_t i = 0; i < in; ++i) grow[i] += g * xv[i];
    if (gx) {
      const double* row = w + o * in;
      double* gxv = gx->data().data();
      for (std::size_t i = 0; i < in; ++i) gxv[i] += g * row[i];
    }
  }
}

struct ConvGeom {
  std::size_t H, W, C, OH, OW, F, KH, KW, PT, PL;
};

ConvGeom conv_geom(const LayerSpec& l, const Dims& in, const Dims& out) {
  return {in[0], in[1], in[2], out[0], out[1], l.filters, l.kh, l.kw,
          pad_before(l.kh, l.padding), pad_before(l.kw, l.padding)};
}

void conv_forward(const ConvGeom& g, const LayerParams& p, const Tensor& x, Tensor& y) {
  const double* w = p.weight.data().data();
  const double* xv = x.data().data();
  double* yv = y.data().data();
  for (std::size_t oy = 0; oy < g.OH; ++oy) {
    for (std::size_t ox = 0; ox < g.OW; ++ox) {
      double* acc = yv + (oy * g.OW + ox) * g.F;
      for (std::size_t f = 0; f < g.F; ++f) acc[f] = p.bias[f];
      for (std::size_t ky = 0; ky < g.KH; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                  static_cast<std::ptrdiff_t>(g.PT);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.H)) continue;
        for (std::size_t kx = 0; kx < g.KW; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                    static_cast<std::ptrdiff_t>(g.PL);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.W)) continue;
          const double* xin = xv + (static_cast<std::size_t>(iy) * g.W + ix) * g.C;
          for (std::size_t f = 0; f < g.F; ++f) {
            const double* wk = w + ((f * g.KH + ky) * g.KW + kx) * g.C;
            double s = 0.0;
            for (std::size_t c = 0; c < g.C; ++c) s += wk[c] * xin[c];
            acc[f] += s;
          }
        }
      }
    }
  }
}

void conv_backward(const ConvGeom& g, const LayerParams& p, const Tensor& x, const Tensor& gy,
                   LayerParams& gp, Tensor* gx) {
  const double* w = p.weight.data().data();
  const double* xv = x.data().data();
  const double* gyv = gy.data().data();
  double* gw = gp.weight.data().data();
  for (std::size_t oy = 0; oy < g.OH; ++oy) {
    for (std::size_t ox = 0; ox < g.OW; ++ox) {
      const double* go = gyv + (oy * g.OW + ox) * g.F;
      for (std::size_t f = 0; f < g.F; ++f) gp.bias[f] += go[f];
      for (std::size_t ky = 0; ky < g.KH; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy + ky) -
                                  static_cast<std::ptrdiff_t>(g.PT);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.H)) continue;
        for (std::size_t kx = 0; kx < g.KW; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox + kx) -
                                    static_cast<std::ptrdiff_t>(g.PL);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.W)) continue;
          const std::size_t xoff = (static_cast<std::size_t>(iy) * g.W + ix) * g.C;
          const double* xin = xv + xoff;
          for (std::size_t f = 0; f < g.F; ++f) {
            const double gf = go[f];
            if (gf == 0.0) continue;
            const std::size_t woff = ((f * g.KH + ky) * g.KW + kx) * g.C;
            double* gwk = gw + woff;
            for (std::size_t c = 0; c < g.C; ++c) gwk[c] += gf * xin[c];
            if (gx) {
              const double* wk = w + woff;
              double* gxin = gx->data().data() + xoff;
              for (std::size_t c = 0; c < g.C; ++c) gxin[c] += gf * wk[c];
            }
          }
        }
      }
    }
  }
}

void maxpool_forward(const LayerSpec& l, const Tensor& x, Tensor& y,
                     std::vector<std::size_t>& argmax) {
  const auto& in = x.dims();
  const auto& out = y.dims();
  const std::size_t W = in[1], C = in[2];
  argmax.assign(y.size(), 0);
  for (std::size_t oy = 0; oy < out[0]; ++oy)
    for (std::size_t ox = 0; ox < out[1]; ++ox)
      for (std::size_t c = 0; c < C; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        for (std::size_t ky = 0; ky < l.kh; ++ky)
          for (std::size_t kx = 0; kx < l.kw; ++kx) {
            const std::size_t idx = ((oy * l.stride + ky) * W + ox * l.stride + kx) * C + c;
            if (x[idx] > best) {
              best = x[idx];
              best_idx = idx;
            }
          }
        const std::size_t o = (oy * out[1] + ox) * C + c;
        y[o] = best;
        argmax[o] = best_idx;
      }
}

}  // namespace

ForwardResult forward(const NetworkModel& model, const Tensor& input) {
  const auto& spec = model.spec();
  const auto& shapes = model.shapes();
  if (input.dims() != spec.input_dims)
    throw ShapeError("input dims " + dims_to_string(input.dims()) +
                     " do not match the network input " + dims_to_string(spec.input_dims));
  ForwardResult res;
  Tape& tape = res.tape;
  tape.generation = model.generation();
  tape.values.reserve(spec.node_count());
  tape.values.push_back(input);
  tape.argmax.resize(spec.node_count());
  for (std::size_t node = 1; node <= spec.layers.size(); ++node) {
    const auto& layer = spec.layers[node - 1];
    const auto& p = model.params()[node - 1];
    const Tensor& x = tape.values[layer.inputs[0]];
    Tensor y(shapes[node]);
    switch (layer.kind) {
      case LayerKind::Dense: dense_forward(p, x, y); break;
      case LayerKind::Conv2d:
        conv_forward(conv_geom(layer, x.dims(), y.dims()), p, x, y);
        break;
      case LayerKind::MaxPool: maxpool_forward(layer, x, y, tape.argmax[node]); break;
      case LayerKind::Relu:
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
        break;
      case LayerKind::EltwiseAdd:
        for (auto in : layer.inputs) axpy(1.0, tape.values[in].data(), y.data());
        break;
      case LayerKind::Concat: {
        std::size_t off = 0;
        for (auto in : layer.inputs) {
          const auto src = tape.values[in].data();
          std::copy(src.begin(), src.end(), y.data().begin() + off);
          off += src.size();
        }
        break;
      }
      case LayerKind::PartSplit: {
        const auto [b, e] = part_rows(x.dims()[0], layer.parts, layer.part);
        const std::size_t row = x.size() / x.dims()[0];
        std::copy(x.data().begin() + b * row, x.data().begin() + e * row, y.data().begin());
        break;
      }
    }
    tape.values.push_back(std::move(y));
  }
  res.embedding = tape.values[spec.output_node()];
  return res;
}

Tensor predict(const NetworkModel& model, const Tensor& input) {
  return forward(model, input).embedding;
}

std::vector<LayerParams> zero_like_params(const NetworkModel& model) {
  std::vector<LayerParams> out(model.params().size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const auto& p = model.params()[k];
    if (p.weight.empty()) continue;
    out[k].weight = Tensor(p.weight.dims());
    out[k].bias = Tensor(p.bias.dims());
  }
  return out;
}

namespace {

void backward_impl(const NetworkModel& model, const Tape& tape, const Tensor& grad_out,
                   std::vector<LayerParams>& acc, Tensor* grad_input) {
  const auto& spec = model.spec();
  if (tape.generation != model.generation() || tape.values.size() != spec.node_count())
    throw ContractError("backward: tape was recorded against a different model state");
  if (grad_out.dims() != model.output_dims())
    throw ContractError("backward: grad_out dims " + dims_to_string(grad_out.dims()) +
                        " do not match embedding dims " + dims_to_string(model.output_dims()));
  if (acc.size() != spec.layers.size())
    throw ContractError("backward: accumulator does not match the model");

  std::vector<Tensor> grads(spec.node_count());
  std::vector<bool> live(spec.node_count(), false);
  const auto touch = [&](std::size_t node) -> Tensor& {
    if (!live[node]) {
      grads[node] = Tensor(model.shapes()[node]);
      live[node] = true;
    }
    return grads[node];
  };
  touch(spec.output_node()) = grad_out;

  for (std::size_t node = spec.layers.size(); node >= 1; --node) {
    if (!live[node]) continue;
    const auto& layer = spec.layers[node - 1];
    const Tensor& gy = grads[node];
    const Tensor& x = tape.values[layer.inputs[0]];
    const bool need_gx = layer.inputs[0] != 0 || grad_input != nullptr;
    switch (layer.kind) {
      case LayerKind::Dense:
        dense_backward(model.params()[node - 1], x, gy, acc[node - 1],
                       need_gx ? &touch(layer.inputs[0]) : nullptr);
        break;
      case LayerKind::Conv2d:
        conv_backward(conv_geom(layer, x.dims(), gy.dims()), model.params()[node - 1], x, gy,
                      acc[node - 1], need_gx ? &touch(layer.inputs[0]) : nullptr);
        break;
      case LayerKind::MaxPool: {
        Tensor& gx = touch(layer.inputs[0]);
        const auto& am = tape.argmax[node];
        for (std::size_t i = 0; i < gy.size(); ++i) gx[am[i]] += gy[i];
        break;
      }
      case LayerKind::Relu: {
        Tensor& gx = touch(layer.inputs[0]);
        for (std::size_t i = 0; i < gy.size(); ++i)
          if (x[i] > 0.0) gx[i] += gy[i];
        break;
      }
      case LayerKind::EltwiseAdd:
        for (auto in : layer.inputs) axpy(1.0, gy.data(), touch(in).data());
        break;
      case LayerKind::Concat: {
        std::size_t off = 0;
        for (auto in : layer.inputs) {
          Tensor& gx = touch(in);
          for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[off + i];
          off += gx.size();
        }
        break;
      }
      case LayerKind::PartSplit: {
        Tensor& gx = touch(layer.inputs[0]);
        const auto [b, e] = part_rows(x.dims()[0], layer.parts, layer.part);
        const std::size_t row = x.size() / x.dims()[0];
        for (std::size_t i = 0; i < gy.size(); ++i) gx[b * row + i] += gy[i];
        break;
      }
    }
    // Free activations gradient once consumed.
    grads[node] = Tensor();
  }
  if (grad_input) *grad_input = live[0] ? std::move(grads[0]) : Tensor(spec.input_dims);
}

}  // namespace

Gradients backward(const NetworkModel& model, const Tape& tape, const Tensor& grad_out) {
  Gradients g;
  g.params = zero_like_params(model);
  backward_impl(model, tape, grad_out, g.params, &g.input);
  return g;
}

void backward_accumulate(const NetworkModel& model, const Tape& tape, const Tensor& grad_out,
                         std::vector<LayerParams>& acc) {
  backward_impl(model, tape, grad_out, acc, nullptr);
}

NetworkModel init_params(const NetworkModel& model, std::uint64_t seed, StdSchedule schedule) {
  NetworkModel out = model;
  auto& params = out.mutable_params();
  std::size_t n_param_layers = 0;
  for (const auto& l : out.spec().layers) n_param_layers += l.has_params() ? 1 : 0;

  std::mt19937_64 rng(seed);
  std::size_t idx = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!out.spec().layers[k].has_params()) continue;
    const double frac =
        n_param_layers > 1 ? static_cast<double>(idx) / static_cast<double>(n_param_layers - 1)
                           : 0.0;
    const double std_dev = schedule.first + (schedule.last - schedule.first) * frac;
    std::normal_distribution<double> gauss(0.0, std_dev);
    for (auto& w : params[k].weight.data()) w = gauss(rng);
    params[k].bias.fill(0.0);
    ++idx;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Presets

namespace {

struct FusionNodes {
  std::size_t concat_parts;
  std::size_t output;
};

// Per-part dense -> relu -> dense, part concat, fused dense, final concat.
FusionNodes add_fusion(NetworkSpec& spec, const std::vector<std::size_t>& part_nodes,
                       std::size_t part_dim) {
  std::vector<std::size_t> part_feats;
  for (std::size_t i = 0; i < part_nodes.size(); ++i) {
    const std::string tag = "part" + std::to_string(i);
    auto fc1 = spec.add(LayerSpec::dense(part_nodes[i], part_dim, tag + ".fc1"));
    auto act = spec.add(LayerSpec::relu(fc1, tag + ".fc1_relu"));
    part_feats.push_back(spec.add(LayerSpec::dense(act, part_dim, tag + ".fc2")));
  }
  auto cat = spec.add(LayerSpec::concat(part_feats, "fusion.concat"));
  auto fused = spec.add(LayerSpec::dense(cat, part_dim * part_nodes.size(), "fusion.fc"));
  std::vector<std::size_t> final_inputs{fused};
  final_inputs.insert(final_inputs.end(), part_feats.begin(), part_feats.end());
  auto out = spec.add(LayerSpec::concat(final_inputs, "embedding"));
  return {cat, out};
}

PresetInfo build_image_preset(const Dims& input_dims, std::size_t parts, std::size_t part_dim,
                              std::size_t g_filters, std::size_t g_k1, std::size_t g_k2,
                              std::size_t g_pool, std::size_t l_filters, std::size_t l_pool) {
  NetworkSpec spec;
  spec.input_dims = input_dims;
  auto c1 = spec.add(LayerSpec::conv2d(0, g_filters, g_k1, g_k1, Padding::Valid, "global.conv1"));
  auto c2 = spec.add(LayerSpec::conv2d(c1, g_filters, g_k2, g_k2, Padding::Valid, "global.conv2"));
  auto pool = spec.add(LayerSpec::maxpool(c2, g_pool, g_pool, g_pool, "global.pool"));
  auto gact = spec.add(LayerSpec::relu(pool, "global.relu"));

  std::vector<std::size_t> part_nodes;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::string tag = "part" + std::to_string(i);
    auto split = spec.add(LayerSpec::part_split(gact, parts, i, tag + ".split"));
    auto lc1 = spec.add(LayerSpec::conv2d(split, l_filters, 3, 3, Padding::Same, tag + ".conv1"));
    auto lc2 = spec.add(LayerSpec::conv2d(lc1, l_filters, 3, 3, Padding::Same, tag + ".conv2"));
    auto sum = spec.add(LayerSpec::eltwise_add({lc1, lc2}, tag + ".sum"));
    auto lp = spec.add(LayerSpec::maxpool(sum, l_pool, l_pool, 1, tag + ".pool"));
    part_nodes.push_back(spec.add(LayerSpec::relu(lp, tag + ".relu")));
  }
  const auto fusion = add_fusion(spec, part_nodes, part_dim);
  PresetInfo info;
  info.spec = std::move(spec);
  info.parts = parts;
  info.fusion_dim = parts * part_dim;
  info.fusion_concat_node = fusion.concat_parts;
  info.embedding_dim = 2 * parts * part_dim;
  return info;
}

}  // namespace

PresetInfo preset_fig4() {
  return build_image_preset({230, 80, 3}, 4, 100, 64, 7, 5, 3, 32, 3);
}

PresetInfo preset_desk(const Dims& input_dims, std::size_t parts, std::size_t part_dim,
                       const DeskOptions& opt) {
  if (parts == 0 || part_dim == 0) throw ConfigError("preset_desk: parts and part_dim must be >= 1");
  if (input_dims.empty() || input_dims[0] < parts)
    throw ConfigError("preset_desk: input height " +
                      std::to_string(input_dims.empty() ? 0 : input_dims[0]) +
                      " is smaller than the part count " + std::to_string(parts));
  if (input_dims.size() == 3) {
    PresetInfo info = build_image_preset(input_dims, parts, part_dim, opt.global_filters,
                                         opt.global_kernel1, opt.global_kernel2, opt.global_pool,
                                         opt.local_filters, opt.local_pool);
    try {
      (void)infer_shapes(info.spec);
    } catch (const ShapeError& e) {
      throw ConfigError(std::string("preset_desk: input too small for the image topology: ") +
                        e.what());
    }
    return info;
  }
  if (input_dims.size() != 1)
    throw ConfigError("preset_desk: input must be rank 1 (vector) or rank 3 (image)");
  if (opt.global_dim < parts)
    throw ConfigError("preset_desk: global_dim must be at least the part count");

  NetworkSpec spec;
  spec.input_dims = input_dims;
  auto g = spec.add(LayerSpec::dense(0, opt.global_dim, "global.fc"));
  auto gact = spec.add(LayerSpec::relu(g, "global.relu"));
  std::vector<std::size_t> part_nodes;
  for (std::size_t i = 0; i < parts; ++i) {
    const std::string tag = "part" + std::to_string(i);
    auto split = spec.add(LayerSpec::part_split(gact, parts, i, tag + ".split"));
    auto l1 = spec.add(LayerSpec::dense(split, opt.local_dim, tag + ".local1"));
    auto l2 = spec.add(LayerSpec::dense(l1, opt.local_dim, tag + ".local2"));
    auto sum = spec.add(LayerSpec::eltwise_add({l1, l2}, tag + ".sum"));
    part_nodes.push_back(spec.add(LayerSpec::relu(sum, tag + ".relu")));
  }
  const auto fusion = add_fusion(spec, part_nodes, part_dim);
  PresetInfo info;
  info.spec = std::move(spec);
  info.parts = parts;
  info.fusion_dim = parts * part_dim;
  info.fusion_concat_node = fusion.concat_parts;
  info.embedding_dim = 2 * parts * part_dim;
  return info;
}

}  // namespace dspl
