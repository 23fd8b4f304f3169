#include "robustlab/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "robustlab/rng.hpp"

namespace robustlab {

namespace {

Tensor glorot_uniform(Shape shape, int64_t fan_in, int64_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t = Tensor::zeros(std::move(shape), /*requires_grad=*/true);
  for (int64_t i = 0; i < t.numel(); ++i) t.at(i) = static_cast<real_t>(rng.uniform(-limit, limit));
  return t;
}

std::string layer_name(size_t idx, const Layer& l) {
  switch (l.kind) {
    case Layer::Kind::Conv: return "conv" + std::to_string(idx);
    case Layer::Kind::Linear: return "fc" + std::to_string(idx);
    case Layer::Kind::BatchNorm: return "bn" + std::to_string(idx);
    default: return "layer" + std::to_string(idx);
  }
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> Classifier::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const std::string base = layer_name(i, l);
    if (l.kind == Layer::Kind::Conv || l.kind == Layer::Kind::Linear) {
      out.emplace_back(base + ".weight", l.weight);
      out.emplace_back(base + ".bias", l.bias);
    } else if (l.kind == Layer::Kind::BatchNorm) {
      out.emplace_back(base + ".gamma", l.gamma);
      out.emplace_back(base + ".beta", l.beta);
    }
  }
  return out;
}

std::vector<Tensor> Classifier::params() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params()) out.push_back(t);
  return out;
}

int64_t Classifier::param_count() const {
  int64_t n = 0;
  for (auto& [name, t] : named_params()) n += t.numel();
  return n;
}

Classifier Classifier::clone() const {
  Classifier c;
  c.arch_kind = arch_kind;
  c.input_shape = input_shape;
  c.num_classes = num_classes;
  c.mode = mode;
  c.layers = layers;
  for (Layer& l : c.layers) {
    auto deep = [](Tensor& t) {
      if (!t.defined()) return;
      Tensor copy = t.detached_copy();
      copy.node()->requires_grad = t.requires_grad();
      t = copy;
    };
    deep(l.weight);
    deep(l.bias);
    deep(l.gamma);
    deep(l.beta);
  }
  return c;
}

Tensor forward(Classifier& model, const Tensor& batch) {
  if (batch.ndim() < 2) throw std::invalid_argument("forward: batch must carry a leading batch dimension");
  Shape per_example(batch.shape().begin() + 1, batch.shape().end());
  if (per_example != model.input_shape)
    throw std::invalid_argument("forward: batch example shape " + shape_str(per_example) +
                                " does not match model input " + shape_str(model.input_shape));

  Tensor h = batch;
  const bool training = model.mode == Mode::Train;
  for (Layer& l : model.layers) {
    switch (l.kind) {
      case Layer::Kind::Conv:
        h = conv2d(h, l.weight, l.bias, l.stride, l.pad);
        break;
      case Layer::Kind::Linear: {
        if (h.ndim() != 2)
          throw std::invalid_argument("forward: linear layer reached with non-flat activations " + shape_str(h.shape()));
        h = add_rowvec(matmul(h, l.weight), l.bias);
        break;
      }
      case Layer::Kind::BatchNorm:
        h = batchnorm(h, l.gamma, l.beta, l.running_mean, l.running_var, training);
        break;
      case Layer::Kind::Relu:
        h = relu(h);
        break;
      case Layer::Kind::Flatten: {
        int64_t flat = 1;
        for (int64_t i = 1; i < h.ndim(); ++i) flat *= h.size(static_cast<int>(i));
        h = reshape(h, {h.size(0), flat});
        break;
      }
    }
  }
  if (h.ndim() != 2 || h.size(1) != model.num_classes)
    throw std::invalid_argument("forward: network output " + shape_str(h.shape()) + " is not [B," +
                                std::to_string(model.num_classes) + "] logits");
  return h;
}

std::vector<int64_t> predict(Classifier& model, const Tensor& batch) {
  Tensor logits = forward(model, batch);
  return argmax_rows(logits);
}

// ---- builder ------------------------------------------------------------------

NetBuilder& NetBuilder::conv(int64_t out_ch, int64_t kernel, int64_t stride, int64_t pad) {
  steps_.push_back({Layer::Kind::Conv, out_ch, kernel, stride, pad});
  return *this;
}
NetBuilder& NetBuilder::linear(int64_t out) {
  steps_.push_back({Layer::Kind::Linear, out});
  return *this;
}
NetBuilder& NetBuilder::relu() {
  steps_.push_back({Layer::Kind::Relu});
  return *this;
}
NetBuilder& NetBuilder::batchnorm() {
  steps_.push_back({Layer::Kind::BatchNorm});
  return *this;
}
NetBuilder& NetBuilder::flatten() {
  steps_.push_back({Layer::Kind::Flatten});
  return *this;
}

Classifier NetBuilder::build(uint64_t seed, int64_t num_classes_hint) const {
  Classifier model;
  model.arch_kind = "custom";
  model.input_shape = input_shape_;
  Rng rng(Rng::derive(seed, 0xA11C));

  // track activation shape while materializing layers
  Shape cur = input_shape_;
  auto flat_extent = [&]() {
    int64_t n = 1;
    for (int64_t e : cur) n *= e;
    return n;
  };
  for (const Step& s : steps_) {
    Layer l;
    l.kind = s.kind;
    switch (s.kind) {
      case Layer::Kind::Conv: {
        if (cur.size() != 3) throw std::invalid_argument("builder: conv requires [C,H,W] activations");
        l.in_ch = cur[0];
        l.out_ch = s.a;
        l.kernel = s.b;
        l.stride = s.c;
        l.pad = s.d;
        const int64_t fan = l.kernel * l.kernel;
        l.weight = glorot_uniform({l.out_ch, l.in_ch, l.kernel, l.kernel}, l.in_ch * fan, l.out_ch * fan, rng);
        l.bias = Tensor::zeros({l.out_ch}, true);
        cur = {l.out_ch, (cur[1] + 2 * l.pad - l.kernel) / l.stride + 1, (cur[2] + 2 * l.pad - l.kernel) / l.stride + 1};
        if (cur[1] <= 0 || cur[2] <= 0) throw std::invalid_argument("builder: conv output collapsed to zero extent");
        break;
      }
      case Layer::Kind::Linear: {
        if (cur.size() != 1) throw std::invalid_argument("builder: linear requires flat activations; add flatten first");
        l.in = cur[0];
        l.out = s.a;
        l.weight = glorot_uniform({l.in, l.out}, l.in, l.out, rng);
        l.bias = Tensor::zeros({l.out}, true);
        cur = {l.out};
        break;
      }
      case Layer::Kind::BatchNorm: {
        l.features = cur[0];
        l.gamma = Tensor::full({l.features}, real_t(1), true);
        l.beta = Tensor::zeros({l.features}, true);
        l.running_mean.assign(static_cast<size_t>(l.features), real_t(0));
        l.running_var.assign(static_cast<size_t>(l.features), real_t(1));
        break;
      }
      case Layer::Kind::Relu:
        break;
      case Layer::Kind::Flatten:
        cur = {flat_extent()};
        break;
    }
    model.layers.push_back(std::move(l));
  }
  if (cur.size() != 1) throw std::invalid_argument("builder: network must end with flat outputs");
  model.num_classes = num_classes_hint > 0 ? num_classes_hint : cur[0];
  if (model.num_classes != cur[0]) throw std::invalid_argument("builder: output extent does not match class count");
  return model;
}

Classifier build_architecture(const std::string& kind, const Shape& input_shape, int64_t num_classes,
                              uint64_t seed) {
  for (int64_t e : input_shape)
    if (e <= 0) throw std::invalid_argument("build_architecture: input extents must be positive");
  if (num_classes <= 0) throw std::invalid_argument("build_architecture: class count must be positive");

  if (kind == "conv_small") {
    if (input_shape.size() != 3) throw std::invalid_argument("conv_small requires a [C,H,W] input shape");
    NetBuilder b(input_shape);
    b.conv(16, 4, 2, 1).relu().batchnorm();
    b.conv(32, 4, 2, 1).relu().batchnorm();
    b.conv(64, 4, 2, 1).relu().batchnorm();
    b.flatten().linear(64).relu().linear(num_classes);
    Classifier m = b.build(seed, num_classes);
    m.arch_kind = "conv_small";
    return m;
  }
  if (kind == "mlp") {
    Shape flat_in = input_shape;
    if (flat_in.size() != 1) {
      int64_t n = 1;
      for (int64_t e : flat_in) n *= e;
      flat_in = {n};
    }
    NetBuilder b(input_shape);
    if (input_shape.size() != 1) b.flatten();
    for (int i = 0; i < 4; ++i) b.linear(128).relu().batchnorm();
    b.linear(num_classes);
    Classifier m = b.build(seed, num_classes);
    m.arch_kind = "mlp";
    return m;
  }
  throw std::invalid_argument("build_architecture: unknown kind '" + kind + "' (expected conv_small | mlp | custom via NetBuilder)");
}

}  // namespace robustlab
