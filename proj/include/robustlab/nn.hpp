#pragma once

#include <string>
#include <utility>
#include <vector>

#include "robustlab/ops.hpp"
#include "robustlab/tensor.hpp"

namespace robustlab {

enum class Mode { Train, Eval };

struct Layer {
  enum class Kind { Conv, Linear, BatchNorm, Relu, Flatten };
  Kind kind;
  // conv
  int64_t in_ch = 0, out_ch = 0, kernel = 0, stride = 1, pad = 0;
  // linear
  int64_t in = 0, out = 0;
  // batch norm
  int64_t features = 0;
  Tensor weight, bias;    // conv / linear
  Tensor gamma, beta;     // batch norm
  std::vector<real_t> running_mean, running_var;
};

// Feed-forward image classifier: ordered layer list plus a named parameter
// registry. Mutable state is limited to parameter values and batch-norm
// running statistics; forward in eval mode is a pure function.
class Classifier {
 public:
  std::string arch_kind;  // conv_small | mlp | custom
  Shape input_shape;      // {C,H,W} or {D}
  int64_t num_classes = 0;
  Mode mode = Mode::Train;
  std::vector<Layer> layers;

  std::vector<std::pair<std::string, Tensor>> named_params() const;  // trainable only
  std::vector<Tensor> params() const;
  int64_t param_count() const;
  void set_mode(Mode m) { mode = m; }

  Classifier clone() const;  // deep copy (params and running stats)
};

// Runs the model on a batch ([B,C,H,W] or [B,D]); returns [B,K] logits.
// Updates batch-norm running statistics when the model is in train mode.
Tensor forward(Classifier& model, const Tensor& batch);

// conv_small: 3 x (conv 4x4 stride 2; relu; batch norm) with 16/32/64 channels,
// then two fully connected layers. mlp: 4 x (linear 128; relu; batch norm),
// then the output layer. Weights Glorot-uniform, biases zero.
Classifier build_architecture(const std::string& kind, const Shape& input_shape, int64_t num_classes,
                              uint64_t seed);

// Free-form stack for custom models (small test nets, VAE components).
class NetBuilder {
 public:
  explicit NetBuilder(Shape input_shape) : input_shape_(std::move(input_shape)) {}
  NetBuilder& conv(int64_t out_ch, int64_t kernel, int64_t stride, int64_t pad);
  NetBuilder& linear(int64_t out);
  NetBuilder& relu();
  NetBuilder& batchnorm();
  NetBuilder& flatten();
  Classifier build(uint64_t seed, int64_t num_classes_hint = 0) const;

 private:
  struct Step {
    Layer::Kind kind;
    int64_t a = 0, b = 0, c = 0, d = 0;
  };
  Shape input_shape_;
  std::vector<Step> steps_;
};

// classification helpers
std::vector<int64_t> predict(Classifier& model, const Tensor& batch);

}  // namespace robustlab
