#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "fgsgt/ops.hpp"
#include "fgsgt/tensor.hpp"

namespace fgsgt {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Owns the registry of trainable parameters and non-trainable buffers
/// (batch-norm running statistics). Registration order is stable and defines
/// the checkpoint layout.
class ParamStore {
 public:
  Tensor add_param(const std::string& name, Tensor t);
  Tensor add_buffer(const std::string& name, Tensor t);

  const std::vector<NamedTensor>& params() const { return params_; }
  const std::vector<NamedTensor>& buffers() const { return buffers_; }
  /// Parameters followed by buffers.
  std::vector<NamedTensor> all() const;

  Tensor find(const std::string& name) const;  // undefined tensor if absent
  void zero_grad();
  std::size_t param_count() const;

 private:
  void check_unique(const std::string& name) const;

  std::vector<NamedTensor> params_;
  std::vector<NamedTensor> buffers_;
};

/// Seedable source for weight initialisation: uniform in +-sqrt(1/fan_in).
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : engine_(seed) {}
  Tensor uniform_fan_in(Shape shape, std::size_t fan_in);
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

/// Convolution with learnable weight and (zero-initialised) bias.
struct Conv2d {
  ConvSpec spec;
  Tensor weight;
  Tensor bias;

  static Conv2d create(ParamStore& store, const std::string& name, const ConvSpec& spec, Initializer& init);
  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias, spec); }
};

struct BatchNorm2d {
  Tensor gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  static BatchNorm2d create(ParamStore& store, const std::string& name, std::size_t channels);
  Tensor forward(const Tensor& x, bool training);
};

/// conv -> batch norm -> leaky rectification, the unit written Conv_{k x k}.
struct ConvBnAct {
  Conv2d conv;
  BatchNorm2d bn;
  ActivationConfig act;

  static ConvBnAct create(ParamStore& store, const std::string& name, const ConvSpec& spec, Initializer& init,
                          const ActivationConfig& act);
  Tensor forward(const Tensor& x, bool training) { return leaky_relu(bn.forward(conv(x), training), act); }
};

struct Linear {
  Tensor weight, bias;
  static Linear create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Initializer& init);
  Tensor operator()(const Tensor& x) const { return linear(x, weight, bias); }
};

}  // namespace fgsgt
