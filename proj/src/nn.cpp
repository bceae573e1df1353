#include "fgsgt/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace fgsgt {

void ParamStore::check_unique(const std::string& name) const {
  if (find(name).defined()) throw std::invalid_argument("duplicate tensor name '" + name + "'");
}

Tensor ParamStore::add_param(const std::string& name, Tensor t) {
  check_unique(name);
  t.set_requires_grad(true);
  params_.push_back({name, t});
  return t;
}

Tensor ParamStore::add_buffer(const std::string& name, Tensor t) {
  check_unique(name);
  buffers_.push_back({name, t});
  return t;
}

std::vector<NamedTensor> ParamStore::all() const {
  std::vector<NamedTensor> out = params_;
  out.insert(out.end(), buffers_.begin(), buffers_.end());
  return out;
}

Tensor ParamStore::find(const std::string& name) const {
  for (const auto* list : {&params_, &buffers_})
    for (const auto& nt : *list)
      if (nt.name == name) return nt.tensor;
  return {};
}

void ParamStore::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::size_t ParamStore::param_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

Tensor Initializer::uniform_fan_in(Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(engine_);
  return Tensor(std::move(shape), std::move(v));
}

Conv2d Conv2d::create(ParamStore& store, const std::string& name, const ConvSpec& spec, Initializer& init) {
  spec.validate();
  Conv2d c;
  c.spec = spec;
  const std::size_t fan_in = spec.in_channels * spec.kernel_h * spec.kernel_w;
  c.weight = store.add_param(name + ".weight",
                             init.uniform_fan_in({spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w}, fan_in));
  c.bias = store.add_param(name + ".bias", Tensor::zeros({spec.out_channels}));
  return c;
}

BatchNorm2d BatchNorm2d::create(ParamStore& store, const std::string& name, std::size_t channels) {
  BatchNorm2d bn;
  bn.gamma = store.add_param(name + ".gamma", Tensor::full({channels}, 1.0));
  bn.beta = store.add_param(name + ".beta", Tensor::zeros({channels}));
  bn.running_mean = store.add_buffer(name + ".running_mean", Tensor::zeros({channels}));
  bn.running_var = store.add_buffer(name + ".running_var", Tensor::full({channels}, 1.0));
  return bn;
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  return batch_norm(x, gamma, beta, running_mean, running_var, {training, momentum, eps});
}

ConvBnAct ConvBnAct::create(ParamStore& store, const std::string& name, const ConvSpec& spec, Initializer& init,
                            const ActivationConfig& act) {
  act.validate();
  ConvBnAct u;
  u.conv = Conv2d::create(store, name + ".conv", spec, init);
  u.bn = BatchNorm2d::create(store, name + ".bn", spec.out_channels);
  u.act = act;
  return u;
}

Linear Linear::create(ParamStore& store, const std::string& name, std::size_t in, std::size_t out, Initializer& init) {
  Linear l;
  l.weight = store.add_param(name + ".weight", init.uniform_fan_in({out, in}, in));
  l.bias = store.add_param(name + ".bias", Tensor::zeros({out}));
  return l;
}

}  // namespace fgsgt
