#include "facenet/nn.hpp"

#include <cmath>

#include "facenet/ops.hpp"

namespace facenet::nn {

Var normal_param(Shape shape, double std, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.data()) v = std * dist(rng);
  return Var(std::move(t), true);
}

Var zero_param(Shape shape) { return Var(Tensor(std::move(shape)), true); }

Conv2d Conv2d::make(std::int64_t cin, std::int64_t cout, int kernel, int stride, int pad, Rng& rng, double gain) {
  const double fan_in = static_cast<double>(cin * kernel * kernel);
  Conv2d c;
  c.weight = normal_param({cout, cin, kernel, kernel}, gain * std::sqrt(2.0 / fan_in), rng);
  c.bias = zero_param({cout});
  c.stride = stride;
  c.pad = pad;
  return c;
}

Var Conv2d::operator()(const Var& x) const { return ops::conv2d(x, weight, bias, stride, pad); }

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

GroupNorm GroupNorm::make(std::int64_t channels, int groups, double scale) {
  GroupNorm n;
  n.gamma = Var(Tensor({channels}, scale), true);
  n.beta = zero_param({channels});
  n.groups = groups;
  return n;
}

Var GroupNorm::operator()(const Var& x) const { return ops::group_norm(x, gamma, beta, groups); }

void GroupNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

Linear Linear::make(std::int64_t in, std::int64_t out, Rng& rng, double std) {
  Linear l;
  l.weight = normal_param({out, in}, std, rng);
  l.bias = zero_param({out});
  return l;
}

Var Linear::operator()(const Var& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

void zero_all(const ParamList& params) {
  for (const auto& p : params) {
    Var v = p.var;
    v.value_mut().fill(0.0);
  }
}

}  // namespace facenet::nn
