#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "facenet/autograd.hpp"
#include "facenet/nn.hpp"
#include "facenet/ops.hpp"

namespace facenet::testkit {

inline Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

/// Overwrites parameters (biases included) with uniform noise so no ReLU sits
/// exactly on its kink, where central differences are meaningless.
inline void randomize(const nn::ParamList& params, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (auto p : params) {
    for (auto& v : p.var.value_mut().data()) v = u(rng);
  }
}

/// sum(y * w): a scalar whose gradient w.r.t. y is w.
inline Var contract(const Var& y, const Tensor& w) { return ops::sum(ops::mul(y, Var(w))); }

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

/// Compares analytic gradients of the scalar `f()` w.r.t. every element of
/// `inputs` with central differences. The relative error of one element is
/// |a - n| / max(|a|, |n|, floor).
inline GradCheck check_gradients(const std::function<Var()>& f, std::vector<Var> inputs, double h = 1e-5,
                                 double floor = 1e-6) {
  for (auto& v : inputs) v.zero_grad();
  f().backward();
  GradCheck out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& var = inputs[i];
    const Tensor analytic = var.has_grad() ? var.grad() : Tensor(var.shape());
    Tensor& x = var.value_mut();
    for (std::int64_t k = 0; k < x.numel(); ++k) {
      const double keep = x[k];
      x[k] = keep + h;
      const double up = f().value()[0];
      x[k] = keep - h;
      const double down = f().value()[0];
      x[k] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++out.checked;
      if (rel > out.max_rel_error) {
        out.max_rel_error = rel;
        out.worst = "input " + std::to_string(i) + " element " + std::to_string(k) + ": analytic " +
                    std::to_string(a) + " numeric " + std::to_string(numeric);
      }
    }
  }
  return out;
}

}  // namespace facenet::testkit
