#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "facenet/autograd.hpp"

namespace facenet::nn {

struct NamedParam {
  std::string name;
  Var var;
};
using ParamList = std::vector<NamedParam>;
using Rng = std::mt19937_64;

/// Trainable leaf initialised from N(0, std^2).
Var normal_param(Shape shape, double std, Rng& rng);
Var zero_param(Shape shape);

struct Conv2d {
  Var weight;  // Cout x Cin x k x k
  Var bias;    // Cout
  int stride = 1;
  int pad = 0;

  /// He-normal weights scaled by `gain`, zero bias.
  static Conv2d make(std::int64_t cin, std::int64_t cout, int kernel, int stride, int pad, Rng& rng, double gain = 1.0);
  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Linear {
  Var weight;  // out x in
  Var bias;    // out

  static Linear make(std::int64_t in, std::int64_t out, Rng& rng, double std);
  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct GroupNorm {
  Var gamma;  // C
  Var beta;   // C
  int groups = 1;

  /// gamma filled with `scale`, beta zero.
  static GroupNorm make(std::int64_t channels, int groups, double scale = 1.0);
  Var operator()(const Var& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

/// Overwrites every parameter with zeros.
void zero_all(const ParamList& params);

}  // namespace facenet::nn
