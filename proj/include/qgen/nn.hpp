#pragma once

#include "qgen/ad.hpp"

#include <deque>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace qgen::nn {

using ad::Mat;
using ad::Param;
using ad::Vec;

enum class Init { Zeros, Glorot };

// Owns all trainable tensors of a model. Creation order is deterministic, so a
// fixed seed reproduces initial values exactly.
class ParamSet {
 public:
  explicit ParamSet(uint64_t seed) : rng_(seed) {}

  Param& add(const std::string& name, int rows, int cols, Init init = Init::Glorot);
  Param& vec(const std::string& name, int rows, Init init = Init::Zeros) {
    return add(name, rows, 1, init);
  }

  void zero_grad();
  std::vector<Param*> all();
  Param* find(const std::string& name);
  size_t total_entries() const;

 private:
  std::deque<Param> params_;  // deque: stable addresses as the set grows
  std::mt19937_64 rng_;
};

struct Adam {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;

  void step(ParamSet& params);
};

struct Linear {
  Param* W = nullptr;
  Param* b = nullptr;

  static Linear create(ParamSet& ps, const std::string& prefix, int in, int out);
  int apply(ad::Graph& g, int x) const { return g.affine(g.param(*W), x, g.param(*b)); }
  Vec apply_raw(const Vec& x) const { return W->value * x + b->value.col(0); }
  int out_dim() const { return W->rows(); }
};

// One direction of one GRU layer.
struct GRUCell {
  Param *Wr, *Ur, *br;
  Param *Wz, *Uz, *bz;
  Param *Wh, *Uh, *bh;
  int input_dim = 0, hidden_dim = 0;

  static GRUCell create(ParamSet& ps, const std::string& prefix, int in, int hidden);

  int step(ad::Graph& g, int x, int h) const;
  Vec step_raw(const Vec& x, const Vec& h) const;
};

struct BiGRULayer {
  GRUCell fwd, bwd;
  static BiGRULayer create(ParamSet& ps, const std::string& prefix, int in, int hidden);
};

}  // namespace qgen::nn
