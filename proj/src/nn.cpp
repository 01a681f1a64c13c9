#include "qgen/nn.hpp"

#include "qgen/io.hpp"

#include <cmath>

namespace qgen::nn {

Param& ParamSet::add(const std::string& name, int rows, int cols, Init init) {
  if (find(name)) throw Error(ErrCat::Runtime, "duplicate parameter: " + name);
  params_.emplace_back();
  Param& p = params_.back();
  p.name = name;
  p.value.setZero(rows, cols);
  if (init == Init::Glorot) {
    double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-a, a);
    for (Eigen::Index j = 0; j < p.value.cols(); ++j)
      for (Eigen::Index i = 0; i < p.value.rows(); ++i) p.value(i, j) = dist(rng_);
  }
  p.grad.setZero(rows, cols);
  p.adam_m.setZero(rows, cols);
  p.adam_v.setZero(rows, cols);
  return p;
}

void ParamSet::zero_grad() {
  for (auto& p : params_) p.grad.setZero();
}

std::vector<Param*> ParamSet::all() {
  std::vector<Param*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(&p);
  return out;
}

Param* ParamSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

size_t ParamSet::total_entries() const {
  size_t n = 0;
  for (const auto& p : params_) n += static_cast<size_t>(p.value.size());
  return n;
}

void Adam::step(ParamSet& params) {
  ++step_count;
  double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  for (Param* p : params.all()) {
    p->adam_m = beta1 * p->adam_m + (1.0 - beta1) * p->grad;
    p->adam_v = beta2 * p->adam_v + (1.0 - beta2) * p->grad.cwiseProduct(p->grad);
    Mat mhat = p->adam_m / bc1;
    Mat vhat = p->adam_v / bc2;
    p->value -= lr * mhat.cwiseQuotient((vhat.cwiseSqrt().array() + eps).matrix());
  }
}

Linear Linear::create(ParamSet& ps, const std::string& prefix, int in, int out) {
  Linear l;
  l.W = &ps.add(prefix + ".W", out, in);
  l.b = &ps.vec(prefix + ".b", out);
  return l;
}

GRUCell GRUCell::create(ParamSet& ps, const std::string& prefix, int in, int hidden) {
  GRUCell c;
  c.input_dim = in;
  c.hidden_dim = hidden;
  c.Wr = &ps.add(prefix + ".Wr", hidden, in);
  c.Ur = &ps.add(prefix + ".Ur", hidden, hidden);
  c.br = &ps.vec(prefix + ".br", hidden);
  c.Wz = &ps.add(prefix + ".Wz", hidden, in);
  c.Uz = &ps.add(prefix + ".Uz", hidden, hidden);
  c.bz = &ps.vec(prefix + ".bz", hidden);
  c.Wh = &ps.add(prefix + ".Wh", hidden, in);
  c.Uh = &ps.add(prefix + ".Uh", hidden, hidden);
  c.bh = &ps.vec(prefix + ".bh", hidden);
  return c;
}

int GRUCell::step(ad::Graph& g, int x, int h) const {
  int r = g.sigmoid(g.affine2(g.param(*Wr), x, g.param(*Ur), h, g.param(*br)));
  int z = g.sigmoid(g.affine2(g.param(*Wz), x, g.param(*Uz), h, g.param(*bz)));
  int rh = g.cmult(r, h);
  int c = g.tanh(g.affine2(g.param(*Wh), x, g.param(*Uh), rh, g.param(*bh)));
  return g.add(g.cmult(g.one_minus(z), h), g.cmult(z, c));
}

Vec GRUCell::step_raw(const Vec& x, const Vec& h) const {
  Vec r = (-(Wr->value * x + Ur->value * h + br->value.col(0)).array()).exp();
  r = (1.0 / (1.0 + r.array())).matrix();
  Vec z = (-(Wz->value * x + Uz->value * h + bz->value.col(0)).array()).exp();
  z = (1.0 / (1.0 + z.array())).matrix();
  Vec c = (Wh->value * x + Uh->value * r.cwiseProduct(h) + bh->value.col(0)).array().tanh();
  return (1.0 - z.array()).matrix().cwiseProduct(h) + z.cwiseProduct(c);
}

BiGRULayer BiGRULayer::create(ParamSet& ps, const std::string& prefix, int in, int hidden) {
  BiGRULayer l;
  l.fwd = GRUCell::create(ps, prefix + ".fwd", in, hidden);
  l.bwd = GRUCell::create(ps, prefix + ".bwd", in, hidden);
  return l;
}

}  // namespace qgen::nn
