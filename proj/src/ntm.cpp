#include "qgen/ntm.hpp"

#include "qgen/io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace qgen::ntm {

namespace {

constexpr double kProbFloor = 1e-10;

Vec softmax_vec(const Vec& x) {
  double mx = x.maxCoeff();
  Vec e = (x.array() - mx).exp();
  return e / e.sum();
}

}  // namespace

NTMParams NTMParams::create(nn::ParamSet& ps, int bow_vocab, int topics, int hidden) {
  NTMParams p;
  p.topics = topics;
  p.bow_vocab = bow_vocab;
  p.hidden = hidden;
  p.f_e = nn::Linear::create(ps, "ntm.f_e", bow_vocab, hidden);
  p.f_mu = nn::Linear::create(ps, "ntm.f_mu", hidden, topics);
  p.f_sigma = nn::Linear::create(ps, "ntm.f_sigma", hidden, topics);
  p.f_theta = nn::Linear::create(ps, "ntm.f_theta", topics, topics);
  p.f_phi = nn::Linear::create(ps, "ntm.f_phi", topics, bow_vocab);
  return p;
}

Posterior ntm_encode(const NTMParams& p, const Vec& x_bow) {
  if (x_bow.size() != p.bow_vocab)
    throw Error(ErrCat::Runtime, "ntm_encode: BoW dimension mismatch");
  if (x_bow.minCoeff() < 0.0) throw Error(ErrCat::Runtime, "ntm_encode: negative BoW count");
  if (x_bow.maxCoeff() == 0.0)
    throw Error(ErrCat::Runtime, "ntm_encode: all-zero BoW (instance should have been filtered)");
  Vec hidden = p.f_e.apply_raw(x_bow).cwiseMax(0.0);
  Posterior out;
  out.mu = p.f_mu.apply_raw(hidden);
  out.log_sigma = p.f_sigma.apply_raw(hidden);
  return out;
}

Vec reparameterize(const Vec& mu, const Vec& log_sigma, const Vec& eps) {
  if (mu.size() != log_sigma.size() || mu.size() != eps.size())
    throw Error(ErrCat::Runtime, "reparameterize: shape mismatch");
  return mu + log_sigma.array().exp().matrix().cwiseProduct(eps);
}

Vec topic_mixture(const NTMParams& p, const Vec& z) { return softmax_vec(p.f_theta.apply_raw(z)); }

Vec ntm_decode(const NTMParams& p, const Vec& theta) {
  return softmax_vec(p.f_phi.apply_raw(theta));
}

NTMLoss ntm_loss(const Vec& x_bow, const Vec& mu, const Vec& log_sigma, const Vec& word_dist) {
  NTMLoss out;
  out.kl = 0.5 * (mu.array().square() + (2.0 * log_sigma.array()).exp() -
                  2.0 * log_sigma.array() - 1.0)
                     .sum();
  out.recon = -(x_bow.array() * word_dist.array().max(kProbFloor).log()).sum();
  return out;
}

std::vector<std::vector<int>> top_topic_words(const NTMParams& p, int k) {
  if (k > p.bow_vocab)
    throw Error(ErrCat::Usage, "top_topic_words: k exceeds BoW vocabulary size");
  std::vector<std::vector<int>> out;
  out.reserve(static_cast<size_t>(p.topics));
  for (int t = 0; t < p.topics; ++t) {
    Vec scores = p.f_phi.W->value.col(t) + p.f_phi.b->value.col(0);
    std::vector<int> ids(static_cast<size_t>(p.bow_vocab));
    std::iota(ids.begin(), ids.end(), 0);
    std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
      if (scores(a) != scores(b)) return scores(a) > scores(b);
      return a < b;
    });
    ids.resize(static_cast<size_t>(k));
    out.push_back(std::move(ids));
  }
  return out;
}

NTMGraphOut build_ntm_graph(ad::Graph& g, const NTMParams& p, const Vec& x_bow, const Vec& eps) {
  if (x_bow.maxCoeff() == 0.0)
    throw Error(ErrCat::Runtime, "ntm: all-zero BoW (instance should have been filtered)");
  NTMGraphOut out;
  int x = g.input(x_bow);
  int hidden = g.relu(p.f_e.apply(g, x));
  out.mu = p.f_mu.apply(g, hidden);
  out.log_sigma = p.f_sigma.apply(g, hidden);
  out.z = g.add(out.mu, g.cmult(g.exp(out.log_sigma), g.input(eps)));
  out.theta = g.softmax(p.f_theta.apply(g, out.z));

  // KL(q(z|x) || N(0, I)) in closed form.
  int two_lsig = g.scale(out.log_sigma, 2.0);
  int ones = g.input(Vec(Vec::Ones(p.topics)));
  int inner = g.sub(g.add(g.square(out.mu), g.exp(two_lsig)), g.add(two_lsig, ones));
  out.kl = g.scale(g.sum(inner), 0.5);

  int log_dist = g.log_softmax(p.f_phi.apply(g, out.theta));
  out.recon = g.scale(g.dot(x, log_dist), -1.0);
  return out;
}

}  // namespace qgen::ntm
