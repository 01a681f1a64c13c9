#pragma once

// Neural topic model: VAE over bag-of-words context vectors. The encoder maps
// x_bow to a Gaussian posterior (mu, log sigma); z is reparameterized, theta is
// softmax(f_theta(z)) and f_phi(theta) reconstructs the word distribution.

#include "qgen/ad.hpp"
#include "qgen/nn.hpp"

#include <vector>

namespace qgen::ntm {

using ad::Mat;
using ad::Vec;

struct NTMParams {
  nn::Linear f_e;      // bow -> hidden, ReLU applied after
  nn::Linear f_mu;     // hidden -> K
  nn::Linear f_sigma;  // hidden -> K (outputs log sigma)
  nn::Linear f_theta;  // K -> K
  nn::Linear f_phi;    // K -> bow vocab
  int topics = 0;
  int bow_vocab = 0;
  int hidden = 0;

  static NTMParams create(nn::ParamSet& ps, int bow_vocab, int topics, int hidden);
};

// --- raw (inference) path ---

struct Posterior {
  Vec mu, log_sigma;
};

Posterior ntm_encode(const NTMParams& p, const Vec& x_bow);
Vec reparameterize(const Vec& mu, const Vec& log_sigma, const Vec& eps);
Vec topic_mixture(const NTMParams& p, const Vec& z);
Vec ntm_decode(const NTMParams& p, const Vec& theta);

struct NTMLoss {
  double kl = 0, recon = 0;
};
NTMLoss ntm_loss(const Vec& x_bow, const Vec& mu, const Vec& log_sigma, const Vec& word_dist);

// Per-topic word ids ranked by f_phi applied to the one-hot mixture e_t.
std::vector<std::vector<int>> top_topic_words(const NTMParams& p, int k);

// --- graph (training) path ---

struct NTMGraphOut {
  int mu = -1, log_sigma = -1, z = -1, theta = -1;
  int kl = -1, recon = -1;  // scalar nodes
};

// Builds the full NTM forward pass plus losses on the tape. `eps` is the
// reparameterization noise (zero vector for the posterior mean).
NTMGraphOut build_ntm_graph(ad::Graph& g, const NTMParams& p, const Vec& x_bow, const Vec& eps);

}  // namespace qgen::ntm
