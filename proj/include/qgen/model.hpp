#pragma once

// Assembles the encoder, decoder, and topic model into the three variants:
// IE only (interaction), IE+QE (query init), IE+QE+NTM (full model).

#include "qgen/corpus.hpp"
#include "qgen/decoder.hpp"
#include "qgen/encoder.hpp"
#include "qgen/nn.hpp"
#include "qgen/ntm.hpp"

#include <json.hpp>

#include <memory>
#include <optional>
#include <random>
#include <string>

namespace qgen::model {

using ad::Mat;
using ad::Vec;

enum class Variant { IeOnly, IeQe, IeQeNtm };

Variant parse_variant(const std::string& name);
const char* variant_name(Variant v);

struct ModelConfig {
  Variant variant = Variant::IeQeNtm;
  int gen_vocab = 0;
  int bow_vocab = 0;
  int embed_dim = 150;
  int hidden = 300;  // bidirectional total; per-direction is hidden/2
  int enc_layers = 2;
  int ntm_hidden = 200;
  int topics = 50;
  bool tie_query_encoder = true;

  bool has_query_init() const { return variant != Variant::IeOnly; }
  bool has_ntm() const { return variant == Variant::IeQeNtm; }
};

Vec bow_vector(const corpus::EncodedInstance& inst, int bow_vocab);

class QuoteModel {
 public:
  QuoteModel(const ModelConfig& config, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  nn::ParamSet& params() { return params_; }
  const encoder::EncoderParams& enc() const { return enc_; }
  const decoder::DecoderParams& dec() const { return dec_; }
  const ntm::NTMParams& ntm_params() const;

  // --- training path (tape) ---
  struct LossNodes {
    int total = -1, ce = -1, kl = -1, recon = -1;  // -1 where the variant has no term
  };
  // eps: reparameterization noise (ignored for non-NTM variants; zeros when null).
  LossNodes build_loss(ad::Graph& g, const corpus::EncodedInstance& inst, const Vec* eps,
                       bool training, double dropout, std::mt19937_64* dropout_rng,
                       double kl_weight = 1.0);

  // --- inference path (raw Eigen) ---
  struct Encoded {
    std::vector<Vec> memory;  // structure-encoded turn vectors, m of them
    Vec query_repr;           // q-tilde, or the raw query encoding for IE only
    Vec query_alpha;          // query-attention weights; empty for IE only
  };
  Encoded encode(const corpus::EncodedInstance& inst) const;
  Vec theta_mean(const corpus::EncodedInstance& inst) const;  // eps = 0
  decoder::DecodeContext decode_context(const Encoded& enc, const Vec* theta) const;

  std::vector<Mat> snapshot();
  void restore(const std::vector<Mat>& values);

  // --- checkpoint ---
  void save(const std::string& path, const nlohmann::json& train_config,
            const nlohmann::json& vocab_info);
  struct Loaded {
    std::unique_ptr<QuoteModel> model;
    nlohmann::json train_config;
    nlohmann::json vocab_info;
  };
  static Loaded load(const std::string& path);

 private:
  ModelConfig cfg_;
  nn::ParamSet params_;
  encoder::EncoderParams enc_;
  decoder::DecoderParams dec_;
  std::optional<ntm::NTMParams> ntm_;
};

nlohmann::json model_config_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace qgen::model
