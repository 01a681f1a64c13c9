#pragma once

// Joint optimization of the topic model and the generation model
// (L = L_NTM + L_QGM) with Adam, early stopping on dev loss, and the three
// ablation variants.

#include "qgen/corpus.hpp"
#include "qgen/model.hpp"

#include <json.hpp>

#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace qgen::train {

struct TrainConfig {
  model::Variant variant = model::Variant::IeQeNtm;
  double learning_rate = 1e-3;
  int batch_size = 64;
  int max_epochs = 50;
  int patience = 5;
  double dropout = 0.3;
  int beam_size = 5;
  int max_turn_len = 150;
  int max_quote_len = 20;
  int topics = 50;
  uint64_t seed = 13;
  int embed_dim = 150;
  int hidden = 300;
  int enc_layers = 2;
  int ntm_hidden = 200;
  int kl_warmup_epochs = 0;   // 0 disables annealing
  bool theta_sample = true;   // sample z during training (mean otherwise)
  bool tie_query_encoder = true;

  model::ModelConfig model_config(int gen_vocab, int bow_vocab) const;
};

// Flat `key = value` file; '#' starts a comment. Unknown keys are errors.
TrainConfig parse_train_config(const std::string& path);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_json(const TrainConfig& c);

struct EpochLog {
  int epoch = 0;
  double train_total = 0, train_kl = 0, train_recon = 0, train_ce = 0;
  double dev_loss = 0;
  double dev_p1 = 0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  int chosen_epoch = 0;   // argmin dev loss under early stopping
  int stopped_epoch = 0;
  int dropped_empty_bow = 0;  // NTM variant: instances unusable without a BoW
};

struct BatchTerms {
  double total = 0, kl = 0, recon = 0, ce = 0;
};

// Sum-reduced loss over a batch in one graph; returns the scalar node of the
// total in *total_node for callers that need to backprop.
BatchTerms forward_loss(model::QuoteModel& m, ad::Graph& g,
                        const std::vector<const corpus::EncodedInstance*>& batch,
                        const std::vector<ad::Vec>* eps, bool training, double dropout,
                        std::mt19937_64* dropout_rng, double kl_weight, int* total_node);

struct TrainResult {
  std::unique_ptr<model::QuoteModel> model;
  TrainLog log;
};

TrainResult train(const TrainConfig& cfg, const corpus::Vocabulary& vocab,
                  const corpus::QuotationList& qlist,
                  std::vector<corpus::EncodedInstance> train_set,
                  std::vector<corpus::EncodedInstance> dev_set, std::ostream* progress = nullptr);

// Beam-decode + match an instance set and return P@1 against gold ids.
double dev_precision_at_1(model::QuoteModel& m, const std::vector<corpus::EncodedInstance>& set,
                          const corpus::Vocabulary& vocab, const corpus::QuotationList& qlist,
                          int beam_size, int max_len);

}  // namespace qgen::train
