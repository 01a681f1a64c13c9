#pragma once

// Conversation context encoding: per-turn BiGRU encoders, query-aware
// attention over history, query fusion, and the structure encoder whose
// hidden states form the memory bank attended during decoding.

#include "qgen/ad.hpp"
#include "qgen/nn.hpp"

#include <random>
#include <vector>

namespace qgen::encoder {

using ad::Mat;
using ad::Vec;

struct EncoderParams {
  ad::Param* embed = nullptr;               // shared token embedding table
  std::vector<nn::BiGRULayer> turn_layers;  // word-level encoder (2 layers per the setup)
  std::vector<nn::BiGRULayer> query_layers; // empty when tied to turn_layers
  nn::BiGRULayer structure;                 // over the turn-vector sequence
  nn::Linear fuse;                          // W_q [q ; c] + b_q
  bool has_fuse = false;
  int embed_dim = 0;
  int hidden_dir = 0;  // per-direction GRU size; turn vectors are 2x this

  static EncoderParams create(nn::ParamSet& ps, int gen_vocab, int embed_dim, int hidden_dir,
                              int layers, bool tie_query, bool with_fuse);
  const std::vector<nn::BiGRULayer>& layers_for_query() const {
    return query_layers.empty() ? turn_layers : query_layers;
  }
};

struct MemoryBank {
  std::vector<Vec> turn_vectors;   // structure-encoded, one per turn (dim 2H)
  Vec query_fused;                 // q-tilde (raw q when fusion is absent)
  Vec attention_over_history;      // query-attention weights; empty when fusion is absent
};

// --- graph path (node handles) ---

// Encodes one turn; trailing PAD ids are ignored. Returns [fwd_last ; bwd_first].
int encode_turn(ad::Graph& g, const EncoderParams& p, const std::vector<nn::BiGRULayer>& layers,
                const std::vector<int>& token_ids);
std::vector<int> encode_history(ad::Graph& g, const EncoderParams& p,
                                const std::vector<std::vector<int>>& turns);
// alpha_i = softmax_i(h_i . q); c = sum alpha_i h_i
std::pair<int, int> query_attention(ad::Graph& g, int q, const std::vector<int>& history);
int fuse_query(ad::Graph& g, const EncoderParams& p, int q, int c);
std::vector<int> encode_structure(ad::Graph& g, const EncoderParams& p,
                                  const std::vector<int>& inputs);

// --- raw path (plain Eigen, used for decoding) ---

Vec encode_turn_raw(const EncoderParams& p, const std::vector<nn::BiGRULayer>& layers,
                    const std::vector<int>& token_ids);
std::pair<Vec, Vec> query_attention_raw(const Vec& q, const std::vector<Vec>& history);
Vec fuse_query_raw(const EncoderParams& p, const Vec& q, const Vec& c);
std::vector<Vec> encode_structure_raw(const EncoderParams& p, const std::vector<Vec>& inputs);

}  // namespace qgen::encoder
