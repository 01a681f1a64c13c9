#pragma once

// Quotation decoding: GRU decoder initialized from the fused query, turn-based
// attention over the memory bank enriched with the topic mixture, beam search,
// and edit-distance matching of raw outputs against the quotation list.

#include "qgen/ad.hpp"
#include "qgen/corpus.hpp"
#include "qgen/nn.hpp"

#include <string>
#include <vector>

namespace qgen::decoder {

using ad::Mat;
using ad::Vec;

struct DecoderParams {
  ad::Param* embed = nullptr;  // decoder input embedding
  nn::GRUCell cell;            // embed_dim -> 2H
  nn::Linear init;             // W_0: q-tilde -> h_0 (absent for IE only)
  bool has_init = false;
  nn::Linear theta_enrich;     // W_theta: [h_j ; theta] -> 2H (NTM variant)
  bool has_theta = false;
  nn::Linear score;            // W_d: 2H -> 1
  nn::Linear out;              // W_p: [h_d ; t] -> vocab logits
  int hidden = 0;              // 2H

  static DecoderParams create(nn::ParamSet& ps, int gen_vocab, int embed_dim, int hidden,
                              int topics, bool with_init, bool with_theta);
};

// --- graph path ---

int init_decoder(ad::Graph& g, const DecoderParams& p, int q_tilde);

// h_j^theta per memory slot; identity when the variant has no topic enrichment.
std::vector<int> enrich_memory(ad::Graph& g, const DecoderParams& p,
                               const std::vector<int>& memory, int theta);

// (t_i, alpha_i.) over all m turns.
std::pair<int, int> turn_attention(ad::Graph& g, const DecoderParams& p, int h_d,
                                   const std::vector<int>& memory,
                                   const std::vector<int>& enriched);

struct StepNodes {
  int h = -1;       // new decoder state
  int logits = -1;  // pre-softmax scores over gen vocab
  int alpha = -1;
};
StepNodes decode_step(ad::Graph& g, const DecoderParams& p, int prev_token, int h,
                      const std::vector<int>& memory, const std::vector<int>& enriched);

// Teacher-forced sum of log p(y_i); target is BOS ... EOS. Returns the scalar
// node holding the log-probability (ce loss is its negation).
int sequence_log_prob(ad::Graph& g, const DecoderParams& p, const std::vector<int>& target_ids,
                      int h0, const std::vector<int>& memory, const std::vector<int>& enriched);

// --- raw path ---

struct DecodeContext {
  Mat mem_cols;               // 2H x m, memory bank as columns
  std::vector<Vec> enriched;  // h_j^theta (precomputed, step-independent)
  Vec h0;
};

DecodeContext make_decode_context(const DecoderParams& p, const std::vector<Vec>& memory,
                                  const Vec* theta, const Vec* q_tilde);

struct StepResult {
  Vec h;
  Vec log_p;  // log softmax over gen vocab
  Vec alpha;
};
StepResult decode_step_raw(const DecoderParams& p, int prev_token, const Vec& h,
                           const DecodeContext& ctx);

struct BeamCandidate {
  std::vector<int> tokens;  // content tokens only (no BOS/EOS)
  double score = 0.0;       // sum of emitted token log-probs (incl. EOS if taken)
  bool finished = false;    // EOS emitted or length cap hit
};

// Breadth-limited best-first decoding. PAD/UNK/BOS are never emitted. Ties
// break toward shorter candidates, then token-id lexicographic order.
std::vector<BeamCandidate> beam_search(const DecoderParams& p, const DecodeContext& ctx,
                                       int beam_size, int max_len);

// Feeds the given BOS...EOS target through the inference path and sums the
// emitted tokens' log-probs; the oracle twin of sequence_log_prob.
double forced_score(const DecoderParams& p, const DecodeContext& ctx,
                    const std::vector<int>& target_ids);

// --- quotation matching ---

// Unit-cost Levenshtein distance over tokens.
template <typename T>
int token_edit_distance(const std::vector<T>& a, const std::vector<T>& b) {
  size_t n = b.size();
  std::vector<int> row(n + 1);
  for (size_t j = 0; j <= n; ++j) row[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    int prev_diag = row[0];
    row[0] = static_cast<int>(i);
    for (size_t j = 1; j <= n; ++j) {
      int del = row[j] + 1;
      int ins = row[j - 1] + 1;
      int sub = prev_diag + (a[i - 1] == b[j - 1] ? 0 : 1);
      prev_diag = row[j];
      row[j] = std::min(std::min(del, ins), sub);
    }
  }
  return row[n];
}

// Exact match wins; otherwise minimum edit distance, ties broken by higher
// corpus frequency, then lower id.
int quotation_match(const std::vector<std::string>& candidate, const corpus::QuotationList& qlist);

// Rank-preserving, de-duplicated matched ids for a candidate ranking.
std::vector<int> match_candidates(const std::vector<BeamCandidate>& candidates,
                                  const corpus::Vocabulary& vocab,
                                  const corpus::QuotationList& qlist);

}  // namespace qgen::decoder
