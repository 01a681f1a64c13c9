#include "qgen/decoder.hpp"

#include "qgen/io.hpp"

#include <algorithm>
#include <cmath>

namespace qgen::decoder {

using corpus::Vocabulary;

DecoderParams DecoderParams::create(nn::ParamSet& ps, int gen_vocab, int embed_dim, int hidden,
                                    int topics, bool with_init, bool with_theta) {
  DecoderParams p;
  p.hidden = hidden;
  p.embed = &ps.add("dec.embed", gen_vocab, embed_dim, nn::Init::Glorot);
  p.cell = nn::GRUCell::create(ps, "dec.cell", embed_dim, hidden);
  if (with_init) {
    p.init = nn::Linear::create(ps, "dec.init", hidden, hidden);
    p.has_init = true;
  }
  if (with_theta) {
    p.theta_enrich = nn::Linear::create(ps, "dec.theta_enrich", hidden + topics, hidden);
    p.has_theta = true;
  }
  p.score = nn::Linear::create(ps, "dec.score", hidden, 1);
  p.out = nn::Linear::create(ps, "dec.out", 2 * hidden, gen_vocab);
  return p;
}

// --- graph path ---

int init_decoder(ad::Graph& g, const DecoderParams& p, int q_tilde) {
  if (!p.has_init) throw Error(ErrCat::Runtime, "init_decoder: variant has no query init");
  return p.init.apply(g, q_tilde);
}

std::vector<int> enrich_memory(ad::Graph& g, const DecoderParams& p,
                               const std::vector<int>& memory, int theta) {
  if (!p.has_theta) return memory;
  std::vector<int> out;
  out.reserve(memory.size());
  for (int h : memory) out.push_back(p.theta_enrich.apply(g, g.concat({h, theta})));
  return out;
}

std::pair<int, int> turn_attention(ad::Graph& g, const DecoderParams& p, int h_d,
                                   const std::vector<int>& memory,
                                   const std::vector<int>& enriched) {
  if (memory.empty()) throw Error(ErrCat::Runtime, "turn_attention: empty memory");
  std::vector<int> scores;
  scores.reserve(memory.size());
  for (int hj : enriched) scores.push_back(p.score.apply(g, g.cmult(h_d, hj)));
  int alpha = g.softmax(g.concat(scores));
  int t = g.matvec(g.concat_cols(memory), alpha);
  return {t, alpha};
}

StepNodes decode_step(ad::Graph& g, const DecoderParams& p, int prev_token, int h,
                      const std::vector<int>& memory, const std::vector<int>& enriched) {
  StepNodes out;
  int v = g.lookup(*p.embed, prev_token);
  out.h = p.cell.step(g, v, h);
  auto [t, alpha] = turn_attention(g, p, out.h, memory, enriched);
  out.alpha = alpha;
  out.logits = p.out.apply(g, g.concat({out.h, t}));
  return out;
}

int sequence_log_prob(ad::Graph& g, const DecoderParams& p, const std::vector<int>& target_ids,
                      int h0, const std::vector<int>& memory, const std::vector<int>& enriched) {
  if (target_ids.size() < 2 || target_ids.front() != Vocabulary::kBos)
    throw Error(ErrCat::Runtime, "sequence_log_prob: target must be BOS ... EOS");
  std::vector<int> step_losses;
  int h = h0;
  for (size_t i = 1; i < target_ids.size(); ++i) {
    if (target_ids[i] == Vocabulary::kPad) continue;
    StepNodes s = decode_step(g, p, target_ids[i - 1], h, memory, enriched);
    h = s.h;
    step_losses.push_back(g.pick_neg_log_softmax(s.logits, target_ids[i]));
  }
  return g.scale(g.addn(step_losses), -1.0);
}

// --- raw path ---

namespace {

Vec log_softmax_vec(const Vec& x) {
  double mx = x.maxCoeff();
  double lse = mx + std::log((x.array() - mx).exp().sum());
  return (x.array() - lse).matrix();
}

}  // namespace

DecodeContext make_decode_context(const DecoderParams& p, const std::vector<Vec>& memory,
                                  const Vec* theta, const Vec* q_tilde) {
  DecodeContext ctx;
  ctx.mem_cols.resize(p.hidden, static_cast<Eigen::Index>(memory.size()));
  for (size_t j = 0; j < memory.size(); ++j)
    ctx.mem_cols.col(static_cast<Eigen::Index>(j)) = memory[j];
  ctx.enriched.reserve(memory.size());
  for (const Vec& h : memory) {
    if (p.has_theta) {
      if (theta == nullptr) throw Error(ErrCat::Runtime, "decode: variant requires theta");
      Vec ht(h.size() + theta->size());
      ht << h, *theta;
      ctx.enriched.push_back(p.theta_enrich.apply_raw(ht));
    } else {
      ctx.enriched.push_back(h);
    }
  }
  if (p.has_init) {
    if (q_tilde == nullptr) throw Error(ErrCat::Runtime, "decode: variant requires q-tilde");
    ctx.h0 = p.init.apply_raw(*q_tilde);
  } else {
    ctx.h0 = Vec::Zero(p.hidden);
  }
  return ctx;
}

StepResult decode_step_raw(const DecoderParams& p, int prev_token, const Vec& h,
                           const DecodeContext& ctx) {
  StepResult out;
  Vec v = p.embed->value.row(prev_token).transpose();
  out.h = p.cell.step_raw(v, h);
  Eigen::Index m = ctx.mem_cols.cols();
  Vec scores(m);
  for (Eigen::Index j = 0; j < m; ++j)
    scores(j) = p.score.apply_raw(out.h.cwiseProduct(ctx.enriched[static_cast<size_t>(j)]))(0);
  double mx = scores.maxCoeff();
  Vec alpha = (scores.array() - mx).exp();
  alpha /= alpha.sum();
  out.alpha = alpha;
  Vec t = ctx.mem_cols * alpha;
  Vec ht(out.h.size() + t.size());
  ht << out.h, t;
  out.log_p = log_softmax_vec(p.out.apply_raw(ht));
  return out;
}

namespace {

struct Hyp {
  std::vector<int> tokens;
  double score = 0.0;
  Vec h;
  bool finished = false;
};

// Ranking order: score desc, then shorter, then token-id lexicographic.
bool hyp_before(const Hyp& a, const Hyp& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
  return a.tokens < b.tokens;
}

}  // namespace

std::vector<BeamCandidate> beam_search(const DecoderParams& p, const DecodeContext& ctx,
                                       int beam_size, int max_len) {
  if (beam_size < 1) throw Error(ErrCat::Usage, "beam_size must be >= 1");
  if (max_len < 1) throw Error(ErrCat::Usage, "max_len must be >= 1");
  std::vector<Hyp> beam{{{}, 0.0, ctx.h0, false}};

  for (int step = 0; step < max_len; ++step) {
    bool any_open =
        std::any_of(beam.begin(), beam.end(), [](const Hyp& h) { return !h.finished; });
    if (!any_open) break;
    std::vector<Hyp> pool;
    for (Hyp& hyp : beam) {
      if (hyp.finished) {
        pool.push_back(std::move(hyp));
        continue;
      }
      int prev = hyp.tokens.empty() ? Vocabulary::kBos : hyp.tokens.back();
      StepResult s = decode_step_raw(p, prev, hyp.h, ctx);
      // Top beam_size continuations of this hypothesis; anything below that
      // rank cannot enter the merged top-beam_size pool.
      std::vector<int> cand;
      cand.reserve(static_cast<size_t>(s.log_p.size()));
      for (int v = 0; v < s.log_p.size(); ++v) {
        if (v == Vocabulary::kPad || v == Vocabulary::kUnk || v == Vocabulary::kBos) continue;
        cand.push_back(v);
      }
      size_t keep = std::min(cand.size(), static_cast<size_t>(beam_size));
      std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(keep), cand.end(),
                        [&](int a, int b) {
                          if (s.log_p(a) != s.log_p(b)) return s.log_p(a) > s.log_p(b);
                          return a < b;
                        });
      cand.resize(keep);
      for (int v : cand) {
        Hyp next;
        next.tokens = hyp.tokens;
        next.score = hyp.score + s.log_p(v);
        if (v == Vocabulary::kEos) {
          next.finished = true;
        } else {
          next.tokens.push_back(v);
          next.h = s.h;
          next.finished = static_cast<int>(next.tokens.size()) >= max_len;
        }
        pool.push_back(std::move(next));
      }
    }
    std::stable_sort(pool.begin(), pool.end(), hyp_before);
    if (static_cast<int>(pool.size()) > beam_size) pool.resize(static_cast<size_t>(beam_size));
    beam = std::move(pool);
  }

  std::stable_sort(beam.begin(), beam.end(), hyp_before);
  std::vector<BeamCandidate> out;
  for (const Hyp& h : beam) {
    if (static_cast<int>(out.size()) >= beam_size) break;
    out.push_back({h.tokens, h.score, h.finished});
  }
  return out;
}

double forced_score(const DecoderParams& p, const DecodeContext& ctx,
                    const std::vector<int>& target_ids) {
  if (target_ids.size() < 2 || target_ids.front() != Vocabulary::kBos)
    throw Error(ErrCat::Runtime, "forced_score: target must be BOS ... EOS");
  double score = 0.0;
  Vec h = ctx.h0;
  for (size_t i = 1; i < target_ids.size(); ++i) {
    if (target_ids[i] == Vocabulary::kPad) continue;
    StepResult s = decode_step_raw(p, target_ids[i - 1], h, ctx);
    score += s.log_p(target_ids[i]);
    h = s.h;
  }
  return score;
}

// --- quotation matching ---

int quotation_match(const std::vector<std::string>& candidate,
                    const corpus::QuotationList& qlist) {
  if (qlist.quotes.empty()) throw Error(ErrCat::Runtime, "quotation_match: empty quotation list");
  int exact = qlist.find(candidate);
  if (exact >= 0) return exact;
  int best = 0;
  int best_dist = token_edit_distance(candidate, qlist.quotes[0]);
  for (size_t i = 1; i < qlist.quotes.size(); ++i) {
    int d = token_edit_distance(candidate, qlist.quotes[i]);
    if (d < best_dist ||
        (d == best_dist && qlist.freq[i] > qlist.freq[static_cast<size_t>(best)])) {
      best = static_cast<int>(i);
      best_dist = d;
    }
  }
  return best;
}

std::vector<int> match_candidates(const std::vector<BeamCandidate>& candidates,
                                  const corpus::Vocabulary& vocab,
                                  const corpus::QuotationList& qlist) {
  std::vector<int> out;
  for (const auto& cand : candidates) {
    std::vector<std::string> toks;
    toks.reserve(cand.tokens.size());
    for (int id : cand.tokens) toks.push_back(vocab.gen_tokens[static_cast<size_t>(id)]);
    int qid = quotation_match(toks, qlist);
    if (std::find(out.begin(), out.end(), qid) == out.end()) out.push_back(qid);
  }
  return out;
}

}  // namespace qgen::decoder
