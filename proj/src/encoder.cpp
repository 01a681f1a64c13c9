#include "qgen/encoder.hpp"

#include "qgen/corpus.hpp"
#include "qgen/io.hpp"

#include <algorithm>

namespace qgen::encoder {

namespace {

// Drops trailing PAD ids; the recurrence only ever runs over real tokens.
size_t effective_len(const std::vector<int>& ids) {
  size_t n = ids.size();
  while (n > 0 && ids[n - 1] == corpus::Vocabulary::kPad) --n;
  return n;
}

Vec softmax_vec(const Vec& x) {
  double mx = x.maxCoeff();
  Vec e = (x.array() - mx).exp();
  return e / e.sum();
}

}  // namespace

EncoderParams EncoderParams::create(nn::ParamSet& ps, int gen_vocab, int embed_dim, int hidden_dir,
                                    int layers, bool tie_query, bool with_fuse) {
  EncoderParams p;
  p.embed = &ps.add("enc.embed", gen_vocab, embed_dim, nn::Init::Glorot);
  p.embed_dim = embed_dim;
  p.hidden_dir = hidden_dir;
  for (int l = 0; l < layers; ++l) {
    int in = l == 0 ? embed_dim : 2 * hidden_dir;
    p.turn_layers.push_back(
        nn::BiGRULayer::create(ps, "enc.turn.l" + std::to_string(l), in, hidden_dir));
  }
  if (!tie_query) {
    for (int l = 0; l < layers; ++l) {
      int in = l == 0 ? embed_dim : 2 * hidden_dir;
      p.query_layers.push_back(
          nn::BiGRULayer::create(ps, "enc.query.l" + std::to_string(l), in, hidden_dir));
    }
  }
  p.structure = nn::BiGRULayer::create(ps, "enc.structure", 2 * hidden_dir, hidden_dir);
  if (with_fuse) {
    p.fuse = nn::Linear::create(ps, "enc.fuse", 4 * hidden_dir, 2 * hidden_dir);
    p.has_fuse = true;
  }
  return p;
}

// --- graph path ---

namespace {

// One BiGRU layer over a sequence of nodes; returns per-position [fwd_t ; bwd_t].
std::vector<int> bigru_layer_seq(ad::Graph& g, const nn::BiGRULayer& layer,
                                 const std::vector<int>& inputs, int hidden_dir) {
  size_t n = inputs.size();
  int zero = g.input(Vec(Vec::Zero(hidden_dir)));
  std::vector<int> fwd(n), bwd(n);
  int h = zero;
  for (size_t t = 0; t < n; ++t) fwd[t] = h = layer.fwd.step(g, inputs[t], h);
  h = zero;
  for (size_t t = n; t-- > 0;) bwd[t] = h = layer.bwd.step(g, inputs[t], h);
  std::vector<int> out(n);
  for (size_t t = 0; t < n; ++t) out[t] = g.concat({fwd[t], bwd[t]});
  return out;
}

}  // namespace

int encode_turn(ad::Graph& g, const EncoderParams& p, const std::vector<nn::BiGRULayer>& layers,
                const std::vector<int>& token_ids) {
  size_t n = effective_len(token_ids);
  if (n == 0) throw Error(ErrCat::Runtime, "encode_turn: empty token sequence");
  std::vector<int> seq(n);
  for (size_t t = 0; t < n; ++t) seq[t] = g.lookup(*p.embed, token_ids[t]);
  for (size_t l = 0; l + 1 < layers.size(); ++l)
    seq = bigru_layer_seq(g, layers[l], seq, p.hidden_dir);
  // Last layer: only the two directions' final states are needed.
  const nn::BiGRULayer& top = layers.back();
  int zero = g.input(Vec(Vec::Zero(p.hidden_dir)));
  int hf = zero;
  for (size_t t = 0; t < n; ++t) hf = top.fwd.step(g, seq[t], hf);
  int hb = zero;
  for (size_t t = n; t-- > 0;) hb = top.bwd.step(g, seq[t], hb);
  return g.concat({hf, hb});
}

std::vector<int> encode_history(ad::Graph& g, const EncoderParams& p,
                                const std::vector<std::vector<int>>& turns) {
  std::vector<int> out;
  out.reserve(turns.size());
  for (const auto& turn : turns) out.push_back(encode_turn(g, p, p.turn_layers, turn));
  return out;
}

std::pair<int, int> query_attention(ad::Graph& g, int q, const std::vector<int>& history) {
  if (history.empty()) throw Error(ErrCat::Runtime, "query_attention: empty history");
  std::vector<int> scores;
  scores.reserve(history.size());
  for (int h : history) scores.push_back(g.dot(h, q));
  int alpha = g.softmax(g.concat(scores));
  int c = g.matvec(g.concat_cols(history), alpha);
  return {c, alpha};
}

int fuse_query(ad::Graph& g, const EncoderParams& p, int q, int c) {
  if (!p.has_fuse) throw Error(ErrCat::Runtime, "fuse_query: model has no fusion layer");
  return p.fuse.apply(g, g.concat({q, c}));
}

std::vector<int> encode_structure(ad::Graph& g, const EncoderParams& p,
                                  const std::vector<int>& inputs) {
  if (inputs.size() < 2) throw Error(ErrCat::Runtime, "encode_structure: needs at least 2 turns");
  return bigru_layer_seq(g, p.structure, inputs, p.hidden_dir);
}

// --- raw path ---

namespace {

std::vector<Vec> bigru_layer_seq_raw(const nn::BiGRULayer& layer, const std::vector<Vec>& inputs,
                                     int hidden_dir) {
  size_t n = inputs.size();
  Vec zero = Vec::Zero(hidden_dir);
  std::vector<Vec> fwd(n), bwd(n);
  Vec h = zero;
  for (size_t t = 0; t < n; ++t) fwd[t] = h = layer.fwd.step_raw(inputs[t], h);
  h = zero;
  for (size_t t = n; t-- > 0;) bwd[t] = h = layer.bwd.step_raw(inputs[t], h);
  std::vector<Vec> out(n);
  for (size_t t = 0; t < n; ++t) {
    out[t].resize(2 * hidden_dir);
    out[t] << fwd[t], bwd[t];
  }
  return out;
}

}  // namespace

Vec encode_turn_raw(const EncoderParams& p, const std::vector<nn::BiGRULayer>& layers,
                    const std::vector<int>& token_ids) {
  size_t n = effective_len(token_ids);
  if (n == 0) throw Error(ErrCat::Runtime, "encode_turn: empty token sequence");
  std::vector<Vec> seq(n);
  for (size_t t = 0; t < n; ++t) seq[t] = p.embed->value.row(token_ids[t]).transpose();
  for (size_t l = 0; l + 1 < layers.size(); ++l)
    seq = bigru_layer_seq_raw(layers[l], seq, p.hidden_dir);
  const nn::BiGRULayer& top = layers.back();
  Vec hf = Vec::Zero(p.hidden_dir);
  for (size_t t = 0; t < n; ++t) hf = top.fwd.step_raw(seq[t], hf);
  Vec hb = Vec::Zero(p.hidden_dir);
  for (size_t t = n; t-- > 0;) hb = top.bwd.step_raw(seq[t], hb);
  Vec out(2 * p.hidden_dir);
  out << hf, hb;
  return out;
}

std::pair<Vec, Vec> query_attention_raw(const Vec& q, const std::vector<Vec>& history) {
  if (history.empty()) throw Error(ErrCat::Runtime, "query_attention: empty history");
  Vec scores(history.size());
  for (size_t i = 0; i < history.size(); ++i) scores(static_cast<Eigen::Index>(i)) = history[i].dot(q);
  Vec alpha = softmax_vec(scores);
  Vec c = Vec::Zero(q.size());
  for (size_t i = 0; i < history.size(); ++i) c += alpha(static_cast<Eigen::Index>(i)) * history[i];
  return {c, alpha};
}

Vec fuse_query_raw(const EncoderParams& p, const Vec& q, const Vec& c) {
  if (!p.has_fuse) throw Error(ErrCat::Runtime, "fuse_query: model has no fusion layer");
  Vec qc(q.size() + c.size());
  qc << q, c;
  return p.fuse.apply_raw(qc);
}

std::vector<Vec> encode_structure_raw(const EncoderParams& p, const std::vector<Vec>& inputs) {
  if (inputs.size() < 2) throw Error(ErrCat::Runtime, "encode_structure: needs at least 2 turns");
  return bigru_layer_seq_raw(p.structure, inputs, p.hidden_dir);
}

}  // namespace qgen::encoder
