#include "qgen/model.hpp"

#include "qgen/io.hpp"

namespace qgen::model {

using corpus::EncodedInstance;
using corpus::Vocabulary;
using nlohmann::json;

Variant parse_variant(const std::string& name) {
  if (name == "ie_only") return Variant::IeOnly;
  if (name == "ie_qe") return Variant::IeQe;
  if (name == "ie_qe_ntm") return Variant::IeQeNtm;
  throw Error(ErrCat::Usage,
              "unknown variant \"" + name + "\" (valid: ie_only, ie_qe, ie_qe_ntm)");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::IeOnly: return "ie_only";
    case Variant::IeQe: return "ie_qe";
    case Variant::IeQeNtm: return "ie_qe_ntm";
  }
  return "ie_qe_ntm";
}

Vec bow_vector(const EncodedInstance& inst, int bow_vocab) {
  Vec x = Vec::Zero(bow_vocab);
  for (auto& [id, count] : inst.bow) {
    if (id < 0 || id >= bow_vocab) throw Error(ErrCat::Format, "BoW id out of range");
    x(id) = static_cast<double>(count);
  }
  return x;
}

QuoteModel::QuoteModel(const ModelConfig& config, uint64_t seed) : cfg_(config), params_(seed) {
  if (cfg_.hidden % 2 != 0) throw Error(ErrCat::Config, "hidden size must be even (bi-GRU)");
  if (cfg_.gen_vocab < 5) throw Error(ErrCat::Config, "generation vocabulary too small");
  int hdir = cfg_.hidden / 2;
  enc_ = encoder::EncoderParams::create(params_, cfg_.gen_vocab, cfg_.embed_dim, hdir,
                                        cfg_.enc_layers, cfg_.tie_query_encoder,
                                        cfg_.has_query_init());
  dec_ = decoder::DecoderParams::create(params_, cfg_.gen_vocab, cfg_.embed_dim, cfg_.hidden,
                                        cfg_.topics, cfg_.has_query_init(), cfg_.has_ntm());
  if (cfg_.has_ntm()) {
    if (cfg_.bow_vocab < 1) throw Error(ErrCat::Config, "NTM variant needs a BoW vocabulary");
    ntm_ = ntm::NTMParams::create(params_, cfg_.bow_vocab, cfg_.topics, cfg_.ntm_hidden);
  }
}

const ntm::NTMParams& QuoteModel::ntm_params() const {
  if (!ntm_) throw Error(ErrCat::Usage, "variant has no NTM");
  return *ntm_;
}

QuoteModel::LossNodes QuoteModel::build_loss(ad::Graph& g, const EncodedInstance& inst,
                                             const Vec* eps, bool training, double dropout,
                                             std::mt19937_64* dropout_rng, double kl_weight) {
  if (inst.history_ids.empty()) throw Error(ErrCat::Runtime, "instance has no history turns");
  double rate = training ? dropout : 0.0;
  auto drop = [&](int node) {
    if (rate == 0.0) return node;
    if (dropout_rng == nullptr) throw Error(ErrCat::Runtime, "dropout requires an RNG");
    return g.dropout(node, rate, *dropout_rng);
  };

  LossNodes out;
  int theta = -1;
  if (cfg_.has_ntm()) {
    Vec noise = eps != nullptr ? *eps : Vec(Vec::Zero(cfg_.topics));
    ntm::NTMGraphOut nout =
        ntm::build_ntm_graph(g, *ntm_, bow_vector(inst, cfg_.bow_vocab), noise);
    theta = nout.theta;
    out.kl = kl_weight == 1.0 ? nout.kl : g.scale(nout.kl, kl_weight);
    out.recon = nout.recon;
  }

  std::vector<int> history = encoder::encode_history(g, enc_, inst.history_ids);
  for (int& h : history) h = drop(h);
  int q = drop(encoder::encode_turn(g, enc_, enc_.layers_for_query(), inst.query_ids));

  int query_repr = q;
  if (cfg_.has_query_init()) {
    auto [c, alpha] = encoder::query_attention(g, q, history);
    (void)alpha;
    query_repr = encoder::fuse_query(g, enc_, q, c);
  }

  std::vector<int> structure_in = history;
  structure_in.push_back(query_repr);
  std::vector<int> memory = encoder::encode_structure(g, enc_, structure_in);
  for (int& h : memory) h = drop(h);

  int h0 = cfg_.has_query_init() ? decoder::init_decoder(g, dec_, query_repr)
                                 : g.input(Vec(Vec::Zero(cfg_.hidden)));
  std::vector<int> enriched = decoder::enrich_memory(g, dec_, memory, theta);

  // Teacher-forced cross entropy, with dropout on the per-step decoder output
  // before the softmax layer (the recurrence itself stays undropped).
  std::vector<int> step_losses;
  int h = h0;
  const auto& target = inst.target_ids;
  if (target.size() < 2 || target.front() != Vocabulary::kBos)
    throw Error(ErrCat::Runtime, "target must be BOS ... EOS");
  int mem_cols = g.concat_cols(memory);
  for (size_t i = 1; i < target.size(); ++i) {
    if (target[i] == Vocabulary::kPad) continue;
    int v = g.lookup(*dec_.embed, target[i - 1]);
    h = dec_.cell.step(g, v, h);
    int h_out = drop(h);
    std::vector<int> scores;
    scores.reserve(enriched.size());
    for (int hj : enriched) scores.push_back(dec_.score.apply(g, g.cmult(h_out, hj)));
    int alpha = g.softmax(g.concat(scores));
    int t = g.matvec(mem_cols, alpha);
    int logits = dec_.out.apply(g, g.concat({h_out, t}));
    step_losses.push_back(g.pick_neg_log_softmax(logits, target[i]));
  }
  out.ce = g.addn(step_losses);
  out.total = cfg_.has_ntm() ? g.addn({out.ce, out.kl, out.recon}) : out.ce;
  return out;
}

QuoteModel::Encoded QuoteModel::encode(const EncodedInstance& inst) const {
  if (inst.history_ids.empty()) throw Error(ErrCat::Runtime, "instance has no history turns");
  Encoded out;
  std::vector<Vec> history;
  history.reserve(inst.history_ids.size());
  for (const auto& turn : inst.history_ids)
    history.push_back(encoder::encode_turn_raw(enc_, enc_.turn_layers, turn));
  Vec q = encoder::encode_turn_raw(enc_, enc_.layers_for_query(), inst.query_ids);

  if (cfg_.has_query_init()) {
    auto [c, alpha] = encoder::query_attention_raw(q, history);
    out.query_alpha = alpha;
    out.query_repr = encoder::fuse_query_raw(enc_, q, c);
  } else {
    out.query_repr = q;
  }
  std::vector<Vec> structure_in = history;
  structure_in.push_back(out.query_repr);
  out.memory = encoder::encode_structure_raw(enc_, structure_in);
  return out;
}

Vec QuoteModel::theta_mean(const EncodedInstance& inst) const {
  const ntm::NTMParams& p = ntm_params();
  ntm::Posterior post = ntm::ntm_encode(p, bow_vector(inst, cfg_.bow_vocab));
  return ntm::topic_mixture(p, post.mu);  // eps = 0 at inference
}

decoder::DecodeContext QuoteModel::decode_context(const Encoded& enc, const Vec* theta) const {
  const Vec* qt = cfg_.has_query_init() ? &enc.query_repr : nullptr;
  return decoder::make_decode_context(dec_, enc.memory, theta, qt);
}

std::vector<Mat> QuoteModel::snapshot() {
  std::vector<Mat> out;
  for (nn::Param* p : params_.all()) out.push_back(p->value);
  return out;
}

void QuoteModel::restore(const std::vector<Mat>& values) {
  auto ps = params_.all();
  if (ps.size() != values.size()) throw Error(ErrCat::Runtime, "snapshot size mismatch");
  for (size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
}

json model_config_json(const ModelConfig& c) {
  return json{{"variant", variant_name(c.variant)},
              {"gen_vocab", c.gen_vocab},
              {"bow_vocab", c.bow_vocab},
              {"embed_dim", c.embed_dim},
              {"hidden", c.hidden},
              {"enc_layers", c.enc_layers},
              {"ntm_hidden", c.ntm_hidden},
              {"topics", c.topics},
              {"tie_query_encoder", c.tie_query_encoder}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.variant = parse_variant(j.at("variant").get<std::string>());
  c.gen_vocab = j.at("gen_vocab").get<int>();
  c.bow_vocab = j.at("bow_vocab").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.ntm_hidden = j.at("ntm_hidden").get<int>();
  c.topics = j.at("topics").get<int>();
  c.tie_query_encoder = j.at("tie_query_encoder").get<bool>();
  return c;
}

void QuoteModel::save(const std::string& path, const json& train_config,
                      const json& vocab_info) {
  json j;
  j["format"] = "qgen-checkpoint-v1";
  j["model"] = model_config_json(cfg_);
  j["train_config"] = train_config;
  j["vocab"] = vocab_info;
  json params = json::object();
  for (nn::Param* p : params_.all()) {
    std::vector<double> data(static_cast<size_t>(p->value.size()));
    Eigen::Map<Mat>(data.data(), p->value.rows(), p->value.cols()) = p->value;
    params[p->name] = json{{"rows", p->value.rows()}, {"cols", p->value.cols()},
                           {"data", std::move(data)}};
  }
  j["params"] = std::move(params);
  io::atomic_write(path, j.dump() + "\n");
}

QuoteModel::Loaded QuoteModel::load(const std::string& path) {
  json j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded() || j.value("format", "") != std::string("qgen-checkpoint-v1"))
    throw Error(ErrCat::Format, "not a qgen checkpoint: " + path);
  Loaded out;
  ModelConfig cfg = model_config_from_json(j.at("model"));
  out.model = std::make_unique<QuoteModel>(cfg, /*seed=*/0);
  out.train_config = j.value("train_config", json::object());
  out.vocab_info = j.value("vocab", json::object());
  const json& params = j.at("params");
  for (nn::Param* p : out.model->params_.all()) {
    auto it = params.find(p->name);
    if (it == params.end())
      throw Error(ErrCat::Format, "checkpoint missing parameter: " + p->name);
    long rows = (*it).at("rows").get<long>();
    long cols = (*it).at("cols").get<long>();
    if (rows != p->value.rows() || cols != p->value.cols())
      throw Error(ErrCat::Format, "checkpoint shape mismatch for " + p->name);
    std::vector<double> data = (*it).at("data").get<std::vector<double>>();
    if (data.size() != static_cast<size_t>(p->value.size()))
      throw Error(ErrCat::Format, "checkpoint data size mismatch for " + p->name);
    p->value = Eigen::Map<Mat>(data.data(), rows, cols);
  }
  return out;
}

}  // namespace qgen::model
