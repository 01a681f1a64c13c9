#include "qgen/train.hpp"

#include "qgen/io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <random>

namespace qgen::train {

using corpus::EncodedInstance;
using corpus::QuotationList;
using corpus::Vocabulary;
using model::QuoteModel;
using nlohmann::json;

model::ModelConfig TrainConfig::model_config(int gen_vocab, int bow_vocab) const {
  model::ModelConfig mc;
  mc.variant = variant;
  mc.gen_vocab = gen_vocab;
  mc.bow_vocab = bow_vocab;
  mc.embed_dim = embed_dim;
  mc.hidden = hidden;
  mc.enc_layers = enc_layers;
  mc.ntm_hidden = ntm_hidden;
  mc.topics = topics;
  mc.tie_query_encoder = tie_query_encoder;
  return mc;
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw Error(ErrCat::Config, "config key " + key + ": expected a boolean, got \"" + v + "\"");
}

}  // namespace

TrainConfig parse_train_config(const std::string& path) {
  TrainConfig c;
  auto lines = io::read_lines(path);
  for (size_t ln = 0; ln < lines.size(); ++ln) {
    std::string line = lines[ln];
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto toks = io::split_ws(line);
    if (toks.empty()) continue;
    // accept "key = value" and "key value"
    std::string key = toks[0];
    std::string value;
    if (toks.size() == 3 && toks[1] == "=") value = toks[2];
    else if (toks.size() == 2) value = toks[1];
    else throw Error(ErrCat::Config, path + ": line " + std::to_string(ln + 1) +
                                         ": expected \"key = value\"");
    try {
      if (key == "variant") c.variant = model::parse_variant(value);
      else if (key == "learning_rate") c.learning_rate = std::stod(value);
      else if (key == "batch_size") c.batch_size = std::stoi(value);
      else if (key == "max_epochs") c.max_epochs = std::stoi(value);
      else if (key == "patience") c.patience = std::stoi(value);
      else if (key == "dropout") c.dropout = std::stod(value);
      else if (key == "beam_size") c.beam_size = std::stoi(value);
      else if (key == "max_turn_len") c.max_turn_len = std::stoi(value);
      else if (key == "max_quote_len") c.max_quote_len = std::stoi(value);
      else if (key == "topics") c.topics = std::stoi(value);
      else if (key == "seed") c.seed = std::stoull(value);
      else if (key == "embed_dim") c.embed_dim = std::stoi(value);
      else if (key == "hidden_dim") c.hidden = std::stoi(value);
      else if (key == "enc_layers") c.enc_layers = std::stoi(value);
      else if (key == "ntm_hidden") c.ntm_hidden = std::stoi(value);
      else if (key == "kl_warmup_epochs") c.kl_warmup_epochs = std::stoi(value);
      else if (key == "theta_sample") c.theta_sample = parse_bool(value, key);
      else if (key == "tie_query_encoder") c.tie_query_encoder = parse_bool(value, key);
      else throw Error(ErrCat::Config, path + ": unknown config key \"" + key + "\"");
    } catch (const std::invalid_argument&) {
      throw Error(ErrCat::Config, path + ": bad value for " + key + ": \"" + value + "\"");
    }
  }
  if (c.learning_rate <= 0) throw Error(ErrCat::Config, "learning_rate must be > 0");
  if (c.patience < 1) throw Error(ErrCat::Config, "patience must be >= 1");
  if (c.batch_size < 1) throw Error(ErrCat::Config, "batch_size must be >= 1");
  if (c.dropout < 0 || c.dropout >= 1) throw Error(ErrCat::Config, "dropout must be in [0, 1)");
  return c;
}

json train_config_json(const TrainConfig& c) {
  return json{{"variant", model::variant_name(c.variant)},
              {"learning_rate", c.learning_rate},
              {"batch_size", c.batch_size},
              {"max_epochs", c.max_epochs},
              {"patience", c.patience},
              {"dropout", c.dropout},
              {"beam_size", c.beam_size},
              {"max_turn_len", c.max_turn_len},
              {"max_quote_len", c.max_quote_len},
              {"topics", c.topics},
              {"seed", c.seed},
              {"embed_dim", c.embed_dim},
              {"hidden_dim", c.hidden},
              {"enc_layers", c.enc_layers},
              {"ntm_hidden", c.ntm_hidden},
              {"kl_warmup_epochs", c.kl_warmup_epochs},
              {"theta_sample", c.theta_sample},
              {"tie_query_encoder", c.tie_query_encoder}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.variant = model::parse_variant(j.at("variant").get<std::string>());
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.max_epochs = j.at("max_epochs").get<int>();
  c.patience = j.at("patience").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.beam_size = j.at("beam_size").get<int>();
  c.max_turn_len = j.at("max_turn_len").get<int>();
  c.max_quote_len = j.at("max_quote_len").get<int>();
  c.topics = j.at("topics").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.hidden = j.at("hidden_dim").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.ntm_hidden = j.at("ntm_hidden").get<int>();
  c.kl_warmup_epochs = j.at("kl_warmup_epochs").get<int>();
  c.theta_sample = j.at("theta_sample").get<bool>();
  c.tie_query_encoder = j.at("tie_query_encoder").get<bool>();
  return c;
}

BatchTerms forward_loss(QuoteModel& m, ad::Graph& g,
                        const std::vector<const EncodedInstance*>& batch,
                        const std::vector<ad::Vec>* eps, bool training, double dropout,
                        std::mt19937_64* dropout_rng, double kl_weight, int* total_node) {
  if (batch.empty()) throw Error(ErrCat::Runtime, "forward_loss: empty batch");
  std::vector<int> totals, ces, kls, recons;
  for (size_t i = 0; i < batch.size(); ++i) {
    const ad::Vec* e = eps != nullptr ? &(*eps)[i] : nullptr;
    auto nodes = m.build_loss(g, *batch[i], e, training, dropout, dropout_rng, kl_weight);
    totals.push_back(nodes.total);
    ces.push_back(nodes.ce);
    if (nodes.kl >= 0) kls.push_back(nodes.kl);
    if (nodes.recon >= 0) recons.push_back(nodes.recon);
  }
  int total = g.addn(totals);
  if (total_node != nullptr) *total_node = total;
  BatchTerms t;
  t.total = g.scalar(total);
  t.ce = g.scalar(g.addn(ces));
  if (!kls.empty()) t.kl = g.scalar(g.addn(kls));
  if (!recons.empty()) t.recon = g.scalar(g.addn(recons));
  return t;
}

double dev_precision_at_1(QuoteModel& m, const std::vector<EncodedInstance>& set,
                          const Vocabulary& vocab, const QuotationList& qlist, int beam_size,
                          int max_len) {
  if (set.empty()) return 0.0;
  int hits = 0;
  for (const auto& inst : set) {
    auto enc = m.encode(inst);
    ad::Vec theta;
    const ad::Vec* theta_ptr = nullptr;
    if (m.config().has_ntm()) {
      theta = m.theta_mean(inst);
      theta_ptr = &theta;
    }
    auto ctx = m.decode_context(enc, theta_ptr);
    auto cands = decoder::beam_search(m.dec(), ctx, beam_size, max_len);
    auto matched = decoder::match_candidates(cands, vocab, qlist);
    if (!matched.empty() && matched.front() == inst.quotation_id) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(set.size());
}

TrainResult train(const TrainConfig& cfg, const Vocabulary& vocab, const QuotationList& qlist,
                  std::vector<EncodedInstance> train_set, std::vector<EncodedInstance> dev_set,
                  std::ostream* progress) {
  TrainResult res;
  res.log.dropped_empty_bow = 0;
  if (cfg.variant == model::Variant::IeQeNtm) {
    // The NTM cannot encode an empty context BoW; such instances are unusable
    // under the full model.
    auto head = [&](std::vector<EncodedInstance>& xs) {
      size_t before = xs.size();
      xs.erase(std::remove_if(xs.begin(), xs.end(),
                              [](const EncodedInstance& e) { return e.bow.empty(); }),
               xs.end());
      return static_cast<int>(before - xs.size());
    };
    res.log.dropped_empty_bow = head(train_set) + head(dev_set);
  }
  if (train_set.empty() || dev_set.empty())
    throw Error(ErrCat::Runtime, "training requires nonempty train and dev sets");

  auto m = std::make_unique<QuoteModel>(cfg.model_config(vocab.gen_size(), vocab.bow_size()),
                                        cfg.seed);
  nn::Adam opt;
  opt.lr = cfg.learning_rate;

  std::mt19937_64 shuffle_rng(cfg.seed * 0x9e3779b97f4a7c15ull + 1);
  std::mt19937_64 eps_rng(cfg.seed * 0x9e3779b97f4a7c15ull + 2);
  std::mt19937_64 dropout_rng(cfg.seed * 0x9e3779b97f4a7c15ull + 3);
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<size_t> order(train_set.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_dev = std::numeric_limits<double>::infinity();
  std::vector<ad::Mat> best_params = m->snapshot();
  int best_epoch = 0;
  int bad_epochs = 0;
  long batch_counter = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double kl_weight = 1.0;
    if (cfg.kl_warmup_epochs > 0)
      kl_weight = std::min(1.0, static_cast<double>(epoch) /
                                    static_cast<double>(cfg.kl_warmup_epochs));

    EpochLog log;
    log.epoch = epoch;
    int batches = 0;
    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
      std::vector<const EncodedInstance*> batch;
      std::vector<ad::Vec> eps;
      for (size_t i = at; i < end; ++i) {
        batch.push_back(&train_set[order[i]]);
        if (cfg.variant == model::Variant::IeQeNtm) {
          ad::Vec e = ad::Vec::Zero(cfg.topics);
          if (cfg.theta_sample)
            for (int k = 0; k < cfg.topics; ++k) e(k) = normal(eps_rng);
          eps.push_back(std::move(e));
        }
      }
      ++batch_counter;
      ad::Graph g;
      int total_node = -1;
      BatchTerms terms =
          forward_loss(*m, g, batch, eps.empty() ? nullptr : &eps, /*training=*/true,
                       cfg.dropout, &dropout_rng, kl_weight, &total_node);
      if (!std::isfinite(terms.total))
        throw Error(ErrCat::Runtime,
                    "non-finite training loss (batch " + std::to_string(batch_counter) + ")");
      m->params().zero_grad();
      g.backward(total_node);
      opt.step(m->params());
      log.train_total += terms.total;
      log.train_kl += terms.kl;
      log.train_recon += terms.recon;
      log.train_ce += terms.ce;
      ++batches;
    }
    // sums within a batch, averaged across batches
    log.train_total /= batches;
    log.train_kl /= batches;
    log.train_recon /= batches;
    log.train_ce /= batches;

    double dev_total = 0;
    for (const auto& inst : dev_set) {
      ad::Graph g;
      auto nodes = m->build_loss(g, inst, /*eps=*/nullptr, /*training=*/false, 0.0, nullptr);
      dev_total += g.scalar(nodes.total);
    }
    log.dev_loss = dev_total / static_cast<double>(dev_set.size());
    log.dev_p1 =
        dev_precision_at_1(*m, dev_set, vocab, qlist, cfg.beam_size, cfg.max_quote_len);
    res.log.epochs.push_back(log);
    if (progress != nullptr)
      *progress << "epoch " << epoch << " train " << log.train_total << " dev " << log.dev_loss
                << " devP@1 " << log.dev_p1 << "\n";

    if (log.dev_loss < best_dev) {
      best_dev = log.dev_loss;
      best_params = m->snapshot();
      best_epoch = epoch;
      bad_epochs = 0;
    } else {
      ++bad_epochs;
      if (bad_epochs >= cfg.patience) {
        res.log.stopped_epoch = epoch;
        break;
      }
    }
    res.log.stopped_epoch = epoch;
  }

  m->restore(best_params);
  res.log.chosen_epoch = best_epoch;
  res.model = std::move(m);
  return res;
}

}  // namespace qgen::train
