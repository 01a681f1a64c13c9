// qgen: preprocess conversations, train quotation generation models, decode
// with beam search + quotation matching, evaluate, and inspect checkpoints.

#include "qgen/corpus.hpp"
#include "qgen/decoder.hpp"
#include "qgen/io.hpp"
#include "qgen/metrics.hpp"
#include "qgen/model.hpp"
#include "qgen/ntm.hpp"
#include "qgen/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

using namespace qgen;
using nlohmann::json;

namespace {

// Relative paths resolve under QGEN_ARTIFACT_ROOT when it is set.
std::string resolve(const std::string& path) {
  const char* root = std::getenv("QGEN_ARTIFACT_ROOT");
  if (root == nullptr || *root == '\0' || path.empty()) return path;
  std::filesystem::path p(path);
  if (p.is_absolute()) return path;
  return (std::filesystem::path(root) / p).string();
}

std::string join_dir(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

void write_manifest(const std::string& path, const std::string& command, const json& config,
                    uint64_t seed, const std::vector<std::pair<std::string, std::string>>& inputs,
                    const std::vector<std::pair<std::string, std::string>>& artifacts) {
  json m;
  m["command"] = command;
  m["config"] = config;
  m["seed"] = seed;
  json in = json::object();
  for (auto& [name, p] : inputs) in[name] = {{"path", p}, {"digest", io::file_digest(p)}};
  m["inputs"] = in;
  json out = json::object();
  for (auto& [name, p] : artifacts) out[name] = {{"path", p}, {"digest", io::file_digest(p)}};
  m["artifacts"] = out;
  io::atomic_write(path, m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessArgs {
  std::string input, stopwords, out_dir;
  int min_freq = 5;
  int max_gen_vocab = 50000;
  int max_bow_vocab = 10000;
  int max_turn_len = 150;
  int max_quote_len = 20;
  uint64_t seed = 13;
  double train_ratio = 0.8, dev_ratio = 0.1, test_ratio = 0.1;
  bool bow_binary = false;
  bool lenient = false;
};

int cmd_preprocess(const PreprocessArgs& a) {
  std::string input = resolve(a.input);
  std::string stop_path = resolve(a.stopwords);
  std::string out_dir = resolve(a.out_dir);

  auto stopwords = corpus::load_stopwords(stop_path);
  auto loaded = corpus::load_conversations(input, /*strict=*/!a.lenient);
  for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << "\n";

  auto qlist = corpus::build_quotation_list(loaded.conversations, a.min_freq);
  auto built = corpus::build_instances(loaded.conversations, qlist);
  auto parts = corpus::split(std::move(built.instances), a.train_ratio, a.dev_ratio,
                             a.test_ratio, a.seed);
  auto vocab = corpus::build_vocab(parts.train, a.max_gen_vocab, a.max_bow_vocab, stopwords);

  corpus::EncodeLimits limits;
  limits.max_turn_len = a.max_turn_len;
  limits.max_quote_len = a.max_quote_len;
  limits.bow_binary = a.bow_binary;

  json empty_bow = json::object();
  auto encode_all = [&](const std::vector<corpus::InstanceText>& xs, const std::string& name) {
    std::vector<corpus::EncodedInstance> out;
    int empties = 0;
    for (const auto& inst : xs) {
      auto e = corpus::encode_instance(inst, vocab, limits);
      if (e.bow.empty()) ++empties;
      out.push_back(std::move(e));
    }
    empty_bow[name] = empties;
    return out;
  };
  auto train_enc = encode_all(parts.train, "train");
  auto dev_enc = encode_all(parts.dev, "dev");
  auto test_enc = encode_all(parts.test, "test");

  corpus::save_vocab(vocab, join_dir(out_dir, "vocab.json"));
  corpus::save_quotes(qlist, join_dir(out_dir, "quotes.txt"));
  corpus::save_quote_freqs(qlist, join_dir(out_dir, "quote_freqs.json"));
  corpus::save_instances(train_enc, join_dir(out_dir, "train.jsonl"));
  corpus::save_instances(dev_enc, join_dir(out_dir, "dev.jsonl"));
  corpus::save_instances(test_enc, join_dir(out_dir, "test.jsonl"));

  // Stats mirroring the dataset-description table, computed over the
  // conversations that yielded at least one instance.
  size_t kept_convs = 0, turn_count = 0, turn_tokens = 0;
  std::set<std::string> conv_voc, quote_voc;
  for (const auto& conv : loaded.conversations) {
    bool kept = false;
    for (const auto& q : conv.quotes)
      if (qlist.find(q) >= 0) kept = true;
    if (!kept) continue;
    ++kept_convs;
    turn_count += conv.turns.size();
    for (const auto& t : conv.turns) {
      turn_tokens += t.size();
      for (const auto& tok : t) conv_voc.insert(tok);
    }
  }
  size_t quote_tokens = 0;
  for (const auto& q : qlist.quotes) {
    quote_tokens += q.size();
    for (const auto& tok : q) quote_voc.insert(tok);
  }

  json stats;
  stats["# of quotes"] = qlist.size();
  stats["Avg len of quotes"] =
      qlist.size() ? static_cast<double>(quote_tokens) / static_cast<double>(qlist.size()) : 0.0;
  stats["|Voc| of quotes"] = quote_voc.size();
  stats["# of convs"] = kept_convs;
  stats["Avg # of turns per conv"] =
      kept_convs ? static_cast<double>(turn_count) / static_cast<double>(kept_convs) : 0.0;
  stats["Avg len of turn per conv"] =
      turn_count ? static_cast<double>(turn_tokens) / static_cast<double>(turn_count) : 0.0;
  stats["|Voc| of convs"] = conv_voc.size();
  stats["instances"] = {{"train", train_enc.size()}, {"dev", dev_enc.size()},
                        {"test", test_enc.size()}};
  stats["gen_vocab"] = vocab.gen_size();
  stats["bow_vocab"] = vocab.bow_size();
  stats["skipped_conversations"] = built.skipped_conversations;
  stats["malformed_lines"] = loaded.warnings.size();
  stats["empty_bow_instances"] = empty_bow;
  io::atomic_write(join_dir(out_dir, "stats.json"), stats.dump(2) + "\n");

  json cfg{{"min_freq", a.min_freq},
           {"max_gen_vocab", a.max_gen_vocab},
           {"max_bow_vocab", a.max_bow_vocab},
           {"max_turn_len", a.max_turn_len},
           {"max_quote_len", a.max_quote_len},
           {"ratios", {a.train_ratio, a.dev_ratio, a.test_ratio}},
           {"bow_binary", a.bow_binary},
           {"lenient", a.lenient}};
  write_manifest(join_dir(out_dir, "manifest_preprocess.json"), "preprocess", cfg, a.seed,
                 {{"conversations", input}, {"stopwords", stop_path}},
                 {{"vocab", join_dir(out_dir, "vocab.json")},
                  {"quotes", join_dir(out_dir, "quotes.txt")},
                  {"quote_freqs", join_dir(out_dir, "quote_freqs.json")},
                  {"train", join_dir(out_dir, "train.jsonl")},
                  {"dev", join_dir(out_dir, "dev.jsonl")},
                  {"test", join_dir(out_dir, "test.jsonl")},
                  {"stats", join_dir(out_dir, "stats.json")}});

  std::cout << stats.dump(2) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config, data_dir, out_dir;
  std::string variant_override;
  int64_t seed_override = -1;
  int max_epochs_override = -1;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a) {
  std::string data = resolve(a.data_dir);
  std::string out_dir = resolve(a.out_dir);

  train::TrainConfig cfg =
      a.config.empty() ? train::TrainConfig{} : train::parse_train_config(resolve(a.config));
  if (!a.variant_override.empty()) cfg.variant = model::parse_variant(a.variant_override);
  if (a.seed_override >= 0) cfg.seed = static_cast<uint64_t>(a.seed_override);
  if (a.max_epochs_override > 0) cfg.max_epochs = a.max_epochs_override;

  auto vocab = corpus::load_vocab(join_dir(data, "vocab.json"));
  auto qlist = corpus::load_quotes(join_dir(data, "quotes.txt"));
  corpus::load_quote_freqs(qlist, join_dir(data, "quote_freqs.json"));
  auto train_set = corpus::load_instances(join_dir(data, "train.jsonl"));
  auto dev_set = corpus::load_instances(join_dir(data, "dev.jsonl"));

  for (const auto& inst : train_set)
    for (const auto& turn : inst.history_ids)
      for (int id : turn)
        if (id < 0 || id >= vocab.gen_size())
          throw Error(ErrCat::Config,
                      "instance ids exceed the vocabulary (config/vocab mismatch)");

  auto res = train::train(cfg, vocab, qlist, std::move(train_set), std::move(dev_set),
                          a.quiet ? nullptr : &std::cerr);

  json vocab_info{{"gen_size", vocab.gen_size()},
                  {"bow_size", vocab.bow_size()},
                  {"digest", io::file_digest(join_dir(data, "vocab.json"))}};
  std::string ckpt_path = join_dir(out_dir, "checkpoint.json");
  res.model->save(ckpt_path, train::train_config_json(cfg), vocab_info);

  std::ostringstream log;
  for (const auto& e : res.log.epochs) {
    json j{{"epoch", e.epoch},
           {"train_total", e.train_total},
           {"train_kl", e.train_kl},
           {"train_recon", e.train_recon},
           {"train_ce", e.train_ce},
           {"dev_loss", e.dev_loss},
           {"dev_p1", e.dev_p1}};
    log << j.dump() << "\n";
  }
  log << json{{"chosen_epoch", res.log.chosen_epoch},
              {"stopped_epoch", res.log.stopped_epoch},
              {"dropped_empty_bow", res.log.dropped_empty_bow}}
             .dump()
      << "\n";
  std::string log_path = join_dir(out_dir, "trainlog.jsonl");
  io::atomic_write(log_path, log.str());

  write_manifest(join_dir(out_dir, "manifest_train.json"), "train",
                 train::train_config_json(cfg), cfg.seed,
                 {{"vocab", join_dir(data, "vocab.json")},
                  {"quotes", join_dir(data, "quotes.txt")},
                  {"train", join_dir(data, "train.jsonl")},
                  {"dev", join_dir(data, "dev.jsonl")}},
                 {{"checkpoint", ckpt_path}, {"trainlog", log_path}});

  std::cout << "checkpoint " << ckpt_path << " (chosen epoch " << res.log.chosen_epoch << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// generate

struct GenerateArgs {
  std::string checkpoint, data_dir, split = "test", out;
  int beam = -1;
  int topk = 5;
  std::string attention_out;
};

std::string split_path(const std::string& data, const std::string& split) {
  if (split == "train" || split == "dev" || split == "test")
    return join_dir(data, split + ".jsonl");
  return resolve(split);
}

model::QuoteModel::Loaded load_checkpoint_checked(const std::string& ckpt_path,
                                                  const std::string& data,
                                                  const corpus::Vocabulary& vocab) {
  auto loaded = model::QuoteModel::load(ckpt_path);
  const json& info = loaded.vocab_info;
  if (info.value("gen_size", -1) != vocab.gen_size() ||
      info.value("bow_size", -1) != vocab.bow_size())
    throw Error(ErrCat::Config, "checkpoint/vocab mismatch (sizes differ)");
  std::string digest = io::file_digest(join_dir(data, "vocab.json"));
  if (info.value("digest", "") != digest)
    throw Error(ErrCat::Config, "checkpoint/vocab mismatch (digest differs)");
  return loaded;
}

int cmd_generate(const GenerateArgs& a) {
  std::string data = resolve(a.data_dir);
  auto vocab = corpus::load_vocab(join_dir(data, "vocab.json"));
  auto qlist = corpus::load_quotes(join_dir(data, "quotes.txt"));
  corpus::load_quote_freqs(qlist, join_dir(data, "quote_freqs.json"));
  auto loaded = load_checkpoint_checked(resolve(a.checkpoint), data, vocab);
  auto& m = *loaded.model;

  train::TrainConfig tcfg = train::train_config_from_json(loaded.train_config);
  int beam = a.beam > 0 ? a.beam : tcfg.beam_size;
  int max_len = tcfg.max_quote_len;
  if (a.topk < 1) throw Error(ErrCat::Usage, "--topk must be >= 1");

  std::string in_path = split_path(data, a.split);
  auto instances = corpus::load_instances(in_path);

  std::ostringstream out, att;
  for (const auto& inst : instances) {
    auto enc = m.encode(inst);
    ad::Vec theta;
    const ad::Vec* theta_ptr = nullptr;
    if (m.config().has_ntm()) {
      theta = m.theta_mean(inst);
      theta_ptr = &theta;
    }
    auto ctx = m.decode_context(enc, theta_ptr);
    auto cands = decoder::beam_search(m.dec(), ctx, beam, max_len);
    if (static_cast<int>(cands.size()) > a.topk) cands.resize(static_cast<size_t>(a.topk));
    auto matched = decoder::match_candidates(cands, vocab, qlist);

    json j;
    j["id"] = inst.id;
    json raw = json::array(), scores = json::array();
    for (const auto& c : cands) {
      std::string text;
      for (size_t i = 0; i < c.tokens.size(); ++i)
        text += (i ? " " : "") + vocab.gen_tokens[static_cast<size_t>(c.tokens[i])];
      raw.push_back(text);
      scores.push_back(c.score);
    }
    j["raw"] = raw;
    j["scores"] = scores;
    j["matched_ids"] = matched;
    out << j.dump() << "\n";

    if (!a.attention_out.empty()) {
      json ja;
      ja["id"] = inst.id;
      if (enc.query_alpha.size() > 0)
        ja["query_alpha"] = std::vector<double>(enc.query_alpha.data(),
                                                enc.query_alpha.data() + enc.query_alpha.size());
      json steps = json::array();
      ad::Vec h = ctx.h0;
      int prev = corpus::Vocabulary::kBos;
      for (int step = 0; step < max_len; ++step) {
        auto s = decoder::decode_step_raw(m.dec(), prev, h, ctx);
        int best = -1;
        for (int v = 0; v < s.log_p.size(); ++v) {
          if (v == corpus::Vocabulary::kPad || v == corpus::Vocabulary::kUnk ||
              v == corpus::Vocabulary::kBos)
            continue;
          if (best < 0 || s.log_p(v) > s.log_p(best)) best = v;
        }
        steps.push_back(
            {{"token", vocab.gen_tokens[static_cast<size_t>(best)]},
             {"alpha", std::vector<double>(s.alpha.data(), s.alpha.data() + s.alpha.size())}});
        if (best == corpus::Vocabulary::kEos) break;
        prev = best;
        h = s.h;
      }
      ja["steps"] = steps;
      att << ja.dump() << "\n";
    }
  }

  std::string out_path = resolve(a.out);
  io::atomic_write(out_path, out.str());
  std::vector<std::pair<std::string, std::string>> artifacts{{"predictions", out_path}};
  if (!a.attention_out.empty()) {
    std::string att_path = resolve(a.attention_out);
    io::atomic_write(att_path, att.str());
    artifacts.emplace_back("attention", att_path);
  }
  write_manifest(out_path + ".manifest.json", "generate",
                 json{{"beam", beam}, {"topk", a.topk}, {"split", a.split}}, tcfg.seed,
                 {{"checkpoint", resolve(a.checkpoint)}, {"split_file", in_path}}, artifacts);
  std::cout << "predictions " << out_path << " (" << instances.size() << " instances)\n";
  return 0;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateArgs {
  std::string pred, gold, quotes, out, per_instance;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::string pred = resolve(a.pred), gold = resolve(a.gold), quotes = resolve(a.quotes);
  std::string per_inst = a.per_instance.empty() ? "" : resolve(a.per_instance);
  auto report = metrics::evaluate_run(pred, gold, quotes, per_inst);
  std::cout << metrics::format_report(report);
  if (!a.out.empty()) {
    std::string out_path = resolve(a.out);
    io::atomic_write(out_path, metrics::report_json(report));
    write_manifest(out_path + ".manifest.json", "evaluate", json::object(), 0,
                   {{"pred", pred}, {"gold", gold}, {"quotes", quotes}}, {{"report", out_path}});
  }
  return 0;
}

// ---------------------------------------------------------------------------
// inspect

struct InspectArgs {
  std::string what;  // topics | attention
  std::string checkpoint, data_dir, split = "dev", out;
  int topk = 10;
};

int cmd_inspect(const InspectArgs& a) {
  std::string data = resolve(a.data_dir);
  auto vocab = corpus::load_vocab(join_dir(data, "vocab.json"));
  auto loaded = load_checkpoint_checked(resolve(a.checkpoint), data, vocab);
  auto& m = *loaded.model;

  if (a.what == "topics") {
    if (!m.config().has_ntm())
      throw Error(ErrCat::Usage, "variant has no NTM (checkpoint variant: " +
                                     std::string(model::variant_name(m.config().variant)) + ")");
    auto lists = ntm::top_topic_words(m.ntm_params(), a.topk);
    std::ostringstream out;
    for (size_t t = 0; t < lists.size(); ++t) {
      json j;
      j["topic"] = t;
      json words = json::array();
      std::cout << "Topic " << t + 1 << ":";
      for (int id : lists[t]) {
        words.push_back(vocab.bow_tokens[static_cast<size_t>(id)]);
        std::cout << " " << vocab.bow_tokens[static_cast<size_t>(id)];
      }
      std::cout << "\n";
      j["words"] = words;
      out << j.dump() << "\n";
    }
    if (!a.out.empty()) io::atomic_write(resolve(a.out), out.str());
    return 0;
  }
  if (a.what == "attention") {
    GenerateArgs g;
    g.checkpoint = a.checkpoint;
    g.data_dir = a.data_dir;
    g.split = a.split;
    g.topk = 1;
    g.beam = 1;
    g.attention_out = a.out.empty() ? "attention.jsonl" : a.out;
    g.out = g.attention_out + ".predictions.jsonl";
    return cmd_generate(g);
  }
  throw Error(ErrCat::Usage,
              "inspect expects \"topics\" or \"attention\", got \"" + a.what + "\"");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quotation generation for online conversations"};
  app.require_subcommand(1);

  PreprocessArgs pre;
  auto* p = app.add_subcommand("preprocess", "build vocabularies, quote list, and splits");
  p->add_option("--input", pre.input, "line-delimited conversation records")->required();
  p->add_option("--stopwords", pre.stopwords, "stopword list, one token per line")->required();
  p->add_option("--out", pre.out_dir, "output directory")->required();
  p->add_option("--min-freq", pre.min_freq, "minimum quote frequency");
  p->add_option("--max-gen-vocab", pre.max_gen_vocab, "generation vocabulary cap");
  p->add_option("--max-bow-vocab", pre.max_bow_vocab, "BoW vocabulary cap");
  p->add_option("--max-turn-len", pre.max_turn_len, "turn truncation length (150 or 200)");
  p->add_option("--max-quote-len", pre.max_quote_len, "quote truncation length");
  p->add_option("--seed", pre.seed, "split shuffle seed");
  p->add_option("--train-ratio", pre.train_ratio);
  p->add_option("--dev-ratio", pre.dev_ratio);
  p->add_option("--test-ratio", pre.test_ratio);
  p->add_flag("--bow-binary", pre.bow_binary, "binary BoW instead of counts");
  p->add_flag("--lenient", pre.lenient, "warn on malformed lines instead of failing");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "train a model variant");
  t->add_option("--config", tr.config, "flat key = value config file");
  t->add_option("--data", tr.data_dir, "preprocess output directory")->required();
  t->add_option("--out", tr.out_dir, "checkpoint output directory")->required();
  t->add_option("--variant", tr.variant_override, "ie_only | ie_qe | ie_qe_ntm");
  t->add_option("--seed", tr.seed_override, "override the config seed");
  t->add_option("--max-epochs", tr.max_epochs_override, "override the config epoch cap");
  t->add_flag("--quiet", tr.quiet, "suppress per-epoch progress");

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "beam-decode and match quotations");
  g->add_option("--checkpoint", gen.checkpoint)->required();
  g->add_option("--data", gen.data_dir, "preprocess output directory")->required();
  g->add_option("--split", gen.split, "train | dev | test | path to a .jsonl");
  g->add_option("--out", gen.out, "predictions output file")->required();
  g->add_option("--beam", gen.beam, "beam size (default: training config)");
  g->add_option("--topk", gen.topk, "candidates kept per instance");
  g->add_option("--dump-attention", gen.attention_out, "also dump per-step attention rows");

  EvaluateArgs ev;
  auto* e = app.add_subcommand("evaluate", "score predictions against gold");
  e->add_option("--pred", ev.pred, "generate output records")->required();
  e->add_option("--gold", ev.gold, "gold split .jsonl")->required();
  e->add_option("--quotes", ev.quotes, "quotation list file")->required();
  e->add_option("--out", ev.out, "machine-readable report path");
  e->add_option("--per-instance", ev.per_instance, "per-record scores path");

  InspectArgs ins;
  auto* i = app.add_subcommand("inspect", "inspect a trained checkpoint");
  i->add_option("what", ins.what, "topics | attention")->required();
  i->add_option("--checkpoint", ins.checkpoint)->required();
  i->add_option("--data", ins.data_dir, "preprocess output directory")->required();
  i->add_option("--split", ins.split, "split for attention dumps");
  i->add_option("--out", ins.out, "output file");
  i->add_option("--k", ins.topk, "words per topic");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) return app.exit(ex);  // --help
    std::cerr << "error: usage: " << ex.what() << "\n";
    return err_cat_exit_code(ErrCat::Usage);
  }

  try {
    if (p->parsed()) return cmd_preprocess(pre);
    if (t->parsed()) return cmd_train(tr);
    if (g->parsed()) return cmd_generate(gen);
    if (e->parsed()) return cmd_evaluate(ev);
    if (i->parsed()) return cmd_inspect(ins);
  } catch (const Error& ex) {
    std::cerr << "error: " << err_cat_name(ex.category()) << ": " << ex.what() << "\n";
    return err_cat_exit_code(ex.category());
  } catch (const std::exception& ex) {
    std::cerr << "error: runtime: " << ex.what() << "\n";
    return err_cat_exit_code(ErrCat::Runtime);
  }
  return 0;
}
