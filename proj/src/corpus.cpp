#include "qgen/corpus.hpp"

#include "qgen/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

namespace qgen::corpus {

using nlohmann::json;

namespace {

const char* kSpecialNames[] = {"<pad>", "<unk>", "<bos>", "<eos>"};

bool is_special_token(const std::string& tok) {
  for (const char* s : kSpecialNames)
    if (tok == s) return true;
  return false;
}

bool is_punct_token(const std::string& tok) {
  if (tok.empty()) return false;
  for (unsigned char c : tok)
    if (!std::ispunct(c)) return false;
  return true;
}

// Parses one conversation record; returns an error message or empty on success.
std::string parse_record(const std::string& line, size_t lineno, Conversation* out) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return "invalid JSON object";
  if (!j.contains("turns")) return "record missing \"turns\"";
  if (!j.contains("quotation")) return "record missing \"quotation\"";
  if (!j["turns"].is_array()) return "\"turns\" must be an array of strings";
  Conversation conv;
  conv.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>()
                                                    : "line" + std::to_string(lineno);
  for (const auto& t : j["turns"]) {
    if (!t.is_string()) return "\"turns\" must be an array of strings";
    Tokens toks = io::split_ws(t.get<std::string>());
    if (toks.empty()) return "empty turn";
    conv.turns.push_back(std::move(toks));
  }
  if (conv.turns.empty()) return "empty turn list";
  if (conv.turns.size() < 2) return "conversation needs at least 2 turns";
  auto add_quote = [&](const json& q) -> std::string {
    if (!q.is_string()) return "\"quotation\" must be a string or array of strings";
    Tokens toks = io::split_ws(q.get<std::string>());
    if (toks.empty()) return "empty quotation";
    for (const auto& existing : conv.quotes)
      if (existing == toks) return "";  // duplicate within record, collapse
    conv.quotes.push_back(std::move(toks));
    return "";
  };
  const json& q = j["quotation"];
  if (q.is_array()) {
    for (const auto& item : q) {
      std::string err = add_quote(item);
      if (!err.empty()) return err;
    }
  } else {
    std::string err = add_quote(q);
    if (!err.empty()) return err;
  }
  if (conv.quotes.empty()) return "empty quotation";
  *out = std::move(conv);
  return "";
}

}  // namespace

const char* Vocabulary::special_name(int id) { return kSpecialNames[id]; }

int QuotationList::find(const Tokens& q) const {
  for (size_t i = 0; i < quotes.size(); ++i)
    if (quotes[i] == q) return static_cast<int>(i);
  return -1;
}

int Vocabulary::gen_id(const std::string& tok) const {
  auto it = gen_ids.find(tok);
  return it == gen_ids.end() ? kUnk : it->second;
}

int Vocabulary::bow_id(const std::string& tok) const {
  auto it = bow_ids.find(tok);
  return it == bow_ids.end() ? -1 : it->second;
}

LoadResult load_conversations(const std::string& path, bool strict) {
  LoadResult res;
  auto lines = io::read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    Conversation conv;
    std::string err = parse_record(lines[i], i + 1, &conv);
    if (!err.empty()) {
      std::string msg = path + ": line " + std::to_string(i + 1) + ": " + err;
      if (strict) throw Error(ErrCat::Format, msg);
      res.warnings.push_back(msg);
      continue;
    }
    res.conversations.push_back(std::move(conv));
  }
  return res;
}

QuotationList build_quotation_list(const std::vector<Conversation>& convs, int min_freq) {
  if (min_freq < 1) throw Error(ErrCat::Config, "min_freq must be >= 1");
  QuotationList all;
  for (const auto& conv : convs) {
    for (const auto& q : conv.quotes) {
      int idx = all.find(q);
      if (idx < 0) {
        all.quotes.push_back(q);
        all.freq.push_back(1);
      } else {
        ++all.freq[static_cast<size_t>(idx)];
      }
    }
  }
  QuotationList kept;
  for (size_t i = 0; i < all.quotes.size(); ++i) {
    if (all.freq[i] >= min_freq) {
      kept.quotes.push_back(all.quotes[i]);
      kept.freq.push_back(all.freq[i]);
    }
  }
  if (kept.quotes.empty())
    throw Error(ErrCat::Runtime,
                "quotation list empty after min_freq=" + std::to_string(min_freq) + " filtering");
  return kept;
}

BuildInstancesResult build_instances(const std::vector<Conversation>& convs,
                                     const QuotationList& qlist) {
  BuildInstancesResult res;
  for (const auto& conv : convs) {
    bool any = false;
    for (size_t k = 0; k < conv.quotes.size(); ++k) {
      const Tokens& quote = conv.quotes[k];
      int qid = qlist.find(quote);
      if (qid < 0) continue;
      any = true;
      InstanceText inst;
      inst.id = conv.id + "#" + std::to_string(k);
      inst.history.assign(conv.turns.begin(), conv.turns.end() - 1);
      const Tokens& query_turn = conv.turns.back();
      auto it = std::search(query_turn.begin(), query_turn.end(), quote.begin(), quote.end());
      if (it != query_turn.end()) {
        inst.query.assign(query_turn.begin(), it);  // pre-quote content only
      } else {
        inst.query = query_turn;
      }
      if (inst.query.empty()) inst.query.push_back(Vocabulary::special_name(Vocabulary::kUnk));
      inst.target = quote;
      inst.quotation_id = qid;
      res.instances.push_back(std::move(inst));
    }
    if (!any) ++res.skipped_conversations;
  }
  return res;
}

Vocabulary build_vocab(const std::vector<InstanceText>& train, int max_gen_vocab,
                       int max_bow_vocab, const std::unordered_set<std::string>& stopwords) {
  if (train.empty()) throw Error(ErrCat::Runtime, "cannot build vocabulary: empty training set");
  std::map<std::string, long> gen_counts, bow_counts;
  auto count_context = [&](const Tokens& toks) {
    for (const auto& t : toks) {
      if (is_special_token(t)) continue;
      ++gen_counts[t];
      if (!stopwords.count(t) && !is_punct_token(t)) ++bow_counts[t];
    }
  };
  for (const auto& inst : train) {
    for (const auto& turn : inst.history) count_context(turn);
    count_context(inst.query);
    for (const auto& t : inst.target)
      if (!is_special_token(t)) ++gen_counts[t];
  }

  auto ranked = [](const std::map<std::string, long>& counts, int cap) {
    std::vector<std::pair<std::string, long>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    if (cap >= 0 && static_cast<int>(items.size()) > cap) items.resize(static_cast<size_t>(cap));
    std::vector<std::string> out;
    out.reserve(items.size());
    for (auto& [tok, cnt] : items) out.push_back(tok);
    return out;
  };

  Vocabulary v;
  for (const char* s : kSpecialNames) v.gen_tokens.push_back(s);
  for (auto& tok : ranked(gen_counts, max_gen_vocab)) v.gen_tokens.push_back(tok);
  v.bow_tokens = ranked(bow_counts, max_bow_vocab);
  for (size_t i = 0; i < v.gen_tokens.size(); ++i) v.gen_ids[v.gen_tokens[i]] = static_cast<int>(i);
  for (size_t i = 0; i < v.bow_tokens.size(); ++i) v.bow_ids[v.bow_tokens[i]] = static_cast<int>(i);
  return v;
}

Split split(std::vector<InstanceText> instances, double train_ratio, double dev_ratio,
            double test_ratio, uint64_t seed) {
  double s = train_ratio + dev_ratio + test_ratio;
  if (std::abs(s - 1.0) > 1e-9) throw Error(ErrCat::Config, "split ratios must sum to 1");
  size_t n = instances.size();
  if (n < 3) throw Error(ErrCat::Runtime, "need at least 3 instances to split");
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  size_t n_train = static_cast<size_t>(train_ratio * static_cast<double>(n));
  size_t n_dev = static_cast<size_t>(dev_ratio * static_cast<double>(n));
  size_t n_test = n - n_train - n_dev;
  // Every part gets at least one instance; steal from the largest otherwise.
  auto largest = [&]() -> size_t* {
    size_t* best = &n_train;
    if (n_dev > *best) best = &n_dev;
    if (n_test > *best) best = &n_test;
    return best;
  };
  for (size_t* part : {&n_train, &n_dev, &n_test}) {
    if (*part == 0) {
      --*largest();
      ++*part;
    }
  }

  Split out;
  size_t at = 0;
  for (size_t i = 0; i < n_train; ++i) out.train.push_back(std::move(instances[order[at++]]));
  for (size_t i = 0; i < n_dev; ++i) out.dev.push_back(std::move(instances[order[at++]]));
  for (size_t i = 0; i < n_test; ++i) out.test.push_back(std::move(instances[order[at++]]));
  return out;
}

EncodedInstance encode_instance(const InstanceText& inst, const Vocabulary& vocab,
                                const EncodeLimits& limits) {
  EncodedInstance e;
  e.id = inst.id;
  e.quotation_id = inst.quotation_id;
  auto encode_turn = [&](const Tokens& toks) {
    std::vector<int> ids;
    size_t len = std::min(toks.size(), static_cast<size_t>(limits.max_turn_len));
    ids.reserve(len);
    for (size_t i = 0; i < len; ++i) ids.push_back(vocab.gen_id(toks[i]));
    return ids;
  };
  for (const auto& turn : inst.history) e.history_ids.push_back(encode_turn(turn));
  e.query_ids = encode_turn(inst.query);

  e.target_ids.push_back(Vocabulary::kBos);
  size_t tlen = std::min(inst.target.size(), static_cast<size_t>(limits.max_quote_len));
  for (size_t i = 0; i < tlen; ++i) e.target_ids.push_back(vocab.gen_id(inst.target[i]));
  e.target_ids.push_back(Vocabulary::kEos);

  // BoW over the full (untruncated) context: history plus stripped query.
  std::map<int, int> counts;
  auto count_bow = [&](const Tokens& toks) {
    for (const auto& t : toks) {
      int id = vocab.bow_id(t);
      if (id >= 0) ++counts[id];
    }
  };
  for (const auto& turn : inst.history) count_bow(turn);
  count_bow(inst.query);
  for (auto& [id, c] : counts) e.bow.emplace_back(id, limits.bow_binary ? 1 : c);
  return e;
}

std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::unordered_set<std::string> out;
  for (const auto& line : io::read_lines(path)) {
    auto toks = io::split_ws(line);
    for (auto& t : toks) out.insert(t);
  }
  return out;
}

void save_vocab(const Vocabulary& v, const std::string& path) {
  json j;
  j["gen"] = v.gen_tokens;
  j["bow"] = v.bow_tokens;
  io::atomic_write(path, j.dump(2) + "\n");
}

Vocabulary load_vocab(const std::string& path) {
  json j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.contains("gen") || !j.contains("bow"))
    throw Error(ErrCat::Format, "invalid vocabulary file: " + path);
  Vocabulary v;
  v.gen_tokens = j["gen"].get<std::vector<std::string>>();
  v.bow_tokens = j["bow"].get<std::vector<std::string>>();
  if (v.gen_tokens.size() < 4) throw Error(ErrCat::Format, "vocabulary missing special tokens");
  for (int i = 0; i < 4; ++i)
    if (v.gen_tokens[static_cast<size_t>(i)] != kSpecialNames[i])
      throw Error(ErrCat::Format, "vocabulary special tokens corrupted");
  for (size_t i = 0; i < v.gen_tokens.size(); ++i) v.gen_ids[v.gen_tokens[i]] = static_cast<int>(i);
  for (size_t i = 0; i < v.bow_tokens.size(); ++i) v.bow_ids[v.bow_tokens[i]] = static_cast<int>(i);
  return v;
}

void save_quotes(const QuotationList& q, const std::string& path) {
  std::ostringstream ss;
  for (const auto& quote : q.quotes) {
    for (size_t i = 0; i < quote.size(); ++i) {
      if (i) ss << ' ';
      ss << quote[i];
    }
    ss << '\n';
  }
  io::atomic_write(path, ss.str());
}

QuotationList load_quotes(const std::string& path) {
  QuotationList q;
  for (const auto& line : io::read_lines(path)) {
    Tokens toks = io::split_ws(line);
    if (toks.empty()) throw Error(ErrCat::Format, "empty quote line in " + path);
    q.quotes.push_back(std::move(toks));
    q.freq.push_back(0);
  }
  if (q.quotes.empty()) throw Error(ErrCat::Format, "quotation list file is empty: " + path);
  return q;
}

void save_quote_freqs(const QuotationList& q, const std::string& path) {
  io::atomic_write(path, json(q.freq).dump() + "\n");
}

void load_quote_freqs(QuotationList& q, const std::string& path) {
  json j = json::parse(io::read_file(path), nullptr, false);
  if (j.is_discarded() || !j.is_array() || j.size() != q.quotes.size())
    throw Error(ErrCat::Format, "quote frequency file does not match quotes: " + path);
  q.freq = j.get<std::vector<int>>();
}

void save_instances(const std::vector<EncodedInstance>& xs, const std::string& path) {
  std::ostringstream ss;
  for (const auto& e : xs) {
    json j;
    j["id"] = e.id;
    j["history_ids"] = e.history_ids;
    j["query_ids"] = e.query_ids;
    json bow = json::array();
    for (auto& [id, c] : e.bow) bow.push_back({id, c});
    j["bow"] = bow;
    j["target_ids"] = e.target_ids;
    j["quotation_id"] = e.quotation_id;
    ss << j.dump() << '\n';
  }
  io::atomic_write(path, ss.str());
}

std::vector<EncodedInstance> load_instances(const std::string& path) {
  std::vector<EncodedInstance> out;
  auto lines = io::read_lines(path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded())
      throw Error(ErrCat::Format, path + ": line " + std::to_string(i + 1) + ": invalid JSON");
    EncodedInstance e;
    try {
      e.id = j.at("id").get<std::string>();
      e.history_ids = j.at("history_ids").get<std::vector<std::vector<int>>>();
      e.query_ids = j.at("query_ids").get<std::vector<int>>();
      for (const auto& pair : j.at("bow"))
        e.bow.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
      e.target_ids = j.at("target_ids").get<std::vector<int>>();
      e.quotation_id = j.at("quotation_id").get<int>();
    } catch (const json::exception& ex) {
      throw Error(ErrCat::Format,
                  path + ": line " + std::to_string(i + 1) + ": " + std::string(ex.what()));
    }
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace qgen::corpus
