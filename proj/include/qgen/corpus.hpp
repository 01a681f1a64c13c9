#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace qgen::corpus {

using Tokens = std::vector<std::string>;

struct Conversation {
  std::string id;
  std::vector<Tokens> turns;   // chronological; last is the query turn
  std::vector<Tokens> quotes;  // gold quotation(s); one instance built per quote
};

struct LoadResult {
  std::vector<Conversation> conversations;
  std::vector<std::string> warnings;  // non-strict mode only
};

struct QuotationList {
  std::vector<Tokens> quotes;
  std::vector<int> freq;  // corpus occurrence count per quote

  int find(const Tokens& q) const;
  size_t size() const { return quotes.size(); }
};

struct Vocabulary {
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static const char* special_name(int id);

  std::vector<std::string> gen_tokens;  // id -> token, ids 0..3 are specials
  std::vector<std::string> bow_tokens;  // id -> token, no specials
  std::unordered_map<std::string, int> gen_ids;
  std::unordered_map<std::string, int> bow_ids;

  int gen_id(const std::string& tok) const;  // UNK for out-of-vocab
  int bow_id(const std::string& tok) const;  // -1 for out-of-vocab
  int gen_size() const { return static_cast<int>(gen_tokens.size()); }
  int bow_size() const { return static_cast<int>(bow_tokens.size()); }
};

// Token-level instance, before vocabulary encoding.
struct InstanceText {
  std::string id;
  std::vector<Tokens> history;  // m-1 turns
  Tokens query;                 // query turn with the gold quote stripped
  Tokens target;                // gold quote tokens
  int quotation_id = -1;
};

struct EncodedInstance {
  std::string id;
  std::vector<std::vector<int>> history_ids;  // per turn, truncated, no padding
  std::vector<int> query_ids;
  std::vector<std::pair<int, int>> bow;  // (bow id, count), sorted by id
  std::vector<int> target_ids;           // BOS ... EOS
  int quotation_id = -1;
};

struct EncodeLimits {
  int max_turn_len = 150;
  int max_quote_len = 20;
  bool bow_binary = false;
};

// --- operations ---

// Line-delimited JSON records {"id", "turns": [...], "quotation": str|[str],
// "quotation_id"?}. strict=false collects per-line warnings instead of
// throwing on malformed records.
LoadResult load_conversations(const std::string& path, bool strict = true);

QuotationList build_quotation_list(const std::vector<Conversation>& convs, int min_freq = 5);

struct BuildInstancesResult {
  std::vector<InstanceText> instances;
  int skipped_conversations = 0;  // conversations with no surviving quote
};
BuildInstancesResult build_instances(const std::vector<Conversation>& convs,
                                     const QuotationList& qlist);

Vocabulary build_vocab(const std::vector<InstanceText>& train, int max_gen_vocab,
                       int max_bow_vocab, const std::unordered_set<std::string>& stopwords);

struct Split {
  std::vector<InstanceText> train, dev, test;
};
Split split(std::vector<InstanceText> instances, double train_ratio, double dev_ratio,
            double test_ratio, uint64_t seed);

EncodedInstance encode_instance(const InstanceText& inst, const Vocabulary& vocab,
                                const EncodeLimits& limits);

// --- artifact I/O ---

std::unordered_set<std::string> load_stopwords(const std::string& path);

void save_vocab(const Vocabulary& v, const std::string& path);
Vocabulary load_vocab(const std::string& path);

void save_quotes(const QuotationList& q, const std::string& path);
QuotationList load_quotes(const std::string& path);  // freq not stored in file
void save_quote_freqs(const QuotationList& q, const std::string& path);
void load_quote_freqs(QuotationList& q, const std::string& path);

void save_instances(const std::vector<EncodedInstance>& xs, const std::string& path);
std::vector<EncodedInstance> load_instances(const std::string& path);

}  // namespace qgen::corpus
