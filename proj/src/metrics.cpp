#include "qgen/metrics.hpp"

#include "qgen/corpus.hpp"
#include "qgen/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace qgen::metrics {

using nlohmann::json;

namespace {

void require_nonempty(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw Error(ErrCat::Runtime, "no evaluation records");
}

std::map<Tokens, int> ngram_counts(const Tokens& toks, size_t n) {
  std::map<Tokens, int> counts;
  if (toks.size() < n) return counts;
  for (size_t i = 0; i + n <= toks.size(); ++i)
    ++counts[Tokens(toks.begin() + static_cast<long>(i), toks.begin() + static_cast<long>(i + n))];
  return counts;
}

size_t lcs_len(const Tokens& a, const Tokens& b) {
  std::vector<size_t> row(b.size() + 1, 0);
  for (size_t i = 1; i <= a.size(); ++i) {
    size_t diag = 0;
    for (size_t j = 1; j <= b.size(); ++j) {
      size_t tmp = row[j];
      row[j] = a[i - 1] == b[j - 1] ? diag + 1 : std::max(row[j], row[j - 1]);
      diag = tmp;
    }
  }
  return row[b.size()];
}

}  // namespace

double precision_at_1(const std::vector<EvalRecord>& records) {
  require_nonempty(records);
  size_t hits = 0;
  for (const auto& r : records)
    if (!r.matched_ids.empty() && r.matched_ids.front() == r.gold_id) ++hits;
  return static_cast<double>(hits) / static_cast<double>(records.size());
}

double map_at_5(const std::vector<EvalRecord>& records) {
  require_nonempty(records);
  double total = 0;
  for (const auto& r : records) {
    size_t top = std::min<size_t>(5, r.matched_ids.size());
    for (size_t rank = 0; rank < top; ++rank) {
      if (r.matched_ids[rank] == r.gold_id) {
        total += 1.0 / static_cast<double>(rank + 1);
        break;
      }
    }
  }
  return total / static_cast<double>(records.size());
}

double rouge1_f1(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  auto cc = ngram_counts(cand, 1);
  auto rc = ngram_counts(ref, 1);
  long overlap = 0;
  for (auto& [tok, n] : cc) {
    auto it = rc.find(tok);
    if (it != rc.end()) overlap += std::min(n, it->second);
  }
  if (overlap == 0) return 0.0;
  double p = static_cast<double>(overlap) / static_cast<double>(cand.size());
  double r = static_cast<double>(overlap) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double rouge_l_f1(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  size_t lcs = lcs_len(cand, ref);
  if (lcs == 0) return 0.0;
  double p = static_cast<double>(lcs) / static_cast<double>(cand.size());
  double r = static_cast<double>(lcs) / static_cast<double>(ref.size());
  return 2.0 * p * r / (p + r);
}

double bleu_sentence(const Tokens& cand, const Tokens& ref) {
  if (cand.empty() || ref.empty()) return 0.0;
  double log_sum = 0;
  for (size_t n = 1; n <= 4; ++n) {
    auto cc = ngram_counts(cand, n);
    auto rc = ngram_counts(ref, n);
    long matches = 0, total = 0;
    for (auto& [gram, c] : cc) {
      total += c;
      auto it = rc.find(gram);
      if (it != rc.end()) matches += std::min(c, it->second);
    }
    double smooth = n >= 2 ? 1.0 : 0.0;  // add-1 on higher orders
    double num = static_cast<double>(matches) + smooth;
    double den = static_cast<double>(total) + smooth;
    if (num <= 0.0 || den <= 0.0) return 0.0;  // unsmoothed unigram miss
    log_sum += 0.25 * std::log(num / den);
  }
  double bp = cand.size() >= ref.size()
                  ? 1.0
                  : std::exp(1.0 - static_cast<double>(ref.size()) /
                                       static_cast<double>(cand.size()));
  return bp * std::exp(log_sum);
}

double bleu(const std::vector<EvalRecord>& records) {
  require_nonempty(records);
  double total = 0;
  for (const auto& r : records) total += bleu_sentence(r.raw_top1, r.gold_tokens);
  return total / static_cast<double>(records.size());
}

Report evaluate_records(const std::vector<EvalRecord>& records) {
  require_nonempty(records);
  Report rep;
  rep.p1 = precision_at_1(records);
  rep.map5 = map_at_5(records);
  double r1 = 0, rl = 0;
  for (const auto& r : records) {
    r1 += rouge1_f1(r.raw_top1, r.gold_tokens);
    rl += rouge_l_f1(r.raw_top1, r.gold_tokens);
  }
  rep.rouge1 = r1 / static_cast<double>(records.size());
  rep.rouge_l = rl / static_cast<double>(records.size());
  rep.bleu = bleu(records);
  return rep;
}

Report evaluate_run(const std::string& pred_path, const std::string& gold_path,
                    const std::string& quotes_path, const std::string& per_instance_out) {
  auto gold = corpus::load_instances(gold_path);
  auto quotes = corpus::load_quotes(quotes_path);

  std::map<std::string, const corpus::EncodedInstance*> gold_by_id;
  for (const auto& g : gold) {
    if (!gold_by_id.emplace(g.id, &g).second)
      throw Error(ErrCat::Format, "duplicate gold id: " + g.id);
  }

  std::vector<EvalRecord> records;
  auto lines = io::read_lines(pred_path);
  for (size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    json j = json::parse(lines[i], nullptr, false);
    if (j.is_discarded())
      throw Error(ErrCat::Format,
                  pred_path + ": line " + std::to_string(i + 1) + ": invalid JSON");
    EvalRecord r;
    r.id = j.at("id").get<std::string>();
    auto it = gold_by_id.find(r.id);
    if (it == gold_by_id.end())
      throw Error(ErrCat::Format, "id mismatch: prediction id \"" + r.id + "\" not in gold file");
    r.gold_id = it->second->quotation_id;
    if (r.gold_id < 0 || r.gold_id >= static_cast<int>(quotes.quotes.size()))
      throw Error(ErrCat::Format, "gold quotation id out of range for " + r.id);
    r.gold_tokens = quotes.quotes[static_cast<size_t>(r.gold_id)];
    r.matched_ids = j.at("matched_ids").get<std::vector<int>>();
    auto raw = j.at("raw").get<std::vector<std::string>>();
    if (raw.empty()) throw Error(ErrCat::Format, "prediction for " + r.id + " has no raw output");
    r.raw_top1 = io::split_ws(raw.front());
    gold_by_id.erase(it);
    records.push_back(std::move(r));
  }
  if (records.empty()) throw Error(ErrCat::Format, "no prediction ids align with the gold file");
  if (!gold_by_id.empty())
    throw Error(ErrCat::Format, "id mismatch: gold id \"" + gold_by_id.begin()->first +
                                    "\" has no prediction");

  if (!per_instance_out.empty()) {
    std::ostringstream ss;
    for (const auto& r : records) {
      json j;
      j["id"] = r.id;
      j["p1"] = !r.matched_ids.empty() && r.matched_ids.front() == r.gold_id ? 1 : 0;
      double ap = 0;
      for (size_t rank = 0; rank < std::min<size_t>(5, r.matched_ids.size()); ++rank)
        if (r.matched_ids[rank] == r.gold_id) {
          ap = 1.0 / static_cast<double>(rank + 1);
          break;
        }
      j["ap5"] = ap;
      j["rouge1"] = rouge1_f1(r.raw_top1, r.gold_tokens);
      j["rouge_l"] = rouge_l_f1(r.raw_top1, r.gold_tokens);
      j["bleu"] = bleu_sentence(r.raw_top1, r.gold_tokens);
      ss << j.dump() << '\n';
    }
    io::atomic_write(per_instance_out, ss.str());
  }
  return evaluate_records(records);
}

namespace {

std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v * 100.0);
  return buf;
}

}  // namespace

std::string format_report(const Report& r) {
  std::ostringstream ss;
  ss << "metric    value\n";
  ss << "P@1       " << pct(r.p1) << "\n";
  ss << "MAP       " << pct(r.map5) << "\n";
  ss << "ROUGE-1   " << pct(r.rouge1) << "\n";
  ss << "ROUGE-L   " << pct(r.rouge_l) << "\n";
  ss << "BLEU      " << pct(r.bleu) << "\n";
  return ss.str();
}

std::string report_json(const Report& r) {
  json j;
  j["p1"] = r.p1;
  j["map5"] = r.map5;
  j["rouge1"] = r.rouge1;
  j["rouge_l"] = r.rouge_l;
  j["bleu"] = r.bleu;
  j["percent"] = {{"p1", pct(r.p1)},     {"map5", pct(r.map5)}, {"rouge1", pct(r.rouge1)},
                  {"rouge_l", pct(r.rouge_l)}, {"bleu", pct(r.bleu)}};
  return j.dump(2) + "\n";
}

}  // namespace qgen::metrics
