#pragma once

// Ranking metrics (P@1, MAP over top 5) on matched quote ids and generation
// metrics (ROUGE-1/L F1, smoothed sentence BLEU) on raw pre-matching outputs.

#include <string>
#include <vector>

namespace qgen::metrics {

using Tokens = std::vector<std::string>;

struct EvalRecord {
  std::string id;
  int gold_id = -1;
  Tokens gold_tokens;
  std::vector<int> matched_ids;  // ranked, de-duplicated
  Tokens raw_top1;
};

double precision_at_1(const std::vector<EvalRecord>& records);
double map_at_5(const std::vector<EvalRecord>& records);
double rouge1_f1(const Tokens& cand, const Tokens& ref);
double rouge_l_f1(const Tokens& cand, const Tokens& ref);
// Sentence BLEU up to 4-grams, add-1 smoothing on orders >= 2, brevity penalty.
double bleu_sentence(const Tokens& cand, const Tokens& ref);
double bleu(const std::vector<EvalRecord>& records);

struct Report {
  double p1 = 0, map5 = 0, rouge1 = 0, rouge_l = 0, bleu = 0;
};

Report evaluate_records(const std::vector<EvalRecord>& records);

// Aligns a predictions file with a gold split by id and scores all metrics.
// `per_instance_out`, when nonempty, receives line-delimited per-record scores.
Report evaluate_run(const std::string& pred_path, const std::string& gold_path,
                    const std::string& quotes_path, const std::string& per_instance_out = "");

// Fixed-width rendering, percentages with one decimal.
std::string format_report(const Report& r);
std::string report_json(const Report& r);

}  // namespace qgen::metrics
