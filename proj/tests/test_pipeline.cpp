// End-to-end checks of the CLI: preprocess -> train -> generate -> evaluate
// -> inspect, exit codes, and reproducibility of artifacts.

#include "qgen/io.hpp"
#include "support/run.hpp"
#include "support/synthetic.hpp"
#include "support/tempdir.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>
#include <set>

using namespace qgen;
using nlohmann::json;
using testsupport::run_qgen;
using testsupport::TempDir;

namespace {

struct Pipeline {
  TempDir tmp;
  std::string data_dir, run_dir;

  explicit Pipeline(int conversations = 40, int clusters = 8) {
    testsupport::SynthConfig cfg;
    cfg.conversations = conversations;
    cfg.clusters = clusters;
    cfg.seed = 5;
    tmp.write("convs.jsonl", testsupport::synth_conversations_jsonl(cfg));
    tmp.write("stopwords.txt", "the\nan\n");
    tmp.write("train.cfg",
              "variant = ie_qe_ntm\n"
              "learning_rate = 0.003\n"
              "batch_size = 16\n"
              "max_epochs = 2\n"
              "patience = 5\n"
              "dropout = 0.0\n"
              "beam_size = 3\n"
              "topics = 4\n"
              "seed = 3\n"
              "embed_dim = 8\n"
              "hidden_dim = 12\n"
              "enc_layers = 1\n"
              "ntm_hidden = 8\n");
    data_dir = tmp.file("data");
    run_dir = tmp.file("run");
  }

  std::string preprocess_args(const std::string& extra = "") {
    return "preprocess --input " + tmp.file("convs.jsonl") + " --stopwords " +
           tmp.file("stopwords.txt") + " --out " + data_dir + " --seed 13" + extra;
  }
};

}  // namespace

TEST_CASE("pipeline smoke: preprocess, train, generate, evaluate, inspect") {
  Pipeline p;
  auto pre = run_qgen(p.preprocess_args(), p.tmp.dir());
  REQUIRE(pre.exit_code == 0);
  CHECK(pre.out.find("# of quotes") != std::string::npos);

  auto tr = run_qgen("train --config " + p.tmp.file("train.cfg") + " --data " + p.data_dir +
                         " --out " + p.run_dir + " --quiet",
                     p.tmp.dir());
  REQUIRE(tr.exit_code == 0);

  auto gen = run_qgen("generate --checkpoint " + p.run_dir + "/checkpoint.json --data " +
                          p.data_dir + " --split test --out " + p.tmp.file("pred.jsonl"),
                      p.tmp.dir());
  REQUIRE(gen.exit_code == 0);

  auto ev = run_qgen("evaluate --pred " + p.tmp.file("pred.jsonl") + " --gold " + p.data_dir +
                         "/test.jsonl --quotes " + p.data_dir + "/quotes.txt --out " +
                         p.tmp.file("report.json"),
                     p.tmp.dir());
  REQUIRE(ev.exit_code == 0);
  for (const char* metric : {"P@1", "MAP", "ROUGE-1", "ROUGE-L", "BLEU"})
    CHECK(ev.out.find(metric) != std::string::npos);
  json report = json::parse(io::read_file(p.tmp.file("report.json")));
  CHECK(report.contains("p1"));
  CHECK(report.contains("bleu"));

  auto top = run_qgen("inspect topics --checkpoint " + p.run_dir + "/checkpoint.json --data " +
                          p.data_dir + " --k 3 --out " + p.tmp.file("topics.jsonl"),
                      p.tmp.dir());
  CHECK(top.exit_code == 0);
  CHECK(top.out.find("Topic 1:") != std::string::npos);
  // K topic lists of k words each
  auto topic_lines = io::read_lines(p.tmp.file("topics.jsonl"));
  CHECK(topic_lines.size() == 4);  // topics = 4 in train.cfg
  for (const auto& line : topic_lines) CHECK(json::parse(line)["words"].size() == 3);

  auto att = run_qgen("inspect attention --checkpoint " + p.run_dir +
                          "/checkpoint.json --data " + p.data_dir + " --split dev --out " +
                          p.tmp.file("att.jsonl"),
                      p.tmp.dir());
  CHECK(att.exit_code == 0);
  // every attention row is a distribution
  std::ifstream in(p.tmp.file("att.jsonl"));
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (j.contains("query_alpha")) {
      double s = 0;
      for (double v : j["query_alpha"]) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
      ++rows;
    }
    for (const auto& step : j["steps"]) {
      double s = 0;
      for (double v : step["alpha"]) s += v;
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
      ++rows;
    }
  }
  CHECK(rows > 0);
}

TEST_CASE("preprocess stats on a 20-conversation fixture match a recount") {
  TempDir tmp;
  testsupport::SynthConfig cfg;
  cfg.conversations = 20;
  cfg.clusters = 4;
  cfg.seed = 9;
  auto text = testsupport::synth_conversations_jsonl(cfg);
  tmp.write("convs.jsonl", text);
  tmp.write("stopwords.txt", "");
  auto res = run_qgen("preprocess --input " + tmp.file("convs.jsonl") + " --stopwords " +
                          tmp.file("stopwords.txt") + " --out " + tmp.file("data") + " --seed 1",
                      tmp.dir());
  REQUIRE(res.exit_code == 0);
  json stats = json::parse(io::read_file(tmp.file("data/stats.json")));

  // independent recount straight off the fixture text (every quote appears
  // 5 times here, so nothing is filtered and every conversation survives)
  auto convs = testsupport::parse_conversations_text(text);
  std::set<std::vector<std::string>> quotes;
  size_t turns = 0, tokens = 0;
  std::set<std::string> conv_voc, quote_voc;
  for (const auto& c : convs) {
    for (const auto& q : c.quotes) quotes.insert(q);
    turns += c.turns.size();
    for (const auto& t : c.turns) {
      tokens += t.size();
      for (const auto& tok : t) conv_voc.insert(tok);
    }
  }
  for (const auto& q : quotes)
    for (const auto& tok : q) quote_voc.insert(tok);

  CHECK(stats["# of convs"] == 20);
  CHECK(stats["# of quotes"] == quotes.size());
  CHECK(stats["|Voc| of quotes"] == quote_voc.size());
  CHECK(stats["|Voc| of convs"] == conv_voc.size());
  CHECK(stats["Avg # of turns per conv"].get<double>() ==
        doctest::Approx(static_cast<double>(turns) / 20.0));
  CHECK(stats["Avg len of turn per conv"].get<double>() ==
        doctest::Approx(static_cast<double>(tokens) / static_cast<double>(turns)));
  CHECK(stats["instances"]["train"].get<int>() + stats["instances"]["dev"].get<int>() +
            stats["instances"]["test"].get<int>() ==
        20);
}

TEST_CASE("preprocess rerun with the same seed is byte-identical") {
  Pipeline p;
  REQUIRE(run_qgen(p.preprocess_args(), p.tmp.dir()).exit_code == 0);
  auto digest = [&](const std::string& name) { return io::file_digest(p.data_dir + "/" + name); };
  auto d1_train = digest("train.jsonl");
  auto d1_vocab = digest("vocab.json");
  auto d1_stats = digest("stats.json");
  std::string second = p.tmp.file("data2");
  auto rerun = run_qgen("preprocess --input " + p.tmp.file("convs.jsonl") + " --stopwords " +
                            p.tmp.file("stopwords.txt") + " --out " + second + " --seed 13",
                        p.tmp.dir());
  REQUIRE(rerun.exit_code == 0);
  CHECK(io::file_digest(second + "/train.jsonl") == d1_train);
  CHECK(io::file_digest(second + "/vocab.json") == d1_vocab);
  CHECK(io::file_digest(second + "/stats.json") == d1_stats);
}

TEST_CASE("missing stopword file is an explicit io error") {
  Pipeline p;
  auto res = run_qgen("preprocess --input " + p.tmp.file("convs.jsonl") +
                          " --stopwords /nonexistent/sw.txt --out " + p.data_dir,
                      p.tmp.dir());
  CHECK(res.exit_code == 3);
  CHECK(res.err.find("error: io:") != std::string::npos);
}

TEST_CASE("invalid variant names the valid ones and exits with a usage error") {
  Pipeline p;
  REQUIRE(run_qgen(p.preprocess_args(), p.tmp.dir()).exit_code == 0);
  auto res = run_qgen("train --data " + p.data_dir + " --out " + p.run_dir +
                          " --variant full_model --quiet",
                      p.tmp.dir());
  CHECK(res.exit_code == 2);
  CHECK(res.err.find("error: usage:") != std::string::npos);
  CHECK(res.err.find("ie_only") != std::string::npos);
  CHECK(res.err.find("ie_qe_ntm") != std::string::npos);
}

TEST_CASE("beam=1 yields exactly one raw candidate and matched ids index the list") {
  Pipeline p;
  REQUIRE(run_qgen(p.preprocess_args(), p.tmp.dir()).exit_code == 0);
  REQUIRE(run_qgen("train --config " + p.tmp.file("train.cfg") + " --data " + p.data_dir +
                       " --out " + p.run_dir + " --quiet",
                   p.tmp.dir())
              .exit_code == 0);
  auto gen = run_qgen("generate --checkpoint " + p.run_dir + "/checkpoint.json --data " +
                          p.data_dir + " --split dev --out " + p.tmp.file("pred1.jsonl") +
                          " --beam 1",
                      p.tmp.dir());
  REQUIRE(gen.exit_code == 0);
  size_t quote_count = io::read_lines(p.data_dir + "/quotes.txt").size();
  for (const auto& line : io::read_lines(p.tmp.file("pred1.jsonl"))) {
    if (line.empty()) continue;
    json j = json::parse(line);
    CHECK(j["raw"].size() == 1);
    REQUIRE(j["matched_ids"].size() >= 1);
    for (int id : j["matched_ids"]) {
      CHECK(id >= 0);
      CHECK(id < static_cast<int>(quote_count));
    }
    // decode cap from the training config (max_quote_len default 20)
    CHECK(io::split_ws(j["raw"][0].get<std::string>()).size() <= 20);
  }
}

TEST_CASE("evaluate emits per-instance scores for external significance tests") {
  Pipeline p;
  REQUIRE(run_qgen(p.preprocess_args(), p.tmp.dir()).exit_code == 0);
  REQUIRE(run_qgen("train --config " + p.tmp.file("train.cfg") + " --data " + p.data_dir +
                       " --out " + p.run_dir + " --quiet",
                   p.tmp.dir())
              .exit_code == 0);
  REQUIRE(run_qgen("generate --checkpoint " + p.run_dir + "/checkpoint.json --data " +
                       p.data_dir + " --split dev --out " + p.tmp.file("pred.jsonl"),
                   p.tmp.dir())
              .exit_code == 0);
  auto ev = run_qgen("evaluate --pred " + p.tmp.file("pred.jsonl") + " --gold " + p.data_dir +
                         "/dev.jsonl --quotes " + p.data_dir + "/quotes.txt --per-instance " +
                         p.tmp.file("per.jsonl"),
                     p.tmp.dir());
  REQUIRE(ev.exit_code == 0);
  auto lines = io::read_lines(p.tmp.file("per.jsonl"));
  CHECK(!lines.empty());
  for (const auto& line : lines) {
    if (line.empty()) continue;
    json j = json::parse(line);
    CHECK(j.contains("p1"));
    CHECK(j.contains("ap5"));
    CHECK(j.contains("rouge1"));
    CHECK(j.contains("bleu"));
  }
}

TEST_CASE("generate rerun against a fixed checkpoint is byte-identical") {
  Pipeline p;
  REQUIRE(run_qgen(p.preprocess_args(), p.tmp.dir()).exit_code == 0);
  REQUIRE(run_qgen("train --config " + p.tmp.file("train.cfg") + " --data " + p.data_dir +
                       " --out " + p.run_dir + " --quiet",
                   p.tmp.dir())
              .exit_code == 0);
  std::string base = "generate --checkpoint " + p.run_dir + "/checkpoint.json --data " +
                     p.data_dir + " --split test --out ";
  REQUIRE(run_qgen(base + p.tmp.file("a.jsonl"), p.tmp.dir()).exit_code == 0);
  REQUIRE(run_qgen(base + p.tmp.file("b.jsonl"), p.tmp.dir()).exit_code == 0);
  CHECK(io::file_digest(p.tmp.file("a.jsonl")) == io::file_digest(p.tmp.file("b.jsonl")));
}

TEST_CASE("inspect topics on an IE-only checkpoint reports the missing NTM") {
  Pipeline p;
  REQUIRE(run_qgen(p.preprocess_args(), p.tmp.dir()).exit_code == 0);
  REQUIRE(run_qgen("train --config " + p.tmp.file("train.cfg") + " --data " + p.data_dir +
                       " --out " + p.run_dir + " --variant ie_only --quiet",
                   p.tmp.dir())
              .exit_code == 0);
  auto res = run_qgen("inspect topics --checkpoint " + p.run_dir + "/checkpoint.json --data " +
                          p.data_dir,
                      p.tmp.dir());
  CHECK(res.exit_code == 2);
  CHECK(res.err.find("variant has no NTM") != std::string::npos);
}

TEST_CASE("checkpoint against a different vocabulary is rejected") {
  Pipeline p;
  REQUIRE(run_qgen(p.preprocess_args(), p.tmp.dir()).exit_code == 0);
  REQUIRE(run_qgen("train --config " + p.tmp.file("train.cfg") + " --data " + p.data_dir +
                       " --out " + p.run_dir + " --quiet",
                   p.tmp.dir())
              .exit_code == 0);
  // different seed shuffles the split, changing the vocabulary file
  std::string other = p.tmp.file("other_data");
  REQUIRE(run_qgen("preprocess --input " + p.tmp.file("convs.jsonl") + " --stopwords " +
                       p.tmp.file("stopwords.txt") + " --out " + other + " --seed 99",
                   p.tmp.dir())
              .exit_code == 0);
  auto res = run_qgen("generate --checkpoint " + p.run_dir + "/checkpoint.json --data " + other +
                          " --split test --out " + p.tmp.file("x.jsonl"),
                      p.tmp.dir());
  CHECK(res.exit_code == 5);
  CHECK(res.err.find("checkpoint/vocab mismatch") != std::string::npos);
}

TEST_CASE("relative outputs resolve under QGEN_ARTIFACT_ROOT") {
  Pipeline p;
  setenv("QGEN_ARTIFACT_ROOT", p.tmp.dir().c_str(), 1);
  auto res = run_qgen("preprocess --input " + p.tmp.file("convs.jsonl") + " --stopwords " +
                          p.tmp.file("stopwords.txt") + " --out data_rel --seed 13",
                      p.tmp.dir());
  unsetenv("QGEN_ARTIFACT_ROOT");
  REQUIRE(res.exit_code == 0);
  CHECK(io::read_file(p.tmp.file("data_rel/vocab.json")).size() > 0);
}

TEST_CASE("manifests record inputs, seed, and artifact digests") {
  Pipeline p;
  REQUIRE(run_qgen(p.preprocess_args(), p.tmp.dir()).exit_code == 0);
  json m = json::parse(io::read_file(p.data_dir + "/manifest_preprocess.json"));
  CHECK(m["command"] == "preprocess");
  CHECK(m["seed"] == 13);
  CHECK(m["inputs"].contains("conversations"));
  CHECK(m["artifacts"]["train"]["digest"] ==
        io::file_digest(p.data_dir + "/train.jsonl"));
}
