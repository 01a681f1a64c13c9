#include "qgen/decoder.hpp"

#include "qgen/io.hpp"
#include "support/decoder_fixture.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace qgen;
using ad::Vec;
using corpus::Vocabulary;
using testsupport::DecoderFixture;

namespace {

std::vector<std::string> toks(std::initializer_list<const char*> xs) {
  return std::vector<std::string>(xs.begin(), xs.end());
}

}  // namespace

TEST_CASE("init_decoder") {
  DecoderFixture f(3);
  SUBCASE("zero W_0 returns the bias") {
    f.p.init.W->value.setZero();
    f.p.init.b->value << 1, -2, 3, 0.5;
    Vec h0 = f.p.init.apply_raw(f.q_tilde);
    CHECK((h0 - f.p.init.b->value.col(0)).norm() == 0.0);
  }
  SUBCASE("identity W_0 returns q-tilde") {
    f.p.init.W->value.setIdentity();
    f.p.init.b->value.setZero();
    CHECK((f.p.init.apply_raw(f.q_tilde) - f.q_tilde).norm() == 0.0);
  }
  SUBCASE("hand-computed affine on a 2-dim toy") {
    nn::ParamSet ps(1);
    auto init = nn::Linear::create(ps, "w0", 2, 2);
    init.W->value << 2, -1,  //
        0.5, 3;
    init.b->value << 1, -1;
    Vec q(2);
    q << 4, 2;
    Vec h0 = init.apply_raw(q);
    CHECK(h0(0) == doctest::Approx(2 * 4 - 1 * 2 + 1));
    CHECK(h0(1) == doctest::Approx(0.5 * 4 + 3 * 2 - 1));
  }
}

TEST_CASE("turn_attention") {
  SUBCASE("equal scores give the uniform average") {
    DecoderFixture f(5);
    f.p.score.W->value.setZero();
    f.p.score.b->value.setZero();
    auto ctx = f.ctx();
    auto s = decoder::decode_step_raw(f.p, Vocabulary::kBos, ctx.h0, ctx);
    Vec mean = Vec::Zero(4);
    for (auto& h : f.memory) mean += h / 3.0;
    for (int j = 0; j < 3; ++j) CHECK(s.alpha(j) == doctest::Approx(1.0 / 3));
  }
  SUBCASE("m=1 gives a singleton") {
    DecoderFixture f(6, 9, 3, 4, /*m=*/1);
    auto ctx = f.ctx();
    auto s = decoder::decode_step_raw(f.p, Vocabulary::kBos, ctx.h0, ctx);
    CHECK(s.alpha.size() == 1);
    CHECK(s.alpha(0) == doctest::Approx(1.0));
  }
  SUBCASE("scores (0, ln 3) give alphas (0.25, 0.75) and the weighted context") {
    nn::ParamSet ps(2);
    auto p = decoder::DecoderParams::create(ps, 9, 3, 2, 2, false, false);
    p.score.W->value << 1, 0;  // f_d = (h_d elementwise h_j)[0]
    p.score.b->value.setZero();
    Vec h_d(2);
    h_d << 1, 1;
    Vec h1(2), h2(2);
    h1 << 0, 5;
    h2 << std::log(3.0), -2;
    ad::Graph g;
    std::vector<int> mem{g.input(h1), g.input(h2)};
    auto [t, alpha] = decoder::turn_attention(g, p, g.input(h_d), mem, mem);
    CHECK(g.value(alpha)(0, 0) == doctest::Approx(0.25));
    CHECK(g.value(alpha)(1, 0) == doctest::Approx(0.75));
    Vec expect = 0.25 * h1 + 0.75 * h2;
    CHECK((g.value(t).col(0) - expect).norm() < 1e-12);
  }
}

TEST_CASE("decode_step distributions") {
  SUBCASE("p sums to one") {
    DecoderFixture f(7);
    auto ctx = f.ctx();
    auto s = decoder::decode_step_raw(f.p, Vocabulary::kBos, ctx.h0, ctx);
    CHECK(s.log_p.array().exp().sum() == doctest::Approx(1.0).epsilon(1e-5));
  }
  SUBCASE("a large output bias dominates regardless of inputs") {
    DecoderFixture f(8);
    f.p.out.W->value.setZero();
    f.p.out.b->value.setZero();
    f.p.out.b->value(6, 0) = 50.0;
    auto ctx = f.ctx();
    auto s = decoder::decode_step_raw(f.p, Vocabulary::kBos, ctx.h0, ctx);
    CHECK(std::exp(s.log_p(6)) == doctest::Approx(1.0));
  }
  SUBCASE("zero weights give the uniform distribution over the vocabulary") {
    DecoderFixture f(9);
    f.zero_all();
    auto ctx = f.ctx();
    auto s = decoder::decode_step_raw(f.p, Vocabulary::kBos, ctx.h0, ctx);
    for (int v = 0; v < 9; ++v) CHECK(std::exp(s.log_p(v)) == doctest::Approx(1.0 / 9));
  }
}

TEST_CASE("sequence_log_prob closed forms") {
  SUBCASE("uniform model, |V|=10, three predicted tokens: -3 ln 10") {
    DecoderFixture f(10, /*vocab=*/10);
    f.zero_all();
    ad::Graph g;
    std::vector<int> mem;
    for (auto& h : f.memory) mem.push_back(g.input(h));
    int h0 = g.input(Vec(Vec::Zero(4)));
    std::vector<int> target{Vocabulary::kBos, 5, 6, Vocabulary::kEos};
    int lp = decoder::sequence_log_prob(g, f.p, target, h0, mem, mem);
    CHECK(g.scalar(lp) == doctest::Approx(-3.0 * std::log(10.0)));
  }
  SUBCASE("empty effective target with p(EOS) forced to 1 scores 0") {
    DecoderFixture f(11);
    f.zero_all();
    f.p.out.b->value(Vocabulary::kEos, 0) = 1e4;
    ad::Graph g;
    std::vector<int> mem;
    for (auto& h : f.memory) mem.push_back(g.input(h));
    int h0 = g.input(Vec(Vec::Zero(4)));
    std::vector<int> target{Vocabulary::kBos, Vocabulary::kEos};
    CHECK(g.scalar(decoder::sequence_log_prob(g, f.p, target, h0, mem, mem)) ==
          doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("appending a token strictly decreases the log-prob") {
    DecoderFixture f(12);
    auto ctx = f.ctx();
    double shorter = decoder::forced_score(f.p, ctx, {Vocabulary::kBos, 4, Vocabulary::kEos});
    double longer =
        decoder::forced_score(f.p, ctx, {Vocabulary::kBos, 4, 5, Vocabulary::kEos});
    CHECK(longer < shorter);
  }
}

TEST_CASE("sequence_log_prob equals the forced beam score") {
  for (uint64_t seed : {21ull, 22ull, 23ull, 24ull}) {
    DecoderFixture f(seed, 9, 3, 4, 3, 2, true, seed % 2 == 0);
    auto ctx = f.ctx();
    std::vector<int> target{Vocabulary::kBos, 4, 7, 5, Vocabulary::kEos};
    double raw = decoder::forced_score(f.p, ctx, target);

    ad::Graph g;
    std::vector<int> mem;
    for (auto& h : f.memory) mem.push_back(g.input(h));
    int theta = f.p.has_theta ? g.input(f.theta) : -1;
    auto enriched = decoder::enrich_memory(g, f.p, mem, theta);
    int h0 = decoder::init_decoder(g, f.p, g.input(f.q_tilde));
    double graph_lp = g.scalar(decoder::sequence_log_prob(g, f.p, target, h0, mem, enriched));
    CHECK(graph_lp == doctest::Approx(raw).epsilon(1e-6));
  }
}

TEST_CASE("beam toy model: top-1 is 'a a' with log-prob 2 ln 0.6") {
  // vocab: PAD UNK BOS EOS a b; fixed per-step distribution (0.6, 0.3, 0.1)
  // over (a, b, EOS) via output biases; banned ids get a -1e9 logit.
  DecoderFixture f(31, /*vocab=*/6);
  f.zero_all();
  f.p.out.b->value(0, 0) = -1e9;
  f.p.out.b->value(1, 0) = -1e9;
  f.p.out.b->value(2, 0) = -1e9;
  f.p.out.b->value(3, 0) = std::log(0.1);
  f.p.out.b->value(4, 0) = std::log(0.6);
  f.p.out.b->value(5, 0) = std::log(0.3);
  auto ctx = f.ctx();
  auto cands = decoder::beam_search(f.p, ctx, 3, 2);
  REQUIRE(!cands.empty());
  CHECK(cands[0].tokens == std::vector<int>{4, 4});
  CHECK(cands[0].score == doctest::Approx(2 * std::log(0.6)).epsilon(1e-9));
  // exhaustive enumeration oracle over all sequences of length <= 2
  std::vector<std::pair<double, std::vector<int>>> all;
  double la = std::log(0.6), lb = std::log(0.3), le = std::log(0.1);
  all.push_back({le, {}});
  for (auto [t1, l1] : std::vector<std::pair<int, double>>{{4, la}, {5, lb}}) {
    all.push_back({l1 + le, {t1}});
    for (auto [t2, l2] : std::vector<std::pair<int, double>>{{4, la}, {5, lb}})
      all.push_back({l1 + l2, {t1, t2}});
  }
  std::sort(all.begin(), all.end(),
            [](const auto& x, const auto& y) { return x.first > y.first; });
  CHECK(cands[0].score == doctest::Approx(all[0].first));
  CHECK(cands[0].tokens == all[0].second);
}

TEST_CASE("beam_size=1 matches greedy decoding step by step") {
  for (uint64_t seed = 40; seed < 60; ++seed) {
    DecoderFixture f(seed);
    auto ctx = f.ctx();
    auto greedy = testsupport::greedy_decode(f.p, ctx, 6);
    auto beam = decoder::beam_search(f.p, ctx, 1, 6);
    REQUIRE(beam.size() == 1);
    CHECK(beam[0].tokens == greedy);
  }
}

TEST_CASE("beam scores are non-increasing and candidates never contain banned ids") {
  for (uint64_t seed = 70; seed < 78; ++seed) {
    DecoderFixture f(seed);
    auto ctx = f.ctx();
    auto cands = decoder::beam_search(f.p, ctx, 4, 5);
    for (size_t i = 1; i < cands.size(); ++i) CHECK(cands[i - 1].score >= cands[i].score);
    for (auto& c : cands)
      for (int t : c.tokens) {
        CHECK(t != Vocabulary::kPad);
        CHECK(t != Vocabulary::kUnk);
        CHECK(t != Vocabulary::kBos);
        CHECK(t != Vocabulary::kEos);
      }
  }
}

TEST_CASE("larger beams never find a worse best score") {
  for (uint64_t seed = 80; seed < 92; ++seed) {
    DecoderFixture f(seed);
    auto ctx = f.ctx();
    double prev = -1e18;
    for (int b : {1, 2, 4, 8}) {
      auto cands = decoder::beam_search(f.p, ctx, b, 5);
      CHECK(cands[0].score >= prev - 1e-12);
      prev = cands[0].score;
    }
  }
}

TEST_CASE("gradcheck through a decode step with topic enrichment") {
  DecoderFixture f(33, 9, 3, 4, 3, 2, true, /*with_theta=*/true);
  auto build = [&](ad::Graph& g) {
    std::vector<int> mem;
    for (auto& h : f.memory) mem.push_back(g.input(h));
    int theta = g.input(f.theta);
    auto enriched = decoder::enrich_memory(g, f.p, mem, theta);
    int h0 = decoder::init_decoder(g, f.p, g.input(f.q_tilde));
    std::vector<int> target{Vocabulary::kBos, 4, 8, Vocabulary::kEos};
    return g.scale(decoder::sequence_log_prob(g, f.p, target, h0, mem, enriched), -1.0);
  };
  auto stats = testsupport::grad_check(
      f.ps.all(),
      [&]() {
        ad::Graph g;
        return g.scalar(build(g));
      },
      [&]() {
        ad::Graph g;
        g.backward(build(g));
      });
  CHECK(stats.all_ok());
}

TEST_CASE("token_edit_distance basics") {
  auto a = toks({"a", "b", "c"});
  CHECK(decoder::token_edit_distance(a, a) == 0);
  CHECK(decoder::token_edit_distance({}, a) == 3);
  CHECK(decoder::token_edit_distance(a, {}) == 3);
  CHECK(decoder::token_edit_distance(a, toks({"a", "x", "c"})) == 1);
}

TEST_CASE("token_edit_distance is a metric and matches the oracle") {
  std::mt19937_64 rng(99);
  auto random_seq = [&](size_t maxlen) {
    std::vector<int> s(rng() % (maxlen + 1));
    for (auto& x : s) x = static_cast<int>(rng() % 4);
    return s;
  };
  for (int trial = 0; trial < 300; ++trial) {
    auto a = random_seq(7), b = random_seq(7), c = random_seq(7);
    int dab = decoder::token_edit_distance(a, b);
    CHECK(dab == testsupport::edit_distance_oracle(a, b));
    CHECK(dab == decoder::token_edit_distance(b, a));
    CHECK((dab == 0) == (a == b));
    CHECK(dab <= decoder::token_edit_distance(a, c) + decoder::token_edit_distance(c, b));
  }
}

TEST_CASE("quotation_match") {
  corpus::QuotationList ql;
  ql.quotes = {toks({"a", "b", "c"}), toks({"x", "y"})};
  ql.freq = {5, 9};
  SUBCASE("exact match returns that quote") {
    CHECK(decoder::quotation_match(toks({"x", "y"}), ql) == 1);
  }
  SUBCASE("minimum edit distance wins") {
    CHECK(decoder::quotation_match(toks({"a", "b", "d"}), ql) == 0);
  }
  SUBCASE("distance ties break toward higher frequency, then lower id") {
    corpus::QuotationList tied;
    tied.quotes = {toks({"a", "b", "c"}), toks({"a", "b", "d"})};
    tied.freq = {3, 7};
    CHECK(decoder::quotation_match(toks({"a", "b"}), tied) == 1);
    tied.freq = {7, 7};
    CHECK(decoder::quotation_match(toks({"a", "b"}), tied) == 0);
  }
  SUBCASE("output always lies in the list") {
    std::mt19937_64 rng(3);
    std::vector<std::string> alphabet{"a", "b", "c", "x", "y", "z"};
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::string> cand(rng() % 5);
      for (auto& t : cand) t = alphabet[rng() % alphabet.size()];
      int id = decoder::quotation_match(cand, ql);
      CHECK(id >= 0);
      CHECK(id < static_cast<int>(ql.quotes.size()));
    }
  }
}

TEST_CASE("match_candidates de-duplicates while preserving rank") {
  corpus::Vocabulary v;
  v.gen_tokens = {"<pad>", "<unk>", "<bos>", "<eos>", "a", "b", "c", "x", "y"};
  for (size_t i = 0; i < v.gen_tokens.size(); ++i) v.gen_ids[v.gen_tokens[i]] = (int)i;
  corpus::QuotationList ql;
  ql.quotes = {toks({"a", "b", "c"}), toks({"x", "y"})};
  ql.freq = {5, 5};
  std::vector<decoder::BeamCandidate> cands{
      {{4, 5, 6}, -0.1, true},  // "a b c" -> 0
      {{4, 5}, -0.2, true},     // "a b"   -> 0 again (duplicate)
      {{7, 8}, -0.3, true},     // "x y"   -> 1
  };
  auto ids = decoder::match_candidates(cands, v, ql);
  CHECK(ids == std::vector<int>{0, 1});
}
