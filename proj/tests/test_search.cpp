// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "treenmt/error.hpp"
#include "treenmt/inference.hpp"
#include "treenmt/kernels.hpp"

using namespace treenmt;
using doctest::Approx;

namespace {

std::vector<int> ids(std::initializer_list<int> v) { return v; }

}  // namespace

TEST_SUITE("search") {
  TEST_CASE("greedy on a uniform model picks the lowest ordinary id") {
    const Model m = Model::zeros(support::small_config(8));
    const SyntaxTree tree = support::left_branching_tree({"a", "b"});
    const Hypothesis h = translate_greedy(m, ids({4, 5}), tree, 5);
    CHECK(h.tokens == std::vector<int>(5, 4));
    CHECK_FALSE(h.finished);
    CHECK(translate_greedy(m, ids({4, 5}), tree, 0).tokens.empty());
    CHECK(translate_beam(m, ids({4, 5}), tree, 3, 0).tokens.empty());
  }

  TEST_CASE("a model certain of eos stops after one token") {
    Model m = Model::zeros(support::small_config(8));
    Matrix& b = m.params().value(m.decoder().out_b);
    b[Vocab::kEos] = 50.0;
    const SyntaxTree tree = support::left_branching_tree({"a", "b"});
    const Hypothesis g = translate_greedy(m, ids({4, 5}), tree, 10);
    const Hypothesis h = translate_beam(m, ids({4, 5}), tree, 5, 10);
    CHECK(g.tokens == ids({Vocab::kEos}));
    CHECK(h.tokens == ids({Vocab::kEos}));
    CHECK(h.finished);
  }

  TEST_CASE("beam 1 equals greedy") {
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
      const Model m = support::random_model(support::small_config(8), seed, 1.2);
      Rng rng(seed);
      const std::size_t n = 1 + rng.below(6);
      std::vector<int> src;
      for (std::size_t i = 0; i < n; ++i) src.push_back(4 + static_cast<int>(rng.below(7)));
      const SyntaxTree tree = support::random_binary_tree(rng, n);
      const Hypothesis g = translate_greedy(m, src, tree, 12);
      const Hypothesis b = translate_beam(m, src, tree, 1, 12);
      CHECK(g.tokens == b.tokens);
      CHECK(g.log_prob == b.log_prob);
    }
  }

  TEST_CASE("wider beams do not lose score on random models") {
    // Not a theorem for pruned search; this records how often it holds.
    int violations = 0, cases = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const Model m = support::random_model(support::small_config(8), 100 + seed, 1.5);
      Rng rng(seed);
      const std::size_t n = 1 + rng.below(6);
      std::vector<int> src;
      for (std::size_t i = 0; i < n; ++i) src.push_back(4 + static_cast<int>(rng.below(7)));
      const SyntaxTree tree = support::random_binary_tree(rng, n);
      double prev = -INFINITY;
      for (std::size_t k = 1; k <= 6; ++k) {
        const Hypothesis h = translate_beam(m, src, tree, k, 10);
        const double score = h.finished ? h.score() : -INFINITY;
        ++cases;
        if (score < prev - 1e-12) {
          ++violations;
          MESSAGE("beam monotonicity counterexample: seed " << seed << ", beam " << k << ": " << score << " < "
                                                            << prev);
        }
        prev = std::max(prev, score);
      }
    }
    MESSAGE(violations << " of " << cases << " beam widths scored below a narrower beam");
    CHECK(violations * 10 <= cases);
  }

  TEST_CASE("trace output covers every node at every step") {
    const Model m = support::random_model(support::small_config(8), 3);
    const SyntaxTree tree = parse_bracketed("(S (A a) (B b c))");
    const auto tr = trace_output(m, ids({4, 5, 6}), tree, ids({4, 5, Vocab::kEos}));
    REQUIRE(tr.size() == 3);
    for (const TraceStep& st : tr) {
      CHECK(st.alpha.size() == 6);
      double s = 0;
      for (double a : st.alpha) s += a;
      CHECK(s == Approx(1.0).epsilon(1e-12));
      CHECK((st.beta > 0 && st.beta < 1));
    }
    const Model u = support::random_model(support::small_config(8, BetaMode::unweighted()), 3);
    CHECK(std::isnan(trace_output(u, ids({4, 5, 6}), tree, ids({4}))[0].beta));
  }
}

TEST_SUITE("eval") {
  TEST_CASE("bleu identities") {
    const Corpus x{{"a", "b", "c", "d", "e"}, {"f", "g"}};
    CHECK(bleu(x, x) == 1.0);
    CHECK(bleu(Corpus{{"q"}}, Corpus{{"q"}}) == 1.0);
    CHECK_THROWS_AS(bleu(Corpus{}, Corpus{}), Error);
    CHECK_THROWS_AS(bleu(x, Corpus{{"a"}}), Error);
    CHECK(bleu(Corpus{{}}, Corpus{{"a"}}) == 0.0);
    CHECK(bleu(Corpus{{"z", "z"}}, Corpus{{"a", "b"}}) == 0.0);
  }

  TEST_CASE("bleu hand example") {
    const double want = std::pow(192.0, -0.25);
    CHECK(std::fabs(bleu(Corpus{{"the", "the", "the", "the"}}, Corpus{{"the", "cat", "sat", "down"}}) - want) < 1e-12);
  }

  TEST_CASE("bleu brevity penalty") {
    const Corpus ref{{"a", "b", "c", "d", "e", "f"}};
    const Corpus hyp{{"a", "b", "c"}};
    // p1 = p2 = p3 = 1, p4 smoothed over zero candidates contributes 1.
    CHECK(bleu(hyp, ref) == Approx(std::exp(1.0 - 6.0 / 3.0)).epsilon(1e-14));
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
      Corpus h, r;
      for (int s = 0; s < 3; ++s) {
        Sentence a, b;
        for (std::size_t k = 0, n = rng.below(8); k < n; ++k) a.push_back(std::to_string(rng.below(4)));
        for (std::size_t k = 0, n = 1 + rng.below(8); k < n; ++k) b.push_back(std::to_string(rng.below(4)));
        h.push_back(a);
        r.push_back(b);
      }
      const double v = bleu(h, r);
      CHECK((v >= 0.0 && v <= 1.0));
    }
  }

  TEST_CASE("average hypothesis length") {
    const std::vector<std::vector<int>> h{{4, 5}, {6}};
    CHECK(avg_hypothesis_length(h, Vocab::kEos) == 1.5);
    const std::vector<std::vector<int>> e{{}, {}};
    CHECK(avg_hypothesis_length(e, Vocab::kEos) == 0.0);
    const std::vector<std::vector<int>> with_eos{{4, Vocab::kEos}};
    CHECK(avg_hypothesis_length(with_eos, Vocab::kEos) == 1.0);
  }

  TEST_CASE("perplexity of a uniform model is the vocabulary size") {
    ModelConfig cfg = support::small_config(8);
    cfg.tgt_vocab = 50;
    const Model m = Model::zeros(cfg);
    std::vector<Example> data{{ids({4, 5}), support::left_branching_tree({"a", "b"}), ids({7, 8, Vocab::kEos})}};
    CHECK(perplexity(m, data) == Approx(50.0).epsilon(1e-12));
    CHECK_THROWS_AS(perplexity(m, std::vector<Example>{}), Error);
  }

  TEST_CASE("perplexity is the exponentiated token-weighted nll") {
    const Model m = support::random_model(support::small_config(8), 5);
    Rng rng(2);
    std::vector<Example> data;
    double nll = 0, tokens = 0;
    for (int s = 0; s < 4; ++s) {
      Example ex;
      const std::size_t n = 1 + rng.below(5);
      for (std::size_t i = 0; i < n; ++i) ex.source.push_back(4 + static_cast<int>(rng.below(7)));
      ex.tree = support::random_binary_tree(rng, n);
      for (std::size_t i = 0, k = rng.below(4); i < k; ++i) ex.target.push_back(4 + static_cast<int>(rng.below(5)));
      ex.target.push_back(Vocab::kEos);
      nll += sequence_nll(m, ex.source, ex.tree, ex.target) * static_cast<double>(ex.target.size());
      tokens += static_cast<double>(ex.target.size());
      data.push_back(ex);
    }
    CHECK(perplexity(m, data) == Approx(std::exp(nll / tokens)).epsilon(1e-12));
  }

  TEST_CASE("a fresh model is close to uniform") {
    ModelConfig cfg = support::small_config(8);
    cfg.tgt_vocab = 30;
    const Model m = Model::create(cfg, 1);
    std::vector<Example> data{{ids({4, 5, 6}), support::left_branching_tree({"a", "b", "c"}), ids({7, 8, Vocab::kEos})}};
    CHECK(perplexity(m, data) == Approx(30.0).epsilon(0.5));
  }
}
