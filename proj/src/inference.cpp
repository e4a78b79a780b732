// SPDX-License-Identifier: Apache-2.0
#include "treenmt/inference.hpp"

#include <cmath>
#include <limits>
#include <map>

#include "treenmt/error.hpp"
#include "treenmt/kernels.hpp"
#include "treenmt/subword.hpp"

namespace treenmt {

NmtScorer::NmtScorer(const Model& model, std::span<const int> source, const SyntaxTree& tree) : model_(model) {
  graph_ = build_source(tape_, model, source, tree);
}

NmtScorer::State NmtScorer::initial() {
  auto [s, c] = init_decoder_state(tape_, model_, graph_.vars, graph_.encoded);
  return {s, c};
}

NmtScorer::StepResult NmtScorer::step(const State& state, int prev) {
  DecoderStep st = decoder_step(tape_, model_, graph_.vars, graph_.memory, prev, state.s, state.c);
  return {{st.s, st.c}, kernels::log_softmax(tape_.value(st.logits).values())};
}

int NmtScorer::bos() const noexcept { return Vocab::kBos; }
int NmtScorer::eos() const noexcept { return Vocab::kEos; }
bool NmtScorer::emittable(int id) const noexcept {
  return id != Vocab::kPad && id != Vocab::kBos && id != Vocab::kUnk;
}

Hypothesis translate_beam(const Model& model, std::span<const int> source, const SyntaxTree& tree, std::size_t beam,
                          std::size_t max_len) {
  NmtScorer scorer(model, source, tree);
  return beam_search(scorer, beam, max_len);
}

Hypothesis translate_greedy(const Model& model, std::span<const int> source, const SyntaxTree& tree,
                            std::size_t max_len) {
  NmtScorer scorer(model, source, tree);
  return greedy_decode(scorer, max_len);
}

std::vector<TraceStep> trace_output(const Model& model, std::span<const int> source, const SyntaxTree& tree,
                                    std::span<const int> output) {
  Tape t;
  SourceGraph g = build_source(t, model, source, tree);
  auto [s, c] = init_decoder_state(t, model, g.vars, g.encoded);
  std::vector<TraceStep> out;
  int prev = Vocab::kBos;
  for (int y : output) {
    DecoderStep st = decoder_step(t, model, g.vars, g.memory, prev, s, c);
    TraceStep ts;
    ts.token = y;
    ts.beta = st.beta.valid() ? t.scalar_value(st.beta) : std::numeric_limits<double>::quiet_NaN();
    const auto a = t.value(st.alpha).values();
    ts.alpha.assign(a.begin(), a.end());
    out.push_back(std::move(ts));
    s = st.s;
    c = st.c;
    prev = y;
  }
  return out;
}

double bleu(std::span<const Sentence> hyps, std::span<const Sentence> refs, int max_n) {
  if (hyps.size() != refs.size())
    throw Error(ErrorKind::CountMismatch, "bleu: " + std::to_string(hyps.size()) + " hypotheses, " +
                                              std::to_string(refs.size()) + " references");
  if (hyps.empty()) throw Error(ErrorKind::EmptyCorpus, "bleu: no hypotheses");

  std::vector<double> matched(max_n, 0.0), total(max_n, 0.0);
  double c_len = 0, r_len = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const Sentence& h = hyps[s];
    const Sentence& r = refs[s];
    c_len += static_cast<double>(h.size());
    r_len += static_cast<double>(r.size());
    for (int n = 1; n <= max_n; ++n) {
      std::map<std::vector<std::string>, int> ref_counts, hyp_counts;
      for (std::size_t i = 0; i + n <= r.size(); ++i) ++ref_counts[{r.begin() + i, r.begin() + i + n}];
      for (std::size_t i = 0; i + n <= h.size(); ++i) ++hyp_counts[{h.begin() + i, h.begin() + i + n}];
      for (const auto& [gram, count] : hyp_counts) {
        const auto it = ref_counts.find(gram);
        matched[n - 1] += std::min(count, it == ref_counts.end() ? 0 : it->second);
        total[n - 1] += count;
      }
    }
  }
  if (c_len == 0) return 0.0;

  double log_sum = 0;
  for (int n = 1; n <= max_n; ++n) {
    double p;
    if (matched[n - 1] > 0) p = matched[n - 1] / total[n - 1];
    else if (n == 1) return 0.0;
    else if (total[n - 1] == 0) p = 1.0;  // every hypothesis is shorter than n
    else p = 1.0 / (2.0 * std::max(total[n - 1], 1.0));
    log_sum += std::log(p);
  }
  const double bp = c_len < r_len ? std::exp(1.0 - r_len / c_len) : 1.0;
  return bp * std::exp(log_sum / max_n);
}

double perplexity(const Model& model, std::span<const Example> data) {
  if (data.empty()) throw Error(ErrorKind::EmptyCorpus, "perplexity: empty dataset");
  double loss = 0;
  std::size_t tokens = 0;
  for (const Example& ex : data) {
    Tape t;
    SourceGraph g = build_source(t, model, ex.source, ex.tree);
    loss += t.scalar_value(sequence_loss(t, model, g, ex.target));
    tokens += ex.target.size();
  }
  return std::exp(loss / static_cast<double>(tokens));
}

double avg_hypothesis_length(std::span<const std::vector<int>> hyps, int eos) {
  if (hyps.empty()) return 0.0;
  double n = 0;
  for (const auto& h : hyps)
    for (int id : h) n += id != eos;
  return n / static_cast<double>(hyps.size());
}

}  // namespace treenmt
