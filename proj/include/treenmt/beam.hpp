// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <vector>

namespace treenmt {

struct Hypothesis {
  std::vector<int> tokens;  // includes the final <eos> when finished
  double log_prob = 0.0;
  bool finished = false;

  /// Mean per-token log-probability, <eos> counted.
  double score() const { return tokens.empty() ? 0.0 : log_prob / static_cast<double>(tokens.size()); }
};

/// A left-to-right model: initial() gives the start state, step() the next
/// state and a full log-probability row for the token that follows `prev`.
template <class S>
concept Scorer = requires(S& s, const typename S::State& st, int prev) {
  typename S::State;
  { s.initial() } -> std::convertible_to<typename S::State>;
  { s.step(st, prev).next } -> std::convertible_to<typename S::State>;
  { s.step(st, prev).log_probs } -> std::convertible_to<std::vector<double>>;
  { s.bos() } -> std::convertible_to<int>;
  { s.eos() } -> std::convertible_to<int>;
  { s.emittable(prev) } -> std::convertible_to<bool>;
};

namespace detail {

/// Ordering key for equal scores: ordinary ids ascending, <eos> after all of them.
inline long tie_key(int id, int eos) { return id == eos ? static_cast<long>(1) << 40 : id; }

}  // namespace detail

/// Argmax per step; stops after <eos> or `max_len` tokens.
template <Scorer S>
Hypothesis greedy_decode(S& scorer, std::size_t max_len) {
  Hypothesis h;
  auto state = scorer.initial();
  int prev = scorer.bos();
  const int eos = scorer.eos();
  for (std::size_t t = 0; t < max_len; ++t) {
    auto r = scorer.step(state, prev);
    int best = -1;
    for (int id = 0; id < static_cast<int>(r.log_probs.size()); ++id) {
      if (!scorer.emittable(id)) continue;
      if (best < 0 || r.log_probs[id] > r.log_probs[best] ||
          (r.log_probs[id] == r.log_probs[best] && detail::tie_key(id, eos) < detail::tie_key(best, eos)))
        best = id;
    }
    if (best < 0) break;
    h.tokens.push_back(best);
    h.log_prob += r.log_probs[best];
    state = std::move(r.next);
    prev = best;
    if (best == eos) {
      h.finished = true;
      break;
    }
  }
  return h;
}

/// Length-synchronous beam search. Each step keeps the best
/// (beam - finished) expansions by total log-probability; hypotheses that
/// emit <eos> leave the beam. Returns the finished hypothesis with the best
/// mean log-probability, or the best unfinished one if none finished.
template <Scorer S>
Hypothesis beam_search(S& scorer, std::size_t beam, std::size_t max_len) {
  using State = typename S::State;
  struct Live {
    Hypothesis hyp;
    State state;
    int prev;
  };
  struct Candidate {
    std::size_t parent;
    int token;
    double log_prob;
    double step_log_prob;
  };
  const int eos = scorer.eos();
  std::vector<Live> live;
  live.push_back({Hypothesis{}, scorer.initial(), scorer.bos()});
  std::vector<Hypothesis> finished;

  for (std::size_t t = 0; t < max_len && !live.empty() && finished.size() < beam; ++t) {
    std::vector<Candidate> cands;
    std::vector<State> next_states;
    next_states.reserve(live.size());
    for (std::size_t i = 0; i < live.size(); ++i) {
      auto r = scorer.step(live[i].state, live[i].prev);
      for (int id = 0; id < static_cast<int>(r.log_probs.size()); ++id)
        if (scorer.emittable(id)) cands.push_back({i, id, live[i].hyp.log_prob + r.log_probs[id], r.log_probs[id]});
      next_states.push_back(std::move(r.next));
    }
    const std::size_t keep = std::min(beam - finished.size(), cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(),
                      [eos](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        // Sums can round equal; the step score keeps beam 1 identical to greedy.
                        if (a.step_log_prob != b.step_log_prob) return a.step_log_prob > b.step_log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return detail::tie_key(a.token, eos) < detail::tie_key(b.token, eos);
                      });
    std::vector<Live> next;
    for (std::size_t k = 0; k < keep; ++k) {
      const Candidate& c = cands[k];
      Hypothesis h = live[c.parent].hyp;
      h.tokens.push_back(c.token);
      h.log_prob = c.log_prob;
      if (c.token == eos) {
        h.finished = true;
        finished.push_back(std::move(h));
      } else {
        next.push_back({std::move(h), next_states[c.parent], c.token});
      }
    }
    live = std::move(next);
  }

  const auto better = [](const Hypothesis& a, const Hypothesis& b) { return a.score() > b.score(); };
  if (!finished.empty()) return *std::min_element(finished.begin(), finished.end(), better);
  if (!live.empty()) {
    std::vector<Hypothesis> rest;
    for (auto& l : live) rest.push_back(std::move(l.hyp));
    return *std::min_element(rest.begin(), rest.end(), better);
  }
  return {};
}

}  // namespace treenmt
