// SPDX-License-Identifier: Apache-2.0
#include "treenmt/decoder.hpp"

#include "treenmt/error.hpp"
#include "treenmt/subword.hpp"

namespace treenmt {

AttentionMemory make_attention_memory(Tape& t, const AttentionVars& att, const EncodedSource& enc, bool attend_eos) {
  AttentionMemory m;
  m.dim = enc.dim;
  m.annotations = enc.annotations(attend_eos);
  m.keys.reserve(m.annotations.size());
  for (Var h : m.annotations) m.keys.push_back(t.affine({att.w, h}, att.b));
  const std::size_t n_leaf = enc.leaf_states.size();
  const std::size_t n_phrase = enc.phrase_states.size();
  for (std::size_t i = 0; i < n_leaf; ++i) m.lexical.push_back(i);
  for (std::size_t k = 0; k < n_phrase; ++k) m.phrase.push_back(n_leaf + k);
  if (attend_eos) m.lexical.push_back(n_leaf + n_phrase);
  for (std::size_t i : m.lexical) m.lexical_states.push_back(m.annotations[i]);
  for (std::size_t k : m.phrase) m.phrase_states.push_back(m.annotations[k]);
  return m;
}

Var attention_scores(Tape& t, const AttentionVars& att, const AttentionMemory& m, Var s) {
  Var query = t.affine({att.u, s}, Var{});
  return t.attention_scores(att.v, query, m.keys);
}

Var gating_scalar(Tape& t, const AttentionVars& att, Var c_prev) {
  if (!att.gate_w.valid()) throw Error(ErrorKind::ShapeMismatch, "gating_scalar: model has no gate parameters");
  return t.sigmoid(t.affine({att.gate_w, c_prev}, att.gate_b));
}

Var context_vector(Tape& t, const AttentionMemory& m, Var alpha, BetaMode mode, Var beta) {
  Var lex = t.weighted_sum(alpha, m.lexical, m.lexical_states, m.dim);
  Var phr = t.weighted_sum(alpha, m.phrase, m.phrase_states, m.dim);
  if (mode.kind == BetaMode::Kind::Unweighted) return t.add(lex, phr);
  return t.add(t.scale(lex, t.one_minus(beta)), t.scale(phr, beta));
}

DecoderStep decoder_step(Tape& t, const Model& model, const ModelVars& v, const AttentionMemory& m, int y_prev,
                         Var s_prev, Var c_prev) {
  const auto& cfg = model.config();
  DecoderStep st;
  Var emb = t.lookup(model.params(), model.decoder().emb, static_cast<std::size_t>(y_prev));
  st.s = gru_step(t, v.dec_gru, t.concat({emb, c_prev}), s_prev);
  st.alpha = attention_weights(t, attention_scores(t, v.att, m, st.s));
  switch (cfg.beta.kind) {
    case BetaMode::Kind::Gating: st.beta = gating_scalar(t, v.att, c_prev); break;
    case BetaMode::Kind::Fixed: st.beta = t.scalar(cfg.beta.value); break;
    case BetaMode::Kind::Unweighted: break;
  }
  st.context = context_vector(t, m, st.alpha, cfg.beta, st.beta);
  st.c = t.tanh(t.affine({v.comp_w, t.concat({st.s, st.context})}, v.comp_b));
  st.logits = t.affine({v.out_w, st.c}, v.out_b);
  return st;
}

DecoderInit init_decoder_state(Tape& t, const Model& model, const ModelVars& v, const EncodedSource& enc) {
  return {t.tanh(t.affine({v.init_w, enc.root_up}, v.init_b)), t.input(Matrix(model.config().composite_dim(), 1))};
}

SourceGraph build_source(Tape& t, const Model& model, std::span<const int> source, const SyntaxTree& tree) {
  SourceGraph g;
  g.vars = bind(t, model);
  g.encoded = encode(t, model, g.vars, source, tree);
  g.memory = make_attention_memory(t, g.vars.att, g.encoded, model.config().attend_eos);
  return g;
}

Var sequence_loss(Tape& t, const Model& model, const SourceGraph& src, std::span<const int> target) {
  if (target.empty() || target.back() != Vocab::kEos)
    throw Error(ErrorKind::EmptyTarget, "sequence_loss: target must be non-empty and end with <eos>");
  auto [s, c] = init_decoder_state(t, model, src.vars, src.encoded);
  std::vector<Var> terms;
  terms.reserve(target.size());
  int prev = Vocab::kBos;
  for (int y : target) {
    DecoderStep st = decoder_step(t, model, src.vars, src.memory, prev, s, c);
    terms.push_back(t.nll(st.logits, static_cast<std::size_t>(y)));
    s = st.s;
    c = st.c;
    prev = y;
  }
  return t.add_n(terms);
}

double sequence_nll(const Model& model, std::span<const int> source, const SyntaxTree& tree,
                    std::span<const int> target) {
  Tape t;
  SourceGraph g = build_source(t, model, source, tree);
  return t.scalar_value(sequence_loss(t, model, g, target)) / static_cast<double>(target.size());
}

}  // namespace treenmt
