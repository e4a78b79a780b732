// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "treenmt/encoder.hpp"
#include "treenmt/model.hpp"
#include "treenmt/tape.hpp"
#include "treenmt/tree.hpp"

namespace treenmt {

/// Annotations laid out for attention, with W_a h + b_a precomputed once per
/// sentence. Node order: leaves, internals bottom-up, then eos if attended.
struct AttentionMemory {
  std::vector<Var> annotations;
  std::vector<Var> keys;
  std::vector<std::size_t> lexical;  // positions of leaves and eos
  std::vector<std::size_t> phrase;   // positions of internals
  std::vector<Var> lexical_states;
  std::vector<Var> phrase_states;
  std::size_t dim = 0;
};

AttentionMemory make_attention_memory(Tape& tape, const AttentionVars& att, const EncodedSource& enc,
                                      bool attend_eos);

/// e_t = V_a . tanh(U_a s + W_a h_t + b_a), one entry per annotation.
Var attention_scores(Tape& tape, const AttentionVars& att, const AttentionMemory& memory, Var s);
/// Joint softmax over all nodes.
inline Var attention_weights(Tape& tape, Var scores) { return tape.softmax(scores); }
/// beta = s(W_beta c_prev + b_beta).
Var gating_scalar(Tape& tape, const AttentionVars& att, Var c_prev);
/// Weighted: (1 - beta) lexical + beta phrase with the alpha-weighted group
/// sums; unweighted: lexical + phrase. `beta` is ignored when unweighted.
Var context_vector(Tape& tape, const AttentionMemory& memory, Var alpha, BetaMode mode, Var beta);

struct DecoderStep {
  Var s, alpha, beta, context, c, logits;
};

/// s_j = GRU([emb(y_prev); c_prev], s_prev); alpha from s_j; beta per mode;
/// c_j = tanh(W_c [s_j; d_j] + b_c); logits = W_o c_j + b_o.
DecoderStep decoder_step(Tape& tape, const Model& model, const ModelVars& vars, const AttentionMemory& memory,
                         int y_prev, Var s_prev, Var c_prev);

struct DecoderInit {
  Var s, c;
};

/// s_0 = tanh(W_init h^up_root + b_init); c_0 = 0.
DecoderInit init_decoder_state(Tape& tape, const Model& model, const ModelVars& vars, const EncodedSource& enc);

/// One sentence recorded on a tape: encoding and the attention memory.
struct SourceGraph {
  ModelVars vars;
  EncodedSource encoded;
  AttentionMemory memory;
};

SourceGraph build_source(Tape& tape, const Model& model, std::span<const int> source, const SyntaxTree& tree);

/// Summed teacher-forced NLL of `target`, which must end with <eos>.
/// Throws EmptyTarget.
Var sequence_loss(Tape& tape, const Model& model, const SourceGraph& src, std::span<const int> target);

/// Mean per-token NLL. Throws EmptyTarget.
double sequence_nll(const Model& model, std::span<const int> source, const SyntaxTree& tree,
                    std::span<const int> target);

}  // namespace treenmt
