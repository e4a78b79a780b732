// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <vector>

#include "treenmt/model.hpp"
#include "treenmt/tape.hpp"
#include "treenmt/tree.hpp"

namespace treenmt {

/// Final annotations of one source sentence, as vars on the tape that built them.
struct EncodedSource {
  NodeTable table;
  std::vector<Var> leaf_states;    // h^l, left to right
  std::vector<Var> phrase_states;  // h^p, aligned with table.internals
  Var eos_state;                   // BiGRU state of the appended <eos>
  std::vector<Var> up_states;      // h^up by node id
  Var root_up;
  std::size_t dim = 0;

  /// Attention order: leaves, internals bottom-up, then eos when requested.
  std::vector<Var> annotations(bool with_eos) const;
};

/// One sequential GRU step; see GruParams for the gate equations.
Var gru_step(Tape& tape, const GruVars& p, Var x, Var h);

/// Runs the forward GRU (and the backward one when given) over `inputs`
/// from zero states and returns per-position states, concatenated [fwd; bwd].
std::vector<Var> encode_leaves(Tape& tape, const GruVars& fwd, const std::optional<GruVars>& bwd,
                               std::span<const Var> inputs, std::size_t state_dim);

/// z = s(UL_z hl + UR_z hr + b_z); rl, rr likewise;
/// h~ = tanh(UL_h (rl . hl) + UR_h (rr . hr) + b_h); h = z . h~ + (1 - z) . (hl + hr).
Var tree_gru_node(Tape& tape, const TreeGruVars& p, Var h_left, Var h_right);

/// h^up for every node id; leaves take `leaf_states` in order.
std::vector<Var> encode_bottom_up(Tape& tape, const TreeGruVars& p, const NodeTable& table,
                                  std::span<const Var> leaf_states, std::size_t node_count);

/// z = s(W_z up + U_z par + b_z); r likewise; h~ = tanh(W_h up + U_h (r . par) + b_h);
/// h = (1 - z) . par + z . h~.
inline Var top_down_child(Tape& tape, const GruVars& side_params, Var h_child_up, Var h_parent_down) {
  return gru_step(tape, side_params, h_child_up, h_parent_down);
}

/// h^down for every node id, root first; the root reuses its h^up var.
std::vector<Var> encode_top_down(Tape& tape, const GruVars& left, const GruVars& right, const NodeTable& table,
                                 std::span<const Var> up_states);

/// Full pipeline over source ids (without <eos>) aligned with `tree`'s leaves.
/// Throws EmptySource, AlignmentMismatch, UnknownTokenId, NonBinaryTree.
EncodedSource encode(Tape& tape, const Model& model, const ModelVars& vars, std::span<const int> source,
                     const SyntaxTree& tree);

}  // namespace treenmt
