// SPDX-License-Identifier: Apache-2.0
#include "treenmt/encoder.hpp"

#include "treenmt/error.hpp"
#include "treenmt/subword.hpp"

namespace treenmt {

std::vector<Var> EncodedSource::annotations(bool with_eos) const {
  std::vector<Var> out;
  out.reserve(leaf_states.size() + phrase_states.size() + 1);
  out.insert(out.end(), leaf_states.begin(), leaf_states.end());
  out.insert(out.end(), phrase_states.begin(), phrase_states.end());
  if (with_eos) out.push_back(eos_state);
  return out;
}

Var gru_step(Tape& t, const GruVars& p, Var x, Var h) {
  Var z = t.sigmoid(t.affine({p.w_z, x, p.u_z, h}, p.b_z));
  Var r = t.sigmoid(t.affine({p.w_r, x, p.u_r, h}, p.b_r));
  Var cand = t.tanh(t.affine({p.w_h, x, p.u_h, t.mul(r, h)}, p.b_h));
  return t.gru_mix(z, h, cand);
}

std::vector<Var> encode_leaves(Tape& t, const GruVars& fwd, const std::optional<GruVars>& bwd,
                               std::span<const Var> inputs, std::size_t state_dim) {
  const std::size_t n = inputs.size();
  const Var zero = t.input(Matrix(state_dim, 1));
  std::vector<Var> f(n);
  Var h = zero;
  for (std::size_t i = 0; i < n; ++i) f[i] = h = gru_step(t, fwd, inputs[i], h);
  if (!bwd) return f;

  std::vector<Var> b(n);
  h = zero;
  for (std::size_t i = n; i-- > 0;) b[i] = h = gru_step(t, *bwd, inputs[i], h);
  std::vector<Var> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = t.concat({f[i], b[i]});
  return out;
}

Var tree_gru_node(Tape& t, const TreeGruVars& p, Var hl, Var hr) {
  Var z = t.sigmoid(t.affine({p.ul_z, hl, p.ur_z, hr}, p.b_z));
  Var rl = t.sigmoid(t.affine({p.ul_rl, hl, p.ur_rl, hr}, p.b_rl));
  Var rr = t.sigmoid(t.affine({p.ul_rr, hl, p.ur_rr, hr}, p.b_rr));
  Var cand = t.tanh(t.affine({p.ul_h, t.mul(rl, hl), p.ur_h, t.mul(rr, hr)}, p.b_h));
  return t.add(t.mul(z, cand), t.mul(t.one_minus(z), t.add(hl, hr)));
}

std::vector<Var> encode_bottom_up(Tape& t, const TreeGruVars& p, const NodeTable& table,
                                  std::span<const Var> leaf_states, std::size_t node_count) {
  if (leaf_states.size() != table.leaves.size())
    throw Error(ErrorKind::AlignmentMismatch, "encode_bottom_up: leaf state count differs from tree leaves");
  std::vector<Var> up(node_count);
  for (std::size_t i = 0; i < table.leaves.size(); ++i) up[table.leaves[i]] = leaf_states[i];
  // Children of internals are found through the parent/side maps.
  std::vector<int> left(node_count, -1), right(node_count, -1);
  for (std::size_t id = 0; id < node_count; ++id) {
    const int par = table.parent[id];
    if (par < 0) continue;
    (table.side[id] == Side::Left ? left : right)[par] = static_cast<int>(id);
  }
  for (int id : table.internals) up[id] = tree_gru_node(t, p, up[left[id]], up[right[id]]);
  return up;
}

std::vector<Var> encode_top_down(Tape& t, const GruVars& lp, const GruVars& rp, const NodeTable& table,
                                 std::span<const Var> up) {
  std::vector<Var> down(up.size());
  int root = -1;
  for (std::size_t id = 0; id < table.parent.size(); ++id)
    if (table.parent[id] < 0) root = static_cast<int>(id);
  down[root] = up[root];
  // Reverse post-order visits each parent before its children; leaves follow.
  auto visit = [&](int id) {
    const int par = table.parent[id];
    if (par < 0) return;
    down[id] = top_down_child(t, table.side[id] == Side::Left ? lp : rp, up[id], down[par]);
  };
  for (auto it = table.internals.rbegin(); it != table.internals.rend(); ++it) visit(*it);
  for (int id : table.leaves) visit(id);
  return down;
}

EncodedSource encode(Tape& t, const Model& model, const ModelVars& v, std::span<const int> source,
                     const SyntaxTree& tree) {
  if (source.empty()) throw Error(ErrorKind::EmptySource, "encode: empty source sentence");
  if (source.size() != tree.leaf_count())
    throw Error(ErrorKind::AlignmentMismatch, "encode: " + std::to_string(source.size()) + " tokens but " +
                                                  std::to_string(tree.leaf_count()) + " tree leaves");
  const auto& cfg = model.config();
  EncodedSource enc;
  enc.table = enumerate_nodes(tree);
  enc.dim = cfg.hidden_dim;

  std::vector<Var> emb;
  emb.reserve(source.size() + 1);
  for (int id : source) emb.push_back(t.lookup(model.params(), model.encoder().emb, static_cast<std::size_t>(id)));
  emb.push_back(t.lookup(model.params(), model.encoder().emb, Vocab::kEos));

  std::vector<Var> seq = encode_leaves(t, v.fwd, v.bwd, emb, cfg.leaf_state_dim());
  enc.eos_state = seq.back();
  seq.pop_back();

  enc.up_states = encode_bottom_up(t, v.tree, enc.table, seq, tree.node_count());
  enc.root_up = enc.up_states[tree.root()];

  const std::vector<Var> fin =
      cfg.top_down ? encode_top_down(t, *v.td_left, *v.td_right, enc.table, enc.up_states) : enc.up_states;
  enc.leaf_states.reserve(enc.table.leaves.size());
  for (int id : enc.table.leaves) enc.leaf_states.push_back(fin[id]);
  enc.phrase_states.reserve(enc.table.internals.size());
  for (int id : enc.table.internals) enc.phrase_states.push_back(fin[id]);
  return enc;
}

}  // namespace treenmt
