// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "treenmt/params.hpp"
#include "treenmt/tape.hpp"

namespace treenmt {

/// How the lexical and phrase contexts are combined each decoder step.
struct BetaMode {
  enum class Kind {
    Fixed,       // d = (1 - b) * lexical + b * phrase with constant b
    Gating,      // same with b = sigmoid(W_beta c_{j-1} + b_beta)
    Unweighted,  // d = lexical + phrase
  };
  Kind kind = Kind::Gating;
  double value = 0.5;

  static BetaMode fixed(double b) { return {Kind::Fixed, b}; }
  static BetaMode gating() { return {Kind::Gating, 0.0}; }
  static BetaMode unweighted() { return {Kind::Unweighted, 0.0}; }

  /// `fixed:<b>` with b in [0,1], `gating` or `unweighted`. Throws ConfigError.
  static BetaMode parse(std::string_view text);
  std::string to_string() const;

  friend bool operator==(const BetaMode&, const BetaMode&) = default;
};

struct ModelConfig {
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  std::size_t emb_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t attn_dim = 0;  // 0 means hidden_dim
  std::size_t comp_dim = 0;  // 0 means hidden_dim
  BetaMode beta = BetaMode::gating();
  bool backward_leaf = true;
  bool top_down = true;
  bool attend_eos = true;

  std::size_t attention_dim() const noexcept { return attn_dim != 0 ? attn_dim : hidden_dim; }
  std::size_t composite_dim() const noexcept { return comp_dim != 0 ? comp_dim : hidden_dim; }
  /// State size of each directional leaf GRU.
  std::size_t leaf_state_dim() const noexcept { return backward_leaf ? hidden_dim / 2 : hidden_dim; }

  /// Throws ConfigError.
  void validate() const;

  /// `key=value` lines, used inside checkpoints.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Sequential GRU: z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r),
/// h~ = tanh(W_h x + U_h (r . h) + b_h), h' = (1 - z) h + z h~.
struct GruParams {
  ParamId w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;
};

/// Binary tree-GRU over (left, right) children.
struct TreeGruParams {
  ParamId ul_z, ur_z, b_z;
  ParamId ul_rl, ur_rl, b_rl;
  ParamId ul_rr, ur_rr, b_rr;
  ParamId ul_h, ur_h, b_h;
};

struct EncoderParams {
  ParamId emb;
  GruParams fwd;
  std::optional<GruParams> bwd;
  TreeGruParams tree;
  std::optional<GruParams> td_left;
  std::optional<GruParams> td_right;
};

struct AttentionParams {
  ParamId v, u, w, b;
  std::optional<ParamId> gate_w;
  std::optional<ParamId> gate_b;
};

struct DecoderParams {
  ParamId emb;
  GruParams gru;
  ParamId comp_w, comp_b;
  ParamId out_w, out_b;
  ParamId init_w, init_b;
};

/// Parameters of the full encoder-decoder. Layout is a pure function of the
/// config; values come from create() (seeded init) or zeros().
class Model {
 public:
  static Model create(const ModelConfig& config, std::uint64_t seed);
  static Model zeros(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }

  const EncoderParams& encoder() const noexcept { return enc_; }
  const AttentionParams& attention() const noexcept { return att_; }
  const DecoderParams& decoder() const noexcept { return dec_; }

 private:
  Model(const ModelConfig& config, std::optional<std::uint64_t> seed);

  ModelConfig config_;
  ParamStore params_;
  EncoderParams enc_{};
  AttentionParams att_{};
  DecoderParams dec_{};
};

// Parameter handles bound onto one tape.

struct GruVars {
  Var w_z, u_z, b_z, w_r, u_r, b_r, w_h, u_h, b_h;
};

struct TreeGruVars {
  Var ul_z, ur_z, b_z, ul_rl, ur_rl, b_rl, ul_rr, ur_rr, b_rr, ul_h, ur_h, b_h;
};

struct AttentionVars {
  Var v, u, w, b;
  Var gate_w, gate_b;  // invalid unless gating
};

struct ModelVars {
  GruVars fwd;
  std::optional<GruVars> bwd;
  TreeGruVars tree;
  std::optional<GruVars> td_left;
  std::optional<GruVars> td_right;
  AttentionVars att;
  GruVars dec_gru;
  Var comp_w, comp_b, out_w, out_b, init_w, init_b;
};

GruVars bind(Tape& tape, const ParamStore& params, const GruParams& ids);
TreeGruVars bind(Tape& tape, const ParamStore& params, const TreeGruParams& ids);
AttentionVars bind(Tape& tape, const ParamStore& params, const AttentionParams& ids);
ModelVars bind(Tape& tape, const Model& model);

/// Parameter-name helpers shared by layout and tests.
GruParams register_gru(ParamStore& params, const std::string& prefix, std::size_t input_dim,
                       std::size_t state_dim, std::optional<std::uint64_t> seed);
TreeGruParams register_tree_gru(ParamStore& params, const std::string& prefix, std::size_t dim,
                                std::optional<std::uint64_t> seed);

}  // namespace treenmt
