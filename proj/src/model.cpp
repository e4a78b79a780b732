// SPDX-License-Identifier: Apache-2.0
#include "treenmt/model.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "treenmt/error.hpp"
#include "treenmt/subword.hpp"

namespace treenmt {

namespace {

[[noreturn]] void config_error(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto* end = value.data() + value.size();
  const auto res = std::from_chars(value.data(), end, out);
  if (res.ec != std::errc() || res.ptr != end) config_error(key + ": not a non-negative integer: " + value);
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  config_error(key + ": expected true or false: " + value);
}

Matrix make(std::size_t rows, std::size_t cols, const std::optional<std::uint64_t>& seed, const std::string& name,
            bool bias) {
  if (!seed || bias) return Matrix(rows, cols);
  return init_params(rows, cols, derive_seed(*seed, name));
}

ParamId reg(ParamStore& params, const std::string& name, std::size_t rows, std::size_t cols,
            const std::optional<std::uint64_t>& seed, bool bias = false) {
  return params.add(name, make(rows, cols, seed, name, bias));
}

}  // namespace

BetaMode BetaMode::parse(std::string_view text) {
  const std::string t = trim(text);
  if (t == "gating") return gating();
  if (t == "unweighted") return unweighted();
  if (t.rfind("fixed:", 0) == 0) {
    const std::string num = t.substr(6);
    double b = 0.0;
    const auto* end = num.data() + num.size();
    const auto res = std::from_chars(num.data(), end, b);
    if (num.empty() || res.ec != std::errc() || res.ptr != end || !(b >= 0.0 && b <= 1.0))
      config_error("beta mode: fixed value must lie in [0,1]: " + num);
    return fixed(b);
  }
  config_error("beta mode: expected fixed:<b>, gating or unweighted: " + t);
}

std::string BetaMode::to_string() const {
  switch (kind) {
    case Kind::Gating: return "gating";
    case Kind::Unweighted: return "unweighted";
    case Kind::Fixed: {
      std::ostringstream os;
      os.precision(17);
      os << "fixed:" << value;
      return os.str();
    }
  }
  return "gating";
}

void ModelConfig::validate() const {
  std::vector<std::string> problems;
  if (src_vocab <= Vocab::kReserved) problems.push_back("src_vocab must exceed the 4 reserved ids");
  if (tgt_vocab <= Vocab::kReserved) problems.push_back("tgt_vocab must exceed the 4 reserved ids");
  if (emb_dim == 0) problems.push_back("emb_dim must be positive");
  if (hidden_dim == 0) problems.push_back("hidden_dim must be positive");
  if (backward_leaf && hidden_dim % 2 != 0) problems.push_back("hidden_dim must be even with backward leaves");
  if (beta.kind == BetaMode::Kind::Fixed && !(beta.value >= 0.0 && beta.value <= 1.0))
    problems.push_back("fixed beta must lie in [0,1]");
  if (problems.empty()) return;
  std::string msg = "invalid model config:";
  for (const auto& p : problems) msg += "\n  " + p;
  config_error(msg);
}

std::string ModelConfig::to_text() const {
  std::ostringstream os;
  os << "src_vocab=" << src_vocab << '\n'
     << "tgt_vocab=" << tgt_vocab << '\n'
     << "emb_dim=" << emb_dim << '\n'
     << "hidden_dim=" << hidden_dim << '\n'
     << "attn_dim=" << attn_dim << '\n'
     << "comp_dim=" << comp_dim << '\n'
     << "beta_mode=" << beta.to_string() << '\n'
     << "backward_leaf=" << (backward_leaf ? "true" : "false") << '\n'
     << "top_down=" << (top_down ? "true" : "false") << '\n'
     << "attend_eos=" << (attend_eos ? "true" : "false") << '\n';
  return os.str();
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig c;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) config_error("model config: missing '=' in line: " + line);
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key == "src_vocab") c.src_vocab = parse_size(key, value);
    else if (key == "tgt_vocab") c.tgt_vocab = parse_size(key, value);
    else if (key == "emb_dim") c.emb_dim = parse_size(key, value);
    else if (key == "hidden_dim") c.hidden_dim = parse_size(key, value);
    else if (key == "attn_dim") c.attn_dim = parse_size(key, value);
    else if (key == "comp_dim") c.comp_dim = parse_size(key, value);
    else if (key == "beta_mode") c.beta = BetaMode::parse(value);
    else if (key == "backward_leaf") c.backward_leaf = parse_bool(key, value);
    else if (key == "top_down") c.top_down = parse_bool(key, value);
    else if (key == "attend_eos") c.attend_eos = parse_bool(key, value);
    else config_error("model config: unknown key: " + key);
  }
  return c;
}

GruParams register_gru(ParamStore& params, const std::string& prefix, std::size_t input_dim, std::size_t state_dim,
                       std::optional<std::uint64_t> seed) {
  GruParams g;
  g.w_z = reg(params, prefix + ".W_z", state_dim, input_dim, seed);
  g.u_z = reg(params, prefix + ".U_z", state_dim, state_dim, seed);
  g.b_z = reg(params, prefix + ".b_z", state_dim, 1, seed, true);
  g.w_r = reg(params, prefix + ".W_r", state_dim, input_dim, seed);
  g.u_r = reg(params, prefix + ".U_r", state_dim, state_dim, seed);
  g.b_r = reg(params, prefix + ".b_r", state_dim, 1, seed, true);
  g.w_h = reg(params, prefix + ".W_h", state_dim, input_dim, seed);
  g.u_h = reg(params, prefix + ".U_h", state_dim, state_dim, seed);
  g.b_h = reg(params, prefix + ".b_h", state_dim, 1, seed, true);
  return g;
}

TreeGruParams register_tree_gru(ParamStore& params, const std::string& prefix, std::size_t dim,
                                std::optional<std::uint64_t> seed) {
  TreeGruParams t;
  t.ul_z = reg(params, prefix + ".UL_z", dim, dim, seed);
  t.ur_z = reg(params, prefix + ".UR_z", dim, dim, seed);
  t.b_z = reg(params, prefix + ".b_z", dim, 1, seed, true);
  t.ul_rl = reg(params, prefix + ".UL_rL", dim, dim, seed);
  t.ur_rl = reg(params, prefix + ".UR_rL", dim, dim, seed);
  t.b_rl = reg(params, prefix + ".b_rL", dim, 1, seed, true);
  t.ul_rr = reg(params, prefix + ".UL_rR", dim, dim, seed);
  t.ur_rr = reg(params, prefix + ".UR_rR", dim, dim, seed);
  t.b_rr = reg(params, prefix + ".b_rR", dim, 1, seed, true);
  t.ul_h = reg(params, prefix + ".UL_h", dim, dim, seed);
  t.ur_h = reg(params, prefix + ".UR_h", dim, dim, seed);
  t.b_h = reg(params, prefix + ".b_h", dim, 1, seed, true);
  return t;
}

Model::Model(const ModelConfig& config, std::optional<std::uint64_t> seed) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const std::size_t d = c.hidden_dim;
  const std::size_t a = c.attention_dim();
  const std::size_t dc = c.composite_dim();
  const std::size_t leaf = c.leaf_state_dim();

  enc_.emb = reg(params_, "enc.emb", c.src_vocab, c.emb_dim, seed);
  enc_.fwd = register_gru(params_, "enc.fwd", c.emb_dim, leaf, seed);
  if (c.backward_leaf) enc_.bwd = register_gru(params_, "enc.bwd", c.emb_dim, leaf, seed);
  enc_.tree = register_tree_gru(params_, "enc.tree", d, seed);
  if (c.top_down) {
    enc_.td_left = register_gru(params_, "enc.td.left", d, d, seed);
    enc_.td_right = register_gru(params_, "enc.td.right", d, d, seed);
  }

  att_.v = reg(params_, "att.V_a", a, 1, seed);
  att_.u = reg(params_, "att.U_a", a, d, seed);
  att_.w = reg(params_, "att.W_a", a, d, seed);
  att_.b = reg(params_, "att.b_a", a, 1, seed, true);
  if (c.beta.kind == BetaMode::Kind::Gating) {
    att_.gate_w = reg(params_, "att.gate.W_beta", 1, dc, seed);
    att_.gate_b = reg(params_, "att.gate.b_beta", 1, 1, seed, true);
  }

  dec_.emb = reg(params_, "dec.emb", c.tgt_vocab, c.emb_dim, seed);
  dec_.gru = register_gru(params_, "dec.gru", c.emb_dim + dc, d, seed);
  dec_.comp_w = reg(params_, "dec.comp.W_c", dc, 2 * d, seed);
  dec_.comp_b = reg(params_, "dec.comp.b_c", dc, 1, seed, true);
  dec_.out_w = reg(params_, "dec.out.W_o", c.tgt_vocab, dc, seed);
  dec_.out_b = reg(params_, "dec.out.b_o", c.tgt_vocab, 1, seed, true);
  dec_.init_w = reg(params_, "dec.init.W_init", d, d, seed);
  dec_.init_b = reg(params_, "dec.init.b_init", d, 1, seed, true);
}

Model Model::create(const ModelConfig& config, std::uint64_t seed) { return Model(config, seed); }
Model Model::zeros(const ModelConfig& config) { return Model(config, std::nullopt); }

GruVars bind(Tape& tape, const ParamStore& p, const GruParams& g) {
  return {tape.param(p, g.w_z), tape.param(p, g.u_z), tape.param(p, g.b_z),
          tape.param(p, g.w_r), tape.param(p, g.u_r), tape.param(p, g.b_r),
          tape.param(p, g.w_h), tape.param(p, g.u_h), tape.param(p, g.b_h)};
}

TreeGruVars bind(Tape& tape, const ParamStore& p, const TreeGruParams& t) {
  return {tape.param(p, t.ul_z),  tape.param(p, t.ur_z),  tape.param(p, t.b_z),
          tape.param(p, t.ul_rl), tape.param(p, t.ur_rl), tape.param(p, t.b_rl),
          tape.param(p, t.ul_rr), tape.param(p, t.ur_rr), tape.param(p, t.b_rr),
          tape.param(p, t.ul_h),  tape.param(p, t.ur_h),  tape.param(p, t.b_h)};
}

AttentionVars bind(Tape& tape, const ParamStore& p, const AttentionParams& a) {
  AttentionVars v{tape.param(p, a.v), tape.param(p, a.u), tape.param(p, a.w), tape.param(p, a.b), {}, {}};
  if (a.gate_w) v.gate_w = tape.param(p, *a.gate_w);
  if (a.gate_b) v.gate_b = tape.param(p, *a.gate_b);
  return v;
}

ModelVars bind(Tape& tape, const Model& model) {
  const auto& p = model.params();
  const auto& e = model.encoder();
  const auto& d = model.decoder();
  ModelVars v;
  v.fwd = bind(tape, p, e.fwd);
  if (e.bwd) v.bwd = bind(tape, p, *e.bwd);
  v.tree = bind(tape, p, e.tree);
  if (e.td_left) v.td_left = bind(tape, p, *e.td_left);
  if (e.td_right) v.td_right = bind(tape, p, *e.td_right);
  v.att = bind(tape, p, model.attention());
  v.dec_gru = bind(tape, p, d.gru);
  v.comp_w = tape.param(p, d.comp_w);
  v.comp_b = tape.param(p, d.comp_b);
  v.out_w = tape.param(p, d.out_w);
  v.out_b = tape.param(p, d.out_b);
  v.init_w = tape.param(p, d.init_w);
  v.init_b = tape.param(p, d.init_b);
  return v;
}

}  // namespace treenmt
