// SPDX-License-Identifier: Apache-2.0
#include "treenmt/training.hpp"

#include <omp.h>

#include <charconv>
#include <chrono>
#include <exception>
#include <fstream>
#include <numeric>
#include <sstream>

#include "treenmt/decoder.hpp"
#include "treenmt/error.hpp"

namespace treenmt {

Sentence split_tokens(std::string_view line) {
  Sentence out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.emplace_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

SyntaxTree read_tree_line(std::string_view line, std::size_t expected_leaves, std::size_t line_no) {
  SyntaxTree tree = binarize(parse_bracketed(line));
  if (tree.leaf_count() != expected_leaves)
    throw Error(ErrorKind::TreeLeafMismatch, "line " + std::to_string(line_no) + ": tree has " +
                                                 std::to_string(tree.leaf_count()) + " leaves, sentence has " +
                                                 std::to_string(expected_leaves) + " tokens");
  return tree;
}

EncodedSentence preprocess_source(std::span<const std::string> tokens, const SyntaxTree& tree,
                                  const SideResources& side) {
  Sentence gen = generalize_tokens(tokens);
  return apply_rare_word_encoding(gen, tree.with_leaf_tokens(gen), side.vocab, side.merges);
}

Sentence preprocess_target(std::span<const std::string> tokens, const SideResources& side) {
  return segment_rare_words(generalize_tokens(tokens), side.vocab, side.merges);
}

ParallelDataset load_parallel_corpus(const std::string& src_path, const std::string& tree_path,
                                     const std::string& tgt_path, const SideResources& src,
                                     const SideResources& tgt, std::size_t max_len) {
  const auto src_lines = read_lines(src_path);
  const auto tree_lines = read_lines(tree_path);
  const auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tree_lines.size() || src_lines.size() != tgt_lines.size())
    throw Error(ErrorKind::LineCountMismatch, "line counts differ: source " + std::to_string(src_lines.size()) +
                                                  ", trees " + std::to_string(tree_lines.size()) + ", target " +
                                                  std::to_string(tgt_lines.size()));
  ParallelDataset ds;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    const Sentence s = split_tokens(src_lines[i]);
    const Sentence t = split_tokens(tgt_lines[i]);
    if (s.empty() || t.empty() || s.size() > max_len || t.size() > max_len) {
      ++ds.dropped;
      continue;
    }
    const SyntaxTree tree = read_tree_line(tree_lines[i], s.size(), i + 1);
    EncodedSentence enc = preprocess_source(s, tree, src);
    Example ex;
    ex.source = src.vocab.encode(enc.tokens);
    ex.tree = std::move(enc.tree);
    ex.target = tgt.vocab.encode(preprocess_target(t, tgt));
    ex.target.push_back(Vocab::kEos);
    ds.items.push_back(std::move(ex));
  }
  return ds;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::uint64_t shuffle_seed,
                                                   std::uint64_t epoch) {
  if (batch_size == 0) throw Error(ErrorKind::ConfigError, "batch_size must be positive");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(shuffle_seed ^ epoch, "shuffle"));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size)
    batches.emplace_back(order.begin() + i, order.begin() + std::min(n, i + batch_size));
  return batches;
}

double sentence_gradient(const Model& model, const Example& ex, GradStore& grad) {
  Tape tape;
  SourceGraph g = build_source(tape, model, ex.source, ex.tree);
  Var loss = sequence_loss(tape, model, g, ex.target);
  tape.backward(loss, &grad);
  return tape.scalar_value(loss);
}

namespace {

[[noreturn]] void rethrow_for_sentence(std::size_t index, const std::exception_ptr& ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const Error& e) {
    throw Error(e.kind(), "sentence " + std::to_string(index) + ": " + e.what());
  }
}

}  // namespace

BatchGradient batch_gradient_serial(const Model& model, std::span<const Example> data,
                                    std::span<const std::size_t> batch) {
  BatchGradient out{GradStore(model.params()), 0.0, 0};
  for (std::size_t idx : batch) {
    GradStore g(model.params());
    double loss = 0;
    try {
      loss = sentence_gradient(model, data[idx], g);
    } catch (const Error&) {
      rethrow_for_sentence(idx, std::current_exception());
    }
    out.grad.add(g);
    out.loss_sum += loss;
    out.tokens += data[idx].target.size();
  }
  return out;
}

BatchGradient batch_gradient_parallel(const Model& model, std::span<const Example> data,
                                      std::span<const std::size_t> batch, int threads) {
  const std::size_t n = batch.size();
  std::vector<GradStore> grads(n);
  std::vector<double> losses(n, 0.0);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic, 1) num_threads(threads)
  for (std::size_t k = 0; k < n; ++k) {
    try {
      grads[k] = GradStore(model.params());
      losses[k] = sentence_gradient(model, data[batch[k]], grads[k]);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }

  BatchGradient out{GradStore(model.params()), 0.0, 0};
  for (std::size_t k = 0; k < n; ++k) {
    if (errors[k]) rethrow_for_sentence(batch[k], errors[k]);
    out.grad.add(grads[k]);
    out.loss_sum += losses[k];
    out.tokens += data[batch[k]].target.size();
  }
  return out;
}

EpochStats train_epoch(Model& model, OptState& opt, std::span<const Example> data,
                       const std::vector<std::vector<std::size_t>>& batches, int threads) {
  const auto start = std::chrono::steady_clock::now();
  EpochStats stats;
  double loss_sum = 0;
  for (const auto& batch : batches) {
    if (batch.empty()) continue;
    BatchGradient bg = threads <= 1 ? batch_gradient_serial(model, data, batch)
                                    : batch_gradient_parallel(model, data, batch, threads);
    bg.grad.scale(1.0 / static_cast<double>(bg.tokens));
    adadelta_step(model.params(), bg.grad, opt);
    loss_sum += bg.loss_sum;
    stats.tokens += bg.tokens;
  }
  stats.mean_loss = stats.tokens ? loss_sum / static_cast<double>(stats.tokens) : 0.0;
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

void TrainConfig::validate() const {
  std::vector<std::string> problems;
  if (batch_size < 1) problems.push_back("batch_size must be >= 1");
  if (max_sentence_length < 1) problems.push_back("max_sentence_length must be >= 1");
  if (emb_dim < 1) problems.push_back("emb_dim must be >= 1");
  if (hidden_dim < 1) problems.push_back("hidden_dim must be >= 1");
  if (backward_leaf && hidden_dim % 2 != 0) problems.push_back("hidden_dim must be even with backward leaves");
  if (threads < 1) problems.push_back("threads must be >= 1");
  if (!(rho > 0.0 && rho < 1.0)) problems.push_back("rho must lie in (0,1)");
  if (!(eps > 0.0)) problems.push_back("eps must be positive");
  if (problems.empty()) return;
  std::string msg = "invalid training config:";
  for (const auto& p : problems) msg += "\n  " + p;
  throw Error(ErrorKind::ConfigError, msg);
}

ModelConfig TrainConfig::model_config(std::size_t src_vocab, std::size_t tgt_vocab) const {
  ModelConfig m;
  m.src_vocab = src_vocab;
  m.tgt_vocab = tgt_vocab;
  m.emb_dim = emb_dim;
  m.hidden_dim = hidden_dim;
  m.attn_dim = attn_dim;
  m.comp_dim = comp_dim;
  m.beta = beta;
  m.backward_leaf = backward_leaf;
  m.top_down = top_down;
  m.attend_eos = attend_eos;
  return m;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "batch_size = " << batch_size << '\n'
     << "max_epochs = " << max_epochs << '\n'
     << "seed = " << seed << '\n'
     << "shuffle_seed = " << shuffle_seed << '\n'
     << "emb_dim = " << emb_dim << '\n'
     << "hidden_dim = " << hidden_dim << '\n'
     << "attn_dim = " << attn_dim << '\n'
     << "comp_dim = " << comp_dim << '\n'
     << "beta_mode = " << beta.to_string() << '\n'
     << "backward_leaf = " << (backward_leaf ? "true" : "false") << '\n'
     << "top_down = " << (top_down ? "true" : "false") << '\n'
     << "attend_eos = " << (attend_eos ? "true" : "false") << '\n'
     << "max_sentence_length = " << max_sentence_length << '\n'
     << "checkpoint_every = " << checkpoint_every << '\n'
     << "threads = " << threads << '\n'
     << "rho = " << rho << '\n'
     << "eps = " << eps << '\n';
  return os.str();
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
bool parse_number(const std::string& v, T& out) {
  const auto* end = v.data() + v.size();
  const auto res = std::from_chars(v.data(), end, out);
  return !v.empty() && res.ec == std::errc() && res.ptr == end;
}

}  // namespace

TrainConfig parse_train_config(std::string_view text, TrainConfig c) {
  std::vector<std::string> problems;
  std::istringstream is{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) {
      problems.push_back(where + "expected key = value");
      continue;
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string v = trim(std::string_view(line).substr(eq + 1));
    bool ok = true;
    auto flag = [&](bool& out) {
      if (v == "true" || v == "1") out = true;
      else if (v == "false" || v == "0") out = false;
      else ok = false;
    };
    if (key == "batch_size") ok = parse_number(v, c.batch_size);
    else if (key == "max_epochs") ok = parse_number(v, c.max_epochs);
    else if (key == "seed") ok = parse_number(v, c.seed);
    else if (key == "shuffle_seed") ok = parse_number(v, c.shuffle_seed);
    else if (key == "emb_dim") ok = parse_number(v, c.emb_dim);
    else if (key == "hidden_dim") ok = parse_number(v, c.hidden_dim);
    else if (key == "attn_dim") ok = parse_number(v, c.attn_dim);
    else if (key == "comp_dim") ok = parse_number(v, c.comp_dim);
    else if (key == "max_sentence_length") ok = parse_number(v, c.max_sentence_length);
    else if (key == "checkpoint_every") ok = parse_number(v, c.checkpoint_every);
    else if (key == "threads") ok = parse_number(v, c.threads);
    else if (key == "rho") ok = parse_number(v, c.rho);
    else if (key == "eps") ok = parse_number(v, c.eps);
    else if (key == "backward_leaf") flag(c.backward_leaf);
    else if (key == "top_down") flag(c.top_down);
    else if (key == "attend_eos") flag(c.attend_eos);
    else if (key == "beta_mode") {
      try {
        c.beta = BetaMode::parse(v);
      } catch (const Error& e) {
        problems.push_back(where + "bad value for beta_mode: " + e.what());
        continue;
      }
    } else {
      problems.push_back(where + "unknown key '" + key + "'");
      continue;
    }
    if (!ok) problems.push_back(where + "bad value for " + key + ": '" + v + "'");
  }
  if (!problems.empty()) {
    std::string msg = "invalid config file:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw Error(ErrorKind::ConfigError, msg);
  }
  return c;
}

}  // namespace treenmt
