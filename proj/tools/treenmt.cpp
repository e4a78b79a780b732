// SPDX-License-Identifier: Apache-2.0
// treenmt command-line driver: preprocess | train | translate | eval.

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "treenmt/checkpoint.hpp"
#include "treenmt/error.hpp"
#include "treenmt/inference.hpp"
#include "treenmt/subword.hpp"
#include "treenmt/training.hpp"

namespace fs = std::filesystem;
using namespace treenmt;

namespace {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 14];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

std::string join(std::span<const std::string> toks) {
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

std::string command_line(int argc, char** argv) {
  std::string s;
  for (int i = 0; i < argc; ++i) {
    if (i) s += ' ';
    s += argv[i];
  }
  return s;
}

struct Prep {
  SideResources src, tgt;
};

Prep load_prep(const std::string& dir) {
  return {{Vocab::load(dir + "/src.vocab"), MergeTable::load(dir + "/src.bpe")},
          {Vocab::load(dir + "/tgt.vocab"), MergeTable::load(dir + "/tgt.bpe")}};
}

// ---- preprocess ----

struct PreprocessArgs {
  std::string src, trees, tgt, out_dir;
  std::size_t src_vocab = 1000, tgt_vocab = 1000;
  std::size_t src_merges = 1000, tgt_merges = 1000;
};

int run_preprocess(const PreprocessArgs& a) {
  const auto src_lines = read_lines(a.src);
  const auto tree_lines = read_lines(a.trees);
  const auto tgt_lines = read_lines(a.tgt);
  if (src_lines.size() != tree_lines.size() || src_lines.size() != tgt_lines.size())
    throw Error(ErrorKind::LineCountMismatch, "source, tree and target files differ in line count");

  Corpus src, tgt;
  std::vector<SyntaxTree> trees;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    const Sentence s = split_tokens(src_lines[i]);
    trees.push_back(read_tree_line(tree_lines[i], s.size(), i + 1));
    src.push_back(generalize_tokens(s));
    tgt.push_back(generalize_tokens(split_tokens(tgt_lines[i])));
  }

  const Vocab src_words = Vocab::build(src, a.src_vocab);
  const Vocab tgt_words = Vocab::build(tgt, a.tgt_vocab);
  const MergeTable src_bpe = learn_bpe(src, a.src_merges);
  const MergeTable tgt_bpe = learn_bpe(tgt, a.tgt_merges);

  Corpus src_out, tgt_out;
  std::vector<std::string> tree_out;
  for (std::size_t i = 0; i < src.size(); ++i) {
    EncodedSentence e = apply_rare_word_encoding(src[i], trees[i].with_leaf_tokens(src[i]), src_words, src_bpe);
    tree_out.push_back(serialize(e.tree));
    src_out.push_back(std::move(e.tokens));
    tgt_out.push_back(segment_rare_words(tgt[i], tgt_words, tgt_bpe));
  }
  const Vocab src_final = Vocab::build(src_out, a.src_vocab);
  const Vocab tgt_final = Vocab::build(tgt_out, a.tgt_vocab);

  fs::create_directories(a.out_dir);
  src_final.save(a.out_dir + "/src.vocab");
  tgt_final.save(a.out_dir + "/tgt.vocab");
  src_bpe.save(a.out_dir + "/src.bpe");
  tgt_bpe.save(a.out_dir + "/tgt.bpe");
  std::vector<std::string> sl, tl;
  for (const auto& s : src_out) sl.push_back(join(s));
  for (const auto& t : tgt_out) tl.push_back(join(t));
  write_lines(a.out_dir + "/train.src", sl);
  write_lines(a.out_dir + "/train.tree", tree_out);
  write_lines(a.out_dir + "/train.tgt", tl);

  std::cout << "side\ttypes_before\ttypes_after\tvocab\tmerges\n"
            << "src\t" << count_types(src) << '\t' << count_types(src_out) << '\t' << src_final.size() << '\t'
            << src_bpe.size() << '\n'
            << "tgt\t" << count_types(tgt) << '\t' << count_types(tgt_out) << '\t' << tgt_final.size() << '\t'
            << tgt_bpe.size() << '\n';
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::string src, trees, tgt, prep, out_dir, config_file, resume, stats;
  std::optional<std::size_t> epochs, batch_size, emb_dim, hidden_dim, checkpoint_every, max_len;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> beta_mode;
  bool no_top_down = false, no_backward_leaf = false, no_attend_eos = false, f32 = false;
};

TrainConfig resolve_config(const TrainArgs& a) {
  TrainConfig c;
  if (!a.config_file.empty()) {
    std::ifstream in(a.config_file);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + a.config_file);
    std::stringstream ss;
    ss << in.rdbuf();
    c = parse_train_config(ss.str(), c);
  }
  if (a.epochs) c.max_epochs = *a.epochs;
  if (a.batch_size) c.batch_size = *a.batch_size;
  if (a.emb_dim) c.emb_dim = *a.emb_dim;
  if (a.hidden_dim) c.hidden_dim = *a.hidden_dim;
  if (a.checkpoint_every) c.checkpoint_every = *a.checkpoint_every;
  if (a.max_len) c.max_sentence_length = *a.max_len;
  if (a.seed) c.seed = c.shuffle_seed = *a.seed;
  if (a.threads) c.threads = *a.threads;
  if (a.beta_mode) c.beta = BetaMode::parse(*a.beta_mode);
  if (a.no_top_down) c.top_down = false;
  if (a.no_backward_leaf) c.backward_leaf = false;
  if (a.no_attend_eos) c.attend_eos = false;
  c.validate();
  return c;
}

std::size_t progress_epochs(const std::string& progress) {
  std::istringstream is(progress);
  std::string line;
  while (std::getline(is, line))
    if (line.rfind("epochs=", 0) == 0) return std::stoull(line.substr(7));
  return 0;
}

int run_train(const TrainArgs& a, const std::string& cmdline) {
  TrainConfig cfg = resolve_config(a);
  const Prep prep = load_prep(a.prep);
  ParallelDataset data = load_parallel_corpus(a.src, a.trees, a.tgt, prep.src, prep.tgt, cfg.max_sentence_length);
  if (data.items.empty()) throw Error(ErrorKind::EmptyCorpus, "no training pairs left after filtering");
  fs::create_directories(a.out_dir);

  std::optional<Model> model;
  OptState opt;
  std::size_t start_epoch = 0;
  if (!a.resume.empty()) {
    Checkpoint ck = load_checkpoint(a.resume);
    if (!ck.opt) throw Error(ErrorKind::MissingParameter, a.resume + " has no optimizer state; cannot resume");
    if (!(ck.model.config() == cfg.model_config(prep.src.vocab.size(), prep.tgt.vocab.size())))
      throw Error(ErrorKind::ConfigError, "resume: checkpoint model config differs from the requested one");
    model.emplace(std::move(ck.model));
    opt = std::move(*ck.opt);
    start_epoch = progress_epochs(ck.progress);
  } else {
    model.emplace(Model::create(cfg.model_config(prep.src.vocab.size(), prep.tgt.vocab.size()), cfg.seed));
    opt = OptState(model->params(), {cfg.rho, cfg.eps});
  }

  const std::string final_ckpt = a.out_dir + "/model.ckpt";
  nlohmann::json manifest = {
      {"command", cmdline},
      {"config", cfg.to_text()},
      {"seed", cfg.seed},
      {"shuffle_seed", cfg.shuffle_seed},
      {"checkpoint", final_ckpt},
      {"resume", a.resume},
      {"pairs", data.items.size()},
      {"dropped", data.dropped},
      {"digests",
       {{"src.vocab", sha256_file(a.prep + "/src.vocab")},
        {"tgt.vocab", sha256_file(a.prep + "/tgt.vocab")},
        {"src.bpe", sha256_file(a.prep + "/src.bpe")},
        {"tgt.bpe", sha256_file(a.prep + "/tgt.bpe")},
        {"src", sha256_file(a.src)},
        {"trees", sha256_file(a.trees)},
        {"tgt", sha256_file(a.tgt)}}},
  };
  std::ofstream(a.out_dir + "/manifest.json") << manifest.dump(2) << '\n';

  const std::string stats_path = a.stats.empty() ? a.out_dir + "/stats.tsv" : a.stats;
  std::ofstream stats(stats_path, start_epoch > 0 ? std::ios::app : std::ios::trunc);
  const StorageType storage = a.f32 ? StorageType::F32 : StorageType::F64;
  std::cerr << "training on " << data.items.size() << " pairs (" << data.dropped << " dropped), "
            << model->params().scalar_count() << " parameters\n";

  for (std::size_t epoch = start_epoch; epoch < cfg.max_epochs; ++epoch) {
    const auto batches = make_batches(data.items.size(), cfg.batch_size, cfg.shuffle_seed, epoch);
    const EpochStats st = train_epoch(*model, opt, data.items, batches, cfg.threads);
    std::ostringstream line;
    line << epoch + 1 << '\t' << std::setprecision(17) << st.mean_loss << '\t' << st.tokens << '\t'
         << std::setprecision(6) << st.seconds;
    std::cout << line.str() << std::endl;
    stats << line.str() << std::endl;
    const std::string progress = "epochs=" + std::to_string(epoch + 1) + "\n";
    if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      save_checkpoint(a.out_dir + "/epoch-" + std::to_string(epoch + 1) + ".ckpt", *model, &opt, progress, storage);
  }
  save_checkpoint(final_ckpt, *model, &opt, "epochs=" + std::to_string(std::max(start_epoch, cfg.max_epochs)) + "\n",
                  storage);
  return 0;
}

// ---- translate ----

struct TranslateArgs {
  std::string model, prep, src, trees, out, trace;
  std::size_t beam = 5;
  std::size_t max_len = 0;
  bool greedy = false;
  int threads = 1;
};

void check_vocab(const Model& m, const Prep& p) {
  if (m.config().src_vocab != p.src.vocab.size() || m.config().tgt_vocab != p.tgt.vocab.size())
    throw Error(ErrorKind::ShapeMismatch, "checkpoint vocabulary sizes (" + std::to_string(m.config().src_vocab) +
                                              ", " + std::to_string(m.config().tgt_vocab) +
                                              ") do not match the vocab files (" +
                                              std::to_string(p.src.vocab.size()) + ", " +
                                              std::to_string(p.tgt.vocab.size()) + ")");
}

int run_translate(const TranslateArgs& a) {
  const Checkpoint ck = load_checkpoint(a.model);
  const Prep prep = load_prep(a.prep);
  check_vocab(ck.model, prep);
  const auto src_lines = read_lines(a.src);
  const auto tree_lines = read_lines(a.trees);
  if (src_lines.size() != tree_lines.size())
    throw Error(ErrorKind::LineCountMismatch, "source and tree files differ in line count");

  struct Item {
    std::vector<int> ids;
    SyntaxTree tree;
  };
  std::vector<Item> items;
  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    const Sentence s = split_tokens(src_lines[i]);
    EncodedSentence e = preprocess_source(s, read_tree_line(tree_lines[i], s.size(), i + 1), prep.src);
    items.push_back({prep.src.vocab.encode(e.tokens), std::move(e.tree)});
  }

  std::vector<Hypothesis> hyps(items.size());
  std::vector<std::exception_ptr> errors(items.size());
#pragma omp parallel for schedule(dynamic, 1) num_threads(a.threads)
  for (std::size_t i = 0; i < items.size(); ++i) {
    try {
      const std::size_t len = a.max_len ? a.max_len : 2 * items[i].ids.size() + 10;
      hyps[i] = a.greedy ? translate_greedy(ck.model, items[i].ids, items[i].tree, len)
                         : translate_beam(ck.model, items[i].ids, items[i].tree, a.beam, len);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out, std::ios::trunc);
    if (!file) throw Error(ErrorKind::IoError, "cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  for (const auto& h : hyps) {
    Sentence toks;
    for (int id : h.tokens)
      if (id != Vocab::kEos) toks.push_back(prep.tgt.vocab.token(id));
    out << detokenize(toks) << '\n';
  }

  if (!a.trace.empty()) {
    std::ofstream tr(a.trace, std::ios::trunc);
    if (!tr) throw Error(ErrorKind::IoError, "cannot write " + a.trace);
    tr << std::setprecision(6);
    for (std::size_t i = 0; i < items.size(); ++i) {
      const NodeTable table = enumerate_nodes(items[i].tree);
      tr << "# sentence " << i + 1 << '\n' << "# nodes";
      for (int id : table.leaves) tr << '\t' << items[i].tree.node(id).token;
      for (int id : table.internals) {
        const Span sp = items[i].tree.node(id).span;
        tr << '\t' << sp.first << '-' << sp.last;
      }
      if (ck.model.config().attend_eos) tr << "\t<eos>";
      tr << '\n';
      const auto steps = trace_output(ck.model, items[i].ids, items[i].tree, hyps[i].tokens);
      for (std::size_t j = 0; j < steps.size(); ++j) {
        tr << j + 1 << '\t' << prep.tgt.vocab.token(steps[j].token) << '\t';
        if (std::isnan(steps[j].beta)) tr << "-";
        else tr << steps[j].beta;
        for (double a_t : steps[j].alpha) tr << '\t' << a_t;
        tr << '\n';
      }
    }
  }
  return 0;
}

// ---- eval ----

struct EvalArgs {
  std::string hyp, ref, model, prep, src, trees, tgt;
  std::size_t max_len = 1000000;
};

int run_eval(const EvalArgs& a) {
  std::cout << std::setprecision(10);
  if (!a.hyp.empty() || !a.ref.empty()) {
    if (a.hyp.empty() || a.ref.empty()) throw CLI::ValidationError("--hyp and --ref go together");
    Corpus hyps, refs;
    for (const auto& l : read_lines(a.hyp)) hyps.push_back(split_tokens(l));
    for (const auto& l : read_lines(a.ref)) refs.push_back(split_tokens(l));
    double words = 0;
    for (const auto& h : hyps) words += static_cast<double>(h.size());
    std::cout << "bleu=" << bleu(hyps, refs) << '\n'
              << "avg_length=" << (hyps.empty() ? 0.0 : words / static_cast<double>(hyps.size())) << '\n';
  }
  if (!a.model.empty()) {
    if (a.prep.empty() || a.src.empty() || a.trees.empty() || a.tgt.empty())
      throw CLI::ValidationError("perplexity needs --prep, --src, --trees and --tgt with --model");
    const Checkpoint ck = load_checkpoint(a.model);
    const Prep prep = load_prep(a.prep);
    check_vocab(ck.model, prep);
    const ParallelDataset data = load_parallel_corpus(a.src, a.trees, a.tgt, prep.src, prep.tgt, a.max_len);
    std::cout << "perplexity=" << perplexity(ck.model, data.items) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"treenmt: tree-to-sequence neural machine translation"};
  app.require_subcommand(1);

  PreprocessArgs pa;
  auto* pre = app.add_subcommand("preprocess", "build vocabularies, BPE merges and grafted corpora");
  pre->add_option("--src", pa.src, "tokenized source file")->required();
  pre->add_option("--trees", pa.trees, "bracketed source trees, one per line")->required();
  pre->add_option("--tgt", pa.tgt, "tokenized target file")->required();
  pre->add_option("--out-dir", pa.out_dir, "output directory")->required();
  pre->add_option("--src-vocab-size", pa.src_vocab, "source vocabulary limit")->capture_default_str();
  pre->add_option("--tgt-vocab-size", pa.tgt_vocab, "target vocabulary limit")->capture_default_str();
  pre->add_option("--src-merges", pa.src_merges, "source BPE merges")->capture_default_str();
  pre->add_option("--tgt-merges", pa.tgt_merges, "target BPE merges")->capture_default_str();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "train a model");
  tr->add_option("--src", ta.src)->required();
  tr->add_option("--trees", ta.trees)->required();
  tr->add_option("--tgt", ta.tgt)->required();
  tr->add_option("--prep", ta.prep, "directory written by preprocess")->required();
  tr->add_option("--out-dir", ta.out_dir, "checkpoints, stats and manifest")->required();
  tr->add_option("--config", ta.config_file, "key = value config file");
  tr->add_option("--resume", ta.resume, "continue from a checkpoint with optimizer state");
  tr->add_option("--stats", ta.stats, "stats stream path (default <out-dir>/stats.tsv)");
  tr->add_option("--epochs", ta.epochs);
  tr->add_option("--batch-size", ta.batch_size);
  tr->add_option("--emb-dim", ta.emb_dim);
  tr->add_option("--hidden-dim", ta.hidden_dim);
  tr->add_option("--checkpoint-every", ta.checkpoint_every);
  tr->add_option("--max-sentence-length", ta.max_len);
  tr->add_option("--seed", ta.seed);
  tr->add_option("--threads", ta.threads);
  tr->add_option("--beta-mode", ta.beta_mode, "fixed:<b> | gating | unweighted");
  tr->add_flag("--no-top-down", ta.no_top_down);
  tr->add_flag("--no-backward-leaf", ta.no_backward_leaf);
  tr->add_flag("--no-attend-eos", ta.no_attend_eos);
  tr->add_flag("--f32", ta.f32, "store parameters as 32-bit floats");

  TranslateArgs xa;
  auto* tl = app.add_subcommand("translate", "decode a source file");
  tl->add_option("--model", xa.model)->required();
  tl->add_option("--prep", xa.prep)->required();
  tl->add_option("--src", xa.src)->required();
  tl->add_option("--trees", xa.trees)->required();
  tl->add_option("--out", xa.out, "hypothesis file (default stdout)");
  tl->add_option("--trace", xa.trace, "attention trace file");
  tl->add_option("--beam", xa.beam)->capture_default_str()->check(CLI::PositiveNumber);
  tl->add_option("--max-len", xa.max_len, "0 means 2 * source length + 10")->capture_default_str();
  tl->add_flag("--greedy", xa.greedy);
  tl->add_option("--threads", xa.threads)->capture_default_str()->check(CLI::PositiveNumber);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "BLEU, average length and perplexity");
  ev->add_option("--hyp", ea.hyp);
  ev->add_option("--ref", ea.ref);
  ev->add_option("--model", ea.model);
  ev->add_option("--prep", ea.prep);
  ev->add_option("--src", ea.src);
  ev->add_option("--trees", ea.trees);
  ev->add_option("--tgt", ea.tgt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*pre) return run_preprocess(pa);
    if (*tr) return run_train(ta, command_line(argc, argv));
    if (*tl) return run_translate(xa);
    if (*ev) return run_eval(ea);
  } catch (const CLI::ParseError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::ConfigError) {
      std::cerr << "usage error: " << e.what() << '\n';
      return 2;
    }
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}
