// SPDX-License-Identifier: Apache-2.0
// Drives the treenmt executable end to end on a tiny corpus.
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "treenmt/checkpoint.hpp"

using namespace treenmt;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = std::string(TREENMT_CLI) + " " + args + " 2>&1";
  Run r{-1, {}};
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

/// A small corpus workspace shared by the cases below.
struct Workspace {
  fs::path dir;
  std::string corpus;

  Workspace() {
    dir = fs::temp_directory_path() / "treenmt-cli-test";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream src(dir / "src.txt"), trees(dir / "trees.txt"), tgt(dir / "tgt.txt");
    const char* words[] = {"the", "cat", "dog", "sees", "a", "bird", "walks", "runs"};
    for (int i = 0; i < 12; ++i) {
      const std::string s = words[i % 2 == 0 ? 0 : 4], n = words[1 + i % 3], v = words[3 + (i % 2) * 3];
      const std::string o = words[1 + (i + 1) % 3];
      src << s << ' ' << n << ' ' << v << ' ' << o << (i == 5 ? " 1999" : "") << '\n';
      if (i == 5)
        trees << "(S (NP (DT " << s << ") (NN " << n << ")) (VP (VB " << v << ") (NP (NN " << o << ") (CD 1999))))\n";
      else
        trees << "(S (NP (DT " << s << ") (NN " << n << ")) (VP (VB " << v << ") (NN " << o << ")))\n";
      tgt << "x" << n << " y" << v << " z" << o << '\n';
    }
    corpus = "--src " + p("src.txt") + " --trees " + p("trees.txt") + " --tgt " + p("tgt.txt");
  }
  std::string p(const std::string& name) const { return (dir / name).string(); }
};

Workspace& ws() {
  static Workspace w;
  return w;
}

void preprocess_once() {
  static bool done = false;
  if (done) return;
  const Run r = run("preprocess " + ws().corpus + " --out-dir " + ws().p("prep") + " --src-vocab-size 9 --tgt-merges 20");
  REQUIRE(r.code == 0);
  done = true;
}

std::string train_args(const std::string& out) {
  return "train " + ws().corpus + " --prep " + ws().p("prep") + " --out-dir " + ws().p(out) +
         " --emb-dim 6 --hidden-dim 8 --batch-size 3";
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("preprocess writes the resources and a type table") {
    const Run r = run("preprocess " + ws().corpus + " --out-dir " + ws().p("prep") + " --src-vocab-size 9 --tgt-merges 20");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("types_before") != std::string::npos);
    for (const char* f : {"src.vocab", "tgt.vocab", "src.bpe", "tgt.bpe", "train.src", "train.tree", "train.tgt"})
      CHECK(fs::exists(ws().dir / "prep" / f));
    // Generalization: the number became an unsegmented $number.
    CHECK(slurp(ws().dir / "prep" / "train.src").find(" $number\n") != std::string::npos);
    CHECK(slurp(ws().dir / "prep" / "train.tree").find("(CD $number)") != std::string::npos);
  }

  TEST_CASE("preprocess is deterministic") {
    preprocess_once();
    REQUIRE(run("preprocess " + ws().corpus + " --out-dir " + ws().p("prep2") + " --src-vocab-size 9 --tgt-merges 20").code == 0);
    for (const char* f : {"src.vocab", "tgt.vocab", "src.bpe", "tgt.bpe", "train.src", "train.tree", "train.tgt"})
      CHECK(slurp(ws().dir / "prep" / f) == slurp(ws().dir / "prep2" / f));
  }

  TEST_CASE("usage errors exit with status 2 and name the flag") {
    const Run r = run("preprocess --src " + ws().p("src.txt") + " --tgt " + ws().p("tgt.txt") + " --out-dir " + ws().p("x"));
    CHECK(r.code == 2);
    CHECK(r.out.find("--trees") != std::string::npos);
    CHECK(run("train " + ws().corpus + " --prep " + ws().p("prep") + " --out-dir " + ws().p("x") + " --beta-mode maybe").code == 2);
    CHECK(run("translate --model a --prep b --src c --trees d --beam 0").code == 2);
    CHECK(run("frobnicate").code == 2);
    CHECK(run("translate --help").out.find("5") != std::string::npos);
  }

  TEST_CASE("runtime errors exit with status 1") {
    preprocess_once();
    CHECK(run("translate --model " + ws().p("missing.ckpt") + " --prep " + ws().p("prep") + " --src " + ws().p("src.txt") +
              " --trees " + ws().p("trees.txt"))
              .code == 1);
  }

  TEST_CASE("beta mode controls the gate parameters") {
    preprocess_once();
    REQUIRE(run(train_args("gate") + " --epochs 1 --beta-mode gating").code == 0);
    REQUIRE(run(train_args("half") + " --epochs 1 --beta-mode fixed:0.5").code == 0);
    const Checkpoint g = load_checkpoint(ws().p("gate/model.ckpt"));
    const Checkpoint h = load_checkpoint(ws().p("half/model.ckpt"));
    CHECK(g.model.params().find("att.gate.W_beta").has_value());
    CHECK_FALSE(h.model.params().find("att.gate.W_beta").has_value());
    CHECK(fs::exists(ws().dir / "gate" / "manifest.json"));
    CHECK(slurp(ws().dir / "gate" / "manifest.json").find("digests") != std::string::npos);
  }

  TEST_CASE("vanilla tree encoder configuration") {
    preprocess_once();
    REQUIRE(run(train_args("vanilla") + " --epochs 1 --no-top-down --no-backward-leaf").code == 0);
    const Checkpoint c = load_checkpoint(ws().p("vanilla/model.ckpt"));
    CHECK_FALSE(c.model.config().top_down);
    CHECK_FALSE(c.model.config().backward_leaf);
    CHECK_FALSE(c.model.params().find("enc.td.left.W_z").has_value());
    CHECK_FALSE(c.model.params().find("enc.bwd.W_z").has_value());
  }

  TEST_CASE("resume continues an unbroken run") {
    preprocess_once();
    REQUIRE(run(train_args("full") + " --epochs 4").code == 0);
    REQUIRE(run(train_args("part") + " --epochs 2").code == 0);
    REQUIRE(run(train_args("part") + " --epochs 4 --resume " + ws().p("part/model.ckpt")).code == 0);
    const auto full = lines_of(ws().dir / "full" / "stats.tsv");
    const auto part = lines_of(ws().dir / "part" / "stats.tsv");
    REQUIRE(full.size() == 4);
    REQUIRE(part.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      double a = 0, b = 0;
      int e1 = 0, e2 = 0;
      std::istringstream(full[i]) >> e1 >> a;
      std::istringstream(part[i]) >> e2 >> b;
      CHECK(e1 == e2);
      CHECK(std::fabs(a - b) <= 1e-9);
    }
    const Checkpoint x = load_checkpoint(ws().p("full/model.ckpt"));
    const Checkpoint y = load_checkpoint(ws().p("part/model.ckpt"));
    CHECK(x.model.params() == y.model.params());
  }

  TEST_CASE("resume refuses checkpoints without optimizer state") {
    preprocess_once();
    REQUIRE(run(train_args("gate") + " --epochs 1 --beta-mode gating").code == 0);
    const Checkpoint g = load_checkpoint(ws().p("gate/model.ckpt"));
    save_checkpoint(ws().p("noopt.ckpt"), g.model, nullptr, "epochs=1\n");
    const Run r = run(train_args("again") + " --epochs 2 --resume " + ws().p("noopt.ckpt"));
    CHECK(r.code != 0);
    CHECK(r.out.find("optimizer") != std::string::npos);
    // The same checkpoint is fine for inference.
    CHECK(run("translate --model " + ws().p("noopt.ckpt") + " --prep " + ws().p("prep") + " --src " + ws().p("src.txt") +
              " --trees " + ws().p("trees.txt") + " --out " + ws().p("noopt.out"))
              .code == 0);
  }

  TEST_CASE("translate: beam 1 equals greedy and traces are well formed") {
    preprocess_once();
    REQUIRE(run(train_args("tr") + " --epochs 3").code == 0);
    const std::string base = "translate --model " + ws().p("tr/model.ckpt") + " --prep " + ws().p("prep") + " --src " +
                             ws().p("src.txt") + " --trees " + ws().p("trees.txt");
    REQUIRE(run(base + " --beam 1 --out " + ws().p("b1.txt")).code == 0);
    REQUIRE(run(base + " --greedy --out " + ws().p("g.txt")).code == 0);
    REQUIRE(run(base + " --out " + ws().p("b5.txt") + " --trace " + ws().p("trace.txt") + " --threads 2").code == 0);
    CHECK(slurp(ws().dir / "b1.txt") == slurp(ws().dir / "g.txt"));
    CHECK(lines_of(ws().dir / "b5.txt").size() == 12);

    const auto tr = lines_of(ws().dir / "trace.txt");
    int blocks = 0;
    std::size_t columns = 0;
    for (const auto& l : tr) {
      if (l.rfind("# sentence ", 0) == 0) {
        ++blocks;
        continue;
      }
      std::vector<std::string> f;
      std::istringstream is(l);
      for (std::string x; std::getline(is, x, '\t');) f.push_back(x);
      if (l.rfind("# nodes", 0) == 0) {
        columns = f.size() - 1;
        continue;
      }
      REQUIRE(f.size() == 3 + columns);
      double sum = 0;
      for (std::size_t k = 3; k < f.size(); ++k) sum += std::stod(f[k]);
      CHECK(std::fabs(sum - 1.0) < 1e-4);
      const double beta = std::stod(f[2]);
      CHECK((beta > 0 && beta < 1));
    }
    CHECK(blocks == 12);
  }

  TEST_CASE("eval reports bleu, length and perplexity") {
    preprocess_once();
    const Run same = run("eval --hyp " + ws().p("tgt.txt") + " --ref " + ws().p("tgt.txt"));
    REQUIRE(same.code == 0);
    CHECK(same.out.find("bleu=1\n") != std::string::npos);
    CHECK(same.out.find("avg_length=3\n") != std::string::npos);

    REQUIRE(run(train_args("fresh") + " --epochs 0").code == 0);
    const Run ppl = run("eval --model " + ws().p("fresh/model.ckpt") + " --prep " + ws().p("prep") + " " + ws().corpus);
    REQUIRE(ppl.code == 0);
    const auto pos = ppl.out.find("perplexity=");
    REQUIRE(pos != std::string::npos);
    const double value = std::stod(ppl.out.substr(pos + 11));
    const double v = static_cast<double>(load_checkpoint(ws().p("fresh/model.ckpt")).model.config().tgt_vocab);
    CHECK(value == doctest::Approx(v).epsilon(0.5));
    CHECK(run("eval --hyp " + ws().p("tgt.txt")).code == 2);
  }
}
