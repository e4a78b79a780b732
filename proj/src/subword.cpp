// SPDX-License-Identifier: Apache-2.0
#include "treenmt/subword.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <regex>
#include <set>
#include <sstream>

#include "treenmt/error.hpp"

namespace treenmt {

namespace {

constexpr std::string_view kBpeHeader = "#version: treenmt-bpe-1";
constexpr std::string_view kLexicalLabel = "<LEX>";

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out << text;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  return lines;
}

struct PairHash {
  std::size_t operator()(const MergeTable::Pair& p) const noexcept {
    const std::size_t a = std::hash<std::string>{}(p.first);
    const std::size_t b = std::hash<std::string>{}(p.second);
    return a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  }
};

void apply_merge(std::vector<std::string>& syms, const MergeTable::Pair& pair) {
  std::vector<std::string> out;
  out.reserve(syms.size());
  for (std::size_t i = 0; i < syms.size();) {
    if (i + 1 < syms.size() && syms[i] == pair.first && syms[i + 1] == pair.second) {
      out.push_back(syms[i] + syms[i + 1]);
      i += 2;
    } else {
      out.push_back(std::move(syms[i]));
      ++i;
    }
  }
  syms = std::move(out);
}

std::vector<std::string> initial_symbols(std::string_view word) {
  auto syms = utf8_chars(word);
  syms.emplace_back(kEndOfWord);
  return syms;
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto c = static_cast<unsigned char>(text[i]);
    std::size_t len = 1;
    if (c >= 0xF0) len = 4;
    else if (c >= 0xE0) len = 3;
    else if (c >= 0xC0) len = 2;
    if (i + len > text.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k)
      if ((static_cast<unsigned char>(text[i + k]) & 0xC0) != 0x80) len = 1;
    out.emplace_back(text.substr(i, len));
    i += len;
  }
  return out;
}

Sentence generalize_tokens(std::span<const std::string> tokens) {
  static const std::regex number(R"(\d+([.,]\d+)*)");
  static const std::regex time(R"(\d{1,2}:\d{2}(:\d{2})?)");
  static const std::regex date(R"(\d{1,2}/\d{1,2}/\d{2,4}|\d{4}-\d{2}-\d{2})");
  Sentence out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    if (std::regex_match(t, date)) out.emplace_back("$date");
    else if (std::regex_match(t, time)) out.emplace_back("$time");
    else if (std::regex_match(t, number)) out.emplace_back("$number");
    else out.push_back(t);
  }
  return out;
}

bool is_placeholder(std::string_view token) {
  return token == "$number" || token == "$time" || token == "$date";
}

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add(t);
}

int Vocab::add(std::string token) {
  const int id = static_cast<int>(tokens_.size());
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

Vocab Vocab::build(std::span<const Sentence> corpus, std::size_t max_size) {
  std::map<std::string, std::size_t> freq;
  for (const auto& s : corpus)
    for (const auto& t : s) ++freq[t];
  if (freq.empty()) throw Error(ErrorKind::EmptyCorpus, "build_vocab on an empty corpus");
  Vocab v;
  for (std::size_t i = 0; i < kReserved; ++i) freq.erase(v.tokens_[i]);

  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = max_size > kReserved ? max_size - kReserved : 0;
  for (std::size_t i = 0; i < ranked.size() && i < keep; ++i) v.add(ranked[i].first);
  return v;
}

std::optional<int> Vocab::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

int Vocab::id_or_unk(std::string_view token) const { return find(token).value_or(kUnk); }

std::vector<int> Vocab::encode(std::span<const std::string> tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id_or_unk(t));
  return ids;
}

std::string Vocab::to_text() const {
  std::string out;
  for (std::size_t i = 0; i < tokens_.size(); ++i) out += tokens_[i] + "\t" + std::to_string(i) + "\n";
  return out;
}

Vocab Vocab::from_text(std::string_view text) {
  Vocab v;
  v.tokens_.clear();
  v.ids_.clear();
  std::size_t line_no = 0;
  for (auto line : split_lines(text)) {
    ++line_no;
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    if (tab == std::string_view::npos)
      throw Error(ErrorKind::FormatError, "vocab line " + std::to_string(line_no) + ": missing TAB");
    const std::string token(line.substr(0, tab));
    std::size_t id = 0;
    try {
      id = std::stoul(std::string(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw Error(ErrorKind::FormatError, "vocab line " + std::to_string(line_no) + ": bad id");
    }
    if (id != v.tokens_.size() || v.ids_.contains(token))
      throw Error(ErrorKind::FormatError, "vocab line " + std::to_string(line_no) + ": ids must be dense and unique");
    v.add(token);
  }
  const Vocab reserved;
  if (v.tokens_.size() < kReserved ||
      !std::equal(reserved.tokens_.begin(), reserved.tokens_.end(), v.tokens_.begin()))
    throw Error(ErrorKind::FormatError, "vocab must start with <pad> <bos> <eos> <unk>");
  return v;
}

void Vocab::save(const std::string& path) const { write_file(path, to_text()); }
Vocab Vocab::load(const std::string& path) { return from_text(read_file(path)); }

MergeTable::MergeTable(std::vector<Pair> merges) : merges_(std::move(merges)) {
  for (std::size_t i = 0; i < merges_.size(); ++i) {
    if (!ranks_.emplace(merges_[i], i).second)
      throw Error(ErrorKind::FormatError, "duplicate merge " + merges_[i].first + " " + merges_[i].second);
  }
}

std::optional<std::size_t> MergeTable::rank(const std::string& left, const std::string& right) const {
  auto it = ranks_.find(Pair{left, right});
  if (it == ranks_.end()) return std::nullopt;
  return it->second;
}

std::string MergeTable::to_text() const {
  std::string out(kBpeHeader);
  out += '\n';
  for (const auto& [l, r] : merges_) out += l + " " + r + "\n";
  return out;
}

MergeTable MergeTable::from_text(std::string_view text) {
  auto lines = split_lines(text);
  if (lines.empty() || lines[0] != kBpeHeader)
    throw Error(ErrorKind::VersionMismatch, "merges file must start with '" + std::string(kBpeHeader) + "'");
  std::vector<Pair> merges;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const auto sp = lines[i].find(' ');
    if (sp == std::string_view::npos || sp == 0 || sp + 1 >= lines[i].size() ||
        lines[i].find(' ', sp + 1) != std::string_view::npos)
      throw Error(ErrorKind::FormatError, "merges line " + std::to_string(i + 1) + ": expected 'left right'");
    merges.emplace_back(std::string(lines[i].substr(0, sp)), std::string(lines[i].substr(sp + 1)));
  }
  return MergeTable(std::move(merges));
}

void MergeTable::save(const std::string& path) const { write_file(path, to_text()); }
MergeTable MergeTable::load(const std::string& path) { return from_text(read_file(path)); }

MergeTable learn_bpe(std::span<const Sentence> corpus, std::size_t num_merges) {
  std::map<std::string, std::size_t> word_freq;
  for (const auto& s : corpus)
    for (const auto& t : s)
      if (!t.empty()) ++word_freq[t];
  if (word_freq.empty()) throw Error(ErrorKind::EmptyCorpus, "learn_bpe on an empty corpus");

  std::vector<std::vector<std::string>> words;
  std::vector<std::size_t> freq;
  words.reserve(word_freq.size());
  for (const auto& [w, f] : word_freq) {
    words.push_back(initial_symbols(w));
    freq.push_back(f);
  }

  std::vector<MergeTable::Pair> merges;
  for (std::size_t m = 0; m < num_merges; ++m) {
    std::unordered_map<MergeTable::Pair, std::size_t, PairHash> counts;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const auto& syms = words[w];
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += freq[w];
    }
    const MergeTable::Pair* best = nullptr;
    std::size_t best_count = 0;
    for (const auto& [pair, count] : counts) {
      if (count > best_count || (count == best_count && best != nullptr && pair < *best)) {
        best = &pair;
        best_count = count;
      }
    }
    if (best == nullptr || best_count < 2) break;
    const MergeTable::Pair chosen = *best;
    for (auto& syms : words) apply_merge(syms, chosen);
    merges.push_back(chosen);
  }
  return MergeTable(std::move(merges));
}

Segmentation segment_word(std::string_view word, const MergeTable& merges) {
  auto syms = initial_symbols(word);
  for (;;) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_at = 0;
    for (std::size_t i = 0; i + 1 < syms.size(); ++i) {
      if (auto r = merges.rank(syms[i], syms[i + 1]); r && *r < best_rank) {
        best_rank = *r;
        best_at = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    const MergeTable::Pair pair{syms[best_at], syms[best_at + 1]};
    apply_merge(syms, pair);
  }
  // A bare trailing marker rides on the preceding unit.
  if (syms.size() >= 2 && syms.back() == kEndOfWord) {
    syms[syms.size() - 2] += kEndOfWord;
    syms.pop_back();
  }
  return Segmentation{std::string(word), std::move(syms)};
}

Sentence subword_tokens(const Segmentation& seg) {
  Sentence out;
  out.reserve(seg.units.size());
  for (std::size_t i = 0; i < seg.units.size(); ++i) {
    std::string u = seg.units[i];
    if (u.ends_with(kEndOfWord)) u.resize(u.size() - kEndOfWord.size());
    if (i + 1 < seg.units.size()) u += kContinuation;
    out.push_back(std::move(u));
  }
  return out;
}

std::string detokenize(std::span<const std::string> tokens) {
  std::string out;
  bool glue = false;
  for (const auto& t : tokens) {
    if (!out.empty() && !glue) out += ' ';
    if (t.ends_with(kContinuation) && t.size() > kContinuation.size()) {
      out.append(t, 0, t.size() - kContinuation.size());
      glue = true;
    } else {
      out += t;
      glue = false;
    }
  }
  return out;
}

SyntaxTree graft_lexical_tree(const SyntaxTree& tree, std::size_t leaf_index, std::span<const std::string> units) {
  if (leaf_index >= tree.leaf_count())
    throw Error(ErrorKind::InvalidLeafIndex,
                "leaf " + std::to_string(leaf_index) + " of " + std::to_string(tree.leaf_count()));
  if (units.size() < 2) return tree;

  SyntaxTree out;
  std::size_t seen = 0;
  std::function<int(int)> build = [&](int id) -> int {
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) {
      if (seen++ != leaf_index) return out.add_leaf(n.token, n.label);
      int acc = out.add_leaf(units[0]);
      for (std::size_t k = 1; k < units.size(); ++k) {
        const int unit = out.add_leaf(units[k]);
        const bool top = k + 1 == units.size();
        acc = out.add_internal({acc, unit}, top ? n.label : std::optional<std::string>(std::string(kLexicalLabel)));
      }
      return acc;
    }
    std::vector<int> kids;
    kids.reserve(n.children.size());
    for (int c : n.children) kids.push_back(build(c));
    return out.add_internal(std::move(kids), n.label);
  };
  out.finish(build(tree.root()));
  return out;
}

EncodedSentence apply_rare_word_encoding(std::span<const std::string> sentence, const SyntaxTree& tree,
                                         const Vocab& vocab, const MergeTable& merges) {
  const auto leaves = tree.leaf_tokens();
  if (leaves.size() != sentence.size() || !std::equal(leaves.begin(), leaves.end(), sentence.begin()))
    throw Error(ErrorKind::AlignmentMismatch, "sentence tokens differ from tree leaves");
  SyntaxTree out = tree;
  // Right to left so earlier leaf indices stay valid.
  for (std::size_t i = sentence.size(); i-- > 0;) {
    if (vocab.contains(sentence[i]) || is_placeholder(sentence[i])) continue;
    const auto units = subword_tokens(segment_word(sentence[i], merges));
    out = graft_lexical_tree(out, i, units);
  }
  auto tokens = out.leaf_tokens();
  return EncodedSentence{std::move(tokens), std::move(out)};
}

Sentence segment_rare_words(std::span<const std::string> sentence, const Vocab& vocab, const MergeTable& merges) {
  Sentence out;
  for (const auto& t : sentence) {
    if (vocab.contains(t) || is_placeholder(t)) {
      out.push_back(t);
      continue;
    }
    for (auto& u : subword_tokens(segment_word(t, merges))) out.push_back(std::move(u));
  }
  return out;
}

std::size_t count_types(std::span<const Sentence> corpus) {
  std::set<std::string_view> types;
  for (const auto& s : corpus)
    for (const auto& t : s) types.insert(t);
  return types.size();
}

}  // namespace treenmt
