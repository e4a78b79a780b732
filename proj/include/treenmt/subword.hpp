// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "treenmt/tree.hpp"

namespace treenmt {

using Sentence = std::vector<std::string>;
using Corpus = std::vector<Sentence>;

inline constexpr std::string_view kEndOfWord = "</w>";
inline constexpr std::string_view kContinuation = "@@";

/// Replaces numbers, clock times and dates with `$number`, `$time`, `$date`.
Sentence generalize_tokens(std::span<const std::string> tokens);

/// True for the generalization placeholders, which are never segmented.
bool is_placeholder(std::string_view token);

class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  /// Reserved tokens only.
  Vocab();

  /// Reserved tokens plus the max_size - 4 most frequent tokens, ties broken
  /// lexicographically. Throws EmptyCorpus.
  static Vocab build(std::span<const Sentence> corpus, std::size_t max_size);

  std::optional<int> find(std::string_view token) const;
  bool contains(std::string_view token) const { return find(token).has_value(); }
  int id_or_unk(std::string_view token) const;
  const std::string& token(int id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const noexcept { return tokens_.size(); }
  bool is_reserved(int id) const noexcept { return id >= 0 && id < static_cast<int>(kReserved); }

  std::vector<int> encode(std::span<const std::string> tokens) const;

  /// `token<TAB>id` per line.
  std::string to_text() const;
  static Vocab from_text(std::string_view text);
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  int add(std::string token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Ordered BPE merges; a pair's rank is its position.
class MergeTable {
 public:
  using Pair = std::pair<std::string, std::string>;

  MergeTable() = default;
  explicit MergeTable(std::vector<Pair> merges);

  std::size_t size() const noexcept { return merges_.size(); }
  bool empty() const noexcept { return merges_.empty(); }
  const std::vector<Pair>& merges() const noexcept { return merges_; }
  std::optional<std::size_t> rank(const std::string& left, const std::string& right) const;

  /// `#version: treenmt-bpe-1` then `left right` per line in rank order.
  std::string to_text() const;
  static MergeTable from_text(std::string_view text);
  void save(const std::string& path) const;
  static MergeTable load(const std::string& path);

  friend bool operator==(const MergeTable& a, const MergeTable& b) { return a.merges_ == b.merges_; }

 private:
  std::vector<Pair> merges_;
  std::map<Pair, std::size_t> ranks_;
};

struct Segmentation {
  std::string word;
  /// Sub-word units; the last one carries the `</w>` marker.
  std::vector<std::string> units;
};

/// Greedy most-frequent-pair merge learning over word-frequency-weighted
/// character sequences terminated by `</w>`. Ties go to the
/// lexicographically smallest pair; stops once no pair occurs twice.
/// Throws EmptyCorpus.
MergeTable learn_bpe(std::span<const Sentence> corpus, std::size_t num_merges);

/// Applies the lowest-rank applicable merge until none applies.
Segmentation segment_word(std::string_view word, const MergeTable& merges);

/// Emitted form of a segmentation: `@@` on every unit but the last, marker
/// stripped from the last.
Sentence subword_tokens(const Segmentation& seg);

/// Joins `x@@ y` continuations back into words.
std::string detokenize(std::span<const std::string> tokens);

/// Replaces leaf `leaf_index` (0-based) with the left-composed binary tree
/// (((u1 u2) u3) ... un). Fewer than two units leaves the tree unchanged.
/// Throws InvalidLeafIndex.
SyntaxTree graft_lexical_tree(const SyntaxTree& tree, std::size_t leaf_index, std::span<const std::string> units);

struct EncodedSentence {
  Sentence tokens;
  SyntaxTree tree;
};

/// Segments and grafts every out-of-vocabulary token except placeholders. Throws AlignmentMismatch.
EncodedSentence apply_rare_word_encoding(std::span<const std::string> sentence, const SyntaxTree& tree,
                                         const Vocab& vocab, const MergeTable& merges);

/// Flat (tree-free) variant for the target side.
Sentence segment_rare_words(std::span<const std::string> sentence, const Vocab& vocab, const MergeTable& merges);

/// Number of distinct token types in a corpus.
std::size_t count_types(std::span<const Sentence> corpus);

/// Code points of a UTF-8 string (invalid bytes pass through one at a time).
std::vector<std::string> utf8_chars(std::string_view text);

}  // namespace treenmt
