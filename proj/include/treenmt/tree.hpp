// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace treenmt {

/// 1-based inclusive leaf range covered by a node.
struct Span {
  int first = 0;
  int last = 0;
  friend bool operator==(Span, Span) = default;
};

struct TreeNode {
  std::optional<std::string> label;
  std::string token;            // set iff leaf
  std::vector<int> children;    // node ids, left to right
  Span span;

  bool is_leaf() const noexcept { return children.empty(); }
};

inline constexpr std::string_view kBinarizedLabel = "<BIN>";

/// Constituency tree over one sentence. Nodes live in a flat array and are
/// addressed by id; the tree is immutable once built, so concurrent readers
/// are fine.
class SyntaxTree {
 public:
  /// Builder entry points. Children must already exist.
  int add_leaf(std::string token, std::optional<std::string> label = std::nullopt);
  int add_internal(std::vector<int> children, std::optional<std::string> label = std::nullopt);
  /// Fixes the root and recomputes spans.
  void finish(int root);

  int root() const noexcept { return root_; }
  const TreeNode& node(int id) const { return nodes_[id]; }
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept { return leaf_count_; }
  bool is_binary() const noexcept;

  /// Leaf node ids left to right.
  std::vector<int> leaf_ids() const;
  std::vector<std::string> leaf_tokens() const;

  /// Copy with leaf tokens replaced in order. Throws AlignmentMismatch.
  SyntaxTree with_leaf_tokens(std::span<const std::string> tokens) const;

  /// Structural equality: shape, labels, leaf tokens.
  friend bool operator==(const SyntaxTree& a, const SyntaxTree& b);

 private:
  void collect_leaves(int id, std::vector<int>& out) const;

  std::vector<TreeNode> nodes_;
  int root_ = -1;
  std::size_t leaf_count_ = 0;
};

/// Parses one bracketed tree such as `(S (NP I) (VP run))`.
///
/// A `(X tok)` group is a leaf labelled X; bare tokens are unlabelled leaves.
/// The label is the word glued to the opening bracket; `( a b)` (space after
/// the bracket) and `((A a) (B b))` carry no label. Throws
/// UnbalancedBrackets, EmptyNode or MultipleRoots.
SyntaxTree parse_bracketed(std::string_view text);

/// Left-binarizes n-ary nodes with `<BIN>` on the introduced nodes and
/// collapses unary chains onto their child (the child's label wins).
SyntaxTree binarize(const SyntaxTree& tree);

/// Inverse of parse_bracketed. Tokens containing brackets are written as
/// -LRB- / -RRB-.
std::string serialize(const SyntaxTree& tree);

enum class Side { Left, Right };

/// Traversal tables over a binary tree.
struct NodeTable {
  std::vector<int> leaves;     // left to right
  std::vector<int> internals;  // bottom-up (post-order); reverse is top-down
  std::vector<int> parent;     // by node id; -1 at the root
  std::vector<Side> side;      // by node id; meaningful where parent >= 0

  /// Word and phrase nodes, plus one when the end-of-sentence state is attended.
  std::size_t attention_nodes(bool with_eos = false) const noexcept {
    return leaves.size() + internals.size() + (with_eos ? 1 : 0);
  }
};

/// Throws NonBinaryTree.
NodeTable enumerate_nodes(const SyntaxTree& tree);

}  // namespace treenmt
