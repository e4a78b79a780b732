// SPDX-License-Identifier: Apache-2.0
#include "treenmt/tree.hpp"

#include <cctype>
#include <functional>

#include "treenmt/error.hpp"

namespace treenmt {

int SyntaxTree::add_leaf(std::string token, std::optional<std::string> label) {
  TreeNode n;
  n.token = std::move(token);
  n.label = std::move(label);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

int SyntaxTree::add_internal(std::vector<int> children, std::optional<std::string> label) {
  TreeNode n;
  n.children = std::move(children);
  n.label = std::move(label);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size() - 1);
}

void SyntaxTree::finish(int root) {
  root_ = root;
  int next = 1;
  std::function<void(int)> walk = [&](int id) {
    TreeNode& n = nodes_[id];
    if (n.is_leaf()) {
      n.span = {next, next};
      ++next;
      return;
    }
    for (int c : n.children) walk(c);
    n.span = {nodes_[n.children.front()].span.first, nodes_[n.children.back()].span.last};
  };
  walk(root_);
  leaf_count_ = static_cast<std::size_t>(next - 1);
}

bool SyntaxTree::is_binary() const noexcept {
  for (const auto& n : nodes_)
    if (!n.is_leaf() && n.children.size() != 2) return false;
  return true;
}

void SyntaxTree::collect_leaves(int id, std::vector<int>& out) const {
  const TreeNode& n = nodes_[id];
  if (n.is_leaf()) {
    out.push_back(id);
    return;
  }
  for (int c : n.children) collect_leaves(c, out);
}

std::vector<int> SyntaxTree::leaf_ids() const {
  std::vector<int> out;
  out.reserve(leaf_count_);
  if (root_ >= 0) collect_leaves(root_, out);
  return out;
}

std::vector<std::string> SyntaxTree::leaf_tokens() const {
  std::vector<std::string> out;
  for (int id : leaf_ids()) out.push_back(nodes_[id].token);
  return out;
}

SyntaxTree SyntaxTree::with_leaf_tokens(std::span<const std::string> tokens) const {
  const auto ids = leaf_ids();
  if (ids.size() != tokens.size())
    throw Error(ErrorKind::AlignmentMismatch, "token count differs from tree leaf count");
  SyntaxTree copy = *this;
  for (std::size_t i = 0; i < ids.size(); ++i) copy.nodes_[ids[i]].token = tokens[i];
  return copy;
}

bool operator==(const SyntaxTree& a, const SyntaxTree& b) {
  if (a.root_ < 0 || b.root_ < 0) return a.root_ == b.root_;
  std::function<bool(int, int)> same = [&](int x, int y) {
    const TreeNode& p = a.nodes_[x];
    const TreeNode& q = b.nodes_[y];
    if (p.label != q.label || p.token != q.token || p.span != q.span) return false;
    if (p.children.size() != q.children.size()) return false;
    for (std::size_t i = 0; i < p.children.size(); ++i)
      if (!same(p.children[i], q.children[i])) return false;
    return true;
  };
  return same(a.root_, b.root_);
}

namespace {

class BracketParser {
 public:
  explicit BracketParser(std::string_view text) : text_(text) {}

  SyntaxTree parse() {
    skip_space();
    if (at_end()) throw Error(ErrorKind::EmptyNode, "empty input");
    int root;
    if (peek() == '(') {
      root = parse_group();
    } else if (peek() == ')') {
      throw Error(ErrorKind::UnbalancedBrackets, "unexpected ')' at offset " + std::to_string(pos_));
    } else {
      root = tree_.add_leaf(read_word());
    }
    skip_space();
    if (!at_end()) {
      if (peek() == ')')
        throw Error(ErrorKind::UnbalancedBrackets, "unexpected ')' at offset " + std::to_string(pos_));
      throw Error(ErrorKind::MultipleRoots, "trailing content at offset " + std::to_string(pos_));
    }
    tree_.finish(root);
    return std::move(tree_);
  }

 private:
  struct Item {
    int id = -1;        // parsed group
    std::string word;   // bare token when id < 0
  };

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return text_[pos_]; }
  static bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
  static bool is_word_char(char c) { return !is_space(c) && c != '(' && c != ')'; }

  void skip_space() {
    while (!at_end() && is_space(peek())) ++pos_;
  }

  std::string read_word() {
    const std::size_t start = pos_;
    while (!at_end() && is_word_char(peek())) ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  int parse_group() {
    const std::size_t open = pos_;
    ++pos_;  // '('
    std::optional<std::string> label;
    if (!at_end() && is_word_char(peek())) label = read_word();

    std::vector<Item> items;
    for (;;) {
      skip_space();
      if (at_end())
        throw Error(ErrorKind::UnbalancedBrackets, "unclosed '(' at offset " + std::to_string(open));
      const char c = peek();
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        items.push_back({parse_group(), {}});
      } else {
        items.push_back({-1, read_word()});
      }
    }

    if (items.empty())
      throw Error(ErrorKind::EmptyNode, "node without children or token at offset " + std::to_string(open));
    // Preterminal: the group is the leaf itself.
    if (items.size() == 1 && items[0].id < 0) return tree_.add_leaf(std::move(items[0].word), std::move(label));
    std::vector<int> children;
    children.reserve(items.size());
    for (auto& it : items) children.push_back(it.id >= 0 ? it.id : tree_.add_leaf(std::move(it.word)));
    return tree_.add_internal(std::move(children), std::move(label));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  SyntaxTree tree_;
};

std::string escape_token(const std::string& token) {
  std::string out;
  out.reserve(token.size());
  for (char c : token) {
    if (c == '(') out += "-LRB-";
    else if (c == ')') out += "-RRB-";
    else out += c;
  }
  return out;
}

}  // namespace

SyntaxTree parse_bracketed(std::string_view text) { return BracketParser(text).parse(); }

SyntaxTree binarize(const SyntaxTree& tree) {
  SyntaxTree out;
  std::function<int(int)> build = [&](int id) -> int {
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) return out.add_leaf(n.token, n.label);
    if (n.children.size() == 1) return build(n.children[0]);
    std::vector<int> kids;
    kids.reserve(n.children.size());
    for (int c : n.children) kids.push_back(build(c));
    int acc = kids[0];
    for (std::size_t i = 1; i + 1 < kids.size(); ++i)
      acc = out.add_internal({acc, kids[i]}, std::string(kBinarizedLabel));
    return out.add_internal({acc, kids.back()}, n.label);
  };
  out.finish(build(tree.root()));
  return out;
}

std::string serialize(const SyntaxTree& tree) {
  std::string out;
  std::function<void(int)> emit = [&](int id) {
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) {
      if (n.label) {
        out += '(';
        out += *n.label;
        out += ' ';
        out += escape_token(n.token);
        out += ')';
      } else {
        out += escape_token(n.token);
      }
      return;
    }
    out += '(';
    if (n.label) out += *n.label;
    for (int c : n.children) {
      out += ' ';
      emit(c);
    }
    out += ')';
  };
  emit(tree.root());
  return out;
}

NodeTable enumerate_nodes(const SyntaxTree& tree) {
  if (!tree.is_binary()) throw Error(ErrorKind::NonBinaryTree, "enumerate_nodes requires a binary tree");
  NodeTable t;
  t.parent.assign(tree.node_count(), -1);
  t.side.assign(tree.node_count(), Side::Left);
  std::function<void(int)> walk = [&](int id) {
    const TreeNode& n = tree.node(id);
    if (n.is_leaf()) {
      t.leaves.push_back(id);
      return;
    }
    const int l = n.children[0];
    const int r = n.children[1];
    t.parent[l] = id;
    t.parent[r] = id;
    t.side[l] = Side::Left;
    t.side[r] = Side::Right;
    walk(l);
    walk(r);
    t.internals.push_back(id);
  };
  walk(tree.root());
  return t;
}

}  // namespace treenmt
