// SPDX-License-Identifier: Apache-2.0
#include "treenmt/tape.hpp"

#include <cmath>
#include <string>

#include "treenmt/error.hpp"
#include "treenmt/kernels.hpp"

namespace treenmt {

namespace {
[[noreturn]] void shape_error(const char* what) { throw Error(ErrorKind::ShapeMismatch, what); }
}  // namespace

const Matrix& Tape::val(std::int32_t id) const {
  const Node& n = nodes_[id];
  return n.ref != nullptr && n.op == Op::Param ? *n.ref : n.value;
}

const Matrix& Tape::value(Var v) const { return val(v.id); }

void Tape::require_vector(Var v, const char* what) const {
  if (!v.valid() || v.id >= static_cast<std::int32_t>(nodes_.size())) shape_error(what);
  if (val(v.id).cols() != 1) shape_error(what);
}

void Tape::require_same(Var a, Var b, const char* what) const {
  if (!val(a.id).same_shape(val(b.id))) shape_error(what);
}

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  Node& n = nodes_.back();
  compute(n);
#ifndef NDEBUG
  if (!val(static_cast<std::int32_t>(nodes_.size() - 1)).all_finite())
    throw Error(ErrorKind::NumericError, "non-finite value recorded on tape");
#endif
  return Var{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::input(Matrix value) {
  Node n{.op = Op::Input};
  n.value = std::move(value);
  return push(std::move(n));
}

Var Tape::scalar(double value) { return input(Matrix(1, 1, value)); }

Var Tape::param(const ParamStore& store, ParamId id) {
  Node n{.op = Op::Param};
  n.ref = &store.value(id);
  n.pid = id;
  return push(std::move(n));
}

Var Tape::lookup(const ParamStore& store, ParamId table, std::size_t row) {
  const Matrix& t = store.value(table);
  if (row >= t.rows())
    throw Error(ErrorKind::UnknownTokenId, "id " + std::to_string(row) + " outside " + store.name(table));
  Node n{.op = Op::Lookup};
  n.ref = &t;
  n.pid = table;
  n.aux = row;
  return push(std::move(n));
}

Var Tape::affine(std::initializer_list<Var> terms, Var bias) {
  if (terms.size() % 2 != 0 || terms.size() == 0) shape_error("affine: terms must pair W with x");
  const Var* t = terms.begin();
  std::size_t m = val(t[0].id).rows();
  if (bias.valid()) {
    require_vector(bias, "affine: bias");
    m = val(bias.id).rows();
  }
  Node n{.op = Op::Affine, .aux = bias.valid() ? 1u : 0u};
  for (std::size_t k = 0; k < terms.size(); k += 2) {
    const Matrix& w = val(t[k].id);
    require_vector(t[k + 1], "affine: input");
    if (w.rows() != m || w.cols() != val(t[k + 1].id).rows()) shape_error("affine: W/x/b");
    n.in.push_back(t[k].id);
    n.in.push_back(t[k + 1].id);
  }
  if (bias.valid()) n.in.push_back(bias.id);
  return push(std::move(n));
}

Var Tape::add(Var a, Var b) {
  require_same(a, b, "add");
  return push(Node{.op = Op::Add, .in = {a.id, b.id}});
}

Var Tape::sub(Var a, Var b) {
  require_same(a, b, "sub");
  return push(Node{.op = Op::Sub, .in = {a.id, b.id}});
}

Var Tape::mul(Var a, Var b) {
  require_same(a, b, "mul");
  return push(Node{.op = Op::Mul, .in = {a.id, b.id}});
}

Var Tape::one_minus(Var a) { return push(Node{.op = Op::OneMinus, .in = {a.id}}); }
Var Tape::sigmoid(Var a) { return push(Node{.op = Op::Sigmoid, .in = {a.id}}); }
Var Tape::tanh(Var a) { return push(Node{.op = Op::Tanh, .in = {a.id}}); }

Var Tape::concat(std::span<const Var> parts) {
  if (parts.empty()) shape_error("concat: no parts");
  Node n{.op = Op::Concat};
  for (Var p : parts) {
    require_vector(p, "concat");
    n.in.push_back(p.id);
  }
  return push(std::move(n));
}

Var Tape::slice(Var a, std::size_t offset, std::size_t length) {
  require_vector(a, "slice");
  if (offset + length > val(a.id).rows() || length == 0) shape_error("slice: range");
  Node n{.op = Op::Slice, .in = {a.id}, .aux = offset};
  n.cache.assign(1, static_cast<double>(length));
  return push(std::move(n));
}

Var Tape::softmax(Var a) {
  require_vector(a, "softmax");
  return push(Node{.op = Op::Softmax, .in = {a.id}});
}

Var Tape::scale(Var v, Var s) {
  if (val(s.id).size() != 1) shape_error("scale: factor must be 1x1");
  return push(Node{.op = Op::Scale, .in = {v.id, s.id}});
}

Var Tape::dot(Var a, Var b) {
  require_same(a, b, "dot");
  return push(Node{.op = Op::Dot, .in = {a.id, b.id}});
}

Var Tape::sum(Var a) { return push(Node{.op = Op::Sum, .in = {a.id}}); }

Var Tape::add_n(std::span<const Var> terms) {
  if (terms.empty()) shape_error("add_n: no terms");
  Node n{.op = Op::AddN};
  for (Var t : terms) {
    require_same(t, terms[0], "add_n");
    n.in.push_back(t.id);
  }
  return push(std::move(n));
}

Var Tape::weighted_sum(Var weights, std::size_t offset, std::span<const Var> vectors, std::size_t dim) {
  std::vector<std::size_t> indices(vectors.size());
  for (std::size_t k = 0; k < indices.size(); ++k) indices[k] = offset + k;
  return weighted_sum(weights, indices, vectors, dim);
}

Var Tape::weighted_sum(Var weights, std::span<const std::size_t> indices, std::span<const Var> vectors,
                       std::size_t dim) {
  require_vector(weights, "weighted_sum: weights");
  if (indices.size() != vectors.size()) shape_error("weighted_sum: index count");
  for (std::size_t i : indices)
    if (i >= val(weights.id).rows()) shape_error("weighted_sum: weight range");
  Node n{.op = Op::WeightedSum, .in = {weights.id}, .aux = dim};
  n.index.assign(indices.begin(), indices.end());
  for (Var v : vectors) {
    require_vector(v, "weighted_sum: vector");
    if (val(v.id).rows() != dim) shape_error("weighted_sum: dim");
    n.in.push_back(v.id);
  }
  return push(std::move(n));
}

Var Tape::attention_scores(Var v, Var query, std::span<const Var> keys) {
  require_vector(v, "attention_scores: v");
  require_same(v, query, "attention_scores: query");
  if (keys.empty()) shape_error("attention_scores: no keys");
  Node n{.op = Op::AttnScores, .in = {v.id, query.id}};
  for (Var k : keys) {
    require_same(k, v, "attention_scores: key");
    n.in.push_back(k.id);
  }
  return push(std::move(n));
}

Var Tape::gru_mix(Var z, Var keep, Var candidate) {
  require_same(z, keep, "gru_mix");
  require_same(z, candidate, "gru_mix");
  return push(Node{.op = Op::GruMix, .in = {z.id, keep.id, candidate.id}});
}

Var Tape::nll(Var logits, std::size_t target) {
  require_vector(logits, "nll");
  if (target >= val(logits.id).rows()) throw Error(ErrorKind::UnknownTokenId, "nll target");
  return push(Node{.op = Op::Nll, .in = {logits.id}, .aux = target});
}

void Tape::compute(Node& n) {
  auto in = [&](std::size_t k) -> const Matrix& { return val(n.in[k]); };
  switch (n.op) {
    case Op::Input:
    case Op::Param:
      return;
    case Op::Lookup: {
      auto row = n.ref->row(n.aux);
      n.value = Matrix::column(std::vector<double>(row.begin(), row.end()));
      return;
    }
    case Op::Affine: {
      const std::size_t pairs = (n.in.size() - n.aux) / 2;
      if (n.aux != 0) n.value = in(n.in.size() - 1);
      else n.value = Matrix(in(0).rows(), 1);
      for (std::size_t k = 0; k < 2 * pairs; k += 2)
        kernels::matvec_acc(in(k), in(k + 1).values(), n.value.values());
      return;
    }
    case Op::Add:
    case Op::Sub:
    case Op::Mul: {
      const Matrix& a = in(0);
      const Matrix& b = in(1);
      n.value = Matrix(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i)
        n.value[i] = n.op == Op::Add ? a[i] + b[i] : n.op == Op::Sub ? a[i] - b[i] : a[i] * b[i];
      return;
    }
    case Op::OneMinus:
    case Op::Sigmoid:
    case Op::Tanh: {
      const Matrix& a = in(0);
      n.value = Matrix(a.rows(), a.cols());
      for (std::size_t i = 0; i < a.size(); ++i)
        n.value[i] = n.op == Op::OneMinus ? 1.0 - a[i]
                     : n.op == Op::Sigmoid ? kernels::sigmoid(a[i])
                                           : std::tanh(a[i]);
      return;
    }
    case Op::Concat: {
      std::size_t total = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) total += in(k).rows();
      n.value = Matrix(total, 1);
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.in.size(); ++k) {
        const Matrix& p = in(k);
        for (std::size_t i = 0; i < p.rows(); ++i) n.value[off + i] = p[i];
        off += p.rows();
      }
      return;
    }
    case Op::Slice: {
      const auto len = static_cast<std::size_t>(n.cache[0]);
      n.value = Matrix(len, 1);
      for (std::size_t i = 0; i < len; ++i) n.value[i] = in(0)[n.aux + i];
      return;
    }
    case Op::Softmax: {
      n.value = Matrix(in(0).rows(), 1);
      kernels::softmax(in(0).values(), n.value.values());
      return;
    }
    case Op::Scale: {
      const Matrix& v = in(0);
      const double s = in(1)[0];
      n.value = Matrix(v.rows(), v.cols());
      for (std::size_t i = 0; i < v.size(); ++i) n.value[i] = s * v[i];
      return;
    }
    case Op::Dot:
      n.value = Matrix(1, 1, kernels::dot(in(0).values(), in(1).values()));
      return;
    case Op::Sum: {
      double s = 0.0;
      for (double v : in(0).values()) s += v;
      n.value = Matrix(1, 1, s);
      return;
    }
    case Op::AddN: {
      n.value = in(0);
      for (std::size_t k = 1; k < n.in.size(); ++k) {
        const Matrix& t = in(k);
        for (std::size_t i = 0; i < t.size(); ++i) n.value[i] += t[i];
      }
      return;
    }
    case Op::WeightedSum: {
      const Matrix& w = in(0);
      n.value = Matrix(n.aux, 1);
      for (std::size_t k = 1; k < n.in.size(); ++k)
        kernels::axpy(w[n.index[k - 1]], in(k).values(), n.value.values());
      return;
    }
    case Op::AttnScores: {
      const Matrix& v = in(0);
      const Matrix& q = in(1);
      const std::size_t a = v.rows();
      const std::size_t count = n.in.size() - 2;
      n.value = Matrix(count, 1);
      n.cache.assign(count * a, 0.0);
      for (std::size_t k = 0; k < count; ++k) {
        const Matrix& key = in(k + 2);
        double e = 0.0;
        for (std::size_t i = 0; i < a; ++i) {
          const double t = std::tanh(q[i] + key[i]);
          n.cache[k * a + i] = t;
          e += v[i] * t;
        }
        n.value[k] = e;
      }
      return;
    }
    case Op::GruMix: {
      const Matrix& z = in(0);
      const Matrix& keep = in(1);
      const Matrix& cand = in(2);
      n.value = Matrix(z.rows(), z.cols());
      for (std::size_t i = 0; i < z.size(); ++i) n.value[i] = (1.0 - z[i]) * keep[i] + z[i] * cand[i];
      return;
    }
    case Op::Nll: {
      const Matrix& x = in(0);
      n.cache = kernels::softmax(x.values());
      const auto logp = kernels::log_softmax(x.values());
      n.value = Matrix(1, 1, -logp[n.aux]);
      return;
    }
  }
}

Matrix& Tape::adj_of(std::int32_t id) {
  Node& n = nodes_[id];
  if (n.adj.empty()) {
    const Matrix& v = val(id);
    n.adj = Matrix(v.rows(), v.cols());
  }
  return n.adj;
}

void Tape::backward(Var loss, GradStore* sink) {
  if (!loss.valid() || val(loss.id).size() != 1)
    throw Error(ErrorKind::NotScalarLoss, "backward needs a 1x1 loss node");
  for (auto& n : nodes_) n.adj = Matrix();
  adj_of(loss.id)[0] = 1.0;

  for (std::int32_t id = loss.id; id >= 0; --id) {
    if (nodes_[id].adj.empty()) continue;
    // adj_of() touches other nodes but never reallocates nodes_.
    Node& n = nodes_[id];
    const Matrix& g = n.adj;
    auto in = [&](std::size_t k) -> const Matrix& { return val(n.in[k]); };
    switch (n.op) {
      case Op::Input:
        break;
      case Op::Param:
        if (sink != nullptr) {
          auto dst = (*sink)[n.pid].values();
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
        break;
      case Op::Lookup:
        if (sink != nullptr) {
          auto dst = (*sink)[n.pid].row(n.aux);
          for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        }
        break;
      case Op::Affine: {
        const std::size_t pairs = (n.in.size() - n.aux) / 2;
        for (std::size_t k = 0; k < 2 * pairs; k += 2) {
          kernels::outer_acc(g.values(), in(k + 1).values(), adj_of(n.in[k]));
          kernels::matvec_t_acc(in(k), g.values(), adj_of(n.in[k + 1]).values());
        }
        if (n.aux != 0) kernels::axpy(1.0, g.values(), adj_of(n.in.back()).values());
        break;
      }
      case Op::Add:
      case Op::Sub: {
        kernels::axpy(1.0, g.values(), adj_of(n.in[0]).values());
        kernels::axpy(n.op == Op::Add ? 1.0 : -1.0, g.values(), adj_of(n.in[1]).values());
        break;
      }
      case Op::Mul: {
        Matrix& da = adj_of(n.in[0]);
        Matrix& db = adj_of(n.in[1]);
        const Matrix& a = in(0);
        const Matrix& b = in(1);
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += g[i] * b[i];
          db[i] += g[i] * a[i];
        }
        break;
      }
      case Op::OneMinus:
        kernels::axpy(-1.0, g.values(), adj_of(n.in[0]).values());
        break;
      case Op::Sigmoid: {
        Matrix& da = adj_of(n.in[0]);
        const Matrix& y = n.value;
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      }
      case Op::Tanh: {
        Matrix& da = adj_of(n.in[0]);
        const Matrix& y = n.value;
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      }
      case Op::Concat: {
        std::size_t off = 0;
        for (std::size_t k = 0; k < n.in.size(); ++k) {
          Matrix& dp = adj_of(n.in[k]);
          for (std::size_t i = 0; i < dp.rows(); ++i) dp[i] += g[off + i];
          off += dp.rows();
        }
        break;
      }
      case Op::Slice: {
        Matrix& da = adj_of(n.in[0]);
        for (std::size_t i = 0; i < g.size(); ++i) da[n.aux + i] += g[i];
        break;
      }
      case Op::Softmax: {
        Matrix& da = adj_of(n.in[0]);
        const Matrix& y = n.value;
        const double gy = kernels::dot(g.values(), y.values());
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += y[i] * (g[i] - gy);
        break;
      }
      case Op::Scale: {
        const Matrix& v = in(0);
        const double s = in(1)[0];
        kernels::axpy(s, g.values(), adj_of(n.in[0]).values());
        adj_of(n.in[1])[0] += kernels::dot(g.values(), v.values());
        break;
      }
      case Op::Dot: {
        kernels::axpy(g[0], in(1).values(), adj_of(n.in[0]).values());
        kernels::axpy(g[0], in(0).values(), adj_of(n.in[1]).values());
        break;
      }
      case Op::Sum: {
        Matrix& da = adj_of(n.in[0]);
        for (double& v : da.values()) v += g[0];
        break;
      }
      case Op::AddN:
        for (std::size_t k = 0; k < n.in.size(); ++k) kernels::axpy(1.0, g.values(), adj_of(n.in[k]).values());
        break;
      case Op::WeightedSum: {
        const Matrix& w = in(0);
        for (std::size_t k = 1; k < n.in.size(); ++k) {
          adj_of(n.in[0])[n.index[k - 1]] += kernels::dot(g.values(), in(k).values());
          kernels::axpy(w[n.index[k - 1]], g.values(), adj_of(n.in[k]).values());
        }
        break;
      }
      case Op::AttnScores: {
        const Matrix& v = in(0);
        const std::size_t a = v.rows();
        const std::size_t count = n.in.size() - 2;
        std::vector<double> u(a);
        for (std::size_t k = 0; k < count; ++k) {
          const double ge = g[k];
          if (ge == 0.0) continue;
          const double* t = n.cache.data() + k * a;
          Matrix& dv = adj_of(n.in[0]);
          for (std::size_t i = 0; i < a; ++i) {
            dv[i] += ge * t[i];
            u[i] = ge * v[i] * (1.0 - t[i] * t[i]);
          }
          kernels::axpy(1.0, u, adj_of(n.in[1]).values());
          kernels::axpy(1.0, u, adj_of(n.in[k + 2]).values());
        }
        break;
      }
      case Op::GruMix: {
        const Matrix& z = in(0);
        const Matrix& keep = in(1);
        const Matrix& cand = in(2);
        Matrix& dz = adj_of(n.in[0]);
        Matrix& dk = adj_of(n.in[1]);
        Matrix& dc = adj_of(n.in[2]);
        for (std::size_t i = 0; i < g.size(); ++i) {
          dz[i] += g[i] * (cand[i] - keep[i]);
          dk[i] += g[i] * (1.0 - z[i]);
          dc[i] += g[i] * z[i];
        }
        break;
      }
      case Op::Nll: {
        Matrix& dx = adj_of(n.in[0]);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[0] * n.cache[i];
        dx[n.aux] -= g[0];
        break;
      }
    }
  }
}

void Tape::replay() {
  for (auto& n : nodes_) compute(n);
}

}  // namespace treenmt
