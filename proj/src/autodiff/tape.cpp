// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#include "fairalign/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fairalign::autodiff {
namespace {

double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

int arity(Op op) {
  switch (op) {
    case Op::kAdd:
    case Op::kSub:
    case Op::kMul:
    case Op::kDiv:
      return 2;
    case Op::kNeg:
    case Op::kExp:
    case Op::kLog:
    case Op::kRelu:
    case Op::kSigmoid:
    case Op::kSquare:
    case Op::kSqrt:
    case Op::kAbs:
    case Op::kStep:
    case Op::kSign:
      return 1;
    case Op::kSum:
    case Op::kDot:
    case Op::kLeaf:
      return -1;
  }
  return -1;
}

}  // namespace

const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kNeg: return "neg";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kRelu: return "relu";
    case Op::kSigmoid: return "sigmoid";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kAbs: return "abs";
    case Op::kSum: return "sum";
    case Op::kDot: return "dot";
    case Op::kStep: return "step";
    case Op::kSign: return "sign";
  }
  return "?";
}

std::uint32_t Tape::checked(NodeHandle node) const {
  if (node.tape_ != this) {
    throw std::invalid_argument("node handle belongs to a different tape");
  }
  if (node.generation_ != generation_ || node.index_ >= nodes_.size()) {
    throw std::invalid_argument("stale node handle");
  }
  return node.index_;
}

double Tape::evaluate(Op op, std::uint32_t first, std::uint32_t count) const {
  const std::uint32_t* in = operands_.data() + first;
  auto v = [&](std::uint32_t i) { return nodes_[in[i]].value; };
  switch (op) {
    case Op::kLeaf:
      throw std::logic_error("leaf nodes are not evaluated");
    case Op::kAdd: return v(0) + v(1);
    case Op::kSub: return v(0) - v(1);
    case Op::kMul: return v(0) * v(1);
    case Op::kDiv: return v(0) / v(1);
    case Op::kNeg: return -v(0);
    case Op::kExp: return std::exp(v(0));
    case Op::kLog:
      if (!(v(0) > 0.0)) {
        throw std::domain_error("log of non-positive value " +
                                std::to_string(v(0)));
      }
      return std::log(v(0));
    case Op::kRelu: return v(0) > 0.0 ? v(0) : 0.0;
    case Op::kSigmoid: return stable_sigmoid(v(0));
    case Op::kSquare: return v(0) * v(0);
    case Op::kSqrt:
      if (v(0) < 0.0) {
        throw std::domain_error("sqrt of negative value " +
                                std::to_string(v(0)));
      }
      return std::sqrt(v(0));
    case Op::kAbs: return std::fabs(v(0));
    case Op::kStep: return v(0) > 0.0 ? 1.0 : 0.0;
    case Op::kSign: return v(0) > 0.0 ? 1.0 : (v(0) < 0.0 ? -1.0 : 0.0);
    case Op::kSum: {
      double s = 0.0;
      for (std::uint32_t i = 0; i < count; ++i) s += v(i);
      return s;
    }
    case Op::kDot: {
      const std::uint32_t n = count / 2;
      double s = 0.0;
      for (std::uint32_t i = 0; i < n; ++i) s += v(i) * v(n + i);
      return s;
    }
  }
  throw std::logic_error("unknown opcode");
}

std::uint32_t Tape::push(Op op, std::span<const std::uint32_t> operands) {
  if (nodes_.size() >= std::numeric_limits<std::uint32_t>::max()) {
    throw std::length_error("tape is full");
  }
  const auto first = static_cast<std::uint32_t>(operands_.size());
  const auto count = static_cast<std::uint32_t>(operands.size());
  operands_.insert(operands_.end(), operands.begin(), operands.end());
  const double value = evaluate(op, first, count);
  nodes_.push_back(Node{op, first, count, value});
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

std::uint32_t Tape::push_unary(Op op, std::uint32_t a) {
  const std::uint32_t in[1] = {a};
  return push(op, in);
}

std::uint32_t Tape::push_binary(Op op, std::uint32_t a, std::uint32_t b) {
  const std::uint32_t in[2] = {a, b};
  return push(op, in);
}

NodeHandle Tape::variable(double value) {
  nodes_.push_back(
      Node{Op::kLeaf, static_cast<std::uint32_t>(operands_.size()), 0, value});
  return handle(static_cast<std::uint32_t>(nodes_.size() - 1));
}

NodeHandle Tape::apply(Op op, std::span<const NodeHandle> operands) {
  if (op == Op::kLeaf) {
    throw std::invalid_argument("use variable() to create leaves");
  }
  const int expected = arity(op);
  if (expected >= 0 && operands.size() != static_cast<std::size_t>(expected)) {
    throw std::invalid_argument(std::string(op_name(op)) + " expects " +
                                std::to_string(expected) + " operand(s), got " +
                                std::to_string(operands.size()));
  }
  if (op == Op::kSum && operands.empty()) {
    throw std::invalid_argument("sum needs at least one operand");
  }
  if (op == Op::kDot && (operands.empty() || operands.size() % 2 != 0)) {
    throw std::invalid_argument("dot needs two operand lists of equal length");
  }
  std::vector<std::uint32_t> indices;
  indices.reserve(operands.size());
  for (const NodeHandle& h : operands) indices.push_back(checked(h));
  return handle(push(op, indices));
}

NodeHandle Tape::add(NodeHandle a, NodeHandle b) {
  return handle(push_binary(Op::kAdd, checked(a), checked(b)));
}
NodeHandle Tape::sub(NodeHandle a, NodeHandle b) {
  return handle(push_binary(Op::kSub, checked(a), checked(b)));
}
NodeHandle Tape::mul(NodeHandle a, NodeHandle b) {
  return handle(push_binary(Op::kMul, checked(a), checked(b)));
}
NodeHandle Tape::div(NodeHandle a, NodeHandle b) {
  return handle(push_binary(Op::kDiv, checked(a), checked(b)));
}
NodeHandle Tape::neg(NodeHandle a) {
  return handle(push_unary(Op::kNeg, checked(a)));
}
NodeHandle Tape::exp(NodeHandle a) {
  return handle(push_unary(Op::kExp, checked(a)));
}
NodeHandle Tape::log(NodeHandle a) {
  return handle(push_unary(Op::kLog, checked(a)));
}
NodeHandle Tape::relu(NodeHandle a) {
  return handle(push_unary(Op::kRelu, checked(a)));
}
NodeHandle Tape::sigmoid(NodeHandle a) {
  return handle(push_unary(Op::kSigmoid, checked(a)));
}
NodeHandle Tape::square(NodeHandle a) {
  return handle(push_unary(Op::kSquare, checked(a)));
}
NodeHandle Tape::sqrt(NodeHandle a) {
  return handle(push_unary(Op::kSqrt, checked(a)));
}
NodeHandle Tape::abs(NodeHandle a) {
  return handle(push_unary(Op::kAbs, checked(a)));
}
NodeHandle Tape::sum(std::span<const NodeHandle> terms) {
  return apply(Op::kSum, terms);
}

NodeHandle Tape::dot(std::span<const NodeHandle> a,
                     std::span<const NodeHandle> b) {
  if (a.size() != b.size() || a.empty()) {
    throw std::invalid_argument("dot needs two operand lists of equal length");
  }
  std::vector<std::uint32_t> indices;
  indices.reserve(2 * a.size());
  for (const NodeHandle& h : a) indices.push_back(checked(h));
  for (const NodeHandle& h : b) indices.push_back(checked(h));
  return handle(push(Op::kDot, indices));
}

double Tape::value(NodeHandle node) const { return nodes_[checked(node)].value; }

Op Tape::op(NodeHandle node) const { return nodes_[checked(node)].op; }

void Tape::set_value(NodeHandle leaf, double value) {
  Node& n = nodes_[checked(leaf)];
  if (n.op != Op::kLeaf) {
    throw std::invalid_argument("set_value on a non-leaf node");
  }
  n.value = value;
}

void Tape::reevaluate() {
  for (Node& n : nodes_) {
    if (n.op != Op::kLeaf) n.value = evaluate(n.op, n.first, n.count);
  }
}

void Tape::clear() {
  nodes_.clear();
  operands_.clear();
  ++generation_;
}

void Tape::reserve(std::size_t nodes, std::size_t operands) {
  nodes_.reserve(nodes);
  operands_.reserve(operands);
}

std::vector<NodeHandle> Tape::gradient(NodeHandle output,
                                       std::span<const NodeHandle> wrt) {
  const std::uint32_t out = checked(output);
  std::uint32_t lo = out;
  for (const NodeHandle& w : wrt) lo = std::min(lo, checked(w));
  const std::size_t span_size = out - lo + 1;

  // A node is live if it depends on some wrt node and feeds the output.
  std::vector<std::uint8_t> active(span_size, 0);
  for (const NodeHandle& w : wrt) {
    if (w.index_ <= out) active[w.index_ - lo] = 1;
  }
  for (std::uint32_t i = lo; i <= out; ++i) {
    const Node& n = nodes_[i];
    if (active[i - lo] || n.op == Op::kLeaf) continue;
    for (std::uint32_t j = 0; j < n.count; ++j) {
      const std::uint32_t src = operands_[n.first + j];
      if (src >= lo && active[src - lo]) {
        active[i - lo] = 1;
        break;
      }
    }
  }

  std::vector<NodeHandle> result(wrt.size());
  std::uint32_t zero = 0;
  bool have_zero = false;
  auto zero_node = [&] {
    if (!have_zero) {
      zero = variable(0.0).index_;
      have_zero = true;
    }
    return zero;
  };
  if (!active[span_size - 1]) {
    for (auto& r : result) r = handle(zero_node());
    return result;
  }

  std::vector<std::uint8_t> needed(span_size, 0);
  needed[span_size - 1] = 1;
  for (std::uint32_t i = out + 1; i-- > lo;) {
    if (!needed[i - lo] || !active[i - lo]) continue;
    const Node& n = nodes_[i];
    for (std::uint32_t j = 0; j < n.count; ++j) {
      const std::uint32_t src = operands_[n.first + j];
      if (src >= lo && active[src - lo]) needed[src - lo] = 1;
    }
  }

  // Adjoint contributions as per-node singly linked lists.
  struct Entry {
    std::uint32_t node;
    std::int64_t next;
  };
  std::vector<std::int64_t> head(span_size, -1);
  std::vector<Entry> entries;
  auto contribute = [&](std::uint32_t target, std::uint32_t adjoint) {
    entries.push_back(Entry{adjoint, head[target - lo]});
    head[target - lo] = static_cast<std::int64_t>(entries.size() - 1);
  };
  auto wanted = [&](std::uint32_t src) {
    return src >= lo && active[src - lo] && needed[src - lo];
  };

  constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> adjoint(span_size, kNone);
  const std::uint32_t one = variable(1.0).index_;
  contribute(out, one);

  std::vector<std::uint32_t> gathered;
  for (std::uint32_t i = out + 1; i-- > lo;) {
    if (!needed[i - lo] || !active[i - lo] || head[i - lo] < 0) continue;
    gathered.clear();
    for (std::int64_t e = head[i - lo]; e >= 0; e = entries[e].next) {
      gathered.push_back(entries[e].node);
    }
    std::reverse(gathered.begin(), gathered.end());
    const std::uint32_t adj =
        gathered.size() == 1 ? gathered[0] : push(Op::kSum, gathered);
    adjoint[i - lo] = adj;

    // Copy: pushing nodes below may reallocate nodes_.
    const Node n = nodes_[i];
    if (n.op == Op::kLeaf) continue;
    auto in = [&](std::uint32_t j) { return operands_[n.first + j]; };
    auto scaled = [&](std::uint32_t factor) {
      return adj == one ? factor : push_binary(Op::kMul, adj, factor);
    };

    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        if (wanted(in(0))) contribute(in(0), adj);
        if (wanted(in(1))) contribute(in(1), adj);
        break;
      case Op::kSub:
        if (wanted(in(0))) contribute(in(0), adj);
        if (wanted(in(1))) contribute(in(1), push_unary(Op::kNeg, adj));
        break;
      case Op::kMul:
        if (wanted(in(0))) contribute(in(0), scaled(in(1)));
        if (wanted(in(1))) contribute(in(1), scaled(in(0)));
        break;
      case Op::kDiv:
        if (wanted(in(0))) contribute(in(0), push_binary(Op::kDiv, adj, in(1)));
        if (wanted(in(1))) {
          const std::uint32_t q = push_binary(Op::kDiv, scaled(i), in(1));
          contribute(in(1), push_unary(Op::kNeg, q));
        }
        break;
      case Op::kNeg:
        if (wanted(in(0))) contribute(in(0), push_unary(Op::kNeg, adj));
        break;
      case Op::kExp:
        if (wanted(in(0))) contribute(in(0), scaled(i));
        break;
      case Op::kLog:
        if (wanted(in(0))) contribute(in(0), push_binary(Op::kDiv, adj, in(0)));
        break;
      case Op::kRelu:
        if (wanted(in(0))) contribute(in(0), scaled(push_unary(Op::kStep, in(0))));
        break;
      case Op::kSigmoid:
        if (wanted(in(0))) {
          const std::uint32_t sq = push_unary(Op::kSquare, i);
          contribute(in(0), scaled(push_binary(Op::kSub, i, sq)));
        }
        break;
      case Op::kSquare:
        if (wanted(in(0))) {
          contribute(in(0), scaled(push_binary(Op::kAdd, in(0), in(0))));
        }
        break;
      case Op::kSqrt:
        if (wanted(in(0))) {
          contribute(in(0),
                     push_binary(Op::kDiv, adj, push_binary(Op::kAdd, i, i)));
        }
        break;
      case Op::kAbs:
        if (wanted(in(0))) contribute(in(0), scaled(push_unary(Op::kSign, in(0))));
        break;
      case Op::kSum:
        for (std::uint32_t j = 0; j < n.count; ++j) {
          if (wanted(in(j))) contribute(in(j), adj);
        }
        break;
      case Op::kDot: {
        const std::uint32_t half = n.count / 2;
        for (std::uint32_t j = 0; j < half; ++j) {
          if (wanted(in(j))) contribute(in(j), scaled(in(half + j)));
          if (wanted(in(half + j))) contribute(in(half + j), scaled(in(j)));
        }
        break;
      }
      case Op::kStep:
      case Op::kSign:
        break;
    }
  }

  for (std::size_t r = 0; r < wrt.size(); ++r) {
    const std::uint32_t a =
        wrt[r].index_ <= out ? adjoint[wrt[r].index_ - lo] : kNone;
    result[r] = handle(a == kNone ? zero_node() : a);
  }
  return result;
}

std::vector<double> Tape::gradient_values(
    NodeHandle output, std::span<const NodeHandle> wrt) const {
  const std::uint32_t out = checked(output);
  std::uint32_t lo = out;
  for (const NodeHandle& w : wrt) lo = std::min(lo, checked(w));

  std::vector<double> adj(out - lo + 1, 0.0);
  adj[out - lo] = 1.0;
  auto bump = [&](std::uint32_t src, double delta) {
    if (src >= lo) adj[src - lo] += delta;
  };

  for (std::uint32_t i = out + 1; i-- > lo;) {
    const double a = adj[i - lo];
    const Node& n = nodes_[i];
    if (a == 0.0 || n.op == Op::kLeaf) continue;
    const std::uint32_t* in = operands_.data() + n.first;
    auto v = [&](std::uint32_t j) { return nodes_[in[j]].value; };
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kAdd:
        bump(in[0], a);
        bump(in[1], a);
        break;
      case Op::kSub:
        bump(in[0], a);
        bump(in[1], -a);
        break;
      case Op::kMul:
        bump(in[0], a * v(1));
        bump(in[1], a * v(0));
        break;
      case Op::kDiv:
        bump(in[0], a / v(1));
        bump(in[1], -(a * n.value) / v(1));
        break;
      case Op::kNeg:
        bump(in[0], -a);
        break;
      case Op::kExp:
        bump(in[0], a * n.value);
        break;
      case Op::kLog:
        bump(in[0], a / v(0));
        break;
      case Op::kRelu:
        bump(in[0], v(0) > 0.0 ? a : 0.0);
        break;
      case Op::kSigmoid:
        bump(in[0], a * (n.value - n.value * n.value));
        break;
      case Op::kSquare:
        bump(in[0], a * (v(0) + v(0)));
        break;
      case Op::kSqrt:
        bump(in[0], a / (n.value + n.value));
        break;
      case Op::kAbs:
        bump(in[0], v(0) > 0.0 ? a : (v(0) < 0.0 ? -a : 0.0));
        break;
      case Op::kSum:
        for (std::uint32_t j = 0; j < n.count; ++j) bump(in[j], a);
        break;
      case Op::kDot: {
        const std::uint32_t half = n.count / 2;
        for (std::uint32_t j = 0; j < half; ++j) {
          bump(in[j], a * v(half + j));
          bump(in[half + j], a * v(j));
        }
        break;
      }
      case Op::kStep:
      case Op::kSign:
        break;
    }
  }

  std::vector<double> result(wrt.size());
  for (std::size_t r = 0; r < wrt.size(); ++r) {
    result[r] = wrt[r].index_ <= out ? adj[wrt[r].index_ - lo] : 0.0;
  }
  return result;
}

}  // namespace fairalign::autodiff
