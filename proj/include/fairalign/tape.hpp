// Copyright 2026 The fairalign Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fairalign::autodiff {

/// Primitive operations recorded on a tape.
///
/// kStep (Heaviside, 1 for x > 0) and kSign are internal: they appear in
/// gradient graphs built for relu and abs and have zero derivative.
enum class Op : std::uint8_t {
  kLeaf,
  kAdd,
  kSub,
  kMul,
  kDiv,
  kNeg,
  kExp,
  kLog,
  kRelu,
  kSigmoid,
  kSquare,
  kSqrt,
  kAbs,
  kSum,
  kDot,
  kStep,
  kSign,
};

const char* op_name(Op op);

class Tape;

/// Dense index of a node on one particular tape. Handles from another tape,
/// or from before the owning tape was cleared, are rejected by the tape.
class NodeHandle {
 public:
  NodeHandle() = default;

  std::uint32_t index() const { return index_; }
  const Tape* owner() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

  friend bool operator==(const NodeHandle&, const NodeHandle&) = default;

 private:
  friend class Tape;
  NodeHandle(const Tape* tape, std::uint32_t index, std::uint32_t generation)
      : tape_(tape), index_(index), generation_(generation) {}

  const Tape* tape_ = nullptr;
  std::uint32_t index_ = 0;
  std::uint32_t generation_ = 0;
};

/// Append-only scalar expression tape with reverse-mode differentiation.
///
/// Every node caches its value at construction. `gradient` appends the
/// adjoint computation to the same tape, so its results can be
/// differentiated again. `gradient_values` is the value-only sweep used when
/// no further differentiation is needed.
///
/// A tape has a single owner; it is neither copyable nor movable because
/// handles refer to it by address.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  NodeHandle variable(double value);
  /// Same as a variable; named separately to document intent at call sites.
  NodeHandle constant(double value) { return variable(value); }

  NodeHandle apply(Op op, std::span<const NodeHandle> operands);

  NodeHandle add(NodeHandle a, NodeHandle b);
  NodeHandle sub(NodeHandle a, NodeHandle b);
  NodeHandle mul(NodeHandle a, NodeHandle b);
  NodeHandle div(NodeHandle a, NodeHandle b);
  NodeHandle neg(NodeHandle a);
  NodeHandle exp(NodeHandle a);
  NodeHandle log(NodeHandle a);
  NodeHandle relu(NodeHandle a);
  NodeHandle sigmoid(NodeHandle a);
  NodeHandle square(NodeHandle a);
  NodeHandle sqrt(NodeHandle a);
  NodeHandle abs(NodeHandle a);
  NodeHandle sum(std::span<const NodeHandle> terms);
  /// Fused inner product sum_i a[i] * b[i].
  NodeHandle dot(std::span<const NodeHandle> a, std::span<const NodeHandle> b);

  double value(NodeHandle node) const;
  Op op(NodeHandle node) const;

  /// Overwrites a leaf value. Call `reevaluate` afterwards to refresh
  /// dependent nodes.
  void set_value(NodeHandle leaf, double value);
  /// Recomputes every non-leaf node from its operands, in tape order.
  void reevaluate();

  /// Builds d(output)/d(wrt[i]) as new nodes on this tape.
  std::vector<NodeHandle> gradient(NodeHandle output,
                                   std::span<const NodeHandle> wrt);
  /// Numeric adjoints d(output)/d(wrt[i]); does not grow the tape.
  std::vector<double> gradient_values(NodeHandle output,
                                      std::span<const NodeHandle> wrt) const;

  std::size_t size() const { return nodes_.size(); }
  /// Drops all nodes and invalidates outstanding handles; keeps capacity.
  void clear();
  void reserve(std::size_t nodes, std::size_t operands);

 private:
  struct Node {
    Op op;
    std::uint32_t first;
    std::uint32_t count;
    double value;
  };

  std::uint32_t checked(NodeHandle node) const;
  std::uint32_t push(Op op, std::span<const std::uint32_t> operands);
  std::uint32_t push_unary(Op op, std::uint32_t a);
  std::uint32_t push_binary(Op op, std::uint32_t a, std::uint32_t b);
  double evaluate(Op op, std::uint32_t first, std::uint32_t count) const;
  NodeHandle handle(std::uint32_t index) const {
    return NodeHandle(this, index, generation_);
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> operands_;
  std::uint32_t generation_ = 0;
};

}  // namespace fairalign::autodiff
