//===- ir.h - Kernel program IR ---------------------------------*- C++ -*-===//
//
// Part of the tcmc project, under the Apache License v2.0.
// SPDX-License-Identifier: Apache-2.0
//
//===----------------------------------------------------------------------===//
//
// The IR has two layers:
//
//  * GenericOp: an iteration domain, one projection/permutation index map
//    per operand, per-dimension iterator kinds and a scalar payload per
//    output. Operands are Views: rectangular windows into declared tensors.
//
//  * Structured ops: loops, foralls, guards, copies, TCM allocation, DMA
//    start/wait, async fork-join and the double-buffering toggle cell.
//
// Programs are plain values. Passes copy and return new programs.
//
//===----------------------------------------------------------------------===//

#ifndef TCMC_IR_H
#define TCMC_IR_H

#include "tcmc/int_expr.h"
#include "tcmc/payload.h"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace tcmc {

using TensorId = int;
using TagId = int;
using TokenId = int;
using GroupId = int;
using CellId = int;
using OpId = int;

enum class MemorySpace { kDDR, kTCM };
enum class ElementType { kF32, kF16 }; // f16 is stored and computed as f32
enum class TensorRole { kInput, kOutput, kTemp, kBuffer };
enum class IteratorKind { kParallel, kReduction };
enum class Combinator { kNone, kSum, kMax };

const char *spaceName(MemorySpace s);
const char *iteratorName(IteratorKind k);
const char *combinatorName(Combinator c);
float combinatorInit(Combinator c);

struct TensorDecl {
  TensorId id = -1;
  std::string name;
  std::vector<int64_t> shape;
  ElementType type = ElementType::kF32;
  MemorySpace space = MemorySpace::kDDR;
  TensorRole role = TensorRole::kTemp;

  int64_t numElements() const;
  int64_t bytes() const { return numElements() * 4; }
  bool narrow() const { return type == ElementType::kF16; }
};

/// Projection/permutation map from domain dims to operand dims. An absent
/// result indexes the operand at 0 (broadcast over an extent-1 dimension).
struct IndexMap {
  std::vector<std::optional<int>> results;

  static IndexMap identity(int rank);
  bool isIdentity(int domain_rank) const;
  std::string str(int domain_rank) const;
  friend bool operator==(const IndexMap &, const IndexMap &) = default;
};

/// Window `[offsets, offsets + sizes)` of a declared tensor.
struct View {
  TensorId tensor = -1;
  std::vector<IntExpr> offsets;
  std::vector<IntExpr> sizes;

  static View whole(const TensorDecl &decl);
  bool isWhole(const TensorDecl &decl) const;
  int rank() const { return static_cast<int>(sizes.size()); }
};

struct GenericOp {
  std::vector<IntExpr> extents;
  /// Static upper bound of each extent.
  std::vector<int64_t> max_extents;
  std::vector<IteratorKind> iterators;
  std::vector<View> inputs;
  std::vector<IndexMap> input_maps;
  std::vector<View> outputs;
  std::vector<IndexMap> output_maps;
  /// One per output. Arguments: inputs, then the accumulator for reductions.
  std::vector<Payload> payloads;
  std::vector<Combinator> combinators;
  /// >1 once vectorized along the innermost dimension.
  int vector_width = 1;

  int rank() const { return static_cast<int>(extents.size()); }
  bool allParallel() const;
  bool hasReduction() const { return !allParallel(); }
  int64_t maxPoints() const;
};

struct Op;
using Block = std::vector<Op>;

struct ForOp {
  VarId iv = -1;
  IntExpr upper; // iterates iv = 0 .. upper-1
  Block body;
};

struct ForallOp {
  VarId thread = -1;
  int64_t num_threads = 1;
  Block body;
};

enum class CmpKind { kLt, kEq, kNe };

struct Condition {
  IntExpr lhs;
  CmpKind cmp = CmpKind::kLt;
  IntExpr rhs;
  std::string str() const;
};

struct IfOp {
  Condition cond;
  Block body;
};

struct CopyOp {
  View src, dst;
};
struct AllocOp {
  TensorId buffer = -1;
};
struct DeallocOp {
  TensorId buffer = -1;
};
struct DmaStartOp {
  View src, dst;
  TagId tag = -1;
};
struct DmaWaitOp {
  TagId tag = -1;
};
struct TagAllocOp {
  TagId tag = -1;
};
struct TagDeallocOp {
  TagId tag = -1;
};
struct AsyncGroupOp {
  GroupId group = -1;
  int64_t size = 0;
};
struct AsyncExecuteOp {
  TokenId token = -1;
  Block body;
};
struct AddToGroupOp {
  GroupId group = -1;
  TokenId token = -1;
};
struct AwaitAllOp {
  GroupId group = -1;
};
struct StoreToggleOp {
  CellId cell = -1;
  IntExpr value;
};
struct LoadToggleOp {
  CellId cell = -1;
  VarId dest = -1;
};

enum class OpKind {
  kGeneric,
  kFor,
  kForall,
  kIf,
  kCopy,
  kAlloc,
  kDealloc,
  kDmaStart,
  kDmaWait,
  kTagAlloc,
  kTagDealloc,
  kAsyncGroup,
  kAsyncExecute,
  kAddToGroup,
  kAwaitAll,
  kStoreToggle,
  kLoadToggle,
};

const char *opKindName(OpKind k);

struct Op {
  using Node =
      std::variant<GenericOp, ForOp, ForallOp, IfOp, CopyOp, AllocOp, DeallocOp,
                   DmaStartOp, DmaWaitOp, TagAllocOp, TagDeallocOp,
                   AsyncGroupOp, AsyncExecuteOp, AddToGroupOp, AwaitAllOp,
                   StoreToggleOp, LoadToggleOp>;

  OpId id = -1;
  std::vector<std::string> annotations;
  Node node;

  OpKind kind() const { return static_cast<OpKind>(node.index()); }
  bool hasAnnotation(std::string_view a) const;
  /// Value of a `key=value` annotation.
  std::optional<std::string> annotationValue(std::string_view key) const;
  void annotate(std::string a);

  template <typename T> T &as() { return std::get<T>(node); }
  template <typename T> const T &as() const { return std::get<T>(node); }
  template <typename T> T *getIf() { return std::get_if<T>(&node); }
  template <typename T> const T *getIf() const { return std::get_if<T>(&node); }

  /// Nested block of for/forall/if/async_execute, or nullptr.
  Block *body();
  const Block *body() const;
};

struct KernelProgram {
  std::string name;
  std::string stage = "input";
  std::vector<TensorDecl> tensors;
  std::vector<TensorId> inputs;
  std::vector<TensorId> outputs;
  Block body;

  int num_vars = 0;
  int num_tags = 0;
  int num_tokens = 0;
  int num_groups = 0;
  int num_cells = 0;
  OpId next_op_id = 0;
  TensorId next_tensor_id = 0;

  const TensorDecl &tensor(TensorId id) const;
  TensorDecl &tensor(TensorId id);
  std::optional<TensorId> findTensor(std::string_view name) const;
  bool hasTensor(TensorId id) const;
  /// `base`, or `base_N` for the first N that is not taken.
  std::string freshName(const std::string &base) const;

  TensorId addTensor(std::string name, std::vector<int64_t> shape,
                     MemorySpace space, TensorRole role,
                     ElementType type = ElementType::kF32);
  /// Drops the declaration; ids of other tensors are unchanged.
  void removeTensor(TensorId id);

  VarId newVar() { return num_vars++; }
  TagId newTag() { return num_tags++; }
  TokenId newToken() { return num_tokens++; }
  GroupId newGroup() { return num_groups++; }
  CellId newCell() { return num_cells++; }

  template <typename T> Op makeOp(T node, std::vector<std::string> ann = {}) {
    Op op;
    op.id = next_op_id++;
    op.annotations = std::move(ann);
    op.node = std::move(node);
    return op;
  }
};

/// Pre-order walk over every op, including nested blocks.
void walk(const Block &block, const std::function<void(const Op &)> &fn);
void walk(Block &block, const std::function<void(Op &)> &fn);

/// Number of ops (static occurrences) satisfying `pred`.
int64_t countOps(const KernelProgram &p,
                 const std::function<bool(const Op &)> &pred);
int64_t countOps(const KernelProgram &p, OpKind kind);
int64_t countAnnotated(const KernelProgram &p, std::string_view annotation);

// Verification ---------------------------------------------------------------

struct Violation {
  OpId op = -1; // -1 for program-level violations
  std::string rule;
  std::string detail;
};

struct VerifyReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  bool has(std::string_view rule) const;
  std::string str() const;
};

struct VerifyOptions {
  /// When set, the sum of TCM buffer bytes allocated at any program point
  /// must not exceed this many bytes.
  std::optional<int64_t> tcm_bytes;
};

VerifyReport verify(const KernelProgram &p, const VerifyOptions &opts = {});

/// Peak bytes of simultaneously allocated TCM buffers (static liveness scan).
int64_t peakTcmBytes(const KernelProgram &p);

// Printing -------------------------------------------------------------------

std::string printIR(const KernelProgram &p);

} // namespace tcmc

#endif // TCMC_IR_H
