//===- program_model.hpp - Declarative program representation --*- C++ -*-===//
//
// Functions, call sites, loops and per-function gadget annotations. This is
// the static universe every other stage works from. A ProgramModel is
// validated on construction and immutable afterwards.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "deckforge/ids.hpp"

namespace deckforge {

/// Components of an execve-to-shell chain a function's code may contribute.
enum class ChainComponent : std::uint8_t {
  WriteWhatWhere = 1u << 0,
  Args = 1u << 1,
  Syscall = 1u << 2,
};

class ChainFlags {
 public:
  constexpr ChainFlags() = default;
  constexpr explicit ChainFlags(std::uint8_t bits) : bits_(bits & 0x7u) {}

  constexpr bool has(ChainComponent c) const { return (bits_ & static_cast<std::uint8_t>(c)) != 0; }
  constexpr void set(ChainComponent c) { bits_ |= static_cast<std::uint8_t>(c); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint8_t bits() const { return bits_; }

  constexpr ChainFlags& operator|=(ChainFlags o) {
    bits_ |= o.bits_;
    return *this;
  }
  constexpr bool operator==(const ChainFlags&) const = default;

 private:
  std::uint8_t bits_ = 0;
};

struct GadgetProfile {
  std::uint64_t rop = 0;
  std::uint64_t jop = 0;
  std::uint64_t cop = 0;
  std::uint64_t special = 0;
  ChainFlags chain;

  std::uint64_t total() const { return rop + jop + cop + special; }
  bool operator==(const GadgetProfile&) const = default;
};

struct FunctionDef {
  FunctionId id;
  std::string name;
  std::uint64_t size = 1;  // bytes
  bool address_taken = false;
  GadgetProfile gadgets;
};

struct DirectCall {
  FunctionId callee;
};

struct IndirectCall {
  std::vector<FunctionId> targets;  // sorted, unique, non-empty
};

struct CallSite {
  SiteId id;
  FunctionId caller;
  std::variant<DirectCall, IndirectCall> kind;
  std::optional<LoopId> loop;  // innermost enclosing loop

  bool is_direct() const { return std::holds_alternative<DirectCall>(kind); }
  FunctionId callee() const { return std::get<DirectCall>(kind).callee; }
  const std::vector<FunctionId>& targets() const { return std::get<IndirectCall>(kind).targets; }
};

struct LoopDef {
  LoopId id;
  FunctionId function;
  std::optional<LoopId> parent;
  std::vector<SiteId> sites;  // sites whose innermost enclosing loop is this one
};

class ProgramModel {
 public:
  /// Validates every referential and structural invariant; throws
  /// ValidationError naming the first offending entity. Input order does not
  /// matter. A site's enclosing loop may be given either on the site or in
  /// the loop's site list (or both, if they agree).
  ProgramModel(std::vector<FunctionDef> functions, std::vector<CallSite> sites,
               std::vector<LoopDef> loops, FunctionId entry);

  std::span<const FunctionDef> functions() const { return functions_; }
  std::span<const CallSite> sites() const { return sites_; }
  std::span<const LoopDef> loops() const { return loops_; }
  FunctionId entry() const { return entry_; }

  bool has_function(FunctionId id) const;
  bool has_site(SiteId id) const;
  bool has_loop(LoopId id) const;

  const FunctionDef& function(FunctionId id) const;
  const CallSite& site(SiteId id) const;
  const LoopDef& loop(LoopId id) const;

  /// Call sites whose caller is `f`, ascending by id.
  const std::vector<SiteId>& sites_of(FunctionId f) const;
  /// Loops contained in `f`, ascending by id.
  const std::vector<LoopId>& loops_of(FunctionId f) const;
  /// Walks parent links up to the loop with no parent.
  LoopId outermost(LoopId l) const;
  /// True if `inner` equals `outer` or is nested (transitively) inside it.
  bool loop_within(LoopId inner, LoopId outer) const;

 private:
  std::vector<FunctionDef> functions_;
  std::vector<CallSite> sites_;
  std::vector<LoopDef> loops_;
  FunctionId entry_;
  std::map<FunctionId, std::vector<SiteId>> sites_by_caller_;
  std::map<FunctionId, std::vector<LoopId>> loops_by_function_;
};

ProgramModel load_model(std::string_view document);
ProgramModel load_model_file(const std::filesystem::path& path);

/// Serializes to the model file format; load_model(dump_model(m)) == m.
std::string dump_model(const ProgramModel& model);

using Adjacency = std::map<FunctionId, std::set<FunctionId>>;

/// Edge u->v iff some direct call site has caller u and callee v. Functions
/// without outgoing direct calls have no entry.
Adjacency direct_callgraph(const ProgramModel& model);

}  // namespace deckforge
