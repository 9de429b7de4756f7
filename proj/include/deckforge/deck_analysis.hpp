//===- deck_analysis.hpp - Encompassed sets and deck placement -*- C++ -*-===//
//
// The compiler-pass half of on-demand code activation. A function is
// encompassed when it can run inside some loop (it is called from a loop or
// is directly reachable from such a callee). Encompassed functions carry no
// deck instrumentation except at indirect call sites; everything else gets a
// Single, Loop or Reachable deck around its call sites and outermost loops.
// The entry function is never encompassed: only init maps it.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "deckforge/ids.hpp"
#include "deckforge/program_model.hpp"

namespace deckforge {

using FunctionSet = std::set<FunctionId>;

struct EncompassedSets {
  FunctionSet encompassed;
  FunctionSet non_encompassed;

  bool is_encompassed(FunctionId f) const { return encompassed.contains(f); }
};

enum class DeckKind { Single, Loop, Reachable, Indirect };

const char* to_string(DeckKind kind);

/// Placeholder deck id for indirect decks: the real target is only known at
/// run time.
struct RuntimeTarget {
  auto operator<=>(const RuntimeTarget&) const = default;
};

struct DeckPoint {
  DeckKind kind;
  std::variant<SiteId, LoopId> anchor;
  std::variant<FunctionId, LoopId, RuntimeTarget> deck_id;

  auto operator<=>(const DeckPoint&) const = default;

  SiteId site() const { return std::get<SiteId>(anchor); }
  LoopId loop() const { return std::get<LoopId>(anchor); }
  FunctionId function() const { return std::get<FunctionId>(deck_id); }
};

struct InstrumentationPlan {
  /// Sorted by (kind, anchor).
  std::vector<DeckPoint> points;
  EncompassedSets encompassed_sets;
  /// For every function f: {f} plus everything reachable over direct calls.
  std::map<FunctionId, FunctionSet> reachable_closure;
  /// For every outermost loop: the functions reachable from call sites in the
  /// loop or any loop nested in it.
  std::map<LoopId, FunctionSet> loop_function_sets;

  const DeckPoint* point_at_site(SiteId site) const;
  const DeckPoint* point_at_loop(LoopId loop) const;
};

/// Breadth-first closure over `graph` starting from (and including) `root`.
FunctionSet reachable_from(const Adjacency& graph, FunctionId root);

EncompassedSets compute_encompassed(const ProgramModel& model);

InstrumentationPlan plan_instrumentation(const ProgramModel& model);

/// Plan export document (JSON). Deterministic for a given model.
std::string plan_to_json(const ProgramModel& model, const InstrumentationPlan& plan);

}  // namespace deckforge
