//===- oracles.hpp - Independent reference computations for tests -*- C++ -*-===//
//
// Deliberately naive re-derivations of what the library computes, written
// from the definitions rather than from the library code: fixed-point
// iteration instead of worklists, Floyd-Warshall instead of BFS, signature
// grouping instead of pairwise splitting, byte-by-byte page attribution.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "deckforge/deck_analysis.hpp"
#include "deckforge/partitioner.hpp"
#include "deckforge/program_model.hpp"
#include "deckforge/runtime_sim.hpp"

namespace oracle {

using deckforge::FunctionId;
using deckforge::FunctionSet;
using deckforge::LoopId;

std::string fixture(const std::string& name);

/// Encompassed functions by repeated full sweeps until nothing changes. The
/// entry is never encompassed: nothing but init maps it.
FunctionSet encompassed(const deckforge::ProgramModel& model);

/// {f} plus everything reachable over direct calls, via Floyd-Warshall.
std::map<FunctionId, FunctionSet> closures(const deckforge::ProgramModel& model);

/// For each outermost loop: closure of every callee or target of any site
/// lexically inside it.
std::map<LoopId, FunctionSet> loop_sets(const deckforge::ProgramModel& model);

/// The deck points the instrumentation rules call for.
std::vector<deckforge::DeckPoint> deck_points(const deckforge::ProgramModel& model);

/// Groups elements by the exact set of inputs containing them.
std::vector<FunctionSet> atoms(const std::vector<FunctionSet>& inputs);

/// Empty string when cells are non-empty, pairwise disjoint, union to the
/// inputs' union, and each input is exactly a union of cells.
std::string partition_violation(const std::vector<FunctionSet>& inputs, const std::vector<FunctionSet>& cells);

/// Layout geometry checks: every section page-aligned and page-multiple,
/// functions inside their section without overlap, every model function
/// placed exactly once, cells matching placements.
std::string layout_violation(const deckforge::ProgramModel& model, const deckforge::DisjointLayout& layout);

/// Page indices touched by f, from raw byte arithmetic.
std::vector<std::uint64_t> pages(const deckforge::ProgramModel& model, const deckforge::DisjointLayout& layout,
                                 FunctionId f);

struct PageCounts {
  std::vector<std::array<std::uint64_t, 4>> counts;  // rop, jop, cop, special
  std::vector<std::uint8_t> chain;                   // ChainFlags bits
};

/// Per-page gadget counts: bytes per page counted one byte at a time, class
/// counts split proportionally (floor) with the remainder on the first page.
PageCounts page_counts(const deckforge::ProgramModel& model, const deckforge::DisjointLayout& layout);

__extension__ typedef unsigned __int128 u128;

/// Unreduced fraction (T - T_AP) * 100 / T.
struct Fraction {
  u128 num;
  u128 den;
};
Fraction reduction(const PageCounts& pc, const std::vector<std::uint64_t>& ap);
bool equal(const Fraction& f, std::uint64_t num, std::uint64_t den);
/// Long division to one decimal, half-up on the next digit's remainder.
std::string render1(const Fraction& f);

/// Members a deck record refers to, from the oracle closures.
FunctionSet deck_members(const deckforge::ProgramModel& model, deckforge::ApiCall api, std::uint32_t arg);

/// Replays a log without stack cleaning: after each record the available
/// pages must be the entry pages plus the pages of every open deck. Returns
/// an empty string or the first mismatch.
std::string replay_without_sc(const deckforge::ProgramModel& model, const deckforge::DisjointLayout& layout,
                              const deckforge::Log& log);

}  // namespace oracle
