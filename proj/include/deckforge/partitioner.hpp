//===- partitioner.hpp - Disjoint sets and page-aligned layout -*- C++ -*-===//
//
// Turns deck sets into a partition of functions where every deck is a union
// of partition cells, then gives each cell its own page-aligned section so
// activating one deck never exposes code of an unrelated one.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "deckforge/deck_analysis.hpp"
#include "deckforge/program_model.hpp"

namespace deckforge {

inline constexpr std::uint64_t kDefaultPageSize = 4096;

struct DeckSet {
  DeckKind origin;
  std::uint32_t origin_id;  // callee, loop, or address-taken root
  FunctionSet members;
};

/// Order: Singles, Loops, Reachables, Indirects; each ascending by id.
std::vector<DeckSet> build_deck_sets(const ProgramModel& model, const InstrumentationPlan& plan);

/// Pairwise intersection splitting. Output cells are non-empty, pairwise
/// disjoint, cover the union of the inputs, and every input is a union of
/// output cells. Throws EmptyInputSet.
std::vector<FunctionSet> create_disjoint_sets(std::vector<FunctionSet> deck_sets);

struct Placement {
  std::size_t section = 0;
  std::uint64_t offset = 0;  // bytes from the section start
};

/// Inclusive page index range.
struct PageSpan {
  std::uint64_t first = 0;
  std::uint64_t last = 0;
};

struct DisjointLayout {
  /// One cell per section, in section order.
  std::vector<FunctionSet> disjoint_sets;
  std::uint64_t page_size = kDefaultPageSize;
  std::map<FunctionId, Placement> placements;
  std::vector<std::uint64_t> section_sizes;
  std::string linker_script;

  std::uint64_t section_base(std::size_t section) const;
  std::uint64_t total_bytes() const;
  std::uint64_t page_count() const { return total_bytes() / page_size; }
  PageSpan pages_of(FunctionId f, std::uint64_t size) const;
};

/// Packs each cell contiguously in ascending id order. Model functions not in
/// any cell get a trailing singleton section each. Sections start on page
/// boundaries and are page-multiples in size.
DisjointLayout assign_pages(const ProgramModel& model, const std::vector<FunctionSet>& disjoint_sets,
                            std::uint64_t page_size = kDefaultPageSize);

/// build_deck_sets -> create_disjoint_sets -> assign_pages, keeping the entry
/// function in a section of its own.
DisjointLayout build_layout(const ProgramModel& model, const InstrumentationPlan& plan,
                            std::uint64_t page_size = kDefaultPageSize);

struct GrowthReport {
  std::uint64_t baseline = 0;    // all functions packed, page-rounded once
  std::uint64_t custom = 0;      // sum of section sizes
  std::uint64_t worst_case = 0;  // every function in its own section
  double growth() const { return static_cast<double>(custom) / static_cast<double>(baseline); }
  double improvement() const { return static_cast<double>(worst_case) / static_cast<double>(custom); }
};

GrowthReport growth_report(const ProgramModel& model, const DisjointLayout& layout);

/// Layout document (JSON): page size, sections with placements and page
/// spans. Read back by the simulator and the report stage.
std::string layout_to_json(const ProgramModel& model, const DisjointLayout& layout);
DisjointLayout layout_from_json(const ProgramModel& model, std::string_view document);

/// Brute-force check of the partition laws; returns a description of the
/// first violation or an empty string.
std::string check_partition(const std::vector<FunctionSet>& inputs, const std::vector<FunctionSet>& cells);

}  // namespace deckforge
