//===- metrics.hpp - Gadget reduction and chain availability ---*- C++ -*-===//
//
// Scores available-page logs. Each distinct available-page set AP is one
// sample; its reduction is (T - T_AP) / T * 100 where T counts every gadget
// (ROP + JOP + COP + special) in the program and T_AP only those on pages in
// AP. min/max/avg run over distinct sets, not over log records.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "deckforge/partitioner.hpp"
#include "deckforge/program_model.hpp"
#include "deckforge/runtime_sim.hpp"

namespace deckforge {

/// Exact non-negative fraction, always in lowest terms.
class Rational {
 public:
  constexpr Rational() = default;
  Rational(std::uint64_t num, std::uint64_t den);

  std::uint64_t num() const { return num_; }
  std::uint64_t den() const { return den_; }
  double to_double() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  /// Decimal rendering rounded half-up to `decimals` places.
  std::string render(int decimals = 1) const;

  bool operator==(const Rational&) const = default;
  std::strong_ordering operator<=>(const Rational& o) const;

 private:
  std::uint64_t num_ = 0;
  std::uint64_t den_ = 1;
};

enum class GadgetClass { Rop = 0, Jop = 1, Cop = 2, Special = 3 };
inline constexpr std::array<GadgetClass, 4> kGadgetClasses = {GadgetClass::Rop, GadgetClass::Jop, GadgetClass::Cop,
                                                              GadgetClass::Special};
const char* to_string(GadgetClass c);

struct ClassCounts {
  std::array<std::uint64_t, 4> by_class{};

  std::uint64_t operator[](GadgetClass c) const { return by_class[static_cast<int>(c)]; }
  std::uint64_t& operator[](GadgetClass c) { return by_class[static_cast<int>(c)]; }
  std::uint64_t total() const { return by_class[0] + by_class[1] + by_class[2] + by_class[3]; }
  ClassCounts& operator+=(const ClassCounts& o);
  bool operator==(const ClassCounts&) const = default;
};

struct PageGadgets {
  ClassCounts counts;
  ChainFlags chain;
};

/// Per-page gadget tallies. A function spanning several pages splits each
/// count by the bytes it has on each page (floor), remainder to its first
/// page; its chain flags apply to every page it touches.
struct PageGadgetIndex {
  std::vector<PageGadgets> pages;
};

PageGadgetIndex build_page_index(const ProgramModel& model, const DisjointLayout& layout);

std::uint64_t total_gadgets(const PageGadgetIndex& index);
ClassCounts class_totals(const PageGadgetIndex& index);
/// Tally over the pages of `ap`; throws ValidationError for pages outside
/// the index.
ClassCounts tally(const PageGadgetIndex& index, const PageSet& ap);

/// (T - T_AP) / T * 100. Throws ZeroTotal when T == 0.
Rational reduction_for(const PageGadgetIndex& index, const PageSet& ap);

struct ChainVerdict {
  bool www = false;
  bool args = false;
  bool syscall = false;

  bool e2e() const { return www && args && syscall; }
  bool operator==(const ChainVerdict&) const = default;
};

ChainVerdict chain_available(const PageGadgetIndex& index, const PageSet& ap);
PageSet all_pages(const PageGadgetIndex& index);

struct ApSummary {
  PageSet pages;
  ClassCounts counts;  // T_AP per class
  Rational reduction;
  ChainVerdict chain;
  std::uint64_t occurrences = 0;  // log records with exactly this set
};

struct ReductionReport {
  std::uint64_t total = 0;
  ClassCounts class_totals;
  std::vector<ApSummary> sets;  // distinct sets, lexicographic page order
  Rational min;
  Rational max;
  Rational avg;
  std::size_t unique_set_count = 0;
  std::size_t dynamic_execution_count = 0;
  /// Empty for classes with no gadgets at all.
  std::array<std::optional<Rational>, 4> class_avg;
};

/// Parallel over distinct available-page sets. Throws ZeroTotal when the
/// program has no gadgets and std::invalid_argument for an empty log.
ReductionReport summarize(const PageGadgetIndex& index, std::span<const LogRecord> log);
/// Single-threaded reference with the same contract.
ReductionReport summarize_serial(const PageGadgetIndex& index, std::span<const LogRecord> log);

struct ChainStudy {
  ChainVerdict baseline;            // all pages available
  bool any_dynamic_e2e = false;
  std::vector<PageSet> offending;   // distinct logged sets that allow the chain
  std::size_t sets_examined = 0;
};

ChainStudy chain_break_study(const PageGadgetIndex& index, std::span<const LogRecord> log);

/// Structured report (JSON). `summary` is absent when the program has no
/// gadgets.
std::string report_to_json(const std::optional<ReductionReport>& summary, const ChainStudy& study);
/// Human-readable Min/Max/Avg and W-W-W/Args/Syscall/E2E tables.
std::string report_to_table(const std::optional<ReductionReport>& summary, const ChainStudy& study);

}  // namespace deckforge
