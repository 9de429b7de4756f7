//===- runtime_sim.hpp - Deck runtime and trace replay ---------*- C++ -*-===//
//
// DeckRuntime models the runtime library: page reference counts, the
// available-page set, indirect deck caching (IDC) and stack cleaning (SC).
// simulate() replays an execution trace against a plan and layout, firing
// runtime calls exactly where the plan anchors decks, and returns the
// available-page log.
//
// A page is available (RX) iff its reference count is positive. Every deck
// begin increments each page of each member function once; the paired end
// decrements the same multiset.
//
//===----------------------------------------------------------------------===//
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "deckforge/deck_analysis.hpp"
#include "deckforge/partitioner.hpp"
#include "deckforge/program_model.hpp"

namespace deckforge {

// ---------------------------------------------------------------------------
// Traces

struct CallDirectEvent {
  SiteId site;
  bool operator==(const CallDirectEvent&) const = default;
};
struct CallIndirectEvent {
  SiteId site;
  FunctionId target;
  bool operator==(const CallIndirectEvent&) const = default;
};
struct ReturnEvent {
  bool operator==(const ReturnEvent&) const = default;
};
struct LoopEnterEvent {
  LoopId loop;
  bool operator==(const LoopEnterEvent&) const = default;
};
struct LoopExitEvent {
  LoopId loop;
  bool operator==(const LoopExitEvent&) const = default;
};

using TraceEvent = std::variant<CallDirectEvent, CallIndirectEvent, ReturnEvent, LoopEnterEvent, LoopExitEvent>;
using Trace = std::vector<TraceEvent>;

/// One event per line: `call S`, `icall S T`, `ret`, `loop_enter L`,
/// `loop_exit L`. Blank lines and lines starting with '#' are skipped.
Trace parse_trace(std::string_view text);
Trace load_trace_file(const std::string& path);
std::string format_trace(std::span<const TraceEvent> trace);

// ---------------------------------------------------------------------------
// Log

enum class ApiCall {
  Init,
  Single,
  SingleEnd,
  Loop,
  LoopEnd,
  Reachable,
  ReachableEnd,
  Indirect,
  IndirectEnd,
};

const char* to_string(ApiCall api);

using PageSet = std::vector<std::uint64_t>;  // sorted, unique

struct LogRecord {
  std::uint64_t seq = 0;
  ApiCall api = ApiCall::Init;
  std::optional<std::uint32_t> arg;
  PageSet pages;

  bool operator==(const LogRecord&) const = default;
};

using Log = std::vector<LogRecord>;

/// `<seq> <api_name> <arg> pages=<comma-separated sorted pages>`; the init
/// record's argument is `-`.
std::string format_log(std::span<const LogRecord> log);
Log parse_log(std::string_view text);
Log load_log_file(const std::string& path);

// ---------------------------------------------------------------------------
// Runtime

struct SimOptions {
  bool idc = true;
  bool sc = true;
};

using DeckHandle = std::uint64_t;

struct OpenDeck {
  DeckHandle handle;
  ApiCall begin;
  std::uint32_t arg;
  std::vector<std::uint64_t> pages;  // multiset, one entry per function page
};

/// Per active outermost-loop instance.
struct IdcScope {
  LoopId loop;
  std::map<FunctionId, DeckHandle> cache;
  std::vector<FunctionId> order;  // insertion order, for the exit flush
};

/// Stack-cleaning frame. Barriers are pushed by non-single decks and break
/// a single-deck chain.
struct ScEntry {
  DeckHandle handle;
  bool barrier = false;
  bool cleaned = false;
  std::optional<DeckHandle> cleaned_grandparent;
};

struct RuntimeState {
  std::vector<std::uint64_t> refcount;  // indexed by page
  std::set<std::uint64_t> available_pages;
  std::vector<IdcScope> idc_scopes;
  std::vector<ScEntry> single_stack;
  std::vector<OpenDeck> open_decks;
  Log log;
  DeckHandle next_handle = 0;
};

enum class IdcResult { Hit, Miss };

class DeckRuntime {
 public:
  DeckRuntime(const ProgramModel& model, const InstrumentationPlan& plan, const DisjointLayout& layout,
              SimOptions options = {});

  /// Pins the entry function's pages; everything else starts unavailable.
  void deck_init();

  void deck_single(FunctionId callee);
  void deck_single_end(FunctionId callee);
  void deck_loop(LoopId loop);
  void deck_loop_end(LoopId loop);
  void deck_reachable(FunctionId callee);
  void deck_reachable_end(FunctionId callee);
  /// Dispatches to reachable semantics for encompassed targets and single
  /// semantics otherwise. Throws UnknownTarget for unmodeled functions.
  void deck_indirect(FunctionId target);
  void deck_indirect_end(FunctionId target);

  /// IDC scope for an outermost loop that has no loop deck of its own.
  void enter_loop_scope(LoopId loop);
  void exit_loop_scope(LoopId loop);
  bool in_loop_scope() const { return !state_.idc_scopes.empty(); }

  /// Inlined IDC fast path against the innermost active loop scope. A hit
  /// touches nothing; a miss fires deck_indirect and caches the target until
  /// the scope exits.
  IdcResult idc_check(FunctionId target);

  const RuntimeState& state() const { return state_; }
  const std::vector<std::uint64_t>& pages_of(FunctionId f) const { return function_pages_.at(f); }
  std::uint64_t page_count() const { return state_.refcount.size(); }
  const SimOptions& options() const { return options_; }

 private:
  DeckHandle open(ApiCall begin, std::uint32_t arg, const FunctionSet& functions);
  void close(ApiCall begin, std::uint32_t arg, ApiCall end);
  void increment(std::span<const std::uint64_t> pages);
  void decrement(std::span<const std::uint64_t> pages);
  void record(ApiCall api, std::optional<std::uint32_t> arg);
  FunctionSet indirect_members(FunctionId target) const;
  void flush_scope(LoopId loop);
  void sc_push_single(DeckHandle handle);
  void sc_pop(DeckHandle handle);
  const OpenDeck* find_open(DeckHandle handle) const;

  const ProgramModel& model_;
  const InstrumentationPlan& plan_;
  SimOptions options_;
  std::map<FunctionId, std::vector<std::uint64_t>> function_pages_;
  RuntimeState state_;
};

/// Observation hooks for tests and diagnostics.
class SimObserver {
 public:
  virtual ~SimObserver() = default;
  /// Control is about to enter `callee`; all deck begins for the call have
  /// already fired.
  virtual void on_call(FunctionId /*callee*/, const DeckRuntime& /*runtime*/) {}
  /// After the effects of trace event `index`.
  virtual void on_event(std::size_t /*index*/, const TraceEvent& /*event*/, const DeckRuntime& /*runtime*/) {}
};

/// Replays `trace` from program start. Throws TraceError on an ill-nested or
/// illegal event and UnknownTarget on an indirect target outside the site's
/// static set.
Log simulate(const ProgramModel& model, const InstrumentationPlan& plan, const DisjointLayout& layout,
             std::span<const TraceEvent> trace, SimOptions options = {}, SimObserver* observer = nullptr);

struct SimResult {
  Log log;
  std::string error;  // empty on success
};

/// Independent traces, one private runtime each. The parallel version fans
/// out over traces with OpenMP; simulate_many_serial is the reference.
std::vector<SimResult> simulate_many(const ProgramModel& model, const InstrumentationPlan& plan,
                                     const DisjointLayout& layout, std::span<const Trace> traces,
                                     SimOptions options = {});
std::vector<SimResult> simulate_many_serial(const ProgramModel& model, const InstrumentationPlan& plan,
                                            const DisjointLayout& layout, std::span<const Trace> traces,
                                            SimOptions options = {});

}  // namespace deckforge
