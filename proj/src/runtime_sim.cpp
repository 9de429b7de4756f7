//===- runtime_sim.cpp - Deck runtime and trace replay -------------------===//

#include "deckforge/runtime_sim.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "deckforge/errors.hpp"

namespace deckforge {

// ---------------------------------------------------------------------------
// Trace and log text formats

namespace {

std::vector<std::string_view> split_words(std::string_view line) {
  std::vector<std::string_view> words;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) words.push_back(line.substr(i, j - i));
    i = j;
  }
  return words;
}

template <class T>
bool parse_number(std::string_view text, T& out) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::uint32_t parse_id(std::string_view word, std::size_t line_no, const char* what) {
  std::uint32_t v = 0;
  if (!parse_number(word, v))
    throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " \"" + std::string(word) + "\"");
  return v;
}

template <class Fn>
void for_each_line(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    fn(text.substr(start, end - start), line_no);
    if (end == text.size()) break;
    start = end + 1;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

Trace parse_trace(std::string_view text) {
  Trace trace;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto words = split_words(line);
    if (words.empty() || words[0].front() == '#') return;
    auto expect_args = [&](std::size_t n) {
      if (words.size() != n + 1)
        throw ParseError("line " + std::to_string(line_no) + ": \"" + std::string(words[0]) + "\" takes " +
                         std::to_string(n) + " argument(s)");
    };
    const std::string_view op = words[0];
    if (op == "call") {
      expect_args(1);
      trace.push_back(CallDirectEvent{SiteId{parse_id(words[1], line_no, "site id")}});
    } else if (op == "icall") {
      expect_args(2);
      trace.push_back(CallIndirectEvent{SiteId{parse_id(words[1], line_no, "site id")},
                                        FunctionId{parse_id(words[2], line_no, "function id")}});
    } else if (op == "ret") {
      expect_args(0);
      trace.push_back(ReturnEvent{});
    } else if (op == "loop_enter") {
      expect_args(1);
      trace.push_back(LoopEnterEvent{LoopId{parse_id(words[1], line_no, "loop id")}});
    } else if (op == "loop_exit") {
      expect_args(1);
      trace.push_back(LoopExitEvent{LoopId{parse_id(words[1], line_no, "loop id")}});
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": unknown trace event \"" + std::string(op) + "\"");
    }
  });
  return trace;
}

Trace load_trace_file(const std::string& path) { return parse_trace(read_file(path)); }

std::string format_trace(std::span<const TraceEvent> trace) {
  std::ostringstream os;
  for (const auto& ev : trace) {
    std::visit(
        [&](const auto& e) {
          using E = std::decay_t<decltype(e)>;
          if constexpr (std::is_same_v<E, CallDirectEvent>)
            os << "call " << e.site << '\n';
          else if constexpr (std::is_same_v<E, CallIndirectEvent>)
            os << "icall " << e.site << ' ' << e.target << '\n';
          else if constexpr (std::is_same_v<E, ReturnEvent>)
            os << "ret\n";
          else if constexpr (std::is_same_v<E, LoopEnterEvent>)
            os << "loop_enter " << e.loop << '\n';
          else
            os << "loop_exit " << e.loop << '\n';
        },
        ev);
  }
  return os.str();
}

const char* to_string(ApiCall api) {
  switch (api) {
    case ApiCall::Init: return "deck_init";
    case ApiCall::Single: return "deck_single";
    case ApiCall::SingleEnd: return "deck_single_end";
    case ApiCall::Loop: return "deck_loop";
    case ApiCall::LoopEnd: return "deck_loop_end";
    case ApiCall::Reachable: return "deck_reachable";
    case ApiCall::ReachableEnd: return "deck_reachable_end";
    case ApiCall::Indirect: return "deck_indirect";
    case ApiCall::IndirectEnd: return "deck_indirect_end";
  }
  return "?";
}

std::string format_log(std::span<const LogRecord> log) {
  std::ostringstream os;
  for (const auto& r : log) {
    os << r.seq << ' ' << to_string(r.api) << ' ';
    if (r.arg)
      os << *r.arg;
    else
      os << '-';
    os << " pages=";
    for (std::size_t i = 0; i < r.pages.size(); ++i) os << (i ? "," : "") << r.pages[i];
    os << '\n';
  }
  return os.str();
}

Log parse_log(std::string_view text) {
  static constexpr ApiCall kAll[] = {ApiCall::Init,      ApiCall::Single,       ApiCall::SingleEnd,
                                     ApiCall::Loop,      ApiCall::LoopEnd,      ApiCall::Reachable,
                                     ApiCall::ReachableEnd, ApiCall::Indirect,  ApiCall::IndirectEnd};
  Log log;
  for_each_line(text, [&](std::string_view line, std::size_t line_no) {
    const auto words = split_words(line);
    if (words.empty()) return;
    const std::string where = "log line " + std::to_string(line_no);
    if (words.size() != 4 || !words[3].starts_with("pages=")) throw ParseError(where + ": malformed record");
    LogRecord r;
    if (!parse_number(words[0], r.seq)) throw ParseError(where + ": bad sequence number");
    auto api = std::find_if(std::begin(kAll), std::end(kAll), [&](ApiCall a) { return words[1] == to_string(a); });
    if (api == std::end(kAll)) throw ParseError(where + ": unknown api \"" + std::string(words[1]) + "\"");
    r.api = *api;
    if (words[2] != "-") r.arg = parse_id(words[2], line_no, "argument");
    std::string_view pages = words[3].substr(6);
    while (!pages.empty()) {
      const std::size_t comma = pages.find(',');
      std::uint64_t p = 0;
      if (!parse_number(pages.substr(0, comma), p)) throw ParseError(where + ": bad page list");
      r.pages.push_back(p);
      if (comma == std::string_view::npos) break;
      pages.remove_prefix(comma + 1);
    }
    if (!std::is_sorted(r.pages.begin(), r.pages.end()) ||
        std::adjacent_find(r.pages.begin(), r.pages.end()) != r.pages.end())
      throw ParseError(where + ": page list must be sorted and unique");
    log.push_back(std::move(r));
  });
  return log;
}

Log load_log_file(const std::string& path) { return parse_log(read_file(path)); }

// ---------------------------------------------------------------------------
// DeckRuntime

DeckRuntime::DeckRuntime(const ProgramModel& model, const InstrumentationPlan& plan, const DisjointLayout& layout,
                         SimOptions options)
    : model_(model), plan_(plan), options_(options) {
  for (const auto& f : model.functions()) {
    const PageSpan span = layout.pages_of(f.id, f.size);
    auto& pages = function_pages_[f.id];
    for (std::uint64_t p = span.first; p <= span.last; ++p) pages.push_back(p);
  }
  state_.refcount.assign(layout.page_count(), 0);
}

void DeckRuntime::increment(std::span<const std::uint64_t> pages) {
  for (std::uint64_t p : pages) {
    if (state_.refcount[p]++ == 0) state_.available_pages.insert(p);
  }
}

void DeckRuntime::decrement(std::span<const std::uint64_t> pages) {
  for (std::uint64_t p : pages) {
    if (state_.refcount[p] == 0) throw UnpairedEnd("reference count of page " + std::to_string(p) + " would go negative");
    if (--state_.refcount[p] == 0) state_.available_pages.erase(p);
  }
}

void DeckRuntime::record(ApiCall api, std::optional<std::uint32_t> arg) {
  LogRecord r;
  r.seq = state_.log.size();
  r.api = api;
  r.arg = arg;
  r.pages.assign(state_.available_pages.begin(), state_.available_pages.end());
  state_.log.push_back(std::move(r));
}

const OpenDeck* DeckRuntime::find_open(DeckHandle handle) const {
  for (const auto& d : state_.open_decks) {
    if (d.handle == handle) return &d;
  }
  return nullptr;
}

DeckHandle DeckRuntime::open(ApiCall begin, std::uint32_t arg, const FunctionSet& functions) {
  OpenDeck deck{state_.next_handle++, begin, arg, {}};
  for (FunctionId f : functions) {
    const auto& pages = function_pages_.at(f);
    deck.pages.insert(deck.pages.end(), pages.begin(), pages.end());
  }
  increment(deck.pages);
  state_.open_decks.push_back(std::move(deck));
  if (options_.sc && begin != ApiCall::Single && begin != ApiCall::Init)
    state_.single_stack.push_back({state_.open_decks.back().handle, /*barrier=*/true, false, std::nullopt});
  return state_.open_decks.back().handle;
}

void DeckRuntime::close(ApiCall begin, std::uint32_t arg, ApiCall end) {
  auto it = std::find_if(state_.open_decks.rbegin(), state_.open_decks.rend(),
                         [&](const OpenDeck& d) { return d.begin == begin && d.arg == arg; });
  if (it == state_.open_decks.rend())
    throw UnpairedEnd(std::string(to_string(end)) + "(" + std::to_string(arg) + ") without a matching " +
                      to_string(begin));
  const DeckHandle handle = it->handle;
  // A deck cleaned by SC already gave its pages back.
  auto sc = std::find_if(state_.single_stack.begin(), state_.single_stack.end(),
                         [&](const ScEntry& e) { return e.handle == handle; });
  const bool cleaned = sc != state_.single_stack.end() && sc->cleaned;
  if (!cleaned) decrement(it->pages);
  if (sc != state_.single_stack.end()) sc_pop(handle);
  state_.open_decks.erase(std::next(it).base());
}

void DeckRuntime::sc_push_single(DeckHandle handle) {
  auto& st = state_.single_stack;
  st.push_back({handle, false, false, std::nullopt});
  const std::size_t n = st.size() - 1;
  if (n < 2 || st[n - 1].barrier || st[n - 2].barrier || st[n - 2].cleaned) return;
  decrement(find_open(st[n - 2].handle)->pages);
  st[n - 2].cleaned = true;
  st[n].cleaned_grandparent = st[n - 2].handle;
}

void DeckRuntime::sc_pop(DeckHandle handle) {
  auto& st = state_.single_stack;
  auto it = std::find_if(st.rbegin(), st.rend(), [&](const ScEntry& e) { return e.handle == handle; });
  if (it == st.rend()) return;
  const auto restore = it->cleaned_grandparent;
  st.erase(std::next(it).base());
  if (!restore) return;
  auto gp = std::find_if(st.begin(), st.end(), [&](const ScEntry& e) { return e.handle == *restore; });
  if (gp == st.end() || !gp->cleaned) return;
  increment(find_open(gp->handle)->pages);
  gp->cleaned = false;
}

void DeckRuntime::deck_init() {
  if (!state_.open_decks.empty() || !state_.log.empty()) throw Error("deck_init on a runtime already in use");
  const DeckHandle h = open(ApiCall::Init, model_.entry().value, {model_.entry()});
  if (options_.sc) state_.single_stack.push_back({h, false, false, std::nullopt});
  record(ApiCall::Init, std::nullopt);
}

void DeckRuntime::deck_single(FunctionId callee) {
  const DeckHandle h = open(ApiCall::Single, callee.value, {callee});
  if (options_.sc) sc_push_single(h);
  record(ApiCall::Single, callee.value);
}

void DeckRuntime::deck_single_end(FunctionId callee) {
  close(ApiCall::Single, callee.value, ApiCall::SingleEnd);
  record(ApiCall::SingleEnd, callee.value);
}

void DeckRuntime::deck_loop(LoopId loop) {
  auto it = plan_.loop_function_sets.find(loop);
  if (it == plan_.loop_function_sets.end())
    throw Error("deck_loop(" + std::to_string(loop.value) + "): not an outermost loop");
  open(ApiCall::Loop, loop.value, it->second);
  if (options_.idc) state_.idc_scopes.push_back({loop, {}, {}});
  record(ApiCall::Loop, loop.value);
}

void DeckRuntime::deck_loop_end(LoopId loop) {
  if (options_.idc) flush_scope(loop);
  close(ApiCall::Loop, loop.value, ApiCall::LoopEnd);
  record(ApiCall::LoopEnd, loop.value);
}

void DeckRuntime::deck_reachable(FunctionId callee) {
  open(ApiCall::Reachable, callee.value, plan_.reachable_closure.at(callee));
  record(ApiCall::Reachable, callee.value);
}

void DeckRuntime::deck_reachable_end(FunctionId callee) {
  close(ApiCall::Reachable, callee.value, ApiCall::ReachableEnd);
  record(ApiCall::ReachableEnd, callee.value);
}

FunctionSet DeckRuntime::indirect_members(FunctionId target) const {
  if (plan_.encompassed_sets.is_encompassed(target)) return plan_.reachable_closure.at(target);
  return {target};
}

void DeckRuntime::deck_indirect(FunctionId target) {
  if (!model_.has_function(target))
    throw UnknownTarget("deck_indirect: " + std::to_string(target.value) + " is not a modeled function");
  open(ApiCall::Indirect, target.value, indirect_members(target));
  record(ApiCall::Indirect, target.value);
}

void DeckRuntime::deck_indirect_end(FunctionId target) {
  close(ApiCall::Indirect, target.value, ApiCall::IndirectEnd);
  record(ApiCall::IndirectEnd, target.value);
}

void DeckRuntime::enter_loop_scope(LoopId loop) {
  if (options_.idc) state_.idc_scopes.push_back({loop, {}, {}});
}

void DeckRuntime::exit_loop_scope(LoopId loop) {
  if (options_.idc) flush_scope(loop);
}

void DeckRuntime::flush_scope(LoopId loop) {
  if (state_.idc_scopes.empty() || state_.idc_scopes.back().loop != loop)
    throw UnpairedEnd("loop " + std::to_string(loop.value) + " exits without an active IDC scope");
  IdcScope scope = std::move(state_.idc_scopes.back());
  state_.idc_scopes.pop_back();
  for (auto it = scope.order.rbegin(); it != scope.order.rend(); ++it) deck_indirect_end(*it);
}

IdcResult DeckRuntime::idc_check(FunctionId target) {
  if (state_.idc_scopes.empty()) throw Error("idc_check outside an active loop scope");
  IdcScope& scope = state_.idc_scopes.back();
  if (scope.cache.contains(target)) return IdcResult::Hit;
  deck_indirect(target);
  scope.cache.emplace(target, state_.open_decks.back().handle);
  scope.order.push_back(target);
  return IdcResult::Miss;
}

// ---------------------------------------------------------------------------
// Trace replay

namespace {

struct Frame {
  FunctionId function;
  std::optional<ApiCall> end;  // deck to close on return
  std::uint32_t end_arg = 0;
  std::vector<LoopId> loops;   // active loops, innermost last
};

class Replayer {
 public:
  Replayer(const ProgramModel& model, const InstrumentationPlan& plan, const DisjointLayout& layout,
           SimOptions options, SimObserver* observer)
      : model_(model), runtime_(model, plan, layout, options), observer_(observer) {
    for (const auto& p : plan.points) {
      if (p.kind == DeckKind::Loop)
        loop_points_.insert(p.loop());
      else
        site_points_.emplace(p.site(), p.kind);
    }
  }

  Log run(std::span<const TraceEvent> trace) {
    runtime_.deck_init();
    frames_.push_back({model_.entry(), std::nullopt, 0, {}});
    for (pos_ = 0; pos_ < trace.size(); ++pos_) {
      std::visit([&](const auto& e) { step(e); }, trace[pos_]);
      if (observer_) observer_->on_event(pos_, trace[pos_], runtime_);
    }
    if (frames_.size() != 1) fail("trace ends with " + std::to_string(frames_.size() - 1) + " unreturned call(s)");
    if (!frames_.back().loops.empty()) fail("trace ends inside loop " + std::to_string(frames_.back().loops.back().value));
    return runtime_.state().log;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const { throw TraceError(pos_, what); }

  const CallSite& check_site(SiteId id) {
    if (!model_.has_site(id)) fail("unknown call site " + std::to_string(id.value));
    const CallSite& site = model_.site(id);
    const Frame& top = frames_.back();
    if (site.caller != top.function)
      fail("call site " + std::to_string(id.value) + " does not belong to executing function " +
           std::to_string(top.function.value));
    const std::optional<LoopId> innermost =
        top.loops.empty() ? std::nullopt : std::optional<LoopId>(top.loops.back());
    if (site.loop != innermost) fail("call site " + std::to_string(id.value) + " is not in the active loop context");
    return site;
  }

  void enter(FunctionId callee, std::optional<ApiCall> end, std::uint32_t arg) {
    if (observer_) observer_->on_call(callee, runtime_);
    frames_.push_back({callee, end, arg, {}});
  }

  void step(const CallDirectEvent& e) {
    const CallSite& site = check_site(e.site);
    if (!site.is_direct()) fail("call site " + std::to_string(e.site.value) + " is indirect; use icall");
    const FunctionId callee = site.callee();
    auto point = site_points_.find(e.site);
    if (point == site_points_.end()) return enter(callee, std::nullopt, 0);
    if (point->second == DeckKind::Single) {
      runtime_.deck_single(callee);
      return enter(callee, ApiCall::SingleEnd, callee.value);
    }
    runtime_.deck_reachable(callee);
    enter(callee, ApiCall::ReachableEnd, callee.value);
  }

  void step(const CallIndirectEvent& e) {
    const CallSite& site = check_site(e.site);
    if (site.is_direct()) fail("call site " + std::to_string(e.site.value) + " is direct; use call");
    const auto& targets = site.targets();
    if (!std::binary_search(targets.begin(), targets.end(), e.target))
      throw UnknownTarget("trace event " + std::to_string(pos_) + ": function " + std::to_string(e.target.value) +
                          " is not a static target of call site " + std::to_string(e.site.value));
    if (runtime_.options().idc && runtime_.in_loop_scope()) {
      runtime_.idc_check(e.target);
      return enter(e.target, std::nullopt, 0);
    }
    runtime_.deck_indirect(e.target);
    enter(e.target, ApiCall::IndirectEnd, e.target.value);
  }

  void step(const ReturnEvent&) {
    if (frames_.size() == 1) fail("return from the entry function");
    Frame& top = frames_.back();
    if (!top.loops.empty()) fail("return from inside loop " + std::to_string(top.loops.back().value));
    const Frame done = std::move(top);
    frames_.pop_back();
    if (!done.end) return;
    switch (*done.end) {
      case ApiCall::SingleEnd: runtime_.deck_single_end(FunctionId{done.end_arg}); break;
      case ApiCall::ReachableEnd: runtime_.deck_reachable_end(FunctionId{done.end_arg}); break;
      case ApiCall::IndirectEnd: runtime_.deck_indirect_end(FunctionId{done.end_arg}); break;
      default: break;
    }
  }

  void step(const LoopEnterEvent& e) {
    if (!model_.has_loop(e.loop)) fail("unknown loop " + std::to_string(e.loop.value));
    const LoopDef& loop = model_.loop(e.loop);
    Frame& top = frames_.back();
    if (loop.function != top.function) fail("loop " + std::to_string(e.loop.value) + " is not in the executing function");
    const std::optional<LoopId> innermost =
        top.loops.empty() ? std::nullopt : std::optional<LoopId>(top.loops.back());
    if (loop.parent != innermost) fail("loop " + std::to_string(e.loop.value) + " entered outside its parent loop");
    top.loops.push_back(e.loop);
    if (loop.parent) return;
    if (loop_points_.contains(e.loop))
      runtime_.deck_loop(e.loop);
    else
      runtime_.enter_loop_scope(e.loop);
  }

  void step(const LoopExitEvent& e) {
    Frame& top = frames_.back();
    if (top.loops.empty() || top.loops.back() != e.loop)
      fail("loop_exit " + std::to_string(e.loop.value) + " does not match the innermost active loop");
    top.loops.pop_back();
    if (model_.loop(e.loop).parent) return;
    if (loop_points_.contains(e.loop))
      runtime_.deck_loop_end(e.loop);
    else
      runtime_.exit_loop_scope(e.loop);
  }

  const ProgramModel& model_;
  DeckRuntime runtime_;
  SimObserver* observer_;
  std::map<SiteId, DeckKind> site_points_;
  std::set<LoopId> loop_points_;
  std::vector<Frame> frames_;
  std::size_t pos_ = 0;
};

}  // namespace

Log simulate(const ProgramModel& model, const InstrumentationPlan& plan, const DisjointLayout& layout,
             std::span<const TraceEvent> trace, SimOptions options, SimObserver* observer) {
  return Replayer(model, plan, layout, options, observer).run(trace);
}

namespace {

SimResult simulate_one(const ProgramModel& model, const InstrumentationPlan& plan, const DisjointLayout& layout,
                       const Trace& trace, SimOptions options) {
  SimResult result;
  try {
    result.log = simulate(model, plan, layout, trace, options);
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  return result;
}

}  // namespace

std::vector<SimResult> simulate_many(const ProgramModel& model, const InstrumentationPlan& plan,
                                     const DisjointLayout& layout, std::span<const Trace> traces,
                                     SimOptions options) {
  std::vector<SimResult> results(traces.size());
  const auto n = static_cast<std::ptrdiff_t>(traces.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) results[i] = simulate_one(model, plan, layout, traces[i], options);
  return results;
}

std::vector<SimResult> simulate_many_serial(const ProgramModel& model, const InstrumentationPlan& plan,
                                            const DisjointLayout& layout, std::span<const Trace> traces,
                                            SimOptions options) {
  std::vector<SimResult> results;
  results.reserve(traces.size());
  for (const auto& t : traces) results.push_back(simulate_one(model, plan, layout, t, options));
  return results;
}

}  // namespace deckforge
