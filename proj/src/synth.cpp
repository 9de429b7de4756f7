//===- synth.cpp - Random models and traces ------------------------------===//

#include "deckforge/synth.hpp"

#include <algorithm>
#include <random>

namespace deckforge::synth {

ProgramModel random_model(std::uint64_t seed, const ModelParams& params) {
  std::mt19937_64 rng(seed);
  auto chance = [&](double p) { return std::bernoulli_distribution(p)(rng); };
  auto pick = [&](std::uint64_t lo, std::uint64_t hi) { return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng); };

  const std::uint32_t n = std::max<std::uint32_t>(1, params.functions);
  std::vector<FunctionDef> functions;
  std::vector<FunctionId> taken;
  for (std::uint32_t i = 0; i < n; ++i) {
    FunctionDef f;
    f.id = FunctionId{i};
    f.name = i == 0 ? "main" : "fn_" + std::to_string(i);
    f.size = pick(params.min_size, params.max_size);
    f.address_taken = i != 0 && chance(params.address_taken_fraction);
    f.gadgets.rop = pick(0, params.max_gadgets);
    f.gadgets.jop = pick(0, params.max_gadgets);
    f.gadgets.cop = pick(0, params.max_gadgets);
    f.gadgets.special = pick(0, params.max_gadgets / 4);
    if (chance(params.chain_fraction)) f.gadgets.chain.set(ChainComponent::WriteWhatWhere);
    if (chance(params.chain_fraction)) f.gadgets.chain.set(ChainComponent::Args);
    if (chance(params.chain_fraction)) f.gadgets.chain.set(ChainComponent::Syscall);
    if (f.address_taken) taken.push_back(f.id);
    functions.push_back(std::move(f));
  }

  std::vector<LoopDef> loops;
  std::vector<CallSite> sites;
  std::uint32_t next_site = 0;
  std::uint32_t next_loop = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    const FunctionId caller{i};
    std::vector<LoopId> own_loops;
    if (chance(params.loop_fraction)) {
      LoopDef outer{LoopId{next_loop++}, caller, std::nullopt, {}};
      own_loops.push_back(outer.id);
      loops.push_back(outer);
      if (chance(0.4)) {
        LoopDef inner{LoopId{next_loop++}, caller, outer.id, {}};
        own_loops.push_back(inner.id);
        loops.push_back(inner);
      }
      if (chance(0.2)) {
        LoopDef second{LoopId{next_loop++}, caller, std::nullopt, {}};
        own_loops.push_back(second.id);
        loops.push_back(second);
      }
    }
    const auto count = pick(0, params.max_sites_per_function);
    for (std::uint64_t k = 0; k < count; ++k) {
      CallSite s;
      s.id = SiteId{next_site++};
      s.caller = caller;
      if (!taken.empty() && chance(params.indirect_fraction)) {
        IndirectCall call;
        const auto width = pick(1, std::min<std::uint64_t>(3, taken.size()));
        for (std::uint64_t t = 0; t < width; ++t) call.targets.push_back(taken[pick(0, taken.size() - 1)]);
        s.kind = std::move(call);
      } else {
        s.kind = DirectCall{FunctionId{static_cast<std::uint32_t>(pick(0, n - 1))}};
      }
      if (!own_loops.empty() && chance(params.in_loop_fraction)) s.loop = own_loops[pick(0, own_loops.size() - 1)];
      sites.push_back(std::move(s));
    }
  }
  return ProgramModel(std::move(functions), std::move(sites), std::move(loops), FunctionId{0});
}

namespace {

struct WalkFrame {
  FunctionId function;
  std::vector<LoopId> loops;
};

std::optional<LoopId> innermost(const WalkFrame& f) {
  if (f.loops.empty()) return std::nullopt;
  return f.loops.back();
}

}  // namespace

Trace random_trace(const ProgramModel& model, std::uint64_t seed, const TraceParams& params) {
  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  Trace trace;
  std::vector<WalkFrame> stack{{model.entry(), {}}};
  while (trace.size() < params.max_events) {
    WalkFrame& top = stack.back();
    std::vector<SiteId> callable;
    for (SiteId s : model.sites_of(top.function)) {
      if (model.site(s).loop == innermost(top)) callable.push_back(s);
    }
    std::vector<LoopId> enterable;
    for (LoopId l : model.loops_of(top.function)) {
      if (model.loop(l).parent == innermost(top)) enterable.push_back(l);
    }

    // Moves: 0 call, 1 enter loop, 2 exit loop, 3 return. Weighted so loops
    // run several iterations and calls dominate.
    std::vector<int> moves;
    if (!callable.empty() && stack.size() < params.max_depth) moves.insert(moves.end(), 6, 0);
    if (!enterable.empty()) moves.insert(moves.end(), 2, 1);
    if (!top.loops.empty()) moves.push_back(2);
    if (top.loops.empty() && stack.size() > 1) moves.insert(moves.end(), 2, 3);
    if (moves.empty()) break;

    switch (moves[pick(moves.size())]) {
      case 0: {
        const CallSite& s = model.site(callable[pick(callable.size())]);
        if (s.is_direct()) {
          trace.push_back(CallDirectEvent{s.id});
          stack.push_back({s.callee(), {}});
        } else {
          const FunctionId target = s.targets()[pick(s.targets().size())];
          trace.push_back(CallIndirectEvent{s.id, target});
          stack.push_back({target, {}});
        }
        break;
      }
      case 1: {
        const LoopId l = enterable[pick(enterable.size())];
        trace.push_back(LoopEnterEvent{l});
        top.loops.push_back(l);
        break;
      }
      case 2:
        trace.push_back(LoopExitEvent{top.loops.back()});
        top.loops.pop_back();
        break;
      case 3:
        trace.push_back(ReturnEvent{});
        stack.pop_back();
        break;
    }
  }

  while (true) {
    WalkFrame& top = stack.back();
    while (!top.loops.empty()) {
      trace.push_back(LoopExitEvent{top.loops.back()});
      top.loops.pop_back();
    }
    if (stack.size() == 1) break;
    trace.push_back(ReturnEvent{});
    stack.pop_back();
  }
  return trace;
}

}  // namespace deckforge::synth
