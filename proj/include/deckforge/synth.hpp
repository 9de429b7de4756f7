//===- synth.hpp - Random models and traces --------------------*- C++ -*-===//
#pragma once

#include <cstdint>

#include "deckforge/program_model.hpp"
#include "deckforge/runtime_sim.hpp"

namespace deckforge::synth {

struct ModelParams {
  std::uint32_t functions = 15;
  std::uint32_t max_sites_per_function = 4;
  double indirect_fraction = 0.2;
  double address_taken_fraction = 0.3;
  double loop_fraction = 0.4;  // chance a function gets an outermost loop
  double in_loop_fraction = 0.5;
  std::uint64_t min_size = 16;
  std::uint64_t max_size = 6000;
  std::uint64_t max_gadgets = 40;  // per class, per function
  double chain_fraction = 0.15;    // per component, per function
};

/// Entry is function 0 ("main"). Recursion and nested loops occur.
ProgramModel random_model(std::uint64_t seed, const ModelParams& params = {});

struct TraceParams {
  std::size_t max_events = 200;
  std::size_t max_depth = 10;
};

/// A well-nested trace that respects loop context and static indirect
/// targets; it always unwinds back to the entry function.
Trace random_trace(const ProgramModel& model, std::uint64_t seed, const TraceParams& params = {});

}  // namespace deckforge::synth
