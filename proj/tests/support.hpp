//===- support.hpp - Small model builders for tests --------------*- C++ -*-===//
#pragma once

#include <string>
#include <vector>

#include "deckforge/program_model.hpp"

namespace support {

using namespace deckforge;

inline FunctionDef fn(std::uint32_t id, std::string name, std::uint64_t size = 512, std::uint64_t rop = 0,
                      bool taken = false) {
  FunctionDef f;
  f.id = FunctionId{id};
  f.name = std::move(name);
  f.size = size;
  f.address_taken = taken;
  f.gadgets.rop = rop;
  return f;
}

inline CallSite call(std::uint32_t id, std::uint32_t caller, std::uint32_t callee,
                     std::optional<std::uint32_t> loop = std::nullopt) {
  CallSite s{SiteId{id}, FunctionId{caller}, DirectCall{FunctionId{callee}}, std::nullopt};
  if (loop) s.loop = LoopId{*loop};
  return s;
}

inline CallSite icall(std::uint32_t id, std::uint32_t caller, std::vector<std::uint32_t> targets,
                      std::optional<std::uint32_t> loop = std::nullopt) {
  IndirectCall ic;
  for (auto t : targets) ic.targets.push_back(FunctionId{t});
  CallSite s{SiteId{id}, FunctionId{caller}, ic, std::nullopt};
  if (loop) s.loop = LoopId{*loop};
  return s;
}

inline LoopDef loop(std::uint32_t id, std::uint32_t function, std::optional<std::uint32_t> parent = std::nullopt) {
  LoopDef l{LoopId{id}, FunctionId{function}, std::nullopt, {}};
  if (parent) l.parent = LoopId{*parent};
  return l;
}

}  // namespace support
