//===- deck_analysis.cpp - Encompassed sets and deck placement -----------===//

#include "deckforge/deck_analysis.hpp"

#include <algorithm>
#include <deque>

#include "json.hpp"

namespace deckforge {

const char* to_string(DeckKind kind) {
  switch (kind) {
    case DeckKind::Single: return "single";
    case DeckKind::Loop: return "loop";
    case DeckKind::Reachable: return "reachable";
    case DeckKind::Indirect: return "indirect";
  }
  return "?";
}

const DeckPoint* InstrumentationPlan::point_at_site(SiteId site) const {
  for (const auto& p : points) {
    if (p.kind != DeckKind::Loop && p.site() == site) return &p;
  }
  return nullptr;
}

const DeckPoint* InstrumentationPlan::point_at_loop(LoopId loop) const {
  for (const auto& p : points) {
    if (p.kind == DeckKind::Loop && p.loop() == loop) return &p;
  }
  return nullptr;
}

FunctionSet reachable_from(const Adjacency& graph, FunctionId root) {
  FunctionSet seen{root};
  std::deque<FunctionId> work{root};
  while (!work.empty()) {
    FunctionId f = work.front();
    work.pop_front();
    auto it = graph.find(f);
    if (it == graph.end()) continue;
    for (FunctionId g : it->second) {
      if (seen.insert(g).second) work.push_back(g);
    }
  }
  return seen;
}

namespace {

// Every function a call site can transfer control to.
std::vector<FunctionId> site_callees(const CallSite& s) {
  if (s.is_direct()) return {s.callee()};
  return s.targets();
}

}  // namespace

EncompassedSets compute_encompassed(const ProgramModel& model) {
  const Adjacency graph = direct_callgraph(model);
  EncompassedSets sets;
  std::deque<FunctionId> work;
  for (const auto& s : model.sites()) {
    if (!s.loop) continue;
    for (FunctionId f : site_callees(s)) {
      if (sets.encompassed.insert(f).second) work.push_back(f);
    }
  }
  while (!work.empty()) {
    FunctionId f = work.front();
    work.pop_front();
    auto it = graph.find(f);
    if (it == graph.end()) continue;
    for (FunctionId g : it->second) {
      if (sets.encompassed.insert(g).second) work.push_back(g);
    }
  }
  // The entry has no enclosing deck (init maps only its own pages), so it
  // must carry its own instrumentation even when it recurses from a loop.
  sets.encompassed.erase(model.entry());
  for (const auto& f : model.functions()) {
    if (!sets.encompassed.contains(f.id)) sets.non_encompassed.insert(f.id);
  }
  return sets;
}

InstrumentationPlan plan_instrumentation(const ProgramModel& model) {
  InstrumentationPlan plan;
  plan.encompassed_sets = compute_encompassed(model);

  const Adjacency graph = direct_callgraph(model);
  for (const auto& f : model.functions()) plan.reachable_closure[f.id] = reachable_from(graph, f.id);

  for (const auto& l : model.loops()) {
    if (l.parent) continue;
    plan.loop_function_sets[l.id];
  }
  for (const auto& s : model.sites()) {
    if (!s.loop) continue;
    FunctionSet& members = plan.loop_function_sets[model.outermost(*s.loop)];
    for (FunctionId f : site_callees(s)) {
      const FunctionSet& closure = plan.reachable_closure.at(f);
      members.insert(closure.begin(), closure.end());
    }
  }

  for (const auto& f : model.functions()) {
    const bool host = !plan.encompassed_sets.is_encompassed(f.id);
    if (host) {
      for (LoopId l : model.loops_of(f.id)) {
        if (model.loop(l).parent || plan.loop_function_sets.at(l).empty()) continue;
        plan.points.push_back({DeckKind::Loop, l, l});
      }
    }
    for (SiteId sid : model.sites_of(f.id)) {
      const CallSite& s = model.site(sid);
      if (!s.is_direct()) {
        plan.points.push_back({DeckKind::Indirect, sid, RuntimeTarget{}});
        continue;
      }
      // Loop bodies are covered by the loop's own deck.
      if (!host || s.loop) continue;
      const DeckKind kind =
          plan.encompassed_sets.is_encompassed(s.callee()) ? DeckKind::Reachable : DeckKind::Single;
      plan.points.push_back({kind, sid, s.callee()});
    }
  }
  std::sort(plan.points.begin(), plan.points.end());
  return plan;
}

std::string plan_to_json(const ProgramModel& model, const InstrumentationPlan& plan) {
  using nlohmann::json;
  auto ids = [](const FunctionSet& set) {
    json arr = json::array();
    for (FunctionId f : set) arr.push_back(f.value);
    return arr;
  };

  json doc;
  doc["encompassed"] = ids(plan.encompassed_sets.encompassed);
  doc["non_encompassed"] = ids(plan.encompassed_sets.non_encompassed);
  json points = json::array();
  for (const auto& p : plan.points) {
    json obj = {{"kind", to_string(p.kind)}};
    if (p.kind == DeckKind::Loop) {
      obj["loop"] = p.loop().value;
      obj["deck_id"] = p.loop().value;
    } else {
      const CallSite& s = model.site(p.site());
      obj["site"] = p.site().value;
      obj["caller"] = s.caller.value;
      if (p.kind == DeckKind::Indirect)
        obj["deck_id"] = "runtime-target";
      else
        obj["deck_id"] = p.function().value;
    }
    points.push_back(std::move(obj));
  }
  doc["points"] = std::move(points);
  json closures = json::object();
  for (const auto& [f, set] : plan.reachable_closure) closures[std::to_string(f.value)] = ids(set);
  doc["reachable_closure"] = std::move(closures);
  json loops = json::object();
  for (const auto& [l, set] : plan.loop_function_sets) loops[std::to_string(l.value)] = ids(set);
  doc["loop_function_sets"] = std::move(loops);
  return doc.dump(2) + "\n";
}

}  // namespace deckforge
