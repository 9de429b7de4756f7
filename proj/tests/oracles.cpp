#include "oracles.hpp"

#include <algorithm>
#include <sstream>

namespace oracle {

using namespace deckforge;

std::string fixture(const std::string& name) { return std::string(DECKFORGE_FIXTURE_DIR) + "/" + name; }

namespace {

std::vector<FunctionId> callees_of(const CallSite& s) {
  if (s.is_direct()) return {s.callee()};
  return s.targets();
}

}  // namespace

FunctionSet encompassed(const ProgramModel& model) {
  FunctionSet e;
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& s : model.sites()) {
      // seeds: anything called from a loop
      if (s.loop)
        for (FunctionId f : callees_of(s)) changed |= e.insert(f).second;
      // propagation: direct callees of encompassed functions
      if (s.is_direct() && e.contains(s.caller)) changed |= e.insert(s.callee()).second;
    }
  }
  e.erase(model.entry());
  return e;
}

std::map<FunctionId, FunctionSet> closures(const ProgramModel& model) {
  std::vector<FunctionId> ids;
  for (const auto& f : model.functions()) ids.push_back(f.id);
  const std::size_t n = ids.size();
  auto index = [&](FunctionId f) {
    return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), f) - ids.begin());
  };
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) reach[i][i] = true;
  for (const auto& s : model.sites())
    if (s.is_direct()) reach[index(s.caller)][index(s.callee())] = true;
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (reach[i][k] && reach[k][j]) reach[i][j] = true;
  std::map<FunctionId, FunctionSet> out;
  for (std::size_t i = 0; i < n; ++i) {
    FunctionSet& set = out[ids[i]];
    for (std::size_t j = 0; j < n; ++j)
      if (reach[i][j]) set.insert(ids[j]);
  }
  return out;
}

std::map<LoopId, FunctionSet> loop_sets(const ProgramModel& model) {
  const auto cl = closures(model);
  std::map<LoopId, FunctionSet> out;
  for (const auto& l : model.loops()) {
    if (l.parent) continue;
    FunctionSet& set = out[l.id];
    for (const auto& s : model.sites()) {
      if (!s.loop) continue;
      // walk up from the site's loop looking for l
      std::optional<LoopId> cur = s.loop;
      bool inside = false;
      while (cur) {
        if (*cur == l.id) inside = true;
        cur = model.loop(*cur).parent;
      }
      if (!inside) continue;
      for (FunctionId f : callees_of(s)) set.insert(cl.at(f).begin(), cl.at(f).end());
    }
  }
  return out;
}

std::vector<DeckPoint> deck_points(const ProgramModel& model) {
  const FunctionSet e = encompassed(model);
  const auto ls = loop_sets(model);
  std::vector<DeckPoint> out;
  for (const auto& l : model.loops()) {
    if (!l.parent && !e.contains(l.function) && !ls.at(l.id).empty()) out.push_back({DeckKind::Loop, l.id, l.id});
  }
  for (const auto& s : model.sites()) {
    if (!s.is_direct()) {
      out.push_back({DeckKind::Indirect, s.id, RuntimeTarget{}});
    } else if (!e.contains(s.caller) && !s.loop) {
      out.push_back({e.contains(s.callee()) ? DeckKind::Reachable : DeckKind::Single, s.id, s.callee()});
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<FunctionSet> atoms(const std::vector<FunctionSet>& inputs) {
  std::map<std::vector<std::size_t>, FunctionSet> groups;
  FunctionSet all;
  for (const auto& in : inputs) all.insert(in.begin(), in.end());
  for (FunctionId f : all) {
    std::vector<std::size_t> sig;
    for (std::size_t i = 0; i < inputs.size(); ++i)
      if (inputs[i].contains(f)) sig.push_back(i);
    groups[sig].insert(f);
  }
  std::vector<FunctionSet> out;
  for (auto& [sig, set] : groups) out.push_back(set);
  std::sort(out.begin(), out.end());
  return out;
}

std::string partition_violation(const std::vector<FunctionSet>& inputs, const std::vector<FunctionSet>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].empty()) return "cell " + std::to_string(i) + " is empty";
    for (std::size_t j = i + 1; j < cells.size(); ++j)
      for (FunctionId f : cells[i])
        if (cells[j].contains(f))
          return "cells " + std::to_string(i) + " and " + std::to_string(j) + " share " + std::to_string(f.value);
  }
  FunctionSet in_union, cell_union;
  for (const auto& s : inputs) in_union.insert(s.begin(), s.end());
  for (const auto& s : cells) cell_union.insert(s.begin(), s.end());
  if (in_union != cell_union) return "union not preserved";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    // every cell is either inside the input or disjoint from it
    FunctionSet rebuilt;
    for (const auto& c : cells) {
      std::size_t inside = 0;
      for (FunctionId f : c) inside += inputs[i].contains(f) ? 1 : 0;
      if (inside != 0 && inside != c.size()) return "input " + std::to_string(i) + " splits a cell";
      if (inside == c.size()) rebuilt.insert(c.begin(), c.end());
    }
    if (rebuilt != inputs[i]) return "input " + std::to_string(i) + " is not a union of cells";
  }
  return {};
}

std::string layout_violation(const ProgramModel& model, const DisjointLayout& layout) {
  const std::uint64_t ps = layout.page_size;
  if (layout.section_sizes.size() != layout.disjoint_sets.size()) return "section count mismatch";
  for (std::uint64_t size : layout.section_sizes)
    if (size == 0 || size % ps != 0) return "section size not a positive page multiple";
  std::size_t placed = 0;
  for (std::size_t s = 0; s < layout.disjoint_sets.size(); ++s) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
    for (FunctionId f : layout.disjoint_sets[s]) {
      auto it = layout.placements.find(f);
      if (it == layout.placements.end()) return "function " + std::to_string(f.value) + " has no placement";
      if (it->second.section != s) return "function " + std::to_string(f.value) + " placed in another section";
      const std::uint64_t size = model.function(f).size;
      if (it->second.offset + size > layout.section_sizes[s]) return "function overruns its section";
      spans.emplace_back(it->second.offset, it->second.offset + size);
      ++placed;
    }
    std::sort(spans.begin(), spans.end());
    for (std::size_t i = 1; i < spans.size(); ++i)
      if (spans[i].first < spans[i - 1].second) return "functions overlap in section " + std::to_string(s);
  }
  if (placed != model.functions().size() || layout.placements.size() != placed)
    return "placed " + std::to_string(placed) + " of " + std::to_string(model.functions().size()) + " functions";
  return {};
}

std::vector<std::uint64_t> pages(const ProgramModel& model, const DisjointLayout& layout, FunctionId f) {
  const Placement& p = layout.placements.at(f);
  std::uint64_t start = p.offset;
  for (std::size_t s = 0; s < p.section; ++s) start += layout.section_sizes[s];
  std::set<std::uint64_t> out;
  for (std::uint64_t b = start; b < start + model.function(f).size; ++b) out.insert(b / layout.page_size);
  return {out.begin(), out.end()};
}

PageCounts page_counts(const ProgramModel& model, const DisjointLayout& layout) {
  std::uint64_t total_bytes = 0;
  for (auto s : layout.section_sizes) total_bytes += s;
  const std::size_t n = total_bytes / layout.page_size;
  PageCounts pc{std::vector<std::array<std::uint64_t, 4>>(n), std::vector<std::uint8_t>(n, 0)};
  for (const auto& f : model.functions()) {
    const Placement& p = layout.placements.at(f.id);
    std::uint64_t start = p.offset;
    for (std::size_t s = 0; s < p.section; ++s) start += layout.section_sizes[s];
    std::map<std::uint64_t, std::uint64_t> bytes;
    for (std::uint64_t b = start; b < start + f.size; ++b) ++bytes[b / layout.page_size];
    const std::array<std::uint64_t, 4> counts{f.gadgets.rop, f.gadgets.jop, f.gadgets.cop, f.gadgets.special};
    for (std::size_t c = 0; c < 4; ++c) {
      std::uint64_t given = 0;
      for (auto [page, nbytes] : bytes) {
        const std::uint64_t share = counts[c] * nbytes / f.size;
        pc.counts[page][c] += share;
        given += share;
      }
      pc.counts[bytes.begin()->first][c] += counts[c] - given;
    }
    for (auto [page, nbytes] : bytes) pc.chain[page] |= f.gadgets.chain.bits();
  }
  return pc;
}

Fraction reduction(const PageCounts& pc, const std::vector<std::uint64_t>& ap) {
  u128 total = 0, part = 0;
  for (const auto& page : pc.counts)
    for (auto c : page) total += c;
  for (auto p : ap)
    for (auto c : pc.counts.at(p)) part += c;
  return {(total - part) * 100, total};
}

bool equal(const Fraction& f, std::uint64_t num, std::uint64_t den) {
  return f.num * den == static_cast<u128>(num) * f.den;
}

std::string render1(const Fraction& f) {
  const u128 whole = f.num / f.den;
  u128 rem = f.num % f.den;
  u128 tenth = rem * 10 / f.den;
  rem = rem * 10 % f.den;
  u128 w = whole;
  if (rem * 2 >= f.den) {
    if (++tenth == 10) {
      tenth = 0;
      ++w;
    }
  }
  std::ostringstream os;
  os << static_cast<std::uint64_t>(w) << "." << static_cast<unsigned>(tenth);
  return os.str();
}

FunctionSet deck_members(const ProgramModel& model, ApiCall api, std::uint32_t arg) {
  const FunctionId f{arg};
  switch (api) {
    case ApiCall::Single:
    case ApiCall::SingleEnd:
      return {f};
    case ApiCall::Loop:
    case ApiCall::LoopEnd:
      return loop_sets(model).at(LoopId{arg});
    case ApiCall::Reachable:
    case ApiCall::ReachableEnd:
      return closures(model).at(f);
    case ApiCall::Indirect:
    case ApiCall::IndirectEnd:
      return encompassed(model).contains(f) ? closures(model).at(f) : FunctionSet{f};
    case ApiCall::Init:
      return {model.entry()};
  }
  return {};
}

namespace {

ApiCall begin_of(ApiCall end) {
  switch (end) {
    case ApiCall::SingleEnd: return ApiCall::Single;
    case ApiCall::LoopEnd: return ApiCall::Loop;
    case ApiCall::ReachableEnd: return ApiCall::Reachable;
    case ApiCall::IndirectEnd: return ApiCall::Indirect;
    default: return end;
  }
}

bool is_end(ApiCall a) {
  return a == ApiCall::SingleEnd || a == ApiCall::LoopEnd || a == ApiCall::ReachableEnd || a == ApiCall::IndirectEnd;
}

}  // namespace

std::string replay_without_sc(const ProgramModel& model, const DisjointLayout& layout, const Log& log) {
  std::multiset<std::pair<int, std::uint32_t>> open;
  std::map<std::pair<int, std::uint32_t>, std::vector<std::uint64_t>> member_pages;
  auto pages_for = [&](std::pair<int, std::uint32_t> key) -> const std::vector<std::uint64_t>& {
    auto it = member_pages.find(key);
    if (it != member_pages.end()) return it->second;
    std::set<std::uint64_t> ps;
    for (FunctionId f : deck_members(model, static_cast<ApiCall>(key.first), key.second))
      for (auto p : pages(model, layout, f)) ps.insert(p);
    return member_pages.emplace(key, std::vector<std::uint64_t>(ps.begin(), ps.end())).first->second;
  };
  for (const auto& r : log) {
    if (r.api != ApiCall::Init) {
      const std::pair<int, std::uint32_t> key{static_cast<int>(begin_of(r.api)), *r.arg};
      if (is_end(r.api)) {
        auto it = open.find(key);
        if (it == open.end()) return "record " + std::to_string(r.seq) + " ends a deck that is not open";
        open.erase(it);
      } else {
        open.insert(key);
      }
    }
    std::set<std::uint64_t> expect;
    for (auto p : pages(model, layout, model.entry())) expect.insert(p);
    for (const auto& key : open)
      for (auto p : pages_for(key)) expect.insert(p);
    if (PageSet(expect.begin(), expect.end()) != r.pages) return "record " + std::to_string(r.seq) + " page set differs";
  }
  if (!open.empty()) return "decks still open at end of log";
  return {};
}

}  // namespace oracle
