//===- partitioner.cpp - Disjoint sets and page-aligned layout -----------===//

#include "deckforge/partitioner.hpp"

#include <algorithm>
#include <iterator>
#include <sstream>
#include <stdexcept>

#include "deckforge/errors.hpp"
#include "json.hpp"

namespace deckforge {
namespace {

FunctionSet intersect(const FunctionSet& a, const FunctionSet& b) {
  FunctionSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

FunctionSet subtract(const FunctionSet& a, const FunctionSet& b) {
  FunctionSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::inserter(out, out.end()));
  return out;
}

std::uint64_t round_up(std::uint64_t bytes, std::uint64_t page_size) {
  return (bytes + page_size - 1) / page_size * page_size;
}

std::string render_linker_script(const ProgramModel& model, const DisjointLayout& layout) {
  std::ostringstream os;
  os << "/* deckforge section layout: " << layout.disjoint_sets.size() << " sections, page size "
     << layout.page_size << " */\n";
  os << "SECTIONS\n{\n";
  for (std::size_t i = 0; i < layout.disjoint_sets.size(); ++i) {
    const std::uint64_t base = layout.section_base(i);
    os << "  . = ALIGN(" << layout.page_size << ");\n";
    os << "  .text.deck." << i << " : /* " << layout.section_sizes[i] << " bytes, pages "
       << base / layout.page_size << "-" << (base + layout.section_sizes[i]) / layout.page_size - 1
       << " */\n  {\n";
    for (FunctionId f : layout.disjoint_sets[i]) {
      const auto& def = model.function(f);
      os << "    *(.text." << def.name << ")  /* +" << layout.placements.at(f).offset << ", " << def.size
         << " bytes */\n";
    }
    os << "  }\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace

std::vector<DeckSet> build_deck_sets(const ProgramModel& model, const InstrumentationPlan& plan) {
  std::set<FunctionId> singles;
  std::set<LoopId> loops;
  std::set<FunctionId> reachables;
  for (const auto& p : plan.points) {
    switch (p.kind) {
      case DeckKind::Single: singles.insert(p.function()); break;
      case DeckKind::Loop: loops.insert(p.loop()); break;
      case DeckKind::Reachable: reachables.insert(p.function()); break;
      case DeckKind::Indirect: break;
    }
  }

  std::vector<DeckSet> sets;
  for (FunctionId f : singles) sets.push_back({DeckKind::Single, f.value, {f}});
  for (LoopId l : loops) sets.push_back({DeckKind::Loop, l.value, plan.loop_function_sets.at(l)});
  for (FunctionId f : reachables) sets.push_back({DeckKind::Reachable, f.value, plan.reachable_closure.at(f)});
  for (const auto& f : model.functions()) {
    if (f.address_taken) sets.push_back({DeckKind::Indirect, f.id.value, plan.reachable_closure.at(f.id)});
  }
  return sets;
}

std::vector<FunctionSet> create_disjoint_sets(std::vector<FunctionSet> deck_sets) {
  for (std::size_t i = 0; i < deck_sets.size(); ++i) {
    if (deck_sets[i].empty()) throw EmptyInputSet(i);
  }

  std::vector<FunctionSet> disjoint;
  while (!deck_sets.empty()) {
    FunctionSet a = std::move(deck_sets.front());
    std::vector<FunctionSet> rest(std::make_move_iterator(deck_sets.begin() + 1),
                                  std::make_move_iterator(deck_sets.end()));
    deck_sets.clear();
    for (auto& b : rest) {
      FunctionSet shared = intersect(a, b);
      if (shared.empty()) {
        deck_sets.push_back(std::move(b));
        continue;
      }
      FunctionSet a_rest = subtract(a, shared);
      FunctionSet b_rest = subtract(b, shared);
      if (a_rest.empty() && b_rest.empty()) continue;  // b duplicates a
      if (!b_rest.empty()) deck_sets.push_back(std::move(b_rest));
      deck_sets.push_back(std::move(shared));
      a = std::move(a_rest);
    }
    // A fully consumed head leaves nothing behind; its pieces live on in
    // deck_sets.
    if (!a.empty()) disjoint.push_back(std::move(a));
  }
  return disjoint;
}

std::uint64_t DisjointLayout::section_base(std::size_t section) const {
  std::uint64_t base = 0;
  for (std::size_t i = 0; i < section; ++i) base += section_sizes[i];
  return base;
}

std::uint64_t DisjointLayout::total_bytes() const {
  std::uint64_t total = 0;
  for (auto s : section_sizes) total += s;
  return total;
}

PageSpan DisjointLayout::pages_of(FunctionId f, std::uint64_t size) const {
  const Placement& p = placements.at(f);
  const std::uint64_t start = section_base(p.section) + p.offset;
  return {start / page_size, (start + size - 1) / page_size};
}

DisjointLayout assign_pages(const ProgramModel& model, const std::vector<FunctionSet>& disjoint_sets,
                            std::uint64_t page_size) {
  if (page_size == 0) throw std::invalid_argument("page size must be positive");
  DisjointLayout layout;
  layout.page_size = page_size;
  layout.disjoint_sets = disjoint_sets;

  FunctionSet covered;
  for (const auto& cell : disjoint_sets) {
    if (cell.empty()) throw std::invalid_argument("empty disjoint set");
    for (FunctionId f : cell) {
      if (!model.has_function(f))
        throw std::invalid_argument("disjoint set names unknown function " + std::to_string(f.value));
      if (!covered.insert(f).second)
        throw std::invalid_argument("function " + std::to_string(f.value) + " appears in two disjoint sets");
    }
  }
  for (const auto& f : model.functions()) {
    if (!covered.contains(f.id)) layout.disjoint_sets.push_back({f.id});
  }

  for (std::size_t i = 0; i < layout.disjoint_sets.size(); ++i) {
    std::uint64_t offset = 0;
    for (FunctionId f : layout.disjoint_sets[i]) {
      layout.placements[f] = {i, offset};
      offset += model.function(f).size;
    }
    layout.section_sizes.push_back(round_up(offset, page_size));
  }
  layout.linker_script = render_linker_script(model, layout);
  return layout;
}

DisjointLayout build_layout(const ProgramModel& model, const InstrumentationPlan& plan, std::uint64_t page_size) {
  std::vector<FunctionSet> inputs;
  bool entry_in_deck = false;
  for (auto& d : build_deck_sets(model, plan)) {
    entry_in_deck = entry_in_deck || d.members.contains(model.entry());
    inputs.push_back(std::move(d.members));
  }
  // A trailing {entry} input splits the entry out of whatever deck holds it.
  if (entry_in_deck) inputs.push_back({model.entry()});
  return assign_pages(model, create_disjoint_sets(std::move(inputs)), page_size);
}

GrowthReport growth_report(const ProgramModel& model, const DisjointLayout& layout) {
  GrowthReport r;
  std::uint64_t packed = 0;
  for (const auto& f : model.functions()) {
    packed += f.size;
    r.worst_case += round_up(f.size, layout.page_size);
  }
  r.baseline = round_up(packed, layout.page_size);
  r.custom = layout.total_bytes();
  return r;
}

std::string layout_to_json(const ProgramModel& model, const DisjointLayout& layout) {
  using nlohmann::json;
  json doc;
  doc["page_size"] = layout.page_size;
  doc["page_count"] = layout.page_count();
  json sections = json::array();
  for (std::size_t i = 0; i < layout.disjoint_sets.size(); ++i) {
    const std::uint64_t base = layout.section_base(i);
    json functions = json::array();
    for (FunctionId f : layout.disjoint_sets[i]) {
      const auto& def = model.function(f);
      const PageSpan span = layout.pages_of(f, def.size);
      functions.push_back({{"id", f.value},
                           {"name", def.name},
                           {"offset", layout.placements.at(f).offset},
                           {"size", def.size},
                           {"pages", {span.first, span.last}}});
    }
    sections.push_back({{"index", i},
                        {"size", layout.section_sizes[i]},
                        {"first_page", base / layout.page_size},
                        {"functions", std::move(functions)}});
  }
  doc["sections"] = std::move(sections);
  return doc.dump(2) + "\n";
}

DisjointLayout layout_from_json(const ProgramModel& model, std::string_view document) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("layout is not valid JSON: ") + e.what());
  }
  try {
    DisjointLayout layout;
    layout.page_size = doc.at("page_size").get<std::uint64_t>();
    if (layout.page_size == 0) throw ParseError("layout: page_size must be positive");
    for (const auto& section : doc.at("sections")) {
      const std::size_t index = layout.disjoint_sets.size();
      FunctionSet cell;
      std::uint64_t end = 0;
      for (const auto& fn : section.at("functions")) {
        FunctionId f{fn.at("id").get<std::uint32_t>()};
        if (!model.has_function(f))
          throw ValidationError("layout places unknown function " + std::to_string(f.value));
        const std::uint64_t offset = fn.at("offset").get<std::uint64_t>();
        if (!layout.placements.emplace(f, Placement{index, offset}).second)
          throw ValidationError("layout places function " + std::to_string(f.value) + " twice");
        end = std::max(end, offset + model.function(f).size);
        cell.insert(f);
      }
      const std::uint64_t size = section.at("size").get<std::uint64_t>();
      if (size == 0 || size % layout.page_size != 0 || end > size)
        throw ValidationError("layout section " + std::to_string(index) + " has an invalid size");
      layout.disjoint_sets.push_back(std::move(cell));
      layout.section_sizes.push_back(size);
    }
    for (const auto& f : model.functions()) {
      if (!layout.placements.contains(f.id))
        throw ValidationError("layout does not place function " + std::to_string(f.id.value));
    }
    layout.linker_script = render_linker_script(model, layout);
    return layout;
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed layout document: ") + e.what());
  }
}

std::string check_partition(const std::vector<FunctionSet>& inputs, const std::vector<FunctionSet>& cells) {
  FunctionSet input_union;
  for (const auto& s : inputs) input_union.insert(s.begin(), s.end());
  FunctionSet cell_union;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].empty()) return "cell " + std::to_string(i) + " is empty";
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      if (!intersect(cells[i], cells[j]).empty())
        return "cells " + std::to_string(i) + " and " + std::to_string(j) + " overlap";
    }
    cell_union.insert(cells[i].begin(), cells[i].end());
  }
  if (cell_union != input_union) return "cells do not cover exactly the union of the deck sets";
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    FunctionSet rebuilt;
    for (const auto& c : cells) {
      const FunctionSet shared = intersect(inputs[i], c);
      if (shared.empty()) continue;
      if (shared != c)
        return "deck set " + std::to_string(i) + " is not a union of cells (it splits a cell)";
      rebuilt.insert(c.begin(), c.end());
    }
    if (rebuilt != inputs[i]) return "deck set " + std::to_string(i) + " is not covered by cells";
  }
  return {};
}

}  // namespace deckforge
