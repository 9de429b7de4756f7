#include "doctest.h"

#include <algorithm>
#include <random>

#include "deckforge/errors.hpp"
#include "deckforge/partitioner.hpp"
#include "deckforge/synth.hpp"
#include "json.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace deckforge;
using namespace support;

namespace {

FunctionSet ids(std::initializer_list<std::uint32_t> v) {
  FunctionSet s;
  for (auto x : v) s.insert(FunctionId{x});
  return s;
}

std::vector<FunctionSet> sorted(std::vector<FunctionSet> v) {
  std::sort(v.begin(), v.end());
  return v;
}

std::vector<FunctionSet> random_sets(std::mt19937_64& rng) {
  const auto count = std::uniform_int_distribution<std::size_t>(1, 50)(rng);
  const auto universe = std::uniform_int_distribution<std::uint32_t>(1, 60)(rng);
  std::vector<FunctionSet> sets(count);
  for (auto& s : sets) {
    const auto size = std::uniform_int_distribution<std::uint32_t>(1, universe)(rng);
    for (std::uint32_t k = 0; k < size; ++k)
      s.insert(FunctionId{std::uniform_int_distribution<std::uint32_t>(0, universe - 1)(rng)});
  }
  return sets;
}

}  // namespace

TEST_CASE("xz example 1: single decks land in separate sets") {
  const ProgramModel m = load_model_file(oracle::fixture("xz.json"));
  const auto cells = sorted(create_disjoint_sets({ids({1}), ids({2}), ids({4, 5}), ids({4, 5})}));
  CHECK(cells == std::vector<FunctionSet>{ids({1}), ids({2}), ids({4, 5})});
  const auto layout = build_layout(m, plan_instrumentation(m));
  CHECK(layout.pages_of(FunctionId{1}, 512).first != layout.pages_of(FunctionId{2}, 512).first);
}

TEST_CASE("expanded xz: deck sets and disjoint sets") {
  const ProgramModel m = load_model_file(oracle::fixture("xz_expanded.json"));
  const InstrumentationPlan plan = plan_instrumentation(m);
  const auto decks = build_deck_sets(m, plan);
  REQUIRE(decks.size() == 4);
  CHECK(decks[0].origin == DeckKind::Single);
  CHECK(decks[0].members == ids({1}));
  CHECK(decks[1].members == ids({2}));
  CHECK(decks[2].origin == DeckKind::Loop);
  CHECK(decks[2].members == ids({3, 4, 5}));
  CHECK(decks[3].origin == DeckKind::Reachable);
  CHECK(decks[3].members == ids({4, 5}));

  std::vector<FunctionSet> inputs;
  for (const auto& d : decks) inputs.push_back(d.members);
  const auto cells = sorted(create_disjoint_sets(inputs));
  CHECK(cells == std::vector<FunctionSet>{ids({1}), ids({2}), ids({3}), ids({4, 5})});
}

TEST_CASE("create_disjoint_sets edge cases") {
  CHECK(create_disjoint_sets({}).empty());
  CHECK(create_disjoint_sets({ids({1, 2})}) == std::vector<FunctionSet>{ids({1, 2})});
  CHECK(sorted(create_disjoint_sets({ids({1, 2}), ids({1, 2})})) == std::vector<FunctionSet>{ids({1, 2})});
  CHECK(sorted(create_disjoint_sets({ids({1, 2, 3}), ids({2})})) == std::vector<FunctionSet>{ids({1, 3}), ids({2})});
  try {
    create_disjoint_sets({ids({1}), {}, ids({2})});
    FAIL("expected EmptyInputSet");
  } catch (const EmptyInputSet& e) {
    CHECK(e.index() == 1);
  }
}

TEST_CASE("partition laws on random inputs") {
  std::mt19937_64 rng(20261016);
  for (int trial = 0; trial < 400; ++trial) {
    const auto inputs = random_sets(rng);
    const auto cells = create_disjoint_sets(inputs);
    CHECK(oracle::partition_violation(inputs, cells) == "");
    CHECK(check_partition(inputs, cells) == "");
    // pairwise splitting refines down to the coarsest common partition
    CHECK(sorted(cells) == oracle::atoms(inputs));
  }
}

TEST_CASE("the library partition checker catches broken partitions") {
  const std::vector<FunctionSet> inputs{ids({1, 2}), ids({2, 3})};
  CHECK(check_partition(inputs, {ids({1}), ids({2}), ids({3})}) == "");
  CHECK(check_partition(inputs, {ids({1, 2}), ids({3})}) != "");
  CHECK(check_partition(inputs, {ids({1}), ids({2})}) != "");
  CHECK(check_partition(inputs, {ids({1}), ids({2}), ids({2, 3})}) != "");
  CHECK(check_partition(inputs, {ids({1}), ids({2}), ids({3}), {}}) != "");
}

TEST_CASE("layouts: geometry, entry isolation and page spans") {
  for (std::uint64_t seed = 1; seed <= 150; ++seed) {
    CAPTURE(seed);
    const ProgramModel m = synth::random_model(seed);
    const InstrumentationPlan plan = plan_instrumentation(m);
    for (std::uint64_t ps : {std::uint64_t{4096}, std::uint64_t{1024}}) {
      const DisjointLayout layout = build_layout(m, plan, ps);
      CHECK(oracle::layout_violation(m, layout) == "");
      // entry sits alone
      const auto& entry_cell = layout.disjoint_sets[layout.placements.at(m.entry()).section];
      CHECK(entry_cell == FunctionSet{m.entry()});
      // every deck set is a union of sections
      std::vector<FunctionSet> inputs;
      for (const auto& d : build_deck_sets(m, plan)) inputs.push_back(d.members);
      CHECK(oracle::partition_violation(inputs, [&] {
              std::vector<FunctionSet> covered;
              FunctionSet in_union;
              for (const auto& s : inputs) in_union.insert(s.begin(), s.end());
              for (const auto& c : layout.disjoint_sets)
                if (std::any_of(c.begin(), c.end(), [&](FunctionId f) { return in_union.contains(f); }))
                  covered.push_back(c);
              return covered;
            }()) == "");
      for (const auto& f : m.functions()) {
        const PageSpan span = layout.pages_of(f.id, f.size);
        const auto expect = oracle::pages(m, layout, f.id);
        CHECK(span.first == expect.front());
        CHECK(span.last == expect.back());
      }
    }
  }
}

TEST_CASE("a function larger than a page spans several pages") {
  ProgramModel m({fn(0, "main", 100), fn(1, "big", 9000)}, {call(0, 0, 1)}, {}, FunctionId{0});
  const auto layout = build_layout(m, plan_instrumentation(m));
  const PageSpan span = layout.pages_of(FunctionId{1}, 9000);
  CHECK(span.last - span.first == 2);
  CHECK(layout.page_count() == 4);
}

TEST_CASE("growth: 8 functions of 512 bytes in one set") {
  std::vector<FunctionDef> fns;
  FunctionSet all;
  for (std::uint32_t i = 0; i < 8; ++i) {
    fns.push_back(fn(i, "f" + std::to_string(i)));
    all.insert(FunctionId{i});
  }
  ProgramModel m(fns, {}, {}, FunctionId{0});
  const DisjointLayout layout = assign_pages(m, {all});
  const GrowthReport g = growth_report(m, layout);
  CHECK(g.baseline == 4096);
  CHECK(g.custom == 4096);
  CHECK(g.worst_case == 32768);
  CHECK(g.growth() == 1.0);
  CHECK(g.improvement() == 8.0);
}

TEST_CASE("growth: expanded xz arithmetic") {
  const ProgramModel m = load_model_file(oracle::fixture("xz_expanded.json"));
  const GrowthReport g = growth_report(m, build_layout(m, plan_instrumentation(m)));
  // 6 x 512 B packs into one page; five sections of one page; six singleton pages
  CHECK(g.baseline == 4096);
  CHECK(g.custom == 5 * 4096);
  CHECK(g.worst_case == 6 * 4096);
  CHECK(g.growth() == 5.0);
  CHECK(g.improvement() == doctest::Approx(1.2));
}

TEST_CASE("growth monotonicity on random models") {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const ProgramModel m = synth::random_model(seed);
    const GrowthReport g = growth_report(m, build_layout(m, plan_instrumentation(m)));
    CHECK(g.worst_case >= g.custom);
    CHECK(g.custom >= g.baseline);
  }
}

TEST_CASE("linker script names every function and aligns every section") {
  const ProgramModel m = load_model_file(oracle::fixture("xz_expanded.json"));
  const auto layout = build_layout(m, plan_instrumentation(m));
  for (const auto& f : m.functions()) CHECK(layout.linker_script.find(f.name) != std::string::npos);
  std::size_t aligns = 0;
  for (std::size_t at = 0; (at = layout.linker_script.find("ALIGN(4096)", at)) != std::string::npos; ++at) ++aligns;
  CHECK(aligns >= layout.disjoint_sets.size());
}

TEST_CASE("layout documents round-trip") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const ProgramModel m = synth::random_model(seed);
    const auto layout = build_layout(m, plan_instrumentation(m), 2048);
    const std::string doc = layout_to_json(m, layout);
    const auto back = layout_from_json(m, doc);
    CHECK(back.disjoint_sets == layout.disjoint_sets);
    CHECK(back.section_sizes == layout.section_sizes);
    CHECK(back.page_size == 2048);
    CHECK(layout_to_json(m, back) == doc);
  }
  const ProgramModel m = load_model_file(oracle::fixture("xz.json"));
  CHECK_THROWS(layout_from_json(m, "{}"));
  CHECK_THROWS(layout_from_json(m, "not json"));
}
