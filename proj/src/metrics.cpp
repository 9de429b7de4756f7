//===- metrics.cpp - Gadget reduction and chain availability -------------===//

#include "deckforge/metrics.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "deckforge/errors.hpp"
#include "json.hpp"

namespace deckforge {
namespace {

__extension__ using u128 = unsigned __int128;

u128 gcd128(u128 a, u128 b) {
  while (b != 0) {
    const u128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

Rational make_rational(u128 num, u128 den) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  const u128 g = num == 0 ? den : gcd128(num, den);
  num /= g;
  den /= g;
  constexpr u128 kMax = std::numeric_limits<std::uint64_t>::max();
  if (num > kMax || den > kMax) throw std::overflow_error("rational out of 64-bit range");
  return Rational(static_cast<std::uint64_t>(num), static_cast<std::uint64_t>(den));
}

// (total - part) * 100 / total
Rational percent_removed(std::uint64_t total, std::uint64_t part) {
  return make_rational(static_cast<u128>(total - part) * 100u, total);
}

}  // namespace

Rational::Rational(std::uint64_t num, std::uint64_t den) : num_(num), den_(den) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  const std::uint64_t g = num == 0 ? den : std::gcd(num, den);
  num_ /= g;
  den_ /= g;
}

std::strong_ordering Rational::operator<=>(const Rational& o) const {
  return static_cast<u128>(num_) * o.den_ <=> static_cast<u128>(o.num_) * den_;
}

std::string Rational::render(int decimals) const {
  u128 scale = 1;
  for (int i = 0; i < decimals; ++i) scale *= 10;
  // round half up: floor((2 * num * scale + den) / (2 * den))
  const u128 scaled = (2 * static_cast<u128>(num_) * scale + den_) / (2 * static_cast<u128>(den_));
  const auto whole = static_cast<std::uint64_t>(scaled / scale);
  std::string out = std::to_string(whole);
  if (decimals > 0) {
    std::string frac = std::to_string(static_cast<std::uint64_t>(scaled % scale));
    out += "." + std::string(static_cast<std::size_t>(decimals) - frac.size(), '0') + frac;
  }
  return out;
}

const char* to_string(GadgetClass c) {
  switch (c) {
    case GadgetClass::Rop: return "rop";
    case GadgetClass::Jop: return "jop";
    case GadgetClass::Cop: return "cop";
    case GadgetClass::Special: return "special";
  }
  return "?";
}

ClassCounts& ClassCounts::operator+=(const ClassCounts& o) {
  for (std::size_t i = 0; i < by_class.size(); ++i) by_class[i] += o.by_class[i];
  return *this;
}

PageGadgetIndex build_page_index(const ProgramModel& model, const DisjointLayout& layout) {
  PageGadgetIndex index;
  index.pages.resize(layout.page_count());
  const std::uint64_t ps = layout.page_size;
  for (const auto& f : model.functions()) {
    const PageSpan span = layout.pages_of(f.id, f.size);
    const Placement& place = layout.placements.at(f.id);
    const std::uint64_t start = layout.section_base(place.section) + place.offset;
    const std::uint64_t end = start + f.size;
    const std::array<std::uint64_t, 4> counts = {f.gadgets.rop, f.gadgets.jop, f.gadgets.cop, f.gadgets.special};
    for (std::size_t c = 0; c < counts.size(); ++c) {
      std::uint64_t assigned = 0;
      for (std::uint64_t p = span.first; p <= span.last; ++p) {
        const std::uint64_t bytes = std::min(end, (p + 1) * ps) - std::max(start, p * ps);
        const auto share = static_cast<std::uint64_t>(static_cast<u128>(counts[c]) * bytes / f.size);
        index.pages[p].counts.by_class[c] += share;
        assigned += share;
      }
      index.pages[span.first].counts.by_class[c] += counts[c] - assigned;
    }
    for (std::uint64_t p = span.first; p <= span.last; ++p) index.pages[p].chain |= f.gadgets.chain;
  }
  return index;
}

ClassCounts class_totals(const PageGadgetIndex& index) {
  ClassCounts out;
  for (const auto& p : index.pages) out += p.counts;
  return out;
}

std::uint64_t total_gadgets(const PageGadgetIndex& index) { return class_totals(index).total(); }

ClassCounts tally(const PageGadgetIndex& index, const PageSet& ap) {
  ClassCounts out;
  for (std::uint64_t p : ap) {
    if (p >= index.pages.size())
      throw ValidationError("page " + std::to_string(p) + " is outside the layout (" +
                            std::to_string(index.pages.size()) + " pages)");
    out += index.pages[p].counts;
  }
  return out;
}

Rational reduction_for(const PageGadgetIndex& index, const PageSet& ap) {
  const std::uint64_t total = total_gadgets(index);
  if (total == 0) throw ZeroTotal("program has no gadgets; reduction is undefined");
  return percent_removed(total, tally(index, ap).total());
}

ChainVerdict chain_available(const PageGadgetIndex& index, const PageSet& ap) {
  ChainFlags flags;
  for (std::uint64_t p : ap) {
    if (p >= index.pages.size()) throw ValidationError("page " + std::to_string(p) + " is outside the layout");
    flags |= index.pages[p].chain;
  }
  return {flags.has(ChainComponent::WriteWhatWhere), flags.has(ChainComponent::Args),
          flags.has(ChainComponent::Syscall)};
}

PageSet all_pages(const PageGadgetIndex& index) {
  PageSet out(index.pages.size());
  std::iota(out.begin(), out.end(), std::uint64_t{0});
  return out;
}

namespace {

// Distinct page sets with their occurrence counts, in lexicographic order.
std::vector<ApSummary> distinct_sets(std::span<const LogRecord> log) {
  std::map<PageSet, std::uint64_t> seen;
  for (const auto& r : log) ++seen[r.pages];
  std::vector<ApSummary> out;
  out.reserve(seen.size());
  for (auto& [pages, n] : seen) {
    ApSummary s;
    s.pages = pages;
    s.occurrences = n;
    out.push_back(std::move(s));
  }
  return out;
}

ReductionReport aggregate(const ClassCounts& totals, std::vector<ApSummary> sets, std::size_t records) {
  ReductionReport report;
  report.total = totals.total();
  report.class_totals = totals;
  report.unique_set_count = sets.size();
  report.dynamic_execution_count = records;

  u128 removed_sum = 0;
  std::array<u128, 4> class_removed{};
  for (auto& s : sets) {
    s.reduction = percent_removed(report.total, s.counts.total());
    removed_sum += report.total - s.counts.total();
    for (GadgetClass c : kGadgetClasses) class_removed[static_cast<int>(c)] += totals[c] - s.counts[c];
  }
  auto [lo, hi] = std::minmax_element(sets.begin(), sets.end(),
                                      [](const ApSummary& a, const ApSummary& b) { return a.reduction < b.reduction; });
  report.min = lo->reduction;
  report.max = hi->reduction;
  const u128 n = sets.size();
  report.avg = make_rational(removed_sum * 100u, static_cast<u128>(report.total) * n);
  for (GadgetClass c : kGadgetClasses) {
    if (totals[c] == 0) continue;
    report.class_avg[static_cast<int>(c)] =
        make_rational(class_removed[static_cast<int>(c)] * 100u, static_cast<u128>(totals[c]) * n);
  }
  report.sets = std::move(sets);
  return report;
}

void check_summarizable(const PageGadgetIndex& index, std::span<const LogRecord> log, ClassCounts& totals) {
  if (log.empty()) throw std::invalid_argument("cannot summarize an empty log");
  totals = class_totals(index);
  if (totals.total() == 0) throw ZeroTotal("program has no gadgets; reduction is undefined");
}

}  // namespace

ReductionReport summarize(const PageGadgetIndex& index, std::span<const LogRecord> log) {
  ClassCounts totals;
  check_summarizable(index, log, totals);
  std::vector<ApSummary> sets = distinct_sets(log);

  const auto n = static_cast<std::ptrdiff_t>(sets.size());
  const auto page_count = index.pages.size();
  bool out_of_range = false;
#pragma omp parallel for schedule(dynamic, 16) reduction(|| : out_of_range)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    ApSummary& s = sets[i];
    ChainFlags flags;
    for (std::uint64_t p : s.pages) {
      if (p >= page_count) {
        out_of_range = true;
        break;
      }
      s.counts += index.pages[p].counts;
      flags |= index.pages[p].chain;
    }
    s.chain = {flags.has(ChainComponent::WriteWhatWhere), flags.has(ChainComponent::Args),
               flags.has(ChainComponent::Syscall)};
  }
  if (out_of_range) throw ValidationError("log names a page outside the layout");
  return aggregate(totals, std::move(sets), log.size());
}

ReductionReport summarize_serial(const PageGadgetIndex& index, std::span<const LogRecord> log) {
  ClassCounts totals;
  check_summarizable(index, log, totals);
  std::vector<ApSummary> sets = distinct_sets(log);
  for (auto& s : sets) {
    s.counts = tally(index, s.pages);
    s.chain = chain_available(index, s.pages);
  }
  return aggregate(totals, std::move(sets), log.size());
}

ChainStudy chain_break_study(const PageGadgetIndex& index, std::span<const LogRecord> log) {
  ChainStudy study;
  study.baseline = chain_available(index, all_pages(index));
  for (const auto& s : distinct_sets(log)) {
    ++study.sets_examined;
    if (chain_available(index, s.pages).e2e()) {
      study.any_dynamic_e2e = true;
      study.offending.push_back(s.pages);
    }
  }
  return study;
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

nlohmann::json verdict_json(const ChainVerdict& v) {
  return {{"www", v.www}, {"args", v.args}, {"syscall", v.syscall}, {"e2e", v.e2e()}};
}

const char* yes_no(bool b) { return b ? "yes" : "no"; }

}  // namespace

std::string report_to_json(const std::optional<ReductionReport>& summary, const ChainStudy& study) {
  using nlohmann::json;
  json doc;
  if (summary) {
    const auto& r = *summary;
    json classes = json::object();
    for (GadgetClass c : kGadgetClasses) {
      const auto& avg = r.class_avg[static_cast<int>(c)];
      classes[to_string(c)] = {{"total", r.class_totals[c]}, {"avg_reduction", avg ? json(avg->render()) : json("n/a")}};
    }
    json sets = json::array();
    for (const auto& s : r.sets) {
      sets.push_back({{"pages", s.pages},
                      {"t_ap", s.counts.total()},
                      {"reduction", s.reduction.render()},
                      {"occurrences", s.occurrences},
                      {"chain", verdict_json(s.chain)}});
    }
    doc["total_gadgets"] = r.total;
    doc["min_reduction"] = r.min.render();
    doc["max_reduction"] = r.max.render();
    doc["avg_reduction"] = r.avg.render();
    doc["unique_set_count"] = r.unique_set_count;
    doc["dynamic_execution_count"] = r.dynamic_execution_count;
    doc["classes"] = std::move(classes);
    doc["sets"] = std::move(sets);
  } else {
    doc["total_gadgets"] = 0;
    doc["min_reduction"] = "n/a";
    doc["max_reduction"] = "n/a";
    doc["avg_reduction"] = "n/a";
  }
  doc["chain"] = {{"baseline", verdict_json(study.baseline)},
                  {"any_dynamic_e2e", study.any_dynamic_e2e},
                  {"sets_examined", study.sets_examined},
                  {"offending_sets", study.offending}};
  return doc.dump(2) + "\n";
}

std::string report_to_table(const std::optional<ReductionReport>& summary, const ChainStudy& study) {
  std::ostringstream os;
  os << "Gadget reduction (%)\n";
  os << "  Min     Max     Avg\n";
  if (summary) {
    auto cell = [](const Rational& r) {
      std::string s = r.render();
      return s + std::string(s.size() < 8 ? 8 - s.size() : 1, ' ');
    };
    os << "  " << cell(summary->min) << cell(summary->max) << summary->avg.render() << "\n";
    os << "  total gadgets " << summary->total << ", " << summary->unique_set_count << " unique available-page sets ("
       << summary->dynamic_execution_count << " dynamic)\n";
    for (GadgetClass c : kGadgetClasses) {
      const auto& avg = summary->class_avg[static_cast<int>(c)];
      os << "  avg " << to_string(c) << ": " << (avg ? avg->render() : std::string("n/a")) << "\n";
    }
  } else {
    os << "  n/a     n/a     n/a\n";
    os << "  program has no gadgets\n";
  }
  os << "\nExecve chain availability\n";
  os << "  Set                 W-W-W  Args  Syscall  E2E\n";
  const auto& b = study.baseline;
  os << "  baseline            " << (b.www ? "x" : "-") << "      " << (b.args ? "x" : "-") << "     "
     << (b.syscall ? "x" : "-") << "        " << (b.e2e() ? "x" : "-") << "\n";
  os << "E2E (baseline): " << yes_no(study.baseline.e2e())
     << "; E2E (any dynamic AP): " << yes_no(study.any_dynamic_e2e) << "\n";
  return os.str();
}

}  // namespace deckforge
