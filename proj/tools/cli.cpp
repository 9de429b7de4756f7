//===- cli.cpp - deckforge command-line front end ------------------------===//
//
// analyze -> layout -> simulate -> report, plus `pipeline` for all four and
// `generate` for synthetic fixtures.
//
//===----------------------------------------------------------------------===//

#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "deckforge/deck_analysis.hpp"
#include "deckforge/errors.hpp"
#include "deckforge/metrics.hpp"
#include "deckforge/partitioner.hpp"
#include "deckforge/program_model.hpp"
#include "deckforge/runtime_sim.hpp"
#include "deckforge/synth.hpp"

namespace deckforge::cli {
namespace {

namespace fs = std::filesystem;

struct PipelineConfig {
  std::string model_path;
  std::vector<std::string> trace_paths;
  std::vector<std::string> log_paths;
  std::string layout_path;
  std::string log_out;
  std::string out_dir;
  std::uint64_t page_size = kDefaultPageSize;
  bool idc = true;
  bool sc = true;
  bool check = false;
  std::string format = "table";
};

class UsageError : public Error {
 public:
  using Error::Error;
};

void init_logging() {
  static bool done = false;
  if (done) return;
  done = true;
  spdlog::set_default_logger(spdlog::stderr_color_mt("deckforge"));
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("DECKFORGE_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

void validate(const PipelineConfig& cfg) {
  if (cfg.page_size == 0 || (cfg.page_size & (cfg.page_size - 1)) != 0)
    throw UsageError("--page-size must be a positive power of two");
  if (cfg.format != "table" && cfg.format != "structured")
    throw UsageError("--format must be 'table' or 'structured'");
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  spdlog::debug("wrote {}", path.string());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string names(const ProgramModel& model, const FunctionSet& set) {
  std::string out = "{";
  bool first = true;
  for (FunctionId f : set) {
    out += (first ? "" : ", ") + model.function(f).name;
    first = false;
  }
  return out + "}";
}

// --- analyze -------------------------------------------------------------

std::string plan_table(const ProgramModel& model, const InstrumentationPlan& plan) {
  std::ostringstream os;
  os << "encompassed = " << names(model, plan.encompassed_sets.encompassed) << "\n";
  os << "non_encompassed = " << names(model, plan.encompassed_sets.non_encompassed) << "\n";
  os << plan.points.size() << " deck points\n";
  for (const auto& p : plan.points) {
    os << "  " << to_string(p.kind) << " ";
    if (p.kind == DeckKind::Loop) {
      os << "loop " << p.loop() << " in " << model.function(model.loop(p.loop()).function).name << " -> "
         << names(model, plan.loop_function_sets.at(p.loop())) << "\n";
      continue;
    }
    const CallSite& s = model.site(p.site());
    os << "site " << p.site() << " " << model.function(s.caller).name << " -> ";
    if (p.kind == DeckKind::Indirect)
      os << "runtime target of " << names(model, FunctionSet(s.targets().begin(), s.targets().end())) << "\n";
    else if (p.kind == DeckKind::Reachable)
      os << names(model, plan.reachable_closure.at(p.function())) << "\n";
    else
      os << model.function(p.function()).name << "\n";
  }
  return os.str();
}

int cmd_analyze(const PipelineConfig& cfg, std::ostream& out) {
  const ProgramModel model = load_model_file(cfg.model_path);
  const InstrumentationPlan plan = plan_instrumentation(model);
  const std::string doc = plan_to_json(model, plan);
  if (!cfg.out_dir.empty()) write_file(fs::path(cfg.out_dir) / "plan.json", doc);
  out << (cfg.format == "structured" ? doc : plan_table(model, plan));
  return kExitOk;
}

// --- layout --------------------------------------------------------------

std::string growth_json(const GrowthReport& g) {
  std::ostringstream os;
  os << "{\n  \"baseline\": " << g.baseline << ",\n  \"custom\": " << g.custom << ",\n  \"worst_case\": "
     << g.worst_case << ",\n  \"growth\": " << Rational(g.custom, g.baseline).render(2)
     << ",\n  \"improvement\": " << Rational(g.worst_case, g.custom).render(2) << "\n}\n";
  return os.str();
}

int cmd_layout(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  const ProgramModel model = load_model_file(cfg.model_path);
  const InstrumentationPlan plan = plan_instrumentation(model);
  const DisjointLayout layout = build_layout(model, plan, cfg.page_size);
  const GrowthReport growth = growth_report(model, layout);

  if (cfg.check) {
    std::vector<FunctionSet> inputs;
    for (auto& d : build_deck_sets(model, plan)) inputs.push_back(std::move(d.members));
    std::vector<FunctionSet> cells = create_disjoint_sets(inputs);
    if (std::string problem = check_partition(inputs, cells); !problem.empty()) {
      err << "partition check failed: " << problem << "\n";
      return kExitFailure;
    }
    out << "partition check passed: " << inputs.size() << " deck sets -> " << cells.size() << " disjoint sets\n";
  }

  if (!cfg.out_dir.empty()) {
    const fs::path dir(cfg.out_dir);
    write_file(dir / "layout.json", layout_to_json(model, layout));
    write_file(dir / "linker.ld", layout.linker_script);
    write_file(dir / "growth.json", growth_json(growth));
  }
  if (cfg.format == "structured") {
    out << layout_to_json(model, layout);
    return kExitOk;
  }
  out << layout.disjoint_sets.size() << " sections, " << layout.page_count() << " pages of " << layout.page_size
      << " bytes\n";
  for (std::size_t i = 0; i < layout.disjoint_sets.size(); ++i)
    out << "  section " << i << " (" << layout.section_sizes[i] << " bytes): " << names(model, layout.disjoint_sets[i])
        << "\n";
  out << "baseline " << growth.baseline << " B, custom " << growth.custom << " B, worst case " << growth.worst_case
      << " B; growth " << Rational(growth.custom, growth.baseline).render(2) << "x, improvement "
      << Rational(growth.worst_case, growth.custom).render(2) << "x\n";
  return kExitOk;
}

// --- simulate ------------------------------------------------------------

DisjointLayout resolve_layout(const PipelineConfig& cfg, const ProgramModel& model, const InstrumentationPlan& plan) {
  if (!cfg.layout_path.empty()) return layout_from_json(model, read_text(cfg.layout_path));
  return build_layout(model, plan, cfg.page_size);
}

// One output name per trace: <stem>.log, disambiguated by position when two
// traces share a stem.
std::vector<fs::path> log_names(const PipelineConfig& cfg) {
  std::map<std::string, int> stems;
  for (const auto& t : cfg.trace_paths) ++stems[fs::path(t).stem().string()];
  std::vector<fs::path> out;
  const fs::path dir = cfg.out_dir.empty() ? fs::path(".") : fs::path(cfg.out_dir);
  for (std::size_t i = 0; i < cfg.trace_paths.size(); ++i) {
    const std::string stem = fs::path(cfg.trace_paths[i]).stem().string();
    out.push_back(dir / (stems[stem] > 1 ? stem + "-" + std::to_string(i) + ".log" : stem + ".log"));
  }
  return out;
}

std::vector<fs::path> run_simulations(const PipelineConfig& cfg, const ProgramModel& model,
                                      const InstrumentationPlan& plan, const DisjointLayout& layout,
                                      std::ostream& err, bool& failed) {
  if (cfg.trace_paths.empty()) throw UsageError("at least one --trace is required");
  if (!cfg.log_out.empty() && cfg.trace_paths.size() != 1) throw UsageError("--log takes a single --trace");
  std::vector<Trace> traces;
  for (const auto& t : cfg.trace_paths) traces.push_back(load_trace_file(t));

  const auto results = simulate_many(model, plan, layout, traces, SimOptions{cfg.idc, cfg.sc});
  std::vector<fs::path> paths =
      cfg.log_out.empty() ? log_names(cfg) : std::vector<fs::path>{fs::path(cfg.log_out)};
  std::vector<fs::path> written;
  failed = false;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].error.empty()) {
      err << cfg.trace_paths[i] << ": " << results[i].error << "\n";
      failed = true;
      continue;
    }
    write_file(paths[i], format_log(results[i].log));
    spdlog::info("{}: {} log records", cfg.trace_paths[i], results[i].log.size());
    written.push_back(paths[i]);
  }
  return written;
}

int cmd_simulate(const PipelineConfig& cfg, std::ostream& out, std::ostream& err) {
  const ProgramModel model = load_model_file(cfg.model_path);
  const InstrumentationPlan plan = plan_instrumentation(model);
  const DisjointLayout layout = resolve_layout(cfg, model, plan);
  bool failed = false;
  for (const auto& p : run_simulations(cfg, model, plan, layout, err, failed)) out << p.string() << "\n";
  return failed ? kExitFailure : kExitOk;
}

// --- report --------------------------------------------------------------

std::string render_report(const PipelineConfig& cfg, const ProgramModel& model, const DisjointLayout& layout,
                          const std::vector<fs::path>& logs, std::string* structured) {
  Log merged;
  for (const auto& p : logs) {
    Log log = load_log_file(p.string());
    merged.insert(merged.end(), std::make_move_iterator(log.begin()), std::make_move_iterator(log.end()));
  }
  if (merged.empty()) throw Error("no log records to report on");
  const PageGadgetIndex index = build_page_index(model, layout);
  std::optional<ReductionReport> summary;
  try {
    summary = summarize(index, merged);
  } catch (const ZeroTotal& e) {
    spdlog::warn("{}", e.what());
  }
  const ChainStudy study = chain_break_study(index, merged);
  *structured = report_to_json(summary, study);
  return cfg.format == "structured" ? *structured : report_to_table(summary, study);
}

int cmd_report(const PipelineConfig& cfg, std::ostream& out) {
  if (cfg.log_paths.empty()) throw UsageError("at least one --log is required");
  const ProgramModel model = load_model_file(cfg.model_path);
  const InstrumentationPlan plan = plan_instrumentation(model);
  const DisjointLayout layout = resolve_layout(cfg, model, plan);
  std::vector<fs::path> logs(cfg.log_paths.begin(), cfg.log_paths.end());
  std::string structured;
  out << render_report(cfg, model, layout, logs, &structured);
  if (!cfg.out_dir.empty()) write_file(fs::path(cfg.out_dir) / "report.json", structured);
  return kExitOk;
}

// --- pipeline ------------------------------------------------------------

int cmd_pipeline(PipelineConfig cfg, std::ostream& out, std::ostream& err) {
  if (cfg.trace_paths.empty()) throw UsageError("pipeline needs at least one --trace");
  if (cfg.out_dir.empty()) cfg.out_dir = "deckforge-out";
  const fs::path dir(cfg.out_dir);
  const ProgramModel model = load_model_file(cfg.model_path);
  const InstrumentationPlan plan = plan_instrumentation(model);
  write_file(dir / "plan.json", plan_to_json(model, plan));

  const DisjointLayout layout = build_layout(model, plan, cfg.page_size);
  write_file(dir / "layout.json", layout_to_json(model, layout));
  write_file(dir / "linker.ld", layout.linker_script);
  write_file(dir / "growth.json", growth_json(growth_report(model, layout)));

  PipelineConfig sim = cfg;
  sim.out_dir = (dir / "logs").string();
  sim.log_out.clear();
  bool failed = false;
  const auto logs = run_simulations(sim, model, plan, layout, err, failed);
  if (failed) return kExitFailure;

  std::string structured;
  const std::string text = render_report(cfg, model, layout, logs, &structured);
  write_file(dir / "report.json", structured);
  write_file(dir / "report.txt", text);
  out << text;
  return kExitOk;
}

// --- generate ------------------------------------------------------------

struct GenerateConfig {
  std::uint64_t seed = 1;
  std::uint32_t functions = 15;
  std::size_t events = 200;
  std::size_t traces = 1;
  std::string out_dir = ".";
};

int cmd_generate(const GenerateConfig& cfg, std::ostream& out) {
  synth::ModelParams mp;
  mp.functions = cfg.functions;
  const ProgramModel model = synth::random_model(cfg.seed, mp);
  const fs::path dir(cfg.out_dir);
  write_file(dir / "model.json", dump_model(model));
  out << (dir / "model.json").string() << "\n";
  for (std::size_t i = 0; i < cfg.traces; ++i) {
    synth::TraceParams tp;
    tp.max_events = cfg.events;
    const fs::path p = dir / ("trace-" + std::to_string(i) + ".trace");
    write_file(p, format_trace(synth::random_trace(model, cfg.seed * 7919 + i, tp)));
    out << p.string() << "\n";
  }
  return kExitOk;
}

void add_common(CLI::App* cmd, PipelineConfig& cfg) {
  cmd->add_option("--model", cfg.model_path, "Program-model file (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out-dir", cfg.out_dir, "Directory for generated artifacts");
  cmd->add_option("--page-size", cfg.page_size, "Page size in bytes (power of two)")->capture_default_str();
  cmd->add_option("--format", cfg.format, "Output format: table | structured")->capture_default_str();
}

void add_sim_flags(CLI::App* cmd, PipelineConfig& cfg) {
  cmd->add_flag("--idc,!--no-idc", cfg.idc, "Indirect deck caching (default on)");
  cmd->add_flag("--sc,!--no-sc", cfg.sc, "Stack cleaning (default on)");
  cmd->add_option("--trace", cfg.trace_paths, "Execution trace file (repeatable)")->check(CLI::ExistingFile);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  init_logging();
  CLI::App app{"deckforge: on-demand code activation planner and simulator"};
  app.require_subcommand(1);
  PipelineConfig cfg;
  GenerateConfig gen;

  auto* analyze = app.add_subcommand("analyze", "Compute encompassed sets and deck points");
  add_common(analyze, cfg);

  auto* layout = app.add_subcommand("layout", "Partition functions into page-aligned sections");
  add_common(layout, cfg);
  layout->add_flag("--check", cfg.check, "Verify the partition laws on the computed sets");

  auto* simulate = app.add_subcommand("simulate", "Replay traces and write available-page logs");
  add_common(simulate, cfg);
  add_sim_flags(simulate, cfg);
  simulate->add_option("--log", cfg.log_out, "Log output path (single trace only)");
  simulate->add_option("--layout", cfg.layout_path, "Layout document from `layout` (default: recompute)")
      ->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Gadget reduction and chain availability over logs");
  add_common(report, cfg);
  report->add_option("--log", cfg.log_paths, "Available-page log (repeatable; records are merged)")
      ->check(CLI::ExistingFile);
  report->add_option("--layout", cfg.layout_path, "Layout document from `layout` (default: recompute)")
      ->check(CLI::ExistingFile);

  auto* pipeline = app.add_subcommand("pipeline", "analyze, layout, simulate and report in one go");
  add_common(pipeline, cfg);
  add_sim_flags(pipeline, cfg);

  auto* generate = app.add_subcommand("generate", "Write a random model and traces");
  generate->add_option("--seed", gen.seed)->capture_default_str();
  generate->add_option("--functions", gen.functions)->capture_default_str();
  generate->add_option("--events", gen.events, "Events per trace")->capture_default_str();
  generate->add_option("--traces", gen.traces)->capture_default_str();
  generate->add_option("--out-dir", gen.out_dir)->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*generate) return cmd_generate(gen, out);
    validate(cfg);
    if (*analyze) return cmd_analyze(cfg, out);
    if (*layout) return cmd_layout(cfg, out, err);
    if (*simulate) return cmd_simulate(cfg, out, err);
    if (*report) return cmd_report(cfg, out);
    if (*pipeline) return cmd_pipeline(cfg, out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace deckforge::cli
