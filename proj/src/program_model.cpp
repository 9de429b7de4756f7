//===- program_model.cpp - Model validation and file I/O -----------------===//

#include "deckforge/program_model.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

#include "deckforge/errors.hpp"
#include "json.hpp"

namespace deckforge {
namespace {

using nlohmann::json;

template <class T, class IdT>
const T* find_by_id(const std::vector<T>& items, IdT id) {
  auto it = std::lower_bound(items.begin(), items.end(), id,
                             [](const T& item, IdT key) { return item.id < key; });
  if (it == items.end() || it->id != id) return nullptr;
  return &*it;
}

template <class T>
void sort_unique_by_id(std::vector<T>& items, const char* what) {
  std::sort(items.begin(), items.end(), [](const T& a, const T& b) { return a.id < b.id; });
  auto dup = std::adjacent_find(items.begin(), items.end(),
                                [](const T& a, const T& b) { return a.id == b.id; });
  if (dup != items.end())
    throw ValidationError(std::string("duplicate ") + what + " id " + std::to_string(dup->id.value));
}

std::string describe(const FunctionDef& f) {
  return "function " + std::to_string(f.id.value) + " (" + f.name + ")";
}

}  // namespace

ProgramModel::ProgramModel(std::vector<FunctionDef> functions, std::vector<CallSite> sites,
                           std::vector<LoopDef> loops, FunctionId entry)
    : functions_(std::move(functions)), sites_(std::move(sites)), loops_(std::move(loops)), entry_(entry) {
  sort_unique_by_id(functions_, "function");
  sort_unique_by_id(sites_, "call site");
  sort_unique_by_id(loops_, "loop");

  for (const auto& f : functions_) {
    if (f.size == 0) throw ValidationError(describe(f) + " has size 0");
    if (f.name.empty()) throw ValidationError("function " + std::to_string(f.id.value) + " has an empty name");
  }
  if (!has_function(entry_))
    throw ValidationError("entry function " + std::to_string(entry_.value) + " does not exist");

  for (auto& s : sites_) {
    const std::string label = "call site " + std::to_string(s.id.value);
    if (!has_function(s.caller))
      throw ValidationError(label + " names unknown caller " + std::to_string(s.caller.value));
    if (s.is_direct()) {
      if (!has_function(s.callee()))
        throw ValidationError(label + " names unknown callee " + std::to_string(s.callee().value));
      continue;
    }
    auto& targets = std::get<IndirectCall>(s.kind).targets;
    if (targets.empty()) throw ValidationError(label + " has an empty indirect target set");
    std::sort(targets.begin(), targets.end());
    targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
    for (FunctionId t : targets) {
      const FunctionDef* target = find_by_id(functions_, t);
      if (target == nullptr)
        throw ValidationError(label + " names unknown indirect target " + std::to_string(t.value));
      if (!target->address_taken)
        throw ValidationError(label + " lists indirect target " + describe(*target) +
                              " which is not address-taken");
    }
  }

  for (const auto& l : loops_) {
    const std::string label = "loop " + std::to_string(l.id.value);
    if (!has_function(l.function))
      throw ValidationError(label + " names unknown function " + std::to_string(l.function.value));
    if (!l.parent) continue;
    if (*l.parent == l.id) throw ValidationError(label + " is its own parent");
    const LoopDef* parent = find_by_id(loops_, *l.parent);
    if (parent == nullptr)
      throw ValidationError(label + " names unknown parent loop " + std::to_string(l.parent->value));
    if (parent->function != l.function)
      throw ValidationError(label + " and its parent loop " + std::to_string(parent->id.value) +
                            " belong to different functions");
  }
  // Nesting must be a forest: any parent chain longer than the loop count
  // revisits a loop.
  for (const auto& l : loops_) {
    std::optional<LoopId> cur = l.parent;
    for (std::size_t steps = 0; cur; ++steps) {
      if (steps > loops_.size() || *cur == l.id)
        throw ValidationError("loop " + std::to_string(l.id.value) + " is part of a nesting cycle");
      cur = find_by_id(loops_, *cur)->parent;
    }
  }

  // Reconcile the two ways of stating site membership.
  for (auto& l : loops_) {
    for (SiteId sid : l.sites) {
      auto it = std::lower_bound(sites_.begin(), sites_.end(), sid,
                                 [](const CallSite& s, SiteId key) { return s.id < key; });
      if (it == sites_.end() || it->id != sid)
        throw ValidationError("loop " + std::to_string(l.id.value) + " lists unknown call site " +
                              std::to_string(sid.value));
      if (it->caller != l.function)
        throw ValidationError("loop " + std::to_string(l.id.value) + " lists call site " +
                              std::to_string(sid.value) + " whose caller is a different function");
      if (it->loop && *it->loop != l.id)
        throw ValidationError("call site " + std::to_string(sid.value) + " is claimed by loops " +
                              std::to_string(it->loop->value) + " and " + std::to_string(l.id.value));
      it->loop = l.id;
    }
  }
  for (const auto& s : sites_) {
    if (!s.loop) continue;
    auto lit = std::lower_bound(loops_.begin(), loops_.end(), *s.loop,
                                [](const LoopDef& l, LoopId key) { return l.id < key; });
    if (lit == loops_.end() || lit->id != *s.loop)
      throw ValidationError("call site " + std::to_string(s.id.value) + " names unknown loop " +
                            std::to_string(s.loop->value));
    if (lit->function != s.caller)
      throw ValidationError("call site " + std::to_string(s.id.value) + " names loop " +
                            std::to_string(s.loop->value) + " of a different function");
    if (std::find(lit->sites.begin(), lit->sites.end(), s.id) == lit->sites.end()) lit->sites.push_back(s.id);
  }
  for (auto& l : loops_) {
    std::sort(l.sites.begin(), l.sites.end());
    l.sites.erase(std::unique(l.sites.begin(), l.sites.end()), l.sites.end());
  }

  for (const auto& f : functions_) {
    sites_by_caller_[f.id];
    loops_by_function_[f.id];
  }
  for (const auto& s : sites_) sites_by_caller_[s.caller].push_back(s.id);
  for (const auto& l : loops_) loops_by_function_[l.function].push_back(l.id);
}

bool ProgramModel::has_function(FunctionId id) const { return find_by_id(functions_, id) != nullptr; }
bool ProgramModel::has_site(SiteId id) const { return find_by_id(sites_, id) != nullptr; }
bool ProgramModel::has_loop(LoopId id) const { return find_by_id(loops_, id) != nullptr; }

const FunctionDef& ProgramModel::function(FunctionId id) const {
  if (const auto* f = find_by_id(functions_, id)) return *f;
  throw std::out_of_range("no function " + std::to_string(id.value));
}

const CallSite& ProgramModel::site(SiteId id) const {
  if (const auto* s = find_by_id(sites_, id)) return *s;
  throw std::out_of_range("no call site " + std::to_string(id.value));
}

const LoopDef& ProgramModel::loop(LoopId id) const {
  if (const auto* l = find_by_id(loops_, id)) return *l;
  throw std::out_of_range("no loop " + std::to_string(id.value));
}

const std::vector<SiteId>& ProgramModel::sites_of(FunctionId f) const { return sites_by_caller_.at(f); }
const std::vector<LoopId>& ProgramModel::loops_of(FunctionId f) const { return loops_by_function_.at(f); }

LoopId ProgramModel::outermost(LoopId l) const {
  const LoopDef* cur = &loop(l);
  while (cur->parent) cur = &loop(*cur->parent);
  return cur->id;
}

bool ProgramModel::loop_within(LoopId inner, LoopId outer) const {
  std::optional<LoopId> cur = inner;
  while (cur) {
    if (*cur == outer) return true;
    cur = loop(*cur).parent;
  }
  return false;
}

// ---------------------------------------------------------------------------
// File format

namespace {

void reject_unknown_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                         const std::string& context) {
  if (!obj.is_object()) throw ParseError(context + ": expected an object");
  for (const auto& [key, _] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ParseError(context + ": unknown key \"" + key + "\"");
  }
}

const json& require(const json& obj, const char* key, const std::string& context) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(context + ": missing key \"" + key + "\"");
  return *it;
}

std::uint64_t as_uint(const json& v, const std::string& context) {
  if (!v.is_number_unsigned()) throw ParseError(context + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

std::uint32_t as_id(const json& v, const std::string& context) {
  const std::uint64_t raw = as_uint(v, context);
  if (raw > std::numeric_limits<std::uint32_t>::max()) throw ParseError(context + ": id out of range");
  return static_cast<std::uint32_t>(raw);
}

const json& as_array(const json& v, const std::string& context) {
  if (!v.is_array()) throw ParseError(context + ": expected an array");
  return v;
}

ChainFlags parse_chain(const json& v, const std::string& context) {
  ChainFlags flags;
  for (const auto& item : as_array(v, context)) {
    if (!item.is_string()) throw ParseError(context + ": chain entries must be strings");
    const auto& s = item.get_ref<const std::string&>();
    if (s == "www")
      flags.set(ChainComponent::WriteWhatWhere);
    else if (s == "args")
      flags.set(ChainComponent::Args);
    else if (s == "syscall")
      flags.set(ChainComponent::Syscall);
    else
      throw ParseError(context + ": unknown chain component \"" + s + "\"");
  }
  return flags;
}

FunctionDef parse_function(const json& obj, std::size_t index) {
  const std::string ctx = "functions[" + std::to_string(index) + "]";
  reject_unknown_keys(obj, {"id", "name", "size", "address_taken", "gadgets"}, ctx);
  FunctionDef f;
  f.id = FunctionId{as_id(require(obj, "id", ctx), ctx + ".id")};
  const auto& name = require(obj, "name", ctx);
  if (!name.is_string()) throw ParseError(ctx + ".name: expected a string");
  f.name = name.get<std::string>();
  f.size = as_uint(require(obj, "size", ctx), ctx + ".size");
  const auto& taken = require(obj, "address_taken", ctx);
  if (!taken.is_boolean()) throw ParseError(ctx + ".address_taken: expected a boolean");
  f.address_taken = taken.get<bool>();
  const auto& g = require(obj, "gadgets", ctx);
  const std::string gctx = ctx + ".gadgets";
  reject_unknown_keys(g, {"rop", "jop", "cop", "special", "chain"}, gctx);
  f.gadgets.rop = as_uint(require(g, "rop", gctx), gctx + ".rop");
  f.gadgets.jop = as_uint(require(g, "jop", gctx), gctx + ".jop");
  f.gadgets.cop = as_uint(require(g, "cop", gctx), gctx + ".cop");
  f.gadgets.special = as_uint(require(g, "special", gctx), gctx + ".special");
  if (g.contains("chain")) f.gadgets.chain = parse_chain(g["chain"], gctx + ".chain");
  return f;
}

CallSite parse_site(const json& obj, std::size_t index) {
  const std::string ctx = "call_sites[" + std::to_string(index) + "]";
  reject_unknown_keys(obj, {"id", "caller", "callee", "targets", "loop"}, ctx);
  CallSite s;
  s.id = SiteId{as_id(require(obj, "id", ctx), ctx + ".id")};
  s.caller = FunctionId{as_id(require(obj, "caller", ctx), ctx + ".caller")};
  const bool direct = obj.contains("callee");
  const bool indirect = obj.contains("targets");
  if (direct == indirect) throw ParseError(ctx + ": exactly one of \"callee\" or \"targets\" is required");
  if (direct) {
    s.kind = DirectCall{FunctionId{as_id(obj["callee"], ctx + ".callee")}};
  } else {
    IndirectCall call;
    for (const auto& t : as_array(obj["targets"], ctx + ".targets"))
      call.targets.push_back(FunctionId{as_id(t, ctx + ".targets")});
    s.kind = std::move(call);
  }
  if (obj.contains("loop")) s.loop = LoopId{as_id(obj["loop"], ctx + ".loop")};
  return s;
}

LoopDef parse_loop(const json& obj, std::size_t index) {
  const std::string ctx = "loops[" + std::to_string(index) + "]";
  reject_unknown_keys(obj, {"id", "function", "parent", "sites"}, ctx);
  LoopDef l;
  l.id = LoopId{as_id(require(obj, "id", ctx), ctx + ".id")};
  l.function = FunctionId{as_id(require(obj, "function", ctx), ctx + ".function")};
  if (obj.contains("parent")) l.parent = LoopId{as_id(obj["parent"], ctx + ".parent")};
  for (const auto& s : as_array(require(obj, "sites", ctx), ctx + ".sites"))
    l.sites.push_back(SiteId{as_id(s, ctx + ".sites")});
  return l;
}

}  // namespace

ProgramModel load_model(std::string_view document) {
  json doc;
  try {
    doc = json::parse(document.begin(), document.end());
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model is not valid JSON: ") + e.what());
  }
  reject_unknown_keys(doc, {"functions", "call_sites", "loops", "entry"}, "model");

  std::vector<FunctionDef> functions;
  std::vector<CallSite> sites;
  std::vector<LoopDef> loops;
  const auto& fs = as_array(require(doc, "functions", "model"), "functions");
  for (std::size_t i = 0; i < fs.size(); ++i) functions.push_back(parse_function(fs[i], i));
  if (doc.contains("call_sites")) {
    const auto& ss = as_array(doc["call_sites"], "call_sites");
    for (std::size_t i = 0; i < ss.size(); ++i) sites.push_back(parse_site(ss[i], i));
  }
  if (doc.contains("loops")) {
    const auto& ls = as_array(doc["loops"], "loops");
    for (std::size_t i = 0; i < ls.size(); ++i) loops.push_back(parse_loop(ls[i], i));
  }
  FunctionId entry{as_id(require(doc, "entry", "model"), "entry")};
  return ProgramModel(std::move(functions), std::move(sites), std::move(loops), entry);
}

ProgramModel load_model_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read model file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return load_model(buf.str());
}

std::string dump_model(const ProgramModel& model) {
  json doc;
  doc["entry"] = model.entry().value;
  json functions = json::array();
  for (const auto& f : model.functions()) {
    json chain = json::array();
    if (f.gadgets.chain.has(ChainComponent::WriteWhatWhere)) chain.push_back("www");
    if (f.gadgets.chain.has(ChainComponent::Args)) chain.push_back("args");
    if (f.gadgets.chain.has(ChainComponent::Syscall)) chain.push_back("syscall");
    functions.push_back({{"id", f.id.value},
                         {"name", f.name},
                         {"size", f.size},
                         {"address_taken", f.address_taken},
                         {"gadgets",
                          {{"rop", f.gadgets.rop},
                           {"jop", f.gadgets.jop},
                           {"cop", f.gadgets.cop},
                           {"special", f.gadgets.special},
                           {"chain", chain}}}});
  }
  doc["functions"] = std::move(functions);
  json sites = json::array();
  for (const auto& s : model.sites()) {
    json obj = {{"id", s.id.value}, {"caller", s.caller.value}};
    if (s.is_direct()) {
      obj["callee"] = s.callee().value;
    } else {
      json targets = json::array();
      for (FunctionId t : s.targets()) targets.push_back(t.value);
      obj["targets"] = std::move(targets);
    }
    if (s.loop) obj["loop"] = s.loop->value;
    sites.push_back(std::move(obj));
  }
  doc["call_sites"] = std::move(sites);
  json loops = json::array();
  for (const auto& l : model.loops()) {
    json obj = {{"id", l.id.value}, {"function", l.function.value}};
    if (l.parent) obj["parent"] = l.parent->value;
    json ss = json::array();
    for (SiteId s : l.sites) ss.push_back(s.value);
    obj["sites"] = std::move(ss);
    loops.push_back(std::move(obj));
  }
  doc["loops"] = std::move(loops);
  return doc.dump(2) + "\n";
}

Adjacency direct_callgraph(const ProgramModel& model) {
  Adjacency adj;
  for (const auto& s : model.sites()) {
    if (s.is_direct()) adj[s.caller].insert(s.callee());
  }
  return adj;
}

}  // namespace deckforge
