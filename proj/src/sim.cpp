#include "dwim/sim.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "dwim/digest.hpp"
#include "dwim/serialize.hpp"

namespace dwim::sim {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Scenes

SceneConfig SceneConfig::defaults() {
  SceneConfig c;
  c.vocabulary = {"chair", "table", "cup", "plate", "dog", "cat", "mug", "lamp", "book", "bottle"};
  c.attributes = {{"color", {"red", "green", "blue", "yellow", "white", "black"}},
                  {"size", {"small", "medium", "large"}}};
  return c;
}

void SceneConfig::validate() const {
  if (min_objects < 0) throw InvalidConfig("min_objects must be >= 0");
  if (max_objects < min_objects) throw InvalidConfig("max_objects must be >= min_objects");
  if (width <= 0 || height <= 0) throw InvalidConfig("canvas dimensions must be positive");
  if (min_box < 1 || max_box < min_box) throw InvalidConfig("box size bounds must satisfy 1 <= min <= max");
  if (max_box > std::min(width, height)) throw InvalidConfig("max box size exceeds the canvas");
  if (max_objects > 0 && vocabulary.empty()) throw InvalidConfig("vocabulary must not be empty");
  std::set<std::string> seen;
  for (const auto& v : vocabulary) {
    if (v.empty()) throw InvalidConfig("vocabulary entries must be non-empty");
    if (!seen.insert(v).second) throw InvalidConfig("duplicate vocabulary entry: " + v);
  }
  for (const auto& [key, values] : attributes)
    if (values.empty()) throw InvalidConfig("attribute '" + key + "' has no values");
}

Scene generate_scene(std::uint64_t seed, const SceneConfig& config, std::string scene_id) {
  config.validate();
  Rng rng(split_seed(seed, "scene"));
  Scene scene;
  scene.scene_id = std::move(scene_id);
  scene.width = config.width;
  scene.height = config.height;
  const auto n = rng.between(config.min_objects, config.max_objects);
  for (int i = 0; i < n; ++i) {
    SceneObject obj;
    obj.id = i;
    obj.name = config.vocabulary[rng.below(config.vocabulary.size())];
    for (const auto& [key, values] : config.attributes) obj.attributes[key] = values[rng.below(values.size())];
    const auto w = static_cast<int>(rng.between(config.min_box, config.max_box));
    const auto h = static_cast<int>(rng.between(config.min_box, config.max_box));
    const auto left = static_cast<int>(rng.between(0, config.width - w));
    const auto upper = static_cast<int>(rng.between(0, config.height - h));
    obj.bbox = Box{left, upper, left + w, upper + h};
    scene.objects.push_back(std::move(obj));
  }
  return scene;
}

std::string scene_digest(const Scene& scene) { return sha256_hex(canonical(json(scene))); }

// ---------------------------------------------------------------------------
// Queries

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Existence: return "existence";
    case TaskKind::Counting: return "counting";
    case TaskKind::Attribute: return "attribute";
    case TaskKind::Spatial: return "spatial";
    case TaskKind::Compare: return "compare";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view s) {
  for (auto k : kAllTaskKinds)
    if (to_string(k) == s) return k;
  throw UsageError("unknown task kind: " + std::string(s));
}

std::string_view to_string(Relation r) {
  switch (r) {
    case Relation::Left: return "left";
    case Relation::Right: return "right";
    case Relation::Above: return "above";
    case Relation::Below: return "below";
  }
  return "?";
}

namespace {

Relation parse_relation(std::string_view s) {
  for (auto r : {Relation::Left, Relation::Right, Relation::Above, Relation::Below})
    if (to_string(r) == s) return r;
  throw UsageError("unknown relation: " + std::string(s));
}

bool is_vowel(char c) { return std::string_view("aeiou").find(c) != std::string_view::npos; }

std::string singular(std::string_view noun) {
  std::string n(noun);
  if (n.size() > 3 && n.ends_with("ies")) return n.substr(0, n.size() - 3) + "y";
  for (std::string_view suffix : {"ches", "shes", "xes", "ses"})
    if (n.size() > suffix.size() && n.ends_with(suffix)) return n.substr(0, n.size() - 2);
  if (n.size() > 1 && n.ends_with("s")) return n.substr(0, n.size() - 1);
  return n;
}

std::string relation_phrase(Relation r) {
  switch (r) {
    case Relation::Left: return "to the left of";
    case Relation::Right: return "to the right of";
    case Relation::Above: return "above";
    case Relation::Below: return "below";
  }
  return {};
}

bool matches_name(const SceneObject& o, std::string_view name) { return o.name == name || plural(o.name) == name; }

int count_named(const Scene& scene, std::string_view name) {
  return static_cast<int>(
      std::count_if(scene.objects.begin(), scene.objects.end(), [&](const auto& o) { return matches_name(o, name); }));
}

const SceneObject* first_named(const Scene& scene, std::string_view name) {
  for (const auto& o : scene.objects)
    if (matches_name(o, name)) return &o;
  return nullptr;
}

std::string yesno(bool b) { return b ? "yes" : "no"; }

}  // namespace

bool left_of(const Box& a, const Box& b) { return a.center2x() <= b.center2x(); }
bool right_of(const Box& a, const Box& b) { return a.center2x() > b.center2x(); }
bool above(const Box& a, const Box& b) { return a.center2y() <= b.center2y(); }
bool below(const Box& a, const Box& b) { return a.center2y() > b.center2y(); }

std::string plural(std::string_view noun) {
  std::string n(noun);
  if (n.empty()) return n;
  if (n.size() > 1 && n.back() == 'y' && !is_vowel(n[n.size() - 2])) return n.substr(0, n.size() - 1) + "ies";
  if (n.ends_with("ch") || n.ends_with("sh") || n.ends_with("x") || n.ends_with("s")) return n + "es";
  return n + "s";
}

std::string render_query(const StructuredQuery& q) {
  switch (q.kind) {
    case TaskKind::Existence:
      return std::string("Is there ") + (is_vowel(q.subject.empty() ? 'x' : q.subject[0]) ? "an " : "a ") +
             q.subject + "?";
    case TaskKind::Counting: return "How many " + plural(q.subject) + " are there?";
    case TaskKind::Attribute: return "What " + q.property + " is the " + q.subject + "?";
    case TaskKind::Spatial: return "Is the " + q.subject + " " + relation_phrase(q.relation) + " the " + q.object + "?";
    case TaskKind::Compare: return "Are there more " + plural(q.subject) + " than " + plural(q.object) + "?";
  }
  return {};
}

std::optional<StructuredQuery> parse_query(std::string_view question) {
  static const std::regex kExistence(R"(^Is there an? ([a-z_]+)\?$)");
  static const std::regex kCounting(R"(^How many ([a-z_]+) are there\?$)");
  static const std::regex kAttribute(R"(^What ([a-z_]+) is the ([a-z_]+)\?$)");
  static const std::regex kSpatial(R"(^Is the ([a-z_]+) (to the left of|to the right of|above|below) the ([a-z_]+)\?$)");
  static const std::regex kCompare(R"(^Are there more ([a-z_]+) than ([a-z_]+)\?$)");
  const std::string q(question);
  std::smatch m;
  StructuredQuery out;
  if (std::regex_match(q, m, kExistence)) {
    out.kind = TaskKind::Existence;
    out.subject = m[1];
  } else if (std::regex_match(q, m, kCounting)) {
    out.kind = TaskKind::Counting;
    out.subject = singular(m[1].str());
  } else if (std::regex_match(q, m, kAttribute)) {
    out.kind = TaskKind::Attribute;
    out.property = m[1];
    out.subject = m[2];
  } else if (std::regex_match(q, m, kSpatial)) {
    out.kind = TaskKind::Spatial;
    out.subject = m[1];
    const auto phrase = m[2].str();
    out.relation = phrase == "to the left of"    ? Relation::Left
                   : phrase == "to the right of" ? Relation::Right
                   : phrase == "above"           ? Relation::Above
                                                 : Relation::Below;
    out.object = m[3];
  } else if (std::regex_match(q, m, kCompare)) {
    out.kind = TaskKind::Compare;
    out.subject = singular(m[1].str());
    out.object = singular(m[2].str());
  } else {
    return std::nullopt;
  }
  return out;
}

std::string oracle_answer(const Scene& scene, const StructuredQuery& q) {
  switch (q.kind) {
    case TaskKind::Existence: return yesno(count_named(scene, q.subject) > 0);
    case TaskKind::Counting: return std::to_string(count_named(scene, q.subject));
    case TaskKind::Attribute: {
      const auto* o = first_named(scene, q.subject);
      if (!o) return "unknown";
      const auto it = o->attributes.find(q.property);
      return it == o->attributes.end() ? "unknown" : it->second;
    }
    case TaskKind::Spatial: {
      const auto* a = first_named(scene, q.subject);
      const auto* b = first_named(scene, q.object);
      if (!a || !b) return "unknown";
      switch (q.relation) {
        case Relation::Left: return yesno(left_of(a->bbox, b->bbox));
        case Relation::Right: return yesno(right_of(a->bbox, b->bbox));
        case Relation::Above: return yesno(above(a->bbox, b->bbox));
        case Relation::Below: return yesno(below(a->bbox, b->bbox));
      }
      return "unknown";
    }
    case TaskKind::Compare: return yesno(count_named(scene, q.subject) > count_named(scene, q.object));
  }
  return "unknown";
}

SimTask generate_task(const Scene& scene, std::uint64_t seed, TaskKind kind, std::string task_id,
                      std::span<const std::string> vocabulary) {
  Rng rng(split_seed(seed, "task"));
  std::vector<std::string> present;
  std::map<std::string, int> counts;
  for (const auto& o : scene.objects)
    if (counts[o.name]++ == 0) present.push_back(o.name);
  std::vector<std::string> unique;
  for (const auto& name : present)
    if (counts[name] == 1) unique.push_back(name);

  // Half the time draw from objects in the scene so positive answers are common.
  auto pick_name = [&]() -> std::string {
    const bool from_scene = !present.empty() && rng.bernoulli(0.5);
    if (from_scene) return present[rng.below(present.size())];
    if (vocabulary.empty()) throw UnsatisfiableKind("empty vocabulary");
    return vocabulary[rng.below(vocabulary.size())];
  };

  StructuredQuery q;
  q.kind = kind;
  switch (kind) {
    case TaskKind::Existence:
    case TaskKind::Counting: q.subject = pick_name(); break;
    case TaskKind::Attribute: {
      if (unique.empty()) throw UnsatisfiableKind("attribute query needs an object with a unique name");
      q.subject = unique[rng.below(unique.size())];
      const auto& attrs = scene.objects[0].attributes;
      if (attrs.empty()) throw UnsatisfiableKind("scene objects carry no attributes");
      auto it = attrs.begin();
      std::advance(it, static_cast<long>(rng.below(attrs.size())));
      q.property = it->first;
      break;
    }
    case TaskKind::Spatial: {
      if (scene.objects.size() < 2) throw UnsatisfiableKind("spatial query needs at least two objects");
      if (unique.size() < 2) throw UnsatisfiableKind("spatial query needs two objects with unique names");
      const auto i = rng.below(unique.size());
      auto j = rng.below(unique.size() - 1);
      if (j >= i) ++j;
      q.subject = unique[i];
      q.object = unique[j];
      q.relation = static_cast<Relation>(rng.below(4));
      break;
    }
    case TaskKind::Compare: {
      if (vocabulary.size() < 2) throw UnsatisfiableKind("compare query needs two vocabulary names");
      q.subject = pick_name();
      do {
        q.object = pick_name();
      } while (q.object == q.subject);
      break;
    }
  }
  SimTask t;
  t.query = q;
  t.task.task_id = std::move(task_id);
  t.task.scene_ref = scene.scene_id;
  t.task.query = render_query(q);
  t.task.answer = normalize_answer(oracle_answer(scene, q));
  return t;
}

// ---------------------------------------------------------------------------
// Tools

std::string_view to_string(ErrorMode m) {
  switch (m) {
    case ErrorMode::WrongValue: return "wrong_value";
    case ErrorMode::MissDetection: return "miss_detection";
    case ErrorMode::OffByOne: return "off_by_one";
    case ErrorMode::RaiseException: return "raise_exception";
  }
  return "?";
}

ErrorMode parse_error_mode(std::string_view s) {
  for (auto m : {ErrorMode::WrongValue, ErrorMode::MissDetection, ErrorMode::OffByOne, ErrorMode::RaiseException})
    if (to_string(m) == s) return m;
  throw UsageError("unknown error mode: " + std::string(s));
}

namespace {

constexpr std::array<std::string_view, 6> kNoisyTools = {
    "find", "exists", "verify_property", "best_description_from_options", "simple_query", "llm_query"};

}  // namespace

std::span<const std::string_view> noisy_tools() { return kNoisyTools; }

ErrorMode default_error_mode(std::string_view tool) {
  return tool == "find" ? ErrorMode::MissDetection : ErrorMode::WrongValue;
}

NoiseModel NoiseModel::uniform(double error_rate, std::uint64_t seed) {
  NoiseModel n;
  n.rng_seed = seed;
  for (auto tool : kNoisyTools) n.per_tool[std::string(tool)] = ToolNoise{error_rate, default_error_mode(tool)};
  return n;
}

ToolNoise NoiseModel::for_tool(std::string_view tool) const {
  const auto it = per_tool.find(std::string(tool));
  return it == per_tool.end() ? ToolNoise{0.0, default_error_mode(tool)} : it->second;
}

void NoiseModel::validate() const {
  for (const auto& [tool, tn] : per_tool) {
    if (!(tn.error_rate >= 0.0 && tn.error_rate <= 1.0))
      throw InvalidConfig("error_rate for " + tool + " must lie in [0, 1]");
    if (std::find(kNoisyTools.begin(), kNoisyTools.end(), tool) == kNoisyTools.end())
      throw InvalidConfig("tool " + tool + " is not a noisy tool");
  }
}

namespace {

struct ArgError {
  std::string message;
};

std::string name_arg(std::span<const Value> args, std::size_t i, std::string_view tool) {
  if (i >= args.size() || !args[i].is<std::string>())
    throw ArgError{std::string(tool) + "() argument " + std::to_string(i + 1) + " must be a str"};
  return args[i].as<std::string>();
}

/// Optional trailing patch argument at position i.
Region patch_arg(std::span<const Value> args, std::size_t i, std::string_view tool, const Scene& scene) {
  const auto full = Region::full(scene.width, scene.height);
  if (args.size() <= i) return full;
  if (args.size() > i + 1) throw ArgError{std::string(tool) + "() got too many arguments"};
  if (!args[i].is<Region>()) throw ArgError{std::string(tool) + "() patch argument must be an ImagePatch"};
  return args[i].as<Region>().intersect(full);
}

Scene restrict_to(const Scene& scene, const Region& region) {
  Scene sub = scene;
  std::erase_if(sub.objects, [&](const SceneObject& o) { return !region.contains(o.bbox); });
  return sub;
}

ValueList detections(const Scene& scene, std::string_view name, const Region& region) {
  ValueList out;
  for (const auto& o : scene.objects)
    if (matches_name(o, name) && region.contains(o.bbox)) out.emplace_back(ObjectRef{o.name, o.bbox, o.id});
  return out;
}

const SceneObject* resolve_object(const Scene& scene, const Value& v, const Region& region, std::string_view tool) {
  if (v.is<ObjectRef>()) {
    const auto& ref = v.as<ObjectRef>();
    if (ref.object_id < 0 || ref.object_id >= static_cast<int>(scene.objects.size())) return nullptr;
    return &scene.objects[static_cast<std::size_t>(ref.object_id)];
  }
  if (v.is<std::string>()) {
    for (const auto& o : scene.objects)
      if (matches_name(o, v.as<std::string>()) && region.contains(o.bbox)) return &o;
    return nullptr;
  }
  throw ArgError{std::string(tool) + "() object must be a str or an ObjectPatch"};
}

Box box_arg(std::span<const Value> args, std::size_t& next, std::string_view tool) {
  if (next < args.size() && args[next].is<ObjectRef>()) return args[next++].as<ObjectRef>().box;
  if (next + 4 <= args.size() && std::all_of(args.begin() + static_cast<long>(next),
                                             args.begin() + static_cast<long>(next) + 4,
                                             [](const Value& v) { return v.is<double>(); })) {
    Box b{static_cast<int>(args[next].as<double>()), static_cast<int>(args[next + 1].as<double>()),
          static_cast<int>(args[next + 2].as<double>()), static_cast<int>(args[next + 3].as<double>())};
    next += 4;
    return b;
  }
  throw ArgError{std::string(tool) + "() expects an ObjectPatch or four coordinates"};
}

Value answer_question(const Scene& scene, std::string_view question) {
  const auto q = parse_query(question);
  if (!q) return Value(std::string("unknown"));
  const auto answer = oracle_answer(scene, *q);
  if (q->kind == TaskKind::Counting) return Value(static_cast<double>(std::stoi(answer)));
  return Value(answer);
}

/// Plausible wrong strings for a question's answer.
std::vector<std::string> alternatives_for(const Scene& scene, std::string_view question) {
  const auto q = parse_query(question);
  if (!q) return {};
  if (q->kind == TaskKind::Attribute) {
    static const auto defaults = SceneConfig::defaults();
    std::set<std::string> values;
    if (const auto it = defaults.attributes.find(q->property); it != defaults.attributes.end())
      values.insert(it->second.begin(), it->second.end());
    for (const auto& o : scene.objects)
      if (auto it = o.attributes.find(q->property); it != o.attributes.end()) values.insert(it->second);
    return {values.begin(), values.end()};
  }
  return {"yes", "no"};
}

struct Oracle {
  Value value;
  std::vector<std::string> string_alternatives;  // for corrupting string answers
};

Oracle oracle_call(std::string_view tool, std::span<const Value> args, const Scene& scene) {
  if (tool == "find") {
    const auto name = name_arg(args, 0, tool);
    return {Value(detections(scene, name, patch_arg(args, 1, tool, scene))), {}};
  }
  if (tool == "exists") {
    const auto name = name_arg(args, 0, tool);
    return {Value(!detections(scene, name, patch_arg(args, 1, tool, scene)).empty()), {}};
  }
  if (tool == "verify_property") {
    if (args.size() < 2) throw ArgError{"verify_property() takes at least 2 arguments"};
    const auto prop = name_arg(args, 1, tool);
    const auto region = patch_arg(args, 2, tool, scene);
    bool result = false;
    if (args[0].is<std::string>()) {
      for (const auto& o : scene.objects)
        if (matches_name(o, args[0].as<std::string>()) && region.contains(o.bbox))
          for (const auto& [k, v] : o.attributes) result = result || v == prop;
    } else if (const auto* o = resolve_object(scene, args[0], region, tool)) {
      for (const auto& [k, v] : o->attributes) result = result || v == prop;
    }
    return {Value(result), {}};
  }
  if (tool == "best_description_from_options") {
    if (args.size() < 2 || !args[1].is<ValueList>())
      throw ArgError{"best_description_from_options() needs an object and a list of options"};
    std::vector<std::string> options;
    for (const auto& v : args[1].as<ValueList>()) {
      if (!v.is<std::string>()) throw ArgError{"best_description_from_options() options must be strings"};
      options.push_back(v.as<std::string>());
    }
    if (options.empty()) throw ArgError{"best_description_from_options() options must not be empty"};
    const auto region = patch_arg(args, 2, tool, scene);
    const auto* o = resolve_object(scene, args[0], region, tool);
    if (!o) throw ArgError{"best_description_from_options(): object not found in the patch"};
    for (const auto& opt : options)
      for (const auto& [k, v] : o->attributes)
        if (v == opt) return {Value(opt), options};
    return {Value(options.front()), options};
  }
  if (tool == "simple_query") {
    const auto question = name_arg(args, 0, tool);
    const auto sub = restrict_to(scene, patch_arg(args, 1, tool, scene));
    return {answer_question(sub, question), alternatives_for(sub, question)};
  }
  if (tool == "llm_query") {
    const auto question = name_arg(args, 0, tool);
    if (args.size() > 1) throw ArgError{"llm_query() takes 1 argument"};
    return {answer_question(scene, question), alternatives_for(scene, question)};
  }
  if (tool.starts_with("crop_")) {
    std::size_t next = 0;
    const Box b = box_arg(args, next, tool);
    const auto region = patch_arg(args, next, tool, scene);
    Region cut = Region::full(scene.width, scene.height);
    if (tool == "crop_left_of_bbox")
      cut.max_c2x = b.center2x();
    else if (tool == "crop_right_of_bbox")
      cut.min_c2x = b.center2x() + 1;
    else if (tool == "crop_above_bbox")
      cut.max_c2y = b.center2y();
    else if (tool == "crop_below_bbox")
      cut.min_c2y = b.center2y() + 1;
    else
      throw ArgError{"unknown crop " + std::string(tool)};
    return {Value(region.intersect(cut)), {}};
  }
  throw ArgError{"no tool named " + std::string(tool)};
}

ObjectRef phantom(const Scene& scene, std::string_view name, Rng& rng) {
  const int w = static_cast<int>(rng.between(16, 64));
  const int h = static_cast<int>(rng.between(16, 64));
  const int left = static_cast<int>(rng.between(0, std::max(0, scene.width - w)));
  const int upper = static_cast<int>(rng.between(0, std::max(0, scene.height - h)));
  return ObjectRef{std::string(name), Box{left, upper, left + w, upper + h}, -1};
}

Value corrupt(std::string_view tool, std::span<const Value> args, const Oracle& oracle, ErrorMode mode, Rng& rng,
              const Scene& scene) {
  const Value& v = oracle.value;
  if (v.is<bool>()) return Value(!v.as<bool>());
  if (v.is<double>()) {
    const double x = v.as<double>();
    switch (mode) {
      case ErrorMode::MissDetection: return Value(x > 0 ? x - 1 : x);
      case ErrorMode::OffByOne: return Value(x == 0 || rng.bernoulli(0.5) ? x + 1 : x - 1);
      default: {
        const double delta = static_cast<double>(rng.between(1, 2));
        const double down = x - delta;
        return Value(down >= 0 && rng.bernoulli(0.5) ? down : x + delta);
      }
    }
  }
  if (v.is<std::string>()) {
    std::vector<std::string> alts;
    for (const auto& a : oracle.string_alternatives)
      if (a != v.as<std::string>()) alts.push_back(a);
    if (alts.empty()) return v;
    return Value(alts[rng.below(alts.size())]);
  }
  if (v.is<ValueList>()) {
    ValueList list = v.as<ValueList>();
    const std::string name = args.empty() || !args[0].is<std::string>() ? "object" : args[0].as<std::string>();
    const bool drop = mode == ErrorMode::MissDetection ||
                      (mode == ErrorMode::OffByOne && !list.empty() && rng.bernoulli(0.5));
    if (drop) {
      if (!list.empty()) list.erase(list.begin() + static_cast<long>(rng.below(list.size())));
    } else {
      list.emplace_back(phantom(scene, name, rng));
    }
    return Value(std::move(list));
  }
  (void)tool;
  return v;
}

}  // namespace

ToolResult invoke_tool(std::string_view tool, std::span<const Value> args, const Scene& scene,
                       const NoiseModel& noise, Rng& rng) {
  ToolResult result;
  Oracle oracle;
  try {
    oracle = oracle_call(tool, args, scene);
  } catch (const ArgError& e) {
    result.fault = dsl::ToolFault{"TypeError", e.message};
    return result;
  }
  result.oracle = oracle.value;
  const bool noisy = std::find(kNoisyTools.begin(), kNoisyTools.end(), tool) != kNoisyTools.end();
  if (!noisy) {
    result.value = oracle.value;
    return result;
  }
  const auto tn = noise.for_tool(tool);
  if (!rng.bernoulli(tn.error_rate)) {
    result.value = oracle.value;
    return result;
  }
  if (tn.mode == ErrorMode::RaiseException) {
    result.fault = dsl::ToolFault{"RuntimeError", std::string(tool) + ": model inference failed"};
    result.corrupted = true;
    return result;
  }
  result.value = corrupt(tool, args, oracle, tn.mode, rng, scene);
  result.corrupted = !(*result.value == oracle.value);
  return result;
}

ToolSession::ToolSession(const Scene& scene, NoiseModel noise, dsl::ToolLibrary library, std::uint64_t seed)
    : scene_(&scene), noise_(std::move(noise)), library_(std::move(library)), rng_(seed) {}

dsl::ToolOutcome ToolSession::call(std::string_view builtin, std::span<const Value> args) {
  const auto* info = dsl::find_builtin(builtin);
  if (!info || !info->group) return dsl::ToolOutcome::error("UnknownBuiltin", std::string(builtin));
  if (!library_.allows(*info->group))
    return dsl::ToolOutcome::error("ToolDisabled", std::string(builtin) + " is not enabled in this tool library");
  auto result = invoke_tool(builtin, args, *scene_, noise_, rng_);
  ++total_calls_;
  step_calls_.push_back(ToolCall{std::string(builtin), result});
  if (result.fault) return dsl::ToolOutcome{std::nullopt, result.fault};
  return dsl::ToolOutcome::ok(std::move(*result.value));
}

Value ToolSession::image() const { return Value(Region::full(scene_->width, scene_->height)); }

std::uint64_t episode_seed(std::uint64_t global_seed, std::string_view task_id) {
  return split_seed(global_seed, task_id);
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const SceneObject& o) {
  j = json{{"id", o.id},
           {"name", o.name},
           {"attributes", o.attributes},
           {"bbox", {o.bbox.left, o.bbox.upper, o.bbox.right, o.bbox.lower}}};
}

void from_json(const json& j, SceneObject& o) {
  j.at("id").get_to(o.id);
  j.at("name").get_to(o.name);
  j.at("attributes").get_to(o.attributes);
  const auto& b = j.at("bbox");
  if (!b.is_array() || b.size() != 4) throw std::invalid_argument("bbox must be [left, upper, right, lower]");
  o.bbox = Box{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
}

void to_json(json& j, const Scene& s) {
  j = json{{"schema", kSchemaVersion}, {"scene_id", s.scene_id}, {"width", s.width},
           {"height", s.height},       {"objects", s.objects}};
}

void from_json(const json& j, Scene& s) {
  j.at("scene_id").get_to(s.scene_id);
  j.at("width").get_to(s.width);
  j.at("height").get_to(s.height);
  j.at("objects").get_to(s.objects);
  for (const auto& o : s.objects) {
    const auto& b = o.bbox;
    if (b.left < 0 || b.upper < 0 || b.right > s.width || b.lower > s.height || b.left > b.right ||
        b.upper > b.lower)
      throw std::invalid_argument("bbox of object " + std::to_string(o.id) + " lies outside the canvas");
  }
}

void to_json(json& j, const StructuredQuery& q) {
  j = json{{"kind", to_string(q.kind)},
           {"subject", q.subject},
           {"object", q.object},
           {"property", q.property},
           {"relation", to_string(q.relation)}};
}

void from_json(const json& j, StructuredQuery& q) {
  q.kind = parse_task_kind(j.at("kind").get<std::string>());
  j.at("subject").get_to(q.subject);
  j.at("object").get_to(q.object);
  j.at("property").get_to(q.property);
  q.relation = parse_relation(j.at("relation").get<std::string>());
}

void to_json(json& j, const SimTask& t) {
  j = json(t.task);
  j["schema"] = kSchemaVersion;
  j["structured_query"] = t.query;
}

void from_json(const json& j, SimTask& t) {
  j.get_to(t.task);
  j.at("structured_query").get_to(t.query);
  if (t.task.answer.empty() || normalize_answer(t.task.answer) != t.task.answer)
    throw std::invalid_argument("task answer must be non-empty and normalized");
}

SceneConfig scene_config_from_json(const json& j) {
  auto c = SceneConfig::defaults();
  if (j.contains("vocabulary")) j.at("vocabulary").get_to(c.vocabulary);
  if (j.contains("attributes")) j.at("attributes").get_to(c.attributes);
  if (j.contains("min_objects")) j.at("min_objects").get_to(c.min_objects);
  if (j.contains("max_objects")) j.at("max_objects").get_to(c.max_objects);
  if (j.contains("canvas")) {
    j.at("canvas").at("width").get_to(c.width);
    j.at("canvas").at("height").get_to(c.height);
  }
  if (j.contains("box_size")) {
    j.at("box_size").at("min").get_to(c.min_box);
    j.at("box_size").at("max").get_to(c.max_box);
  }
  c.validate();
  return c;
}

json scene_config_to_json(const SceneConfig& c) {
  return json{{"vocabulary", c.vocabulary},
              {"attributes", c.attributes},
              {"min_objects", c.min_objects},
              {"max_objects", c.max_objects},
              {"canvas", {{"width", c.width}, {"height", c.height}}},
              {"box_size", {{"min", c.min_box}, {"max", c.max_box}}}};
}

NoiseModel noise_model_from_json(const json& j) {
  const double rate = j.value("default_error_rate", 0.25);
  auto n = NoiseModel::uniform(rate, j.value("seed", std::uint64_t{0}));
  if (j.contains("tools")) {
    for (const auto& [tool, spec] : j.at("tools").items()) {
      ToolNoise tn = n.for_tool(tool);
      if (spec.contains("error_rate")) spec.at("error_rate").get_to(tn.error_rate);
      if (spec.contains("error_mode")) tn.mode = parse_error_mode(spec.at("error_mode").get<std::string>());
      n.per_tool[tool] = tn;
    }
  }
  n.validate();
  return n;
}

json noise_model_to_json(const NoiseModel& n) {
  json tools = json::object();
  for (const auto& [tool, tn] : n.per_tool)
    tools[tool] = json{{"error_rate", tn.error_rate}, {"error_mode", to_string(tn.mode)}};
  return json{{"seed", n.rng_seed}, {"tools", tools}};
}

}  // namespace dwim::sim
