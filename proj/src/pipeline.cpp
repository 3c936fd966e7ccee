#include "dwim/pipeline.hpp"

#include <cstdio>
#include <set>

#include "dwim/digest.hpp"
#include "dwim/serialize.hpp"

namespace dwim {

namespace {

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%05d", prefix, i);
  return buf;
}

}  // namespace

TaskSet generate_task_set(std::uint64_t seed, const sim::SceneConfig& config, int n) {
  if (n < 1) throw UsageError("task count must be at least 1");
  config.validate();
  TaskSet set;
  for (int i = 0; i < n; ++i) {
    const auto stream = split_seed(seed, static_cast<std::uint64_t>(i));
    auto scene = sim::generate_scene(stream, config, numbered("scene", i));
    std::optional<sim::SimTask> task;
    for (std::size_t k = 0; k < sim::kAllTaskKinds.size() && !task; ++k) {
      const auto kind = sim::kAllTaskKinds[(static_cast<std::size_t>(i) + k) % sim::kAllTaskKinds.size()];
      try {
        task = sim::generate_task(scene, stream, kind, numbered("task", i), config.vocabulary);
      } catch (const sim::UnsatisfiableKind&) {
      }
    }
    if (!task) throw UsageError("scene " + scene.scene_id + " supports no task kind");
    set.scenes.push_back(std::move(scene));
    set.tasks.push_back(std::move(*task));
  }
  return set;
}

void write_task_set(const std::filesystem::path& dir, const TaskSet& set) {
  std::filesystem::create_directories(dir);
  write_records(dir / "scenes.jsonl", set.scenes);
  write_records(dir / "tasks.jsonl", set.tasks);
}

TaskSet read_task_set(const std::filesystem::path& dir) {
  TaskSet set;
  set.scenes = read_records<sim::Scene>(dir / "scenes.jsonl");
  set.tasks = read_records<sim::SimTask>(dir / "tasks.jsonl");
  std::set<std::string> ids;
  for (const auto& s : set.scenes)
    if (!ids.insert(s.scene_id).second) throw SchemaError((dir / "scenes.jsonl").string(), 0, "duplicate scene " + s.scene_id);
  for (std::size_t i = 0; i < set.tasks.size(); ++i)
    if (!ids.contains(set.tasks[i].task.scene_ref))
      throw SchemaError((dir / "tasks.jsonl").string(), i + 1,
                        "scene_ref " + set.tasks[i].task.scene_ref + " does not resolve to a scene");
  return set;
}

RunConfig run_config_from_json(const json& j, const std::filesystem::path& base) {
  if (!j.is_object()) throw UsageError("configuration must be a JSON object");
  RunConfig c;
  try {
    if (j.contains("environment")) c.environment = sim::scene_config_from_json(j.at("environment"));
    if (j.contains("seed")) {
      if (!j.at("seed").is_number_integer()) throw UsageError("seed must be an integer");
      c.seed = j.at("seed").get<std::uint64_t>();
    }
    c.noise = sim::NoiseModel::uniform(0.25, c.seed);
    if (j.contains("noise")) {
      c.noise = sim::noise_model_from_json(j.at("noise"));
      if (!j.at("noise").contains("seed")) c.noise.rng_seed = c.seed;
    }
    if (j.contains("tools")) {
      c.library = {};
      for (const auto& g : j.at("tools")) c.library.enabled.insert(dsl::parse_tool_group(g.get<std::string>()));
    }
    if (j.contains("backend")) {
      const auto& b = j.at("backend");
      const auto kind = b.value("kind", std::string("scripted"));
      if (kind == "scripted") {
        c.backend.kind = BackendKind::Scripted;
      } else if (kind == "http_chat") {
        c.backend.kind = BackendKind::HttpChat;
      } else {
        throw UsageError("unknown backend kind: " + kind);
      }
      c.backend.self_rethink = b.value("self_rethink", false);
      auto& h = c.backend.http;
      h.base_url = b.value("url", h.base_url);
      h.path = b.value("path", h.path);
      h.model = b.value("model", h.model);
      h.temperature = b.value("temperature", h.temperature);
      h.max_tokens = b.value("max_tokens", h.max_tokens);
      h.api_key_env = b.value("api_key_env", h.api_key_env);
      h.timeout = std::chrono::milliseconds(b.value("timeout_ms", static_cast<long>(h.timeout.count())));
      h.retries = b.value("retries", h.retries);
      if (c.backend.kind == BackendKind::HttpChat) h.validate();
    }
    if (j.contains("mode")) c.mode = parse_generation_mode(j.at("mode").get<std::string>());
    if (j.contains("limits")) {
      c.limits.max_turns = j.at("limits").value("max_turns", c.limits.max_turns);
      c.limits.max_rethinks = j.at("limits").value("max_rethinks", c.limits.max_rethinks);
    }
    c.limits.validate();
    if (j.contains("detector")) c.detector = engine::parse_detector_kind(j.at("detector").get<std::string>());
    if (j.contains("variant")) c.variant = parse_mask_variant(j.at("variant").get<std::string>());
    if (j.contains("tasks")) {
      auto p = std::filesystem::path(j.at("tasks").get<std::string>());
      if (p.is_relative()) p = base / p;
      if (!std::filesystem::exists(p)) throw UsageError("tasks path does not exist: " + p.string());
      c.tasks = p;
    }
    if (j.contains("out")) c.out = j.at("out").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("invalid configuration: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("cannot parse " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

json to_json(const RunConfig& c) {
  json tools = json::array();
  for (auto g : c.library.enabled) tools.push_back(dsl::to_string(g));
  json backend{{"kind", c.backend.kind == BackendKind::Scripted ? "scripted" : "http_chat"},
               {"self_rethink", c.backend.self_rethink}};
  if (c.backend.kind == BackendKind::HttpChat) {
    const auto& h = c.backend.http;
    backend.update(json{{"url", h.base_url},
                        {"path", h.path},
                        {"model", h.model},
                        {"temperature", h.temperature},
                        {"max_tokens", h.max_tokens},
                        {"api_key_env", h.api_key_env},
                        {"timeout_ms", h.timeout.count()},
                        {"retries", h.retries}});
  }
  return json{{"environment", sim::scene_config_to_json(c.environment)},
              {"noise", sim::noise_model_to_json(c.noise)},
              {"tools", tools},
              {"backend", backend},
              {"mode", to_string(c.mode)},
              {"limits", {{"max_turns", c.limits.max_turns}, {"max_rethinks", c.limits.max_rethinks}}},
              {"detector", engine::to_string(c.detector)},
              {"variant", to_string(c.variant)},
              {"seed", c.seed}};
}

std::string config_digest(const RunConfig& c) { return sha256_hex(canonical(to_json(c))); }

engine::Environment make_environment(const RunConfig& c, const TaskSet& set) {
  engine::Environment env;
  for (const auto& s : set.scenes) env.scenes.emplace(s.scene_id, s);
  env.noise = c.noise;
  env.library = c.library;
  return env;
}

engine::BackendFactory make_backends(const RunConfig& c) {
  if (c.backend.kind == BackendKind::Scripted) return engine::scripted_factory(c.environment, c.backend.self_rethink);
  const auto http = c.backend.http;
  return [http](const sim::SimTask&) -> std::unique_ptr<engine::PolicyBackend> {
    return std::make_unique<engine::HttpChatBackend>(http);
  };
}

}  // namespace dwim
