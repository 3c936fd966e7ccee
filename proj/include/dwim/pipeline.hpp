#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwim/core.hpp"
#include "dwim/engine.hpp"
#include "dwim/sim.hpp"

namespace dwim {

struct TaskSet {
  std::vector<sim::Scene> scenes;
  std::vector<sim::SimTask> tasks;
};

/// n scenes with one task each. Kinds rotate through every task kind; a kind
/// the scene cannot support is replaced by the next one in rotation.
TaskSet generate_task_set(std::uint64_t seed, const sim::SceneConfig& config, int n);

void write_task_set(const std::filesystem::path& dir, const TaskSet& set);
/// Reads scenes.jsonl and tasks.jsonl from `dir`.
TaskSet read_task_set(const std::filesystem::path& dir);

enum class BackendKind { Scripted, HttpChat };

struct BackendConfig {
  BackendKind kind = BackendKind::Scripted;
  engine::HttpConfig http;
  bool self_rethink = false;  // scripted policy authors its own Rethinks
};

/// Contents of the declarative run configuration file.
struct RunConfig {
  sim::SceneConfig environment = sim::SceneConfig::defaults();
  sim::NoiseModel noise = sim::NoiseModel::uniform(0.25, 0);
  dsl::ToolLibrary library = dsl::ToolLibrary::complete();
  BackendConfig backend;
  GenerationMode mode = GenerationMode::Standard;
  engine::EpisodeLimits limits;
  engine::DetectorKind detector = engine::DetectorKind::SimOracle;
  MaskVariant variant = MaskVariant::InstructMasking;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> tasks;  // task-set directory
  std::filesystem::path out = "out";
};

/// Missing keys keep their defaults. Throws UsageError on invalid values or
/// referenced paths that do not exist.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& config);
/// SHA-256 of the canonical JSON of the configuration.
std::string config_digest(const RunConfig& config);

engine::Environment make_environment(const RunConfig& config, const TaskSet& set);
engine::BackendFactory make_backends(const RunConfig& config);

}  // namespace dwim
