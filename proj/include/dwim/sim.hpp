#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwim/core.hpp"
#include "dwim/dsl.hpp"
#include "dwim/rng.hpp"
#include "dwim/value.hpp"

namespace dwim::sim {

struct SceneObject {
  int id = 0;
  std::string name;
  std::map<std::string, std::string> attributes;  // e.g. color, size
  Box bbox;

  bool operator==(const SceneObject&) const = default;
};

struct Scene {
  std::string scene_id;
  int width = 512;
  int height = 512;
  std::vector<SceneObject> objects;

  bool operator==(const Scene&) const = default;
};

struct SceneConfig {
  std::vector<std::string> vocabulary;
  std::map<std::string, std::vector<std::string>> attributes;
  int min_objects = 2;
  int max_objects = 8;
  int width = 512;
  int height = 512;
  int min_box = 24;
  int max_box = 128;

  static SceneConfig defaults();
  /// Throws UsageError describing the first invalid bound.
  void validate() const;
};

class InvalidConfig : public UsageError {
 public:
  using UsageError::UsageError;
};

/// Deterministic in (seed, config).
Scene generate_scene(std::uint64_t seed, const SceneConfig& config, std::string scene_id);

std::string scene_digest(const Scene& scene);

// ---------------------------------------------------------------------------
// Tasks

enum class TaskKind { Existence, Counting, Attribute, Spatial, Compare };
inline constexpr std::array<TaskKind, 5> kAllTaskKinds = {TaskKind::Existence, TaskKind::Counting,
                                                           TaskKind::Attribute, TaskKind::Spatial,
                                                           TaskKind::Compare};

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view s);

enum class Relation { Left, Right, Above, Below };
std::string_view to_string(Relation r);

/// Machine-readable form of a query. `subject`/`object` are vocabulary
/// names; `property` is an attribute key (Attribute kind only).
struct StructuredQuery {
  TaskKind kind = TaskKind::Existence;
  std::string subject;
  std::string object;
  std::string property;
  Relation relation = Relation::Left;

  bool operator==(const StructuredQuery&) const = default;
};

struct SimTask {
  Task task;
  StructuredQuery query;
};

class UnsatisfiableKind : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string plural(std::string_view noun);
std::string render_query(const StructuredQuery& q);
/// Inverse of render_query for the templated question forms.
std::optional<StructuredQuery> parse_query(std::string_view question);

/// Ground-truth answer computed from scene fields.
std::string oracle_answer(const Scene& scene, const StructuredQuery& q);

/// Throws UnsatisfiableKind when the scene lacks the structure the kind needs.
SimTask generate_task(const Scene& scene, std::uint64_t seed, TaskKind kind, std::string task_id,
                      std::span<const std::string> vocabulary);

bool left_of(const Box& a, const Box& b);
bool right_of(const Box& a, const Box& b);
bool above(const Box& a, const Box& b);
bool below(const Box& a, const Box& b);

// ---------------------------------------------------------------------------
// Tools and noise

enum class ErrorMode { WrongValue, MissDetection, OffByOne, RaiseException };
std::string_view to_string(ErrorMode m);
ErrorMode parse_error_mode(std::string_view s);

struct ToolNoise {
  double error_rate = 0.0;
  ErrorMode mode = ErrorMode::WrongValue;
};

/// Tools backed by a (simulated) perception model; only these are noisy.
std::span<const std::string_view> noisy_tools();
ErrorMode default_error_mode(std::string_view tool);

struct NoiseModel {
  std::map<std::string, ToolNoise> per_tool;
  std::uint64_t rng_seed = 0;

  /// Same error rate on every noisy tool with its default error mode.
  static NoiseModel uniform(double error_rate, std::uint64_t seed);
  ToolNoise for_tool(std::string_view tool) const;
  void validate() const;
};

/// `corrupted` is hidden from the agent: it never reaches a feedback payload.
struct ToolResult {
  std::optional<Value> value;
  std::optional<dsl::ToolFault> fault;
  bool corrupted = false;
  std::optional<Value> oracle;
};

/// Evaluates one tool call. Noisy tools draw once from `rng` to decide
/// corruption, then as needed to pick the corruption.
ToolResult invoke_tool(std::string_view tool, std::span<const Value> args, const Scene& scene,
                       const NoiseModel& noise, Rng& rng);

struct ToolCall {
  std::string tool;
  ToolResult result;
};

/// One episode's tool access: scene + noise + RNG stream + enabled library.
class ToolSession final : public dsl::ToolBackend {
 public:
  ToolSession(const Scene& scene, NoiseModel noise, dsl::ToolLibrary library, std::uint64_t episode_seed);

  dsl::ToolOutcome call(std::string_view builtin, std::span<const Value> args) override;
  Value image() const override;

  const Scene& scene() const { return *scene_; }
  /// Calls made since the last begin_step().
  std::span<const ToolCall> step_calls() const { return step_calls_; }
  void begin_step() { step_calls_.clear(); }
  int total_calls() const { return total_calls_; }

 private:
  const Scene* scene_;
  NoiseModel noise_;
  dsl::ToolLibrary library_;
  Rng rng_;
  std::vector<ToolCall> step_calls_;
  int total_calls_ = 0;
};

/// Seed for one episode's noise stream: independent of scheduling order.
std::uint64_t episode_seed(std::uint64_t global_seed, std::string_view task_id);

// ---------------------------------------------------------------------------
// JSON

void to_json(nlohmann::json& j, const SceneObject& o);
void from_json(const nlohmann::json& j, SceneObject& o);
void to_json(nlohmann::json& j, const Scene& s);
void from_json(const nlohmann::json& j, Scene& s);
void to_json(nlohmann::json& j, const StructuredQuery& q);
void from_json(const nlohmann::json& j, StructuredQuery& q);
void to_json(nlohmann::json& j, const SimTask& t);
void from_json(const nlohmann::json& j, SimTask& t);

SceneConfig scene_config_from_json(const nlohmann::json& j);
nlohmann::json scene_config_to_json(const SceneConfig& c);
NoiseModel noise_model_from_json(const nlohmann::json& j);
nlohmann::json noise_model_to_json(const NoiseModel& n);

}  // namespace dwim::sim
