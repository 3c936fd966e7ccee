#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwim/core.hpp"
#include "dwim/dsl.hpp"
#include "dwim/protocol.hpp"
#include "dwim/sim.hpp"

namespace dwim::engine {

class BackendUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScriptExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One draw of the policy per call.
class PolicyBackend {
 public:
  virtual ~PolicyBackend() = default;
  virtual std::string next_turn(std::string_view prompt) = 0;
};

// ---------------------------------------------------------------------------
// Scripted policy

/// A deterministic policy. `paths[0]` is the primary plan; after the k-th
/// Rethink in the history the policy switches to `paths[k]`. Each path is a
/// list of raw turns; when a path runs out the policy emits Done.
struct Script {
  std::vector<std::vector<std::string>> paths;
  std::string on_error = "<done></done>";  // reply to a Traceback with no Rethink after it
  std::string single_turn;                 // whole program for single-turn prompts
  /// Author Rethinks itself when the prompt discloses an answer (marker_parse).
  bool self_rethink = false;
};

class ScriptedPolicy final : public PolicyBackend {
 public:
  explicit ScriptedPolicy(Script script) : script_(std::move(script)) {}
  std::string next_turn(std::string_view prompt) override;
  const Script& script() const { return script_; }

 private:
  Script script_;
};

/// Primary plan plus two fallbacks that reach the answer through other tools.
/// `options` lists the candidate values for attribute queries.
Script optimal_script(const sim::StructuredQuery& query, std::span<const std::string> options = {});

// ---------------------------------------------------------------------------
// HTTP chat backend

struct HttpConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string path = "/v1/chat/completions";
  std::string model;
  double temperature = 0.8;
  int max_tokens = 512;
  std::string api_key_env;  // name of the variable holding the bearer token
  std::chrono::milliseconds timeout{30000};
  int retries = 2;
  std::chrono::milliseconds backoff{250};  // doubled after each failed attempt

  void validate() const;
};

/// OpenAI-compatible chat-completions client.
class HttpChatBackend final : public PolicyBackend {
 public:
  explicit HttpChatBackend(HttpConfig config);
  std::string next_turn(std::string_view prompt) override;

  /// Request body sent for `prompt`.
  nlohmann::json request_body(std::string_view prompt) const;

 private:
  HttpConfig config_;
};

// ---------------------------------------------------------------------------
// Episodes

struct EpisodeLimits {
  int max_turns = 10;
  int max_rethinks = 3;

  void validate() const;
};

enum class DetectorKind { SimOracle, MarkerParse };
std::string_view to_string(DetectorKind kind);
DetectorKind parse_detector_kind(std::string_view s);

/// What the simulator knows about the step just executed. Never shown to the
/// policy.
struct OracleView {
  std::span<const sim::ToolCall> calls;
  const Value* final_answer = nullptr;
};

/// Returns a description of the discrepancy, if any. sim_oracle inspects the
/// feedback and `oracle`; marker_parse reads the last action when it is a
/// Rethink authored by the backend.
std::optional<std::string> detect_discrepancy(const Feedback* feedback, const Task& task,
                                              std::span<const Action> actions, DetectorKind detector,
                                              const OracleView& oracle = {});

struct EpisodeConfig {
  GenerationMode mode = GenerationMode::Standard;
  EpisodeLimits limits;
  DetectorKind detector = DetectorKind::SimOracle;
  PromptOptions prompt;
};

/// Per-turn hook for tests: called with every rendered prompt.
using PromptObserver = std::function<void(std::string_view prompt)>;

/// Runs one episode to Done or a limit. Backend failures produce a
/// non-accepted workflow with `abort_reason` set; nothing is thrown.
Workflow run_episode(const Task& task, PolicyBackend& backend, sim::ToolSession& session,
                     const dsl::ToolLibrary& library, const EpisodeConfig& config,
                     const PromptObserver& observer = {});

// ---------------------------------------------------------------------------
// Collection

struct CollectionStats {
  GenerationMode mode = GenerationMode::Standard;
  long attempts = 0;
  long accepted = 0;
  long aborted = 0;
  long rethinks = 0;
  long tool_calls = 0;
  long code_actions_accepted = 0;

  /// Sum of counters; modes must agree.
  CollectionStats& operator+=(const CollectionStats& other);
  bool operator==(const CollectionStats&) const = default;
};

struct Environment {
  std::map<std::string, sim::Scene> scenes;  // by scene_id
  sim::NoiseModel noise;                      // noise.rng_seed seeds every episode stream
  dsl::ToolLibrary library = dsl::ToolLibrary::complete();
};

using BackendFactory = std::function<std::unique_ptr<PolicyBackend>(const sim::SimTask&)>;

/// Scripted optimal policy per task; attribute options come from `config`.
BackendFactory scripted_factory(const sim::SceneConfig& config, bool self_rethink = false);

struct CollectionResult {
  WorkflowDataset dataset;  // accepted workflows, ordered by task_id
  std::vector<Workflow> all;  // every episode, ordered by task_id
  CollectionStats stats;
};

/// One episode per task. `jobs` > 1 runs episodes on worker threads; output
/// is identical for any job count.
CollectionResult collect_dataset(std::span<const sim::SimTask> tasks, const BackendFactory& backends,
                                 const Environment& env, const EpisodeConfig& config, int jobs = 1);

/// accepted / attempts. Throws UsageError when attempts == 0.
double data_utilization(const CollectionStats& stats);

/// Mean number of Code actions over accepted workflows. Throws UsageError on
/// an empty set.
double tool_use_stats(std::span<const Workflow> workflows);

nlohmann::json to_json(const CollectionStats& stats);

}  // namespace dwim::engine
