#include "dwim/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include "dwim/protocol.hpp"

namespace dwim::engine {

namespace {

constexpr std::string_view kDoneTurn = "<done></done>";

std::string code_turn(std::string_view source) { return render_action(Action::code(std::string(source))); }

std::string thought_turn(std::string_view text) { return render_action(Action::thought(std::string(text))); }

bool assigns_final_answer(std::string_view source) {
  std::size_t pos = 0;
  while (pos <= source.size()) {
    auto end = source.find('\n', pos);
    if (end == std::string_view::npos) end = source.size();
    auto line = source.substr(pos, end - pos);
    while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
    if (line.starts_with("final_answer")) {
      auto rest = line.substr(12);
      while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
      if (rest.starts_with('=') && !rest.starts_with("==")) return true;
    }
    pos = end + 1;
  }
  return false;
}

std::string fault_type(std::string_view payload) {
  auto last = payload.substr(payload.rfind('\n') + 1);
  const auto colon = last.find(':');
  return std::string(colon == std::string_view::npos ? last : last.substr(0, colon));
}

}  // namespace

// ---------------------------------------------------------------------------
// Scripted policy

std::string ScriptedPolicy::next_turn(std::string_view prompt) {
  const auto parsed = parse_transcript(history_section(prompt));
  if (const auto* err = std::get_if<ParseError>(&parsed))
    throw ScriptExhausted("scripted policy cannot read its history: " + err->message);
  const auto& steps = std::get<std::vector<Step>>(parsed);

  if (requests_single_turn(prompt)) return steps.empty() ? script_.single_turn : std::string(kDoneTurn);

  std::size_t rethinks = 0;
  std::size_t since_rethink = 0;
  for (const auto& s : steps) {
    if (s.action.is_rethink) {
      ++rethinks;
      since_rethink = 0;
    } else {
      ++since_rethink;
    }
  }

  if (!steps.empty()) {
    const auto& last = steps.back();
    const bool code = last.action.kind == ActionKind::Code && last.feedback;
    const bool error = code && last.feedback->is_error;
    if (script_.self_rethink && code) {
      if (const auto answer = disclosed_answer(prompt)) {
        const bool mismatch = assigns_final_answer(last.action.content) && !last.feedback->payload.empty() &&
                              !answers_match(last.feedback->payload, *answer);
        if (error || mismatch) {
          const auto what = error ? "the last step failed with " + fault_type(last.feedback->payload)
                                  : std::string("the computed answer disagrees with the expected one");
          return thought_turn(make_rethink_text(
              "However, " + what + ".", "rethink the plan and try another tool (attempt " +
                                            std::to_string(rethinks + 1) + ")."));
        }
      }
    }
    if (error) return script_.on_error;
  }

  if (rethinks >= script_.paths.size())
    throw ScriptExhausted("no fallback left after " + std::to_string(rethinks) + " rethinks");
  const auto& path = script_.paths[rethinks];
  return since_rethink < path.size() ? path[since_rethink] : std::string(kDoneTurn);
}

Script optimal_script(const sim::StructuredQuery& q, std::span<const std::string> options) {
  const auto quote = [](std::string_view s) { return "\"" + std::string(s) + "\""; };
  const auto question = quote(sim::render_query(q));
  const auto subject = quote(q.subject);
  const auto object = quote(q.object);
  std::vector<std::vector<std::string>> sources;

  switch (q.kind) {
    case sim::TaskKind::Existence:
      sources = {
          {"final_answer = bool_to_yesno(exists(" + subject + "))\nfinal_answer"},
          {"found = find(" + subject + ")\nfinal_answer = bool_to_yesno(count(found) > 0)\nfinal_answer"},
          {"final_answer = simple_query(" + question + ")\nfinal_answer"},
      };
      break;
    case sim::TaskKind::Counting:
      sources = {
          {"n = count(find(" + subject + "))", "final_answer = n\nfinal_answer"},
          {"final_answer = simple_query(" + question + ")\nfinal_answer"},
          {"boxes = find(" + subject + ")\nn3 = count(boxes)\nfinal_answer = n3\nfinal_answer"},
      };
      break;
    case sim::TaskKind::Attribute: {
      std::string list = "[";
      for (std::size_t i = 0; i < options.size(); ++i) list += (i ? ", " : "") + quote(options[i]);
      list += "]";
      sources = {
          {"target = find(" + subject + ")[0]",
           "final_answer = best_description_from_options(target, " + list + ")\nfinal_answer"},
          {"final_answer = simple_query(" + question + ")\nfinal_answer"},
          {"final_answer = llm_query(" + question + ")\nfinal_answer"},
      };
      break;
    }
    case sim::TaskKind::Spatial: {
      std::string crop;
      switch (q.relation) {
        case sim::Relation::Left: crop = "crop_left_of_bbox"; break;
        case sim::Relation::Right: crop = "crop_right_of_bbox"; break;
        case sim::Relation::Above: crop = "crop_above_bbox"; break;
        case sim::Relation::Below: crop = "crop_below_bbox"; break;
      }
      sources = {
          {"anchor = find(" + object + ")[0]\nregion = " + crop + "(anchor)",
           "final_answer = bool_to_yesno(exists(" + subject + ", region))\nfinal_answer"},
          {"final_answer = simple_query(" + question + ")\nfinal_answer"},
          {"ref = find(" + object + ")[0]\npart = " + crop + "(ref)\nfinal_answer = bool_to_yesno(count(find(" +
           subject + ", part)) == 1)\nfinal_answer"},
      };
      break;
    }
    case sim::TaskKind::Compare:
      sources = {
          {"a = count(find(" + subject + "))\nb = count(find(" + object + "))",
           "final_answer = bool_to_yesno(a > b)\nfinal_answer"},
          {"final_answer = simple_query(" + question + ")\nfinal_answer"},
          {"final_answer = llm_query(" + question + ")\nfinal_answer"},
      };
      break;
  }

  Script script;
  std::string whole;
  for (const auto& src : sources.front()) whole += (whole.empty() ? "" : "\n") + src;
  script.single_turn = code_turn(whole);
  for (const auto& path : sources) {
    std::vector<std::string> turns;
    for (const auto& src : path) turns.push_back(code_turn(src));
    script.paths.push_back(std::move(turns));
  }
  return script;
}

// ---------------------------------------------------------------------------
// Episodes

void EpisodeLimits::validate() const {
  if (max_turns < 1) throw UsageError("max_turns must be at least 1");
  if (max_rethinks < 0) throw UsageError("max_rethinks must be non-negative");
}

std::string_view to_string(DetectorKind kind) {
  return kind == DetectorKind::SimOracle ? "sim_oracle" : "marker_parse";
}

DetectorKind parse_detector_kind(std::string_view s) {
  if (s == "sim_oracle" || s == "sim-oracle") return DetectorKind::SimOracle;
  if (s == "marker_parse" || s == "marker-parse") return DetectorKind::MarkerParse;
  throw UsageError("unknown detector: " + std::string(s));
}

std::optional<std::string> detect_discrepancy(const Feedback* feedback, const Task& task,
                                              std::span<const Action> actions, DetectorKind detector,
                                              const OracleView& oracle) {
  if (detector == DetectorKind::MarkerParse) {
    if (actions.empty() || !actions.back().is_rethink) return std::nullopt;
    return split_rethink(actions.back().content)->discrepancy;
  }
  if (feedback && feedback->is_error) return "execution fault (" + fault_type(feedback->payload) + ")";
  if (oracle.final_answer) {
    const auto value = repr(*oracle.final_answer);
    if (!answers_match(value, task.answer)) return "final_answer is " + value + ", which contradicts the expectation";
  }
  for (const auto& call : oracle.calls)
    if (call.result.corrupted) return "the output of " + call.tool + " contradicts the expectation";
  return std::nullopt;
}

Workflow run_episode(const Task& task, PolicyBackend& backend, sim::ToolSession& session,
                     const dsl::ToolLibrary& library, const EpisodeConfig& config, const PromptObserver& observer) {
  config.limits.validate();
  Workflow w;
  w.task_id = task.task_id;
  w.generation_mode = config.mode;

  const bool aware = config.mode == GenerationMode::DiscrepancyAware;
  const bool single = config.mode == GenerationMode::SingleTurn;
  const auto prompt_mode = aware ? PromptMode::AnswerConditioned : PromptMode::Standard;
  auto options = config.prompt;
  options.single_turn = single;

  EnvState env(task, dsl::builtin_docs(library));
  std::vector<Step> history;
  dsl::Bindings bindings{{"image", session.image()}};
  int rethinks = 0;

  const auto append = [&](Action a) {
    a.index = static_cast<int>(w.actions.size()) + 1;
    w.actions.push_back(a);
    history.push_back(Step{std::move(a), std::nullopt});
  };

  // One silent redraw on a parse failure, then give up.
  const auto draw = [&]() -> std::optional<Action> {
    std::optional<ParseError> last_error;
    for (int attempt = 0; attempt < 2; ++attempt) {
      const auto prompt = render_prompt(env, history, prompt_mode, options);
      if (observer) observer(prompt);
      std::string raw;
      try {
        raw = backend.next_turn(prompt);
      } catch (const std::exception& e) {
        w.abort_reason = std::string("backend: ") + e.what();
        return std::nullopt;
      }
      auto parsed = parse_action(raw);
      if (auto* a = std::get_if<Action>(&parsed)) return std::move(*a);
      last_error = std::get<ParseError>(parsed);
    }
    w.abort_reason = "parse: " + std::string(to_string(last_error->kind)) + ": " + last_error->message;
    return std::nullopt;
  };

  while (static_cast<int>(w.actions.size()) < config.limits.max_turns) {
    auto action = draw();
    if (!action) break;
    if (single && action->kind != ActionKind::Code) {
      w.abort_reason = "single-turn mode expects a code action";
      break;
    }
    const auto kind = action->kind;
    append(std::move(*action));
    if (kind == ActionKind::Done) break;

    if (kind == ActionKind::Code) {
      session.begin_step();
      auto fb = dsl::run_code(w.actions.back().content, bindings, session, w.actions.back().index);
      env.append(fb);
      w.feedbacks.push_back(fb);
      history.back().feedback = fb;

      if (single) {
        append(Action::done());
        break;
      }
      if (aware && config.detector == DetectorKind::SimOracle) {
        OracleView view{session.step_calls(), nullptr};
        const auto it = bindings.find("final_answer");
        if (it != bindings.end() && assigns_final_answer(w.actions.back().content) && !fb.is_error)
          view.final_answer = &it->second;
        const auto found = detect_discrepancy(&fb, task, w.actions, config.detector, view);
        if (found && rethinks < config.limits.max_rethinks &&
            static_cast<int>(w.actions.size()) < config.limits.max_turns) {
          ++rethinks;
          append(Action::thought(make_rethink_text(
              "However, " + *found + ".",
              "rethink the approach and reach the answer with a different tool (attempt " +
                  std::to_string(rethinks) + ").")));
        }
      }
    } else if (aware && config.detector == DetectorKind::MarkerParse &&
               detect_discrepancy(nullptr, task, w.actions, config.detector)) {
      if (++rethinks > config.limits.max_rethinks) {
        w.abort_reason = "rethink limit reached";
        break;
      }
    }
  }

  const bool done = !w.actions.empty() && w.actions.back().kind == ActionKind::Done;
  if (!done && !w.abort_reason) w.abort_reason = "turn limit reached";
  if (done) {
    if (const auto it = bindings.find("final_answer"); it != bindings.end()) w.prediction = repr(it->second);
  }
  w.accepted = is_accepted(w, task.answer);
  return w;
}

// ---------------------------------------------------------------------------
// Collection

CollectionStats& CollectionStats::operator+=(const CollectionStats& o) {
  if (mode != o.mode) throw UsageError("cannot merge statistics of different generation modes");
  attempts += o.attempts;
  accepted += o.accepted;
  aborted += o.aborted;
  rethinks += o.rethinks;
  tool_calls += o.tool_calls;
  code_actions_accepted += o.code_actions_accepted;
  return *this;
}

BackendFactory scripted_factory(const sim::SceneConfig& config, bool self_rethink) {
  return [config, self_rethink](const sim::SimTask& t) -> std::unique_ptr<PolicyBackend> {
    std::vector<std::string> options;
    if (t.query.kind == sim::TaskKind::Attribute) {
      if (const auto it = config.attributes.find(t.query.property); it != config.attributes.end())
        options = it->second;
    }
    auto script = optimal_script(t.query, options);
    script.self_rethink = self_rethink;
    return std::make_unique<ScriptedPolicy>(std::move(script));
  };
}

CollectionResult collect_dataset(std::span<const sim::SimTask> tasks, const BackendFactory& backends,
                                 const Environment& env, const EpisodeConfig& config, int jobs) {
  if (tasks.empty()) throw UsageError("collect_dataset needs at least one task");
  config.limits.validate();
  for (const auto& t : tasks)
    if (!env.scenes.contains(t.task.scene_ref))
      throw UsageError("task " + t.task.task_id + " references unknown scene " + t.task.scene_ref);

  std::vector<Workflow> workflows(tasks.size());
  std::vector<CollectionStats> partial(tasks.size(), CollectionStats{config.mode});

  const auto run_one = [&](std::size_t i) {
    const auto& t = tasks[i];
    sim::ToolSession session(env.scenes.at(t.task.scene_ref), env.noise, env.library,
                             sim::episode_seed(env.noise.rng_seed, t.task.task_id));
    auto& s = partial[i];
    s.attempts = 1;
    try {
      auto backend = backends(t);
      workflows[i] = run_episode(t.task, *backend, session, env.library, config);
    } catch (const std::exception& e) {
      workflows[i].task_id = t.task.task_id;
      workflows[i].generation_mode = config.mode;
      workflows[i].abort_reason = std::string("backend: ") + e.what();
    }
    const auto& w = workflows[i];
    s.accepted = w.accepted ? 1 : 0;
    s.aborted = w.abort_reason ? 1 : 0;
    s.rethinks = std::count_if(w.actions.begin(), w.actions.end(), [](const Action& a) { return a.is_rethink; });
    s.tool_calls = session.total_calls();
    s.code_actions_accepted = w.accepted ? w.code_action_count() : 0;
  };

  const auto workers = static_cast<std::size_t>(std::clamp<long>(jobs, 1, static_cast<long>(tasks.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < tasks.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < workers; ++k)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < tasks.size(); i = next++) run_one(i);
      });
  }

  CollectionResult result;
  result.stats.mode = config.mode;
  for (const auto& s : partial) result.stats += s;
  result.all = std::move(workflows);
  std::stable_sort(result.all.begin(), result.all.end(),
                   [](const Workflow& a, const Workflow& b) { return a.task_id < b.task_id; });
  for (const auto& w : result.all)
    if (w.accepted) result.dataset.workflows.push_back(w);
  result.dataset.meta.generator = std::string(to_string(config.mode));
  result.dataset.meta.seed = env.noise.rng_seed;
  return result;
}

double data_utilization(const CollectionStats& stats) {
  if (stats.attempts <= 0) throw UsageError("data utilization is undefined for zero attempts");
  return static_cast<double>(stats.accepted) / static_cast<double>(stats.attempts);
}

double tool_use_stats(std::span<const Workflow> workflows) {
  long n = 0;
  long code = 0;
  for (const auto& w : workflows) {
    if (!w.accepted) continue;
    ++n;
    code += w.code_action_count();
  }
  if (n == 0) throw UsageError("tool-use statistics need at least one accepted workflow");
  return static_cast<double>(code) / static_cast<double>(n);
}

nlohmann::json to_json(const CollectionStats& s) {
  nlohmann::json j{{"mode", to_string(s.mode)},
                   {"attempts", s.attempts},
                   {"accepted", s.accepted},
                   {"aborted", s.aborted},
                   {"rethinks", s.rethinks},
                   {"tool_calls", s.tool_calls},
                   {"code_actions_accepted", s.code_actions_accepted}};
  if (s.attempts > 0) j["data_utilization"] = data_utilization(s);
  if (s.accepted > 0)
    j["avg_code_actions_per_accepted"] = static_cast<double>(s.code_actions_accepted) / static_cast<double>(s.accepted);
  return j;
}

}  // namespace dwim::engine
