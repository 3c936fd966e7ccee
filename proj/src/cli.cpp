#include "dwim/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "dwim/digest.hpp"
#include "dwim/engine.hpp"
#include "dwim/flagmask.hpp"
#include "dwim/loss.hpp"
#include "dwim/pipeline.hpp"
#include "dwim/serialize.hpp"

namespace dwim::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string mode;
  std::string variant;
  int jobs = 1;
  std::string out;
  bool include_rejected = false;
  int count = -1;
  std::string in;
  std::string tasks;
  std::string scorer = "unigram";
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) {
    c.seed = *o.seed;
    c.noise.rng_seed = *o.seed;
  }
  if (!o.mode.empty()) c.mode = parse_generation_mode(o.mode);
  if (!o.variant.empty()) c.variant = parse_mask_variant(o.variant);
  if (!o.out.empty()) c.out = o.out;
  if (!o.tasks.empty()) c.tasks = o.tasks;
  if (o.jobs < 1) throw UsageError("--jobs must be at least 1");
  return c;
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

/// Manifest with the digest of every output file; no timestamps so reruns are
/// byte-identical.
void write_manifest(const fs::path& dir, const std::string& command, const RunConfig& c,
                    const std::vector<std::string>& outputs, json extra = json::object()) {
  json files = json::object();
  for (const auto& f : outputs) files[f] = sha256_hex(read_text_file(dir / f));
  json m{{"schema", kSchemaVersion},
         {"command", command},
         {"config_digest", config_digest(c)},
         {"seed", c.seed},
         {"outputs", files}};
  m.update(extra);
  write_json_file(dir / "manifest.json", m);
}

fs::path require_input(const std::string& in, const char* what) {
  if (in.empty()) throw UsageError(std::string("--in is required: ") + what);
  if (!fs::exists(in)) throw UsageError("input does not exist: " + in);
  return in;
}

void print_table(std::ostream& out, const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t w = 0;
  for (const auto& [k, v] : rows) w = std::max(w, k.size());
  for (const auto& [k, v] : rows) out << "  " << std::left << std::setw(static_cast<int>(w)) << k << "  " << v << '\n';
}

// ---------------------------------------------------------------------------

int cmd_gen_tasks(const Options& o, std::ostream& out) {
  if (o.count < 1) throw UsageError("-n must be at least 1");
  const auto c = resolve(o);
  const auto set = generate_task_set(c.seed, c.environment, o.count);
  write_task_set(c.out, set);
  json kinds = json::object();
  for (const auto& t : set.tasks) kinds[std::string(sim::to_string(t.query.kind))] = kinds.value(std::string(sim::to_string(t.query.kind)), 0) + 1;
  write_manifest(c.out, "gen-tasks", c, {"scenes.jsonl", "tasks.jsonl"}, {{"count", o.count}, {"kinds", kinds}});
  out << "wrote " << o.count << " tasks to " << c.out.string() << '\n';
  return 0;
}

json stats_block(const engine::CollectionStats& s) {
  auto j = engine::to_json(s);
  return j;
}

void print_stats(std::ostream& out, const engine::CollectionStats& s) {
  std::vector<std::pair<std::string, std::string>> rows = {
      {"mode", std::string(to_string(s.mode))},
      {"attempts", std::to_string(s.attempts)},
      {"accepted", std::to_string(s.accepted)},
      {"data utilization", fixed(engine::data_utilization(s))},
      {"aborted", std::to_string(s.aborted)},
      {"rethinks", std::to_string(s.rethinks)},
      {"tool calls", std::to_string(s.tool_calls)},
  };
  if (s.accepted > 0)
    rows.emplace_back("avg code actions per accepted",
                      fixed(static_cast<double>(s.code_actions_accepted) / static_cast<double>(s.accepted)));
  print_table(out, rows);
}

int cmd_collect(const Options& o, std::ostream& out) {
  const auto c = resolve(o);
  if (!c.tasks) throw UsageError("collect needs --tasks DIR (or \"tasks\" in the config)");
  const auto set = read_task_set(*c.tasks);
  if (set.tasks.empty()) throw UsageError("task set is empty");
  const auto env = make_environment(c, set);
  engine::EpisodeConfig ec;
  ec.mode = c.mode;
  ec.limits = c.limits;
  ec.detector = c.detector;
  auto result = engine::collect_dataset(set.tasks, make_backends(c), env, ec, o.jobs);

  fs::create_directories(c.out);
  const auto mode = std::string(to_string(c.mode));
  const auto workflows = "workflows." + mode + ".jsonl";
  const auto episodes = "episodes." + mode + ".jsonl";
  const auto stats = "stats." + mode + ".json";
  write_records(c.out / workflows, result.dataset.workflows);
  write_records(c.out / episodes, result.all);
  write_json_file(c.out / stats, stats_block(result.stats));
  write_manifest(c.out, "collect", c, {workflows, episodes, stats}, {{"mode", mode}});

  out << "collected " << result.stats.attempts << " episodes\n";
  print_stats(out, result.stats);

  const auto standard = c.out / "stats.standard.json";
  const auto aware = c.out / "stats.discrepancy_aware.json";
  if (fs::exists(standard) && fs::exists(aware)) {
    const double us = read_json_file(standard).at("data_utilization").get<double>();
    const double ua = read_json_file(aware).at("data_utilization").get<double>();
    out << "paired comparison\n";
    print_table(out, {{"data utilization (standard)", fixed(us)},
                      {"data utilization (discrepancy_aware)", fixed(ua)},
                      {"gap", fixed(ua - us)}});
  }
  return 0;
}

std::vector<Workflow> read_workflows(const fs::path& p) { return read_records<Workflow>(p); }

int cmd_flag(const Options& o, std::ostream& out) {
  const auto c = resolve(o);
  const auto in = require_input(o.in, "a workflows file");
  const auto workflows = read_workflows(in);
  std::vector<Workflow> flagged;
  std::vector<json> reports;
  mask::FlagHistogram hist;
  for (const auto& w : workflows) {
    const auto r = mask::flag_actions(w);
    hist.add(w, r);
    flagged.push_back(mask::with_flags(w, r));
    reports.push_back(json{{"schema", kSchemaVersion},
                           {"workflow_id", r.workflow_id},
                           {"flags", r.flags},
                           {"rule_hits", r.rule_hits}});
  }
  fs::create_directories(c.out);
  write_records(c.out / "flagged.jsonl", flagged);
  write_jsonl(c.out / "flag_report.jsonl", reports);
  write_manifest(c.out, "flag", c, {"flagged.jsonl", "flag_report.jsonl"},
                 {{"source_digest", sha256_hex(read_text_file(in))}, {"histogram", hist.to_json()}});
  out << "flagged " << workflows.size() << " workflows\n";
  const auto h = hist.to_json();
  std::vector<std::pair<std::string, std::string>> rows = {{"actions", std::to_string(hist.actions)},
                                                           {"ineffective", std::to_string(hist.ineffective)}};
  for (const auto& [rule, n] : h.at("rule_hits").items()) rows.emplace_back(rule, std::to_string(n.get<long>()));
  for (const auto& [kind, share] : h.at("ineffective_share_by_kind").items())
    rows.emplace_back("ineffective share " + kind, fixed(share.get<double>()));
  print_table(out, rows);
  return 0;
}

int cmd_build_dataset(const Options& o, std::ostream& out) {
  const auto c = resolve(o);
  const auto in = require_input(o.in, "a workflows file");
  const auto workflows = read_workflows(in);
  mask::MaskOptions mo;
  mo.variant = c.variant;
  mo.seed = c.seed;
  mo.include_rejected = o.include_rejected;
  std::vector<MaskSample> samples;
  long skipped = 0;
  for (const auto& w : workflows) {
    if (!w.accepted && !o.include_rejected) {
      ++skipped;
      continue;
    }
    const auto r = mask::flag_actions(w);
    auto built = mask::build_mask_samples(w, r, mo);
    samples.insert(samples.end(), built.begin(), built.end());
  }
  fs::create_directories(c.out);
  const auto name = "dataset." + std::string(to_string(c.variant)) + ".jsonl";
  DatasetMeta meta{std::string(to_string(c.variant)), sha256_hex(read_text_file(in)), c.seed};
  auto manifest = mask::emit_dataset(samples, c.out / name, meta);
  manifest["skipped_rejected"] = skipped;
  manifest["include_rejected"] = o.include_rejected;
  write_manifest(c.out, "build-dataset", c, {name}, manifest);
  out << "built " << samples.size() << " samples (" << to_string(c.variant) << ") from " << workflows.size()
      << " workflows\n";
  return 0;
}

int cmd_eval_loss(const Options& o, std::ostream& out) {
  const auto c = resolve(o);
  const auto in = require_input(o.in, "a mask dataset file");
  const auto samples = read_records<MaskSample>(in);
  if (samples.empty()) throw UsageError("dataset is empty");
  const auto scorer = loss::make_scorer(o.scorer, samples);
  const auto report = loss::objective(*scorer, samples, true, o.jobs);
  fs::create_directories(c.out);
  write_json_file(c.out / "loss.json", loss::to_json(report));
  write_manifest(c.out, "eval-loss", c, {"loss.json"}, {{"source_digest", sha256_hex(read_text_file(in))}});
  long rewarded = 0;
  for (int r : report.rewards) rewarded += r;
  print_table(out, {{"scorer", report.scorer},
                    {"samples", std::to_string(report.sample_count)},
                    {"rewarded samples", std::to_string(rewarded)},
                    {"objective", fixed(report.objective, 6)}});
  return 0;
}

int cmd_stats(const Options& o, std::ostream& out) {
  const auto in = require_input(o.in, "an artifact");
  // Peek at the first record to decide what the artifact holds.
  std::optional<json> first;
  read_jsonl(in, [&](const json& j, std::size_t) {
    if (!first) first = j;
  });
  if (!first) {
    out << "empty artifact\n";
    return 0;
  }
  if (first->contains("mask_token")) {
    const auto samples = read_records<MaskSample>(in);
    std::map<std::string, long> per_variant;
    long rewarded = 0;
    for (const auto& s : samples) {
      ++per_variant[std::string(to_string(s.variant))];
      rewarded += s.reward;
    }
    std::vector<std::pair<std::string, std::string>> rows = {{"samples", std::to_string(samples.size())},
                                                             {"rewarded samples", std::to_string(rewarded)}};
    for (const auto& [v, n] : per_variant) rows.emplace_back("variant " + v, std::to_string(n));
    print_table(out, rows);
    return 0;
  }
  if (first->contains("actions")) {
    const auto workflows = read_workflows(in);
    long accepted = 0;
    mask::FlagHistogram hist;
    for (const auto& w : workflows) {
      accepted += w.accepted ? 1 : 0;
      hist.add(w, mask::flag_actions(w));
    }
    std::vector<std::pair<std::string, std::string>> rows = {{"workflows", std::to_string(workflows.size())},
                                                             {"accepted", std::to_string(accepted)}};
    engine::CollectionStats s;
    s.attempts = static_cast<long>(workflows.size());
    s.accepted = accepted;
    rows.emplace_back("data utilization", fixed(engine::data_utilization(s)));
    if (accepted > 0) rows.emplace_back("avg code actions per accepted", fixed(engine::tool_use_stats(workflows)));
    const auto h = hist.to_json();
    for (const auto& [rule, n] : h.at("rule_hits").items()) rows.emplace_back(rule, std::to_string(n.get<long>()));
    for (const auto& [kind, share] : h.at("ineffective_share_by_kind").items())
      rows.emplace_back("ineffective share " + kind, fixed(share.get<double>()));
    print_table(out, rows);
    return 0;
  }
  if (first->contains("structured_query")) {
    const auto tasks = read_records<sim::SimTask>(in);
    std::map<std::string, long> kinds;
    for (const auto& t : tasks) ++kinds[std::string(sim::to_string(t.query.kind))];
    std::vector<std::pair<std::string, std::string>> rows = {{"tasks", std::to_string(tasks.size())}};
    for (const auto& [k, n] : kinds) rows.emplace_back("kind " + k, std::to_string(n));
    print_table(out, rows);
    return 0;
  }
  throw SchemaError(in.string(), 1, "unrecognized record type");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Discrepancy-aware workflow collection and instruct-masking datasets", "dwim"};
  app.require_subcommand(1);
  Options o;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "Run configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "Global seed");
    sub->add_option("--out", o.out, "Output directory");
  };
  auto* gen = app.add_subcommand("gen-tasks", "Generate scenes and tasks");
  common(gen);
  gen->add_option("-n,--count", o.count, "Number of tasks")->required();

  auto* collect = app.add_subcommand("collect", "Run one episode per task");
  common(collect);
  collect->add_option("--tasks", o.tasks, "Task-set directory");
  collect->add_option("--mode", o.mode, "standard | discrepancy | single-turn");
  collect->add_option("--jobs", o.jobs, "Worker threads");

  auto* flag = app.add_subcommand("flag", "Flag effective actions");
  common(flag);
  flag->add_option("--in", o.in, "Workflows file")->required();

  auto* build = app.add_subcommand("build-dataset", "Build a mask dataset");
  common(build);
  build->add_option("--in", o.in, "Workflows file")->required();
  build->add_option("--variant", o.variant, "instruct-masking | random-masking | masking-w-rethink | naive-sft");
  build->add_flag("--include-rejected", o.include_rejected, "Emit samples of rejected workflows with reward 0");

  auto* eval = app.add_subcommand("eval-loss", "Evaluate the reward-weighted objective");
  common(eval);
  eval->add_option("--in", o.in, "Mask dataset file")->required();
  eval->add_option("--scorer", o.scorer, "uniform | unigram | oracle");
  eval->add_option("--jobs", o.jobs, "Worker threads");

  auto* stats = app.add_subcommand("stats", "Summarize an artifact");
  stats->add_option("--in", o.in, "Tasks, workflows or mask dataset file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "dwim: " << e.what() << '\n';
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_tasks(o, out);
    if (collect->parsed()) return cmd_collect(o, out);
    if (flag->parsed()) return cmd_flag(o, out);
    if (build->parsed()) return cmd_build_dataset(o, out);
    if (eval->parsed()) return cmd_eval_loss(o, out);
    if (stats->parsed()) return cmd_stats(o, out);
  } catch (const UsageError& e) {
    err << "dwim: " << e.what() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    err << "dwim: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "dwim: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace dwim::cli
