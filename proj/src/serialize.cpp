#include "dwim/serialize.hpp"

#include <fstream>
#include <sstream>

namespace dwim {

SchemaError::SchemaError(std::string source, std::size_t line, const std::string& message)
    : std::runtime_error(source + (line ? ":" + std::to_string(line) : std::string()) + ": " + message),
      source_(std::move(source)),
      line_(line) {}

void to_json(json& j, const Task& t) {
  j = json{{"task_id", t.task_id}, {"scene_ref", t.scene_ref}, {"query", t.query}, {"answer", t.answer}};
}

void from_json(const json& j, Task& t) {
  j.at("task_id").get_to(t.task_id);
  j.at("scene_ref").get_to(t.scene_ref);
  j.at("query").get_to(t.query);
  j.at("answer").get_to(t.answer);
}

void to_json(json& j, const Action& a) {
  j = json{{"index", a.index}, {"kind", to_string(a.kind)}, {"content", a.content}, {"is_rethink", a.is_rethink}};
}

void from_json(const json& j, Action& a) {
  j.at("index").get_to(a.index);
  a.kind = parse_action_kind(j.at("kind").get<std::string>());
  j.at("content").get_to(a.content);
  j.at("is_rethink").get_to(a.is_rethink);
}

void to_json(json& j, const Feedback& f) {
  j = json{{"step_index", f.step_index}, {"payload", f.payload}, {"is_error", f.is_error}};
}

void from_json(const json& j, Feedback& f) {
  j.at("step_index").get_to(f.step_index);
  j.at("payload").get_to(f.payload);
  j.at("is_error").get_to(f.is_error);
}

void to_json(json& j, const Step& s) {
  j = json{{"action", s.action}, {"feedback", s.feedback ? json(*s.feedback) : json(nullptr)}};
}

void from_json(const json& j, Step& s) {
  j.at("action").get_to(s.action);
  const auto& fb = j.at("feedback");
  if (fb.is_null())
    s.feedback.reset();
  else
    s.feedback = fb.get<Feedback>();
}

void to_json(json& j, const Workflow& w) {
  j = json{{"schema", kSchemaVersion},
           {"task_id", w.task_id},
           {"actions", w.actions},
           {"feedbacks", w.feedbacks},
           {"flags", w.flags ? json(*w.flags) : json(nullptr)},
           {"prediction", w.prediction ? json(*w.prediction) : json(nullptr)},
           {"accepted", w.accepted},
           {"generation_mode", to_string(w.generation_mode)},
           {"abort_reason", w.abort_reason ? json(*w.abort_reason) : json(nullptr)}};
}

void from_json(const json& j, Workflow& w) {
  j.at("task_id").get_to(w.task_id);
  j.at("actions").get_to(w.actions);
  j.at("feedbacks").get_to(w.feedbacks);
  const auto& flags = j.at("flags");
  if (flags.is_null())
    w.flags.reset();
  else
    w.flags = flags.get<std::vector<int>>();
  const auto& pred = j.at("prediction");
  if (pred.is_null())
    w.prediction.reset();
  else
    w.prediction = pred.get<std::string>();
  j.at("accepted").get_to(w.accepted);
  w.generation_mode = parse_generation_mode(j.at("generation_mode").get<std::string>());
  if (auto it = j.find("abort_reason"); it != j.end() && !it->is_null())
    w.abort_reason = it->get<std::string>();
  else
    w.abort_reason.reset();
  validate(w);
}

void to_json(json& j, const MaskSample& m) {
  j = json{{"schema", kSchemaVersion},   {"task_id", m.task_id},         {"variant", to_string(m.variant)},
           {"target_index", m.target_index}, {"prefix", m.prefix},       {"mask_token", m.mask_token},
           {"suffix", m.suffix},           {"instruction", m.instruction}, {"target", m.target},
           {"reward", m.reward},           {"flags", m.flags}};
}

void from_json(const json& j, MaskSample& m) {
  j.at("task_id").get_to(m.task_id);
  m.variant = parse_mask_variant(j.at("variant").get<std::string>());
  j.at("target_index").get_to(m.target_index);
  j.at("prefix").get_to(m.prefix);
  j.at("mask_token").get_to(m.mask_token);
  j.at("suffix").get_to(m.suffix);
  j.at("instruction").get_to(m.instruction);
  j.at("target").get_to(m.target);
  j.at("reward").get_to(m.reward);
  j.at("flags").get_to(m.flags);
  if (m.reward != 0 && m.reward != 1) throw UsageError("reward must be 0 or 1");
}

void require_schema(const json& record, const std::string& source, std::size_t line) {
  const auto it = record.find("schema");
  if (it == record.end() || !it->is_string())
    throw SchemaError(source, line, "missing \"schema\" field");
  if (it->get<std::string>() != kSchemaVersion)
    throw SchemaError(source, line, "unsupported schema " + it->get<std::string>());
}

void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const json&, std::size_t)>& visit) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(text);
    } catch (const json::exception& e) {
      throw SchemaError(path.string(), line_no, std::string("malformed JSON: ") + e.what());
    }
    try {
      visit(record, line_no);
    } catch (const SchemaError&) {
      throw;
    } catch (const std::exception& e) {
      throw SchemaError(path.string(), line_no, e.what());
    }
  }
}

std::string canonical(const json& j) { return j.dump(); }

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  for (const auto& r : records) out << canonical(r) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void write_json_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  const auto text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw SchemaError(path.string(), 0, std::string("malformed JSON: ") + e.what());
  }
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dwim
