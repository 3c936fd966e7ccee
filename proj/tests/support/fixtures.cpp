#include "fixtures.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "dwim/protocol.hpp"
#include "dwim/serialize.hpp"

namespace dwim::fixtures {

LabeledWorkflow load_labeled(const std::filesystem::path& path) {
  LabeledWorkflow out;
  out.path = path;
  std::istringstream in(read_text_file(path));
  std::string line;
  std::optional<std::string> prediction;
  while (std::getline(in, line)) {
    if (!line.starts_with("# ")) {
      out.body += line + "\n";
      continue;
    }
    const auto colon = line.find(':');
    const auto key = line.substr(2, colon - 2);
    const auto value = colon + 2 <= line.size() ? line.substr(colon + 2) : std::string();
    if (key == "id") out.workflow.task_id = value;
    if (key == "answer") out.answer = value;
    if (key == "prediction") prediction = value;
    if (key == "human") {
      std::istringstream labels(value);
      for (std::string l; labels >> l;) out.labels.push_back(l);
    }
  }
  auto parsed = parse_transcript(out.body);
  if (const auto* err = std::get_if<ParseError>(&parsed))
    throw std::runtime_error(path.string() + ": " + err->message);
  for (auto& step : std::get<std::vector<Step>>(parsed)) {
    out.workflow.actions.push_back(step.action);
    if (step.feedback) out.workflow.feedbacks.push_back(*step.feedback);
  }
  out.workflow.prediction = prediction;
  out.workflow.accepted = is_accepted(out.workflow, out.answer);
  if (out.labels.size() != out.workflow.actions.size())
    throw std::runtime_error(path.string() + ": label count differs from action count");
  return out;
}

std::vector<LabeledWorkflow> load_labeled_corpus() {
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(fixture_dir() / "workflows"))
    if (e.path().extension() == ".txt") paths.push_back(e.path());
  std::sort(paths.begin(), paths.end());
  std::vector<LabeledWorkflow> out;
  for (const auto& p : paths) out.push_back(load_labeled(p));
  return out;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("dwim-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace dwim::fixtures
