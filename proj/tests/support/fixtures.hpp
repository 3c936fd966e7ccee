#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dwim/core.hpp"

namespace dwim::fixtures {

inline std::filesystem::path fixture_dir() { return DWIM_FIXTURE_DIR; }

/// A transcript fixture with its hand-assigned per-action labels:
/// ok, traceback, trigger (precedes a reconsideration) or rethink.
struct LabeledWorkflow {
  std::filesystem::path path;
  std::string body;  // transcript text without the header
  std::string answer;
  Workflow workflow;
  std::vector<std::string> labels;
};

LabeledWorkflow load_labeled(const std::filesystem::path& path);
std::vector<LabeledWorkflow> load_labeled_corpus();

/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace dwim::fixtures
