#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cvr/action.hpp"
#include "cvr/script.hpp"
#include "cvr/simulator.hpp"

namespace cvr {

// What the agent is told about an episode: the query and the shape of the video
// set, never its contents. Built from a script for simulated runs, or from real
// video metadata for tool-backed runs.
struct EpisodeTask {
  std::string task_id;
  std::string task_tag;
  TaskType task_type = TaskType::single_choice;
  std::string question;
  std::optional<std::map<std::string, std::string>> options;
  std::vector<double> durations_s;  // one per video, 1-based by position
  std::optional<GoldAnswer> gold;   // kept for scoring, never shown to the policy

  int video_count() const { return static_cast<int>(durations_s.size()); }
};

inline EpisodeTask make_task(const SemanticScript& s) {
  EpisodeTask t{s.script_id, s.task_tag, s.task_type, s.question, s.options, {}, s.gold};
  for (const auto& v : s.videos) t.durations_s.push_back(v.duration_s);
  return t;
}

// Question text followed by the options, one per line.
inline std::string render_query(const EpisodeTask& task) {
  std::string q = "Question: " + task.question;
  if (task.options) {
    q += "\nOptions:";
    for (const auto& [letter, text] : *task.options) q += fmt::format("\n{}. {}", letter, text);
  }
  q += fmt::format("\nVideos: {}", task.video_count());
  for (int i = 0; i < task.video_count(); ++i)
    q += fmt::format("\n  Video {}: {}s", i + 1, format_seconds(task.durations_s[i]));
  return q;
}

enum class Phase { active, tolerance, terminated };

inline std::string to_string(Phase p) {
  switch (p) {
    case Phase::active: return "active";
    case Phase::tolerance: return "tolerance";
    case Phase::terminated: return "terminated";
  }
  return "?";
}

inline constexpr std::string_view kInvalidActionObservation = "INVALID ACTION — skipped";

struct HistoryEntry {
  std::optional<AgentAction> action;  // empty: failed-turn marker
  Observation observation;
  bool refused = false;  // action was valid but the engine declined to execute it
};

struct EpisodeState {
  std::string query;
  std::vector<HistoryEntry> history;
  int turn = 0;
  int tool_calls = 0;
  Phase phase = Phase::active;
};

}  // namespace cvr
