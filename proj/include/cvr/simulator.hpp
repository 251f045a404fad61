#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "cvr/action.hpp"
#include "cvr/script.hpp"

namespace cvr {

inline constexpr std::string_view kNoEvidence = "No significant action observed.";

// System prompt for an LLM-backed simulator. Must stay byte-identical to
// prompts/simulator_system.txt.
inline constexpr std::string_view kSimulatorSystemPrompt =
    R"prompt(You are a video analysis simulator. Your task is to act as an advanced computer vision tool.
You will receive a "video script (Ground Truth)" and a user's "query".
Please simulate the output of a computer vision tool based on the content of the video script.

Note:

Do not reveal that you are reading a script; respond as if you have actually watched the video.

Generate your responses strictly according to the timestamps and action descriptions provided in the script.

If the user asks about a time frame where no action occurs in the script, please reply: "No significant action observed."
)prompt";

enum class ObservationSource { sim_deterministic, sim_llm, real_tool };

inline std::string to_string(ObservationSource s) {
  switch (s) {
    case ObservationSource::sim_deterministic: return "sim_deterministic";
    case ObservationSource::sim_llm: return "sim_llm";
    case ObservationSource::real_tool: return "real_tool";
  }
  return "?";
}

inline std::optional<ObservationSource> parse_observation_source(std::string_view s) {
  for (auto v : {ObservationSource::sim_deterministic, ObservationSource::sim_llm,
                 ObservationSource::real_tool})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

struct Observation {
  std::string text;
  ObservationSource source = ObservationSource::sim_deterministic;
  double elapsed_s = 0;
};

namespace detail {

inline Window caption_window(const SemanticScript& script, const GetCaption& g) {
  const Window full = full_range(script, g.video_index);
  return {g.start_time.value_or(full.start_s), g.end_time.value_or(full.end_s)};
}

inline std::string render_observe(const SemanticScript& script, const Observe& o) {
  std::string body;
  for (const auto& t : o.targets) {
    const auto entries =
        slice(script, t.video_index, {t.start_time, t.end_time}, Channel::events);
    if (entries.empty()) continue;
    if (!body.empty()) body += '\n';
    body += fmt::format("Video {} [{}s-{}s]: ", t.video_index, format_seconds(t.start_time),
                        format_seconds(t.end_time));
    for (std::size_t i = 0; i < entries.size(); ++i) {
      if (i) body += " | ";
      body += entries[i].text;
    }
  }
  if (body.empty()) return std::string(kNoEvidence);
  if (!o.focus_prompt.empty()) {
    std::string focus = o.focus_prompt;
    std::replace(focus.begin(), focus.end(), '\n', ' ');
    body = "FOCUS: " + focus + "\n" + body;
  }
  return body;
}

inline std::string render_captions(const SemanticScript& script, const GetCaption& g) {
  const auto entries = slice(script, g.video_index, caption_window(script, g), Channel::captions);
  if (entries.empty()) return std::string(kNoEvidence);
  std::string body;
  for (const auto& e : entries) {
    if (!body.empty()) body += '\n';
    body += fmt::format("[{}s - {}s]: {}", format_seconds(e.start_s), format_seconds(e.end_s),
                        e.text);
  }
  return body;
}

}  // namespace detail

// Deterministic slice-and-render simulator. Throws Error for an Answer action
// and UnknownVideoError for an index the script does not have.
inline Observation simulate(const SemanticScript& script, const AgentAction& action) {
  const auto t0 = std::chrono::steady_clock::now();
  Observation obs;
  if (const auto* o = std::get_if<Observe>(&action.body)) {
    obs.text = detail::render_observe(script, *o);
  } else if (const auto* g = std::get_if<GetCaption>(&action.body)) {
    obs.text = detail::render_captions(script, *g);
  } else {
    throw Error("simulate: answer actions are not executed by the environment");
  }
  obs.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return obs;
}

// Ground-truth slice text for an LLM-backed simulator: one line per event or
// caption overlapping the action's windows.
inline std::string render_script_slice(const SemanticScript& script, const AgentAction& action) {
  std::string out;
  auto emit = [&](int video, const std::vector<SliceEntry>& entries) {
    for (const auto& e : entries) {
      if (!out.empty()) out += '\n';
      out += fmt::format("Video {} [{}s - {}s]: {}", video, format_seconds(e.start_s),
                         format_seconds(e.end_s), e.text);
    }
  };
  if (const auto* o = std::get_if<Observe>(&action.body)) {
    for (const auto& t : o->targets)
      emit(t.video_index, slice(script, t.video_index, {t.start_time, t.end_time}, Channel::events));
  } else if (const auto* g = std::get_if<GetCaption>(&action.body)) {
    emit(g->video_index,
         slice(script, g->video_index, detail::caption_window(script, *g), Channel::captions));
  } else {
    throw Error("render_script_slice: answer actions have no slice");
  }
  return out;
}

inline std::string describe_query(const AgentAction& action) {
  if (const auto* o = std::get_if<Observe>(&action.body)) {
    std::string q;
    for (const auto& t : o->targets) {
      if (!q.empty()) q += "; ";
      q += fmt::format("observe video {} from {}s to {}s ({} frames)", t.video_index,
                       format_seconds(t.start_time), format_seconds(t.end_time), t.num_frames);
    }
    if (!o->focus_prompt.empty()) q += ". Focus: " + o->focus_prompt;
    return q;
  }
  if (const auto* g = std::get_if<GetCaption>(&action.body)) {
    if (!g->start_time && !g->end_time)
      return fmt::format("get captions of video {} (full range)", g->video_index);
    return fmt::format("get captions of video {} from {} to {}", g->video_index,
                       g->start_time ? format_seconds(*g->start_time) + "s" : "start",
                       g->end_time ? format_seconds(*g->end_time) + "s" : "end");
  }
  throw Error("describe_query: answer actions carry no query");
}

// Prompt for an LLM-backed simulator: the fixed system prompt, then a JSON
// object carrying the ground-truth slice and the query. Nothing is sent anywhere.
inline std::string compose_sim_prompt(std::string_view script_slice, const AgentAction& action) {
  if (!action.is_tool()) throw Error("compose_sim_prompt: tool action required");
  json payload = {{"video_script_ground_truth", std::string(script_slice)},
                  {"query", describe_query(action)}};
  std::string prompt(kSimulatorSystemPrompt);
  prompt += '\n';
  prompt += payload.dump(2);
  prompt += '\n';
  return prompt;
}

}  // namespace cvr
