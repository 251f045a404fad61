#pragma once

#include <string>

#include "cvr/script.hpp"

namespace fixtures {

using cvr::json;

// Two cooking videos; video 2 carries the shrimp step at 85.88-105.24.
inline json shrimp_doc() {
  return json::parse(R"({
    "script_id": "fsa-shrimp",
    "task_tag": "FSA",
    "task_type": "interval",
    "question": "Video 1 shows the cook peeling shrimp at 40s-52s. Where does the equivalent step happen in Video 2?",
    "gold": {"kind": "interval", "value": [86.0, 104.0]},
    "videos": [
      {"video_index": 1, "duration_s": 120.0,
       "events": [
         {"start_s": 5.0, "end_s": 12.0, "visual": "A woman lays out rice paper sheets"},
         {"start_s": 40.0, "end_s": 52.0, "visual": "A woman peels shrimp and halves them"}
       ],
       "captions": [
         {"start_s": 40.0, "end_s": 52.0, "text": "Peel the shrimp and slice each one in half."}
       ]},
      {"video_index": 2, "duration_s": 180.0,
       "events": [
         {"start_s": 10.0, "end_s": 20.0, "visual": "A man boils water in a pot"},
         {"start_s": 86.0, "end_s": 104.0, "visual": "A man peels cooked shrimp and cuts them lengthwise"}
       ],
       "captions": [
         {"start_s": 10.0, "end_s": 20.0, "text": "First, bring the water to a boil."},
         {"start_s": 85.88, "end_s": 105.24, "text": "Now wash and peel eight large cooked shrimp and cut them in half."}
       ]}
    ]
  })");
}

// Four-option single choice; gold D.
inline json choice_doc() {
  return json::parse(R"({
    "script_id": "nc-choice",
    "task_tag": "NC",
    "task_type": "single_choice",
    "question": "Which video's narrator mentions the oven temperature?",
    "options": {"A": "Video 1 only", "B": "Video 2 only", "C": "Neither", "D": "Both"},
    "gold": {"kind": "letter", "value": "D"},
    "videos": [
      {"video_index": 1, "duration_s": 60.0,
       "events": [{"start_s": 0.0, "end_s": 10.0, "visual": "A baker preheats the oven"}],
       "captions": [{"start_s": 0.0, "end_s": 10.0, "text": "Set the oven to 200 degrees."}]},
      {"video_index": 2, "duration_s": 90.0,
       "events": [{"start_s": 30.0, "end_s": 45.0, "visual": "A tray slides into an oven"}],
       "captions": [{"start_s": 30.0, "end_s": 45.0, "text": "Bake at 180 for twenty minutes."}]}
    ]
  })");
}

// Free-form comparison used by the malformed-output replay.
inline json breading_doc() {
  return json::parse(R"({
    "script_id": "ccqa-breading",
    "task_tag": "CCQA",
    "task_type": "free_form",
    "question": "How do the tools used for breading differ between the two videos?",
    "gold": {"kind": "free_text", "value": "Hands versus a fork."},
    "videos": [
      {"video_index": 1, "duration_s": 300.0,
       "events": [{"start_s": 100.0, "end_s": 140.0, "visual": "Hands press crumbs onto the cutlet in a metal bowl"}],
       "captions": [{"start_s": 90.0, "end_s": 100.0, "text": "Flour, then egg, then breadcrumbs."}]},
      {"video_index": 2, "duration_s": 240.0,
       "events": [{"start_s": 60.0, "end_s": 90.0, "visual": "A fork lifts the cutlet out of a tray of beaten egg"}],
       "captions": [{"start_s": 55.0, "end_s": 60.0, "text": "Use a fork so you don't bread your fingers."}]}
    ]
  })");
}

inline cvr::SemanticScript load(const json& doc) {
  auto r = cvr::validate_script(doc);
  if (!r.ok()) throw cvr::Error("fixture does not validate: " + r.errors.front().path + " " + r.errors.front().message);
  return *r.script;
}

inline std::string caption_call(int video) {
  return fmt::format(R"({{"action": "get_caption", "thought": "listen to video {0}", "params": {{"video_index": {0}}}}})", video);
}

inline std::string observe_call(int video, double t0, double t1, int frames = 32) {
  return fmt::format(
      R"({{"action": "observe", "thought": "look at video {0}", "params": {{"observation_targets": [{{"video_index": {0}, "start_time": {1}, "end_time": {2}, "num_frames": {3}}}], "focus_prompt": "what happens here"}}}})",
      video, t0, t1, frames);
}

inline std::string answer_call(const std::string& final_answer_json) {
  return R"({"action": "answer", "thought": "done", "final_answer": )" + final_answer_json + "}";
}

}  // namespace fixtures
