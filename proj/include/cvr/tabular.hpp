#pragma once

#include <cmath>
#include <compare>
#include <cstdio>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "cvr/action.hpp"
#include "cvr/state.hpp"

namespace cvr {

// ---------------------------------------------------------------------------
// Discrete state features for the desk-scale policy.

enum class LastAction { none, observe, get_caption };

inline std::string to_string(LastAction a) {
  switch (a) {
    case LastAction::none: return "none";
    case LastAction::observe: return "observe";
    case LastAction::get_caption: return "get_caption";
  }
  return "?";
}

struct StateKey {
  int turn_index = 0;
  LastAction last_action = LastAction::none;
  int obs_bucket = 0;
  auto operator<=>(const StateKey&) const = default;
};

inline StateKey make_state_key(const EpisodeState& state, int bucket_count) {
  StateKey key{state.turn, LastAction::none, 0};
  if (state.history.empty()) return key;
  const HistoryEntry& last = state.history.back();
  if (last.action && last.action->is_tool())
    key.last_action =
        last.action->kind() == ActionKind::observe ? LastAction::observe : LastAction::get_caption;
  key.obs_bucket = static_cast<int>(fnv1a(last.observation.text) %
                                    static_cast<std::uint64_t>(std::max(1, bucket_count)));
  return key;
}

// Every key reachable within `max_turns` turns.
inline std::vector<StateKey> enumerate_state_keys(int max_turns, int bucket_count) {
  std::vector<StateKey> keys;
  for (int t = 0; t < max_turns; ++t)
    for (auto a : {LastAction::none, LastAction::observe, LastAction::get_caption})
      for (int b = 0; b < bucket_count; ++b) keys.push_back({t, a, b});
  return keys;
}

// ---------------------------------------------------------------------------
// Action templates: the discrete action set of the tabular policy. Each one
// instantiates into raw action text from the task descriptor and the history.

enum class TemplateKind {
  observe_all,           // every video, full range, frame budget split evenly
  observe_video,         // one video, full range
  caption_video,         // one video's captions, full range
  answer_from_evidence,  // answer built from observations naming the quoted phrase
  answer_guess,          // first option / first half of video 2
  emit_prose,            // malformed: no JSON at all
};

struct ActionTemplate {
  TemplateKind kind = TemplateKind::observe_all;
  int video_index = 0;  // for observe_video / caption_video
  bool operator==(const ActionTemplate&) const = default;
};

inline std::string template_name(const ActionTemplate& t) {
  switch (t.kind) {
    case TemplateKind::observe_all: return "observe_all";
    case TemplateKind::observe_video: return fmt::format("observe_video:{}", t.video_index);
    case TemplateKind::caption_video: return fmt::format("caption_video:{}", t.video_index);
    case TemplateKind::answer_from_evidence: return "answer_from_evidence";
    case TemplateKind::answer_guess: return "answer_guess";
    case TemplateKind::emit_prose: return "emit_prose";
  }
  return "?";
}

inline std::optional<ActionTemplate> parse_template_name(std::string_view name) {
  auto with_index = [&](std::string_view prefix, TemplateKind kind) -> std::optional<ActionTemplate> {
    if (name.substr(0, prefix.size()) != prefix) return std::nullopt;
    try {
      return ActionTemplate{kind, std::stoi(std::string(name.substr(prefix.size())))};
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };
  if (name == "observe_all") return ActionTemplate{TemplateKind::observe_all, 0};
  if (name == "answer_from_evidence") return ActionTemplate{TemplateKind::answer_from_evidence, 0};
  if (name == "answer_guess") return ActionTemplate{TemplateKind::answer_guess, 0};
  if (name == "emit_prose") return ActionTemplate{TemplateKind::emit_prose, 0};
  if (auto t = with_index("observe_video:", TemplateKind::observe_video)) return t;
  return with_index("caption_video:", TemplateKind::caption_video);
}

inline std::vector<ActionTemplate> default_template_set() {
  return {{TemplateKind::observe_all, 0},          {TemplateKind::observe_video, 1},
          {TemplateKind::observe_video, 2},        {TemplateKind::caption_video, 1},
          {TemplateKind::caption_video, 2},        {TemplateKind::answer_from_evidence, 0},
          {TemplateKind::answer_guess, 0},         {TemplateKind::emit_prose, 0}};
}

inline constexpr std::string_view kProseOutput =
    "Let me think about which video to look at next before deciding.";

namespace detail {

inline std::string action_text(const AgentAction& a) { return serialize(a); }

// Videos whose Observe lines mention the phrase.
inline std::vector<int> videos_observed_with(const EpisodeState& state, const std::string& phrase) {
  std::vector<int> hits;
  for (const auto& h : state.history) {
    if (!h.action || h.refused || h.action->kind() != ActionKind::observe) continue;
    std::size_t pos = 0;
    const std::string& text = h.observation.text;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string_view line(text.data() + pos, end - pos);
      int video = 0;
      if (line.substr(0, 6) == "Video " && line.find(phrase) != std::string_view::npos &&
          std::sscanf(std::string(line).c_str(), "Video %d", &video) == 1 &&
          std::find(hits.begin(), hits.end(), video) == hits.end())
        hits.push_back(video);
      pos = end + 1;
    }
  }
  std::sort(hits.begin(), hits.end());
  return hits;
}

// First caption line outside video 1 that mentions the phrase.
inline std::optional<Interval> caption_interval_with(const EpisodeState& state,
                                                     const std::string& phrase) {
  for (const auto& h : state.history) {
    if (!h.action || h.refused || h.action->kind() != ActionKind::get_caption) continue;
    if (std::get<GetCaption>(h.action->body).video_index == 1) continue;
    std::size_t pos = 0;
    const std::string& text = h.observation.text;
    while (pos < text.size()) {
      auto end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      double s = 0, e = 0;
      if (line.find(phrase) != std::string::npos &&
          std::sscanf(line.c_str(), "[%lfs - %lfs]", &s, &e) == 2 && s < e)
        return Interval{s, e};
      pos = end + 1;
    }
  }
  return std::nullopt;
}

inline std::optional<std::string> instantiate_answer(const ActionTemplate& t,
                                                     const EpisodeTask& task,
                                                     const EpisodeState& state) {
  auto answer = [](AnswerValue v, std::string thought) {
    return action_text(AgentAction{Answer{std::move(v)}, std::move(thought)});
  };
  if (t.kind == TemplateKind::answer_guess) {
    switch (task.task_type) {
      case TaskType::single_choice: return answer(Letter{"A"}, "Guessing the first option.");
      case TaskType::multi_select: return answer(LetterSet{"A"}, "Guessing the first option.");
      case TaskType::interval:
        if (task.video_count() < 2) return std::nullopt;
        return answer(Interval{0.0, task.durations_s[1] / 2}, "Guessing the first half of video 2.");
      default: return std::nullopt;
    }
  }
  auto phrase = quoted_phrase(task.question);
  if (!phrase) return std::nullopt;
  switch (task.task_type) {
    case TaskType::single_choice:
    case TaskType::multi_select: {
      auto videos = videos_observed_with(state, *phrase);
      if (videos.empty()) return std::nullopt;
      std::string letters;
      for (int v : videos) letters += static_cast<char>('A' + v - 1);
      const std::string thought = "Answering with the videos whose observations show the behavior.";
      if (task.task_type == TaskType::single_choice) return answer(Letter{letters.substr(0, 1)}, thought);
      return answer(LetterSet{letters}, thought);
    }
    case TaskType::interval: {
      auto iv = caption_interval_with(state, *phrase);
      if (!iv) return std::nullopt;
      return answer(*iv, "The matching narration gives the interval.");
    }
    default: return std::nullopt;
  }
}

}  // namespace detail

// Raw action text for a template, or nullopt when the template does not apply
// (video out of range, no usable evidence yet, unsupported task type).
inline std::optional<std::string> instantiate_template(const ActionTemplate& t,
                                                       const EpisodeTask& task,
                                                       const EpisodeState& state) {
  const int n = task.video_count();
  switch (t.kind) {
    case TemplateKind::observe_all: {
      if (n < 1) return std::nullopt;
      Observe o;
      const int frames = std::max(1, kFrameBudget / n);
      for (int i = 1; i <= n; ++i) o.targets.push_back({i, 0.0, task.durations_s[i - 1], frames});
      o.focus_prompt = "Overview of every video.";
      return detail::action_text(AgentAction{o, "Scan all videos to establish a baseline."});
    }
    case TemplateKind::observe_video: {
      if (t.video_index < 1 || t.video_index > n) return std::nullopt;
      Observe o{{{t.video_index, 0.0, task.durations_s[t.video_index - 1], 32}}, ""};
      return detail::action_text(
          AgentAction{o, fmt::format("Look closely at video {}.", t.video_index)});
    }
    case TemplateKind::caption_video: {
      if (t.video_index < 1 || t.video_index > n) return std::nullopt;
      return detail::action_text(
          AgentAction{GetCaption{t.video_index, std::nullopt, std::nullopt},
                      fmt::format("Read the narration of video {}.", t.video_index)});
    }
    case TemplateKind::answer_from_evidence:
    case TemplateKind::answer_guess: return detail::instantiate_answer(t, task, state);
    case TemplateKind::emit_prose: return std::string(kProseOutput);
  }
  return std::nullopt;
}

inline std::string fallback_action_text() {
  return serialize(AgentAction{GetCaption{1, std::nullopt, std::nullopt}, "Fallback: read video 1."});
}

// ---------------------------------------------------------------------------
// Softmax helpers

inline std::vector<double> softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0;
  for (std::size_t k = 0; k < logits.size(); ++k) z += (p[k] = std::exp(logits[k] - m));
  for (auto& v : p) v /= z;
  return p;
}

inline std::vector<double> log_softmax(const std::vector<double>& logits) {
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (double l : logits) z += std::exp(l - m);
  const double lse = m + std::log(z);
  std::vector<double> out(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) out[k] = logits[k] - lse;
  return out;
}

inline double entropy(const std::vector<double>& logits) {
  const auto lp = log_softmax(logits);
  double h = 0;
  for (double l : lp) h -= std::exp(l) * l;
  return h;
}

// Categorical KL(p || q) between the softmax distributions of two logit rows.
inline double categorical_kl(const std::vector<double>& p_logits, const std::vector<double>& q_logits) {
  const auto lp = log_softmax(p_logits);
  const auto lq = log_softmax(q_logits);
  double kl = 0;
  for (std::size_t k = 0; k < lp.size(); ++k) kl += std::exp(lp[k]) * (lp[k] - lq[k]);
  return std::max(0.0, kl);
}

// ---------------------------------------------------------------------------

// Tabular softmax policy parameters. Rows absent from `logits` are uniform
// (all-zero logits); they are created on first write.
struct PolicyParams {
  std::vector<ActionTemplate> templates = default_template_set();
  std::map<StateKey, std::vector<double>> logits;
  int bucket_count = 16;

  int num_templates() const { return static_cast<int>(templates.size()); }

  std::vector<double> row(const StateKey& key) const {
    auto it = logits.find(key);
    return it == logits.end() ? std::vector<double>(templates.size(), 0.0) : it->second;
  }

  std::vector<double>& row_mut(const StateKey& key) {
    auto it = logits.find(key);
    if (it == logits.end()) it = logits.emplace(key, std::vector<double>(templates.size(), 0.0)).first;
    return it->second;
  }

  bool compatible(const PolicyParams& other) const {
    return templates == other.templates && bucket_count == other.bucket_count;
  }
};

inline json to_json(const PolicyParams& p) {
  json templates = json::array();
  for (const auto& t : p.templates) templates.push_back(template_name(t));
  json rows = json::array();
  for (const auto& [key, logits] : p.logits)
    rows.push_back({{"turn", key.turn_index},
                    {"last_action", to_string(key.last_action)},
                    {"bucket", key.obs_bucket},
                    {"logits", logits}});
  return {{"templates", templates}, {"bucket_count", p.bucket_count}, {"rows", rows}};
}

inline PolicyParams policy_params_from_json(const json& doc) {
  PolicyParams p;
  p.templates.clear();
  for (const auto& name : doc.at("templates")) {
    auto t = parse_template_name(name.get<std::string>());
    if (!t) throw Error("unknown action template '" + name.get<std::string>() + "'");
    p.templates.push_back(*t);
  }
  if (p.templates.empty()) throw Error("policy params need at least one template");
  p.bucket_count = doc.value("bucket_count", 16);
  for (const auto& row : doc.at("rows")) {
    StateKey key{row.at("turn").get<int>(), LastAction::none, row.at("bucket").get<int>()};
    const auto last = row.at("last_action").get<std::string>();
    if (last == "observe") key.last_action = LastAction::observe;
    else if (last == "get_caption") key.last_action = LastAction::get_caption;
    else if (last != "none") throw Error("unknown last_action '" + last + "'");
    auto logits = row.at("logits").get<std::vector<double>>();
    if (static_cast<int>(logits.size()) != p.num_templates())
      throw Error("policy row width does not match the template set");
    p.logits[key] = std::move(logits);
  }
  return p;
}

}  // namespace cvr
