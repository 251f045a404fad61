#pragma once

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cvr/script.hpp"

namespace cvr {

inline constexpr int kFrameBudget = 128;

struct ObserveTarget {
  int video_index = 1;
  double start_time = 0;
  double end_time = 0;
  int num_frames = 16;
  bool operator==(const ObserveTarget&) const = default;
};

struct Observe {
  std::vector<ObserveTarget> targets;
  std::string focus_prompt;
  bool operator==(const Observe&) const = default;
};

struct GetCaption {
  int video_index = 1;
  std::optional<double> start_time;
  std::optional<double> end_time;
  bool operator==(const GetCaption&) const = default;
};

struct Answer {
  AnswerValue final_answer;
  bool operator==(const Answer&) const = default;
};

enum class ActionKind { observe, get_caption, answer };

struct AgentAction {
  std::variant<Observe, GetCaption, Answer> body;
  std::string thought;

  ActionKind kind() const { return static_cast<ActionKind>(body.index()); }
  bool is_tool() const { return kind() != ActionKind::answer; }
  bool operator==(const AgentAction&) const = default;
};

inline std::string to_string(ActionKind k) {
  switch (k) {
    case ActionKind::observe: return "observe";
    case ActionKind::get_caption: return "get_caption";
    case ActionKind::answer: return "answer";
  }
  return "?";
}

inline int total_frames(const Observe& o) {
  int sum = 0;
  for (const auto& t : o.targets) sum += t.num_frames;
  return sum;
}

// ---------------------------------------------------------------------------
// Serialization to the wire format: {"action", "thought", "params"} for tool
// calls and {"action", "thought", "final_answer"} for answers.

inline json to_json(const AgentAction& a) {
  json out;
  out["action"] = to_string(a.kind());
  out["thought"] = a.thought;
  std::visit(
      [&](const auto& body) {
        using T = std::decay_t<decltype(body)>;
        if constexpr (std::is_same_v<T, Observe>) {
          json targets = json::array();
          for (const auto& t : body.targets)
            targets.push_back({{"video_index", t.video_index},
                               {"start_time", t.start_time},
                               {"end_time", t.end_time},
                               {"num_frames", t.num_frames}});
          out["params"] = {{"observation_targets", targets}, {"focus_prompt", body.focus_prompt}};
        } else if constexpr (std::is_same_v<T, GetCaption>) {
          json params = {{"video_index", body.video_index}};
          if (body.start_time) params["start_time"] = *body.start_time;
          if (body.end_time) params["end_time"] = *body.end_time;
          out["params"] = params;
        } else {
          out["final_answer"] = answer_value_json(body.final_answer);
        }
      },
      a.body);
  return out;
}

inline std::string serialize(const AgentAction& a) { return to_json(a).dump(); }

// ---------------------------------------------------------------------------
// Answer canonicalization

struct CanonicalAnswer {
  AnswerValue value;
  bool repaired = false;  // case, order, or whitespace had to be fixed
};

struct ShapeError {
  std::string expected;  // the pattern the value should have matched
};

using CanonicalizeResult = std::variant<CanonicalAnswer, ShapeError>;

namespace detail {

inline std::optional<std::string> letters_of(const json& value, bool& repaired) {
  std::string raw;
  if (value.is_string()) {
    raw = value.get<std::string>();
  } else if (value.is_array()) {
    for (const auto& item : value) {
      if (!item.is_string()) return std::nullopt;
      const std::string t = trim(item.get<std::string>());
      if (t.size() != 1) return std::nullopt;
      raw += t;
    }
  } else {
    return std::nullopt;
  }
  std::string out;
  for (char c : raw) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
      repaired = true;
      continue;
    }
    if (c >= 'a' && c <= 'z') {
      c = static_cast<char>(c - 'a' + 'A');
      repaired = true;
    }
    if (c < 'A' || c > 'Z') return std::nullopt;
    out += c;
  }
  return out;
}

}  // namespace detail

inline CanonicalizeResult canonicalize_answer(const json& value, TaskType task_type) {
  bool repaired = false;
  switch (task_type) {
    case TaskType::single_choice: {
      auto letters = detail::letters_of(value, repaired);
      if (!letters || letters->size() != 1) return ShapeError{"one option letter, e.g. \"D\""};
      return CanonicalAnswer{Letter{*letters}, repaired};
    }
    case TaskType::multi_select: {
      auto letters = detail::letters_of(value, repaired);
      if (!letters || letters->empty())
        return ShapeError{"option letters in alphabetical order, e.g. \"AC\""};
      std::string sorted = *letters;
      std::sort(sorted.begin(), sorted.end());
      if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        return ShapeError{"option letters without repeats, e.g. \"AC\""};
      if (sorted != *letters) repaired = true;
      return CanonicalAnswer{LetterSet{sorted}, repaired};
    }
    case TaskType::sequence: {
      if (!value.is_string()) return ShapeError{"an ordering string like \"3->5->4->2->1\""};
      const std::string raw = value.get<std::string>();
      std::string compact;
      for (char c : raw)
        if (c != ' ' && c != '\t' && c != '\n' && c != '\r') compact += c;
      if (compact != raw) repaired = true;
      if (!is_sequence_string(compact))
        return ShapeError{"an ordering string like \"3->5->4->2->1\""};
      return CanonicalAnswer{Sequence{compact}, repaired};
    }
    case TaskType::interval: {
      if (!value.is_array() || value.size() != 2 || !value[0].is_number() ||
          !value[1].is_number())
        return ShapeError{"a two-element list [start_seconds, end_seconds]"};
      Interval iv{value[0].get<double>(), value[1].get<double>()};
      if (!(iv.start_s < iv.end_s))
        return ShapeError{"[start_seconds, end_seconds] with start < end"};
      return CanonicalAnswer{iv, false};
    }
    case TaskType::free_form: {
      if (!value.is_string()) return ShapeError{"a free-text string"};
      const std::string raw = value.get<std::string>();
      const std::string t = trim(raw);
      return CanonicalAnswer{FreeText{t}, t != raw};
    }
  }
  return ShapeError{"unknown task type"};
}

// ---------------------------------------------------------------------------
// Parsing

// Constraint names recorded in ParseOutcome::violations.
namespace violation {
inline constexpr const char* not_json = "not_json";
inline constexpr const char* not_object = "not_object";
inline constexpr const char* multiple_actions = "multiple_actions";
inline constexpr const char* missing_action = "missing_action";
inline constexpr const char* unknown_action = "unknown_action";
inline constexpr const char* bad_thought = "bad_thought";
inline constexpr const char* missing_params = "missing_params";
inline constexpr const char* bad_params = "bad_params";
inline constexpr const char* no_targets = "no_targets";
inline constexpr const char* bad_video_index = "bad_video_index";
inline constexpr const char* video_index_out_of_range = "video_index_out_of_range";
inline constexpr const char* bad_time = "bad_time";
inline constexpr const char* inverted_window = "inverted_window";
inline constexpr const char* bad_num_frames = "bad_num_frames";
inline constexpr const char* frame_budget_exceeded = "frame_budget_exceeded";
inline constexpr const char* missing_final_answer = "missing_final_answer";
inline constexpr const char* answer_shape = "answer_shape";
inline constexpr const char* non_canonical_answer = "non_canonical_answer";
}  // namespace violation

struct ParseOutcome {
  // Set whenever the message decoded into an action, even one that broke a
  // constraint (an over-budget Observe, a repaired answer).
  std::optional<AgentAction> action;
  std::optional<std::string> failure;  // first blocking reason, when action is absent
  int attempt = 1;
  std::vector<std::string> violations;
  std::vector<std::string> repairs;  // answer repairs that were not counted as violations
  std::string detail;                // human-readable note on the first violation

  bool has(std::string_view name) const {
    return std::find(violations.begin(), violations.end(), name) != violations.end();
  }
};

struct ProtocolOptions {
  // When set, a repaired answer ("ca" -> "AC") is a format violation; otherwise
  // it is only logged in ParseOutcome::repairs.
  bool strict_answer_format = true;
  // Number of videos in the episode; 0 disables the range check.
  int video_count = 0;
};

namespace detail {

// Span of a balanced {...} starting at `open`, honoring JSON string escapes.
inline std::optional<std::size_t> balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return i;
  }
  return std::nullopt;
}

struct Extracted {
  json object;
  std::size_t end = 0;
};

inline std::optional<Extracted> first_object(std::string_view text, std::size_t from) {
  for (std::size_t pos = text.find('{', from); pos != std::string_view::npos;
       pos = text.find('{', pos + 1)) {
    auto end = balanced_end(text, pos);
    if (!end) continue;
    json parsed = json::parse(text.substr(pos, *end - pos + 1), nullptr, false);
    if (!parsed.is_discarded() && parsed.is_object()) return Extracted{std::move(parsed), *end};
  }
  return std::nullopt;
}

class ParseState {
 public:
  explicit ParseState(ParseOutcome& out) : out_(out) {}

  void violate(const char* name, std::string detail = {}) {
    if (out_.has(name)) return;
    out_.violations.emplace_back(name);
    if (out_.detail.empty()) out_.detail = detail.empty() ? std::string(name) : std::move(detail);
  }

 private:
  ParseOutcome& out_;
};

inline std::optional<int> as_int(const json& v) {
  if (v.is_number_integer()) return static_cast<int>(v.get<long long>());
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (d == std::floor(d) && std::abs(d) < 1e9) return static_cast<int>(d);
  }
  return std::nullopt;
}

inline std::optional<double> as_time(const json& v) {
  if (!v.is_number()) return std::nullopt;
  const double d = v.get<double>();
  if (!std::isfinite(d) || d < 0) return std::nullopt;
  return d;
}

inline bool index_ok(ParseState& ps, const json& v, const ProtocolOptions& opts, int& out) {
  auto idx = as_int(v);
  if (!idx || *idx < 1) {
    ps.violate(violation::bad_video_index, "video_index must be a positive integer");
    return false;
  }
  if (opts.video_count > 0 && *idx > opts.video_count) {
    ps.violate(violation::video_index_out_of_range,
               fmt::format("video_index {} out of range 1-{}", *idx, opts.video_count));
    return false;
  }
  out = *idx;
  return true;
}

inline std::optional<Observe> parse_observe(ParseState& ps, const json& params,
                                            const ProtocolOptions& opts) {
  auto it = params.find("observation_targets");
  if (it == params.end() || !it->is_array()) {
    ps.violate(violation::bad_params, "observe requires an observation_targets list");
    return std::nullopt;
  }
  if (it->empty()) {
    ps.violate(violation::no_targets, "observation_targets must not be empty");
    return std::nullopt;
  }
  Observe o;
  bool ok = true;
  for (const auto& t : *it) {
    if (!t.is_object()) {
      ps.violate(violation::bad_params, "each observation target must be an object");
      ok = false;
      continue;
    }
    ObserveTarget target;
    if (!t.contains("video_index") || !index_ok(ps, t["video_index"], opts, target.video_index))
      ok = false;
    auto start = t.contains("start_time") ? as_time(t["start_time"]) : std::nullopt;
    auto end = t.contains("end_time") ? as_time(t["end_time"]) : std::nullopt;
    if (!start || !end) {
      ps.violate(violation::bad_time, "start_time and end_time must be non-negative numbers");
      ok = false;
    } else if (*start > *end) {
      ps.violate(violation::inverted_window, "start_time must not exceed end_time");
      ok = false;
    } else {
      target.start_time = *start;
      target.end_time = *end;
    }
    auto frames = t.contains("num_frames") ? as_int(t["num_frames"]) : std::nullopt;
    if (!frames || *frames < 1) {
      ps.violate(violation::bad_num_frames, "num_frames must be a positive integer");
      ok = false;
    } else {
      target.num_frames = *frames;
    }
    o.targets.push_back(target);
  }
  if (auto f = params.find("focus_prompt"); f != params.end()) {
    if (f->is_string()) o.focus_prompt = f->get<std::string>();
    else ps.violate(violation::bad_params, "focus_prompt must be a string");
  }
  if (!ok) return std::nullopt;
  if (total_frames(o) > kFrameBudget)
    ps.violate(violation::frame_budget_exceeded,
               fmt::format("total num_frames {} exceeds {}", total_frames(o), kFrameBudget));
  return o;
}

inline std::optional<GetCaption> parse_caption(ParseState& ps, const json& params,
                                               const ProtocolOptions& opts) {
  GetCaption g;
  if (!params.contains("video_index")) {
    ps.violate(violation::bad_params, "get_caption requires video_index");
    return std::nullopt;
  }
  if (!index_ok(ps, params["video_index"], opts, g.video_index)) return std::nullopt;
  for (auto [key, slot] : {std::pair{"start_time", &g.start_time}, {"end_time", &g.end_time}}) {
    auto it = params.find(key);
    if (it == params.end() || it->is_null()) continue;
    auto t = as_time(*it);
    if (!t) {
      ps.violate(violation::bad_time, fmt::format("{} must be a non-negative number", key));
      return std::nullopt;
    }
    *slot = *t;
  }
  if (g.start_time && g.end_time && *g.start_time > *g.end_time) {
    ps.violate(violation::inverted_window, "start_time must not exceed end_time");
    return std::nullopt;
  }
  return g;
}

}  // namespace detail

// Lenient extraction, strict validation: the first JSON object found in `raw`
// (prose and code fences around it are tolerated) is decoded into an action and
// checked against every protocol constraint. Never throws.
inline ParseOutcome parse_action(std::string_view raw, TaskType task_type,
                                 const ProtocolOptions& opts = {}) {
  ParseOutcome out;
  detail::ParseState ps(out);
  auto extracted = detail::first_object(raw, 0);
  if (!extracted) {
    ps.violate(violation::not_json, "no JSON object could be parsed from the response");
    out.failure = violation::not_json;
    return out;
  }
  if (detail::first_object(raw, extracted->end + 1))
    ps.violate(violation::multiple_actions, "only one JSON operation is allowed per message");

  const json& obj = extracted->object;
  std::string thought;
  if (auto it = obj.find("thought"); it != obj.end()) {
    if (it->is_string()) thought = it->get<std::string>();
    else ps.violate(violation::bad_thought, "thought must be a string");
  }

  auto fail = [&](const char* name, std::string detail) {
    ps.violate(name, std::move(detail));
    out.failure = out.violations.front();
    return out;
  };

  auto action_it = obj.find("action");
  if (action_it == obj.end() || !action_it->is_string())
    return fail(violation::missing_action, "missing string field \"action\"");
  const std::string name = action_it->get<std::string>();

  if (name == "answer") {
    auto fa = obj.find("final_answer");
    if (fa == obj.end()) return fail(violation::missing_final_answer, "answer needs final_answer");
    auto canon = canonicalize_answer(*fa, task_type);
    if (auto* err = std::get_if<ShapeError>(&canon))
      return fail(violation::answer_shape, "final_answer must be " + err->expected);
    auto& ok = std::get<CanonicalAnswer>(canon);
    if (ok.repaired) {
      if (opts.strict_answer_format)
        ps.violate(violation::non_canonical_answer,
                   fmt::format("final_answer should be written as {}",
                               answer_value_json(ok.value).dump()));
      else
        out.repairs.push_back(fmt::format("{} -> {}", fa->dump(), answer_value_json(ok.value).dump()));
    }
    out.action = AgentAction{Answer{ok.value}, thought};
    return out;
  }

  if (name != "observe" && name != "get_caption")
    return fail(violation::unknown_action, fmt::format("unknown action '{}'", name));
  auto params = obj.find("params");
  if (params == obj.end() || !params->is_object())
    return fail(violation::missing_params, fmt::format("{} requires a params object", name));

  if (name == "observe") {
    if (auto o = detail::parse_observe(ps, *params, opts)) out.action = AgentAction{*o, thought};
  } else {
    if (auto g = detail::parse_caption(ps, *params, opts)) out.action = AgentAction{*g, thought};
  }
  if (!out.action) out.failure = out.violations.front();
  return out;
}

// Sole input to the formatting reward.
inline bool is_format_valid(const ParseOutcome& o) {
  return o.action.has_value() && o.violations.empty();
}

// Whether the engine may still act on the outcome once retries run out: only
// answer-repair violations leave a usable action behind.
inline bool is_executable(const ParseOutcome& o) {
  if (!o.action) return false;
  for (const auto& v : o.violations)
    if (v != violation::non_canonical_answer) return false;
  return true;
}

// Corrective system message injected before the next attempt.
inline std::string build_retry_message(int attempt, const ParseOutcome& failure) {
  if (attempt < 1) throw Error("build_retry_message: attempt must be >= 1");
  if (is_format_valid(failure))
    throw Error("build_retry_message: outcome has no violation to correct");

  std::string msg = fmt::format("!Format issue on attempt {}: {}. Send the action again.", attempt,
                                failure.detail.empty() ? failure.violations.front()
                                                       : failure.detail);
  if (failure.has(violation::frame_budget_exceeded))
    msg += fmt::format(
        "\nFrame budget: the num_frames values of one observe call may add up to at most {}.",
        kFrameBudget);
  msg +=
      "\nReply with exactly one JSON object using the keys \"action\", \"thought\", and "
      "\"params\" (or \"final_answer\" for the answer action).";
  if (attempt >= 2) {
    msg +=
        "\nMinimal valid example:\n"
        R"({"action": "get_caption", "thought": "Collect the narration first.", "params": {"video_index": 1}})";
  }
  return msg;
}

}  // namespace cvr
