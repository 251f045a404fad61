#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cvr/common.hpp"

namespace cvr {

using json = nlohmann::json;

enum class TaskType { single_choice, multi_select, sequence, interval, free_form };

inline constexpr std::array<TaskType, 5> kAllTaskTypes = {
    TaskType::single_choice, TaskType::multi_select, TaskType::sequence,
    TaskType::interval, TaskType::free_form};

inline std::string to_string(TaskType t) {
  switch (t) {
    case TaskType::single_choice: return "single_choice";
    case TaskType::multi_select: return "multi_select";
    case TaskType::sequence: return "sequence";
    case TaskType::interval: return "interval";
    case TaskType::free_form: return "free_form";
  }
  return "?";
}

inline std::optional<TaskType> parse_task_type(std::string_view s) {
  for (auto t : kAllTaskTypes)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

inline bool is_choice_task(TaskType t) {
  return t == TaskType::single_choice || t == TaskType::multi_select;
}

// ---------------------------------------------------------------------------
// Answer values. The same shapes serve as gold answers and as canonicalized
// predictions.

struct Letter {
  std::string value;
  bool operator==(const Letter&) const = default;
};
struct LetterSet {
  std::string value;  // strictly ascending uppercase letters
  bool operator==(const LetterSet&) const = default;
};
struct Sequence {
  std::string value;  // "3->5->4->2->1"
  bool operator==(const Sequence&) const = default;
};
struct Interval {
  double start_s = 0;
  double end_s = 0;
  bool operator==(const Interval&) const = default;
};
struct FreeText {
  std::string text;
  bool operator==(const FreeText&) const = default;
};

using AnswerValue = std::variant<Letter, LetterSet, Sequence, Interval, FreeText>;
using GoldAnswer = AnswerValue;

// The task type whose answers take this shape.
inline TaskType task_type_of(const AnswerValue& a) {
  return static_cast<TaskType>(a.index());
}

inline std::string kind_name(const AnswerValue& a) {
  static constexpr std::array<const char*, 5> names = {"letter", "letter_set", "sequence",
                                                       "interval", "free_text"};
  return names[a.index()];
}

// Wire value as it appears in an action's "final_answer".
inline json answer_value_json(const AnswerValue& a) {
  return std::visit(
      [](const auto& v) -> json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Interval>) return json::array({v.start_s, v.end_s});
        else if constexpr (std::is_same_v<T, FreeText>) return v.text;
        else return v.value;
      },
      a);
}

inline json to_json(const GoldAnswer& g) {
  return json{{"kind", kind_name(g)}, {"value", answer_value_json(g)}};
}

inline std::string answer_to_string(const AnswerValue& a) {
  if (const auto* iv = std::get_if<Interval>(&a))
    return fmt::format("[{}, {}]", iv->start_s, iv->end_s);
  return answer_value_json(a).get<std::string>();
}

inline bool is_sequence_string(const std::string& s) {
  static const std::regex re(R"(\d+(->\d+)+)");
  return std::regex_match(s, re);
}

inline bool is_strict_letter_set(const std::string& s) {
  if (s.empty()) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] < 'A' || s[i] > 'Z') return false;
    if (i > 0 && s[i - 1] >= s[i]) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

struct TimedEvent {
  double start_s = 0;
  double end_s = 0;
  std::string visual;
  bool operator==(const TimedEvent&) const = default;
};

struct TimedCaption {
  double start_s = 0;
  double end_s = 0;
  std::string text;  // may be empty: a silent interval
  bool operator==(const TimedCaption&) const = default;
};

struct VideoScript {
  int video_index = 1;  // 1-based, equals position in the script
  double duration_s = 0;
  std::vector<TimedEvent> events;
  std::vector<TimedCaption> captions;
  bool operator==(const VideoScript&) const = default;
};

struct SemanticScript {
  std::string script_id;
  std::string task_tag;  // benchmark task label (BU, FSA, ...); defaults to task type name
  TaskType task_type = TaskType::single_choice;
  std::string question;
  std::optional<std::map<std::string, std::string>> options;
  GoldAnswer gold;
  std::vector<VideoScript> videos;

  bool operator==(const SemanticScript&) const = default;

  const VideoScript* find_video(int video_index) const {
    if (video_index < 1 || video_index > static_cast<int>(videos.size())) return nullptr;
    return &videos[video_index - 1];
  }
};

class UnknownVideoError : public Error {
 public:
  explicit UnknownVideoError(int index)
      : Error(fmt::format("unknown video_index {}", index)), index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

// ---------------------------------------------------------------------------
// Serialization

inline json to_json(const SemanticScript& s) {
  json doc;
  doc["script_id"] = s.script_id;
  if (!s.task_tag.empty()) doc["task_tag"] = s.task_tag;
  doc["task_type"] = to_string(s.task_type);
  doc["question"] = s.question;
  if (s.options) doc["options"] = *s.options;
  doc["gold"] = to_json(s.gold);
  json videos = json::array();
  for (const auto& v : s.videos) {
    json events = json::array();
    for (const auto& e : v.events)
      events.push_back({{"start_s", e.start_s}, {"end_s", e.end_s}, {"visual", e.visual}});
    json captions = json::array();
    for (const auto& c : v.captions)
      captions.push_back({{"start_s", c.start_s}, {"end_s", c.end_s}, {"text", c.text}});
    videos.push_back({{"video_index", v.video_index},
                      {"duration_s", v.duration_s},
                      {"events", events},
                      {"captions", captions}});
  }
  doc["videos"] = videos;
  return doc;
}

inline std::string serialize(const SemanticScript& s) { return to_json(s).dump(); }

// ---------------------------------------------------------------------------
// Validation

struct ValidationError {
  std::string path;
  std::string message;
};

struct ValidationResult {
  std::optional<SemanticScript> script;
  std::vector<ValidationError> errors;
  bool ok() const { return script.has_value(); }
};

namespace detail {

class Checker {
 public:
  void fail(std::string path, std::string message) {
    errors.push_back({std::move(path), std::move(message)});
  }

  const json* field(const json& obj, const std::string& path, const char* key,
                    bool required = true) {
    if (!obj.is_object()) return nullptr;
    auto it = obj.find(key);
    if (it == obj.end()) {
      if (required) fail(join(path, key), "missing field");
      return nullptr;
    }
    return &*it;
  }

  std::optional<std::string> string_at(const json& obj, const std::string& path,
                                       const char* key, bool required = true) {
    const json* v = field(obj, path, key, required);
    if (!v) return std::nullopt;
    if (!v->is_string()) {
      fail(join(path, key), "expected string");
      return std::nullopt;
    }
    return v->get<std::string>();
  }

  std::optional<double> number_at(const json& obj, const std::string& path, const char* key) {
    const json* v = field(obj, path, key);
    if (!v) return std::nullopt;
    if (!v->is_number()) {
      fail(join(path, key), "expected number");
      return std::nullopt;
    }
    return v->get<double>();
  }

  static std::string join(const std::string& path, const char* key) {
    return path.empty() ? std::string(key) : path + "." + key;
  }

  static std::string index(const std::string& path, std::size_t i) {
    return fmt::format("{}[{}]", path, i);
  }

  std::vector<ValidationError> errors;
};

inline std::optional<GoldAnswer> check_gold(Checker& ck, const json& doc) {
  const json* gold = ck.field(doc, "", "gold");
  if (!gold) return std::nullopt;
  if (!gold->is_object()) {
    ck.fail("gold", "expected object");
    return std::nullopt;
  }
  auto kind = ck.string_at(*gold, "gold", "kind");
  const json* value = ck.field(*gold, "gold", "value");
  if (!kind || !value) return std::nullopt;

  auto str_value = [&]() -> std::optional<std::string> {
    if (!value->is_string()) {
      ck.fail("gold.value", "expected string");
      return std::nullopt;
    }
    return value->get<std::string>();
  };

  if (*kind == "letter") {
    auto s = str_value();
    if (!s) return std::nullopt;
    if (s->size() != 1 || (*s)[0] < 'A' || (*s)[0] > 'Z') {
      ck.fail("gold.value", "letter must be one uppercase character");
      return std::nullopt;
    }
    return Letter{*s};
  }
  if (*kind == "letter_set") {
    auto s = str_value();
    if (!s) return std::nullopt;
    if (!is_strict_letter_set(*s)) {
      ck.fail("gold.value", "letter set must be strictly ascending uppercase letters");
      return std::nullopt;
    }
    return LetterSet{*s};
  }
  if (*kind == "sequence") {
    auto s = str_value();
    if (!s) return std::nullopt;
    if (!is_sequence_string(*s)) {
      ck.fail("gold.value", "sequence must match \\d+(->\\d+)+");
      return std::nullopt;
    }
    return Sequence{*s};
  }
  if (*kind == "interval") {
    if (!value->is_array() || value->size() != 2 || !(*value)[0].is_number() ||
        !(*value)[1].is_number()) {
      ck.fail("gold.value", "interval must be [start_s, end_s]");
      return std::nullopt;
    }
    Interval iv{(*value)[0].get<double>(), (*value)[1].get<double>()};
    if (!(iv.start_s < iv.end_s)) {
      ck.fail("gold.value", "interval requires start_s < end_s");
      return std::nullopt;
    }
    return iv;
  }
  if (*kind == "free_text") {
    auto s = str_value();
    if (!s) return std::nullopt;
    return FreeText{*s};
  }
  ck.fail("gold.kind", fmt::format("unknown kind '{}'", *kind));
  return std::nullopt;
}

template <typename Entry>
void check_entries(Checker& ck, const json& video, const std::string& vpath, const char* key,
                   const char* text_key, std::optional<double> duration,
                   std::vector<Entry>& out) {
  const json* arr = ck.field(video, vpath, key);
  if (!arr) return;
  const std::string path = Checker::join(vpath, key);
  if (!arr->is_array()) {
    ck.fail(path, "expected array");
    return;
  }
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const json& item = (*arr)[i];
    const std::string ipath = Checker::index(path, i);
    if (!item.is_object()) {
      ck.fail(ipath, "expected object");
      continue;
    }
    auto start = ck.number_at(item, ipath, "start_s");
    auto end = ck.number_at(item, ipath, "end_s");
    auto text = ck.string_at(item, ipath, text_key);
    if (!start || !end || !text) continue;
    bool ok = true;
    if (*start < 0) {
      ck.fail(Checker::join(ipath, "start_s"), "must be >= 0");
      ok = false;
    }
    if (*end < *start) {
      ck.fail(Checker::join(ipath, "end_s"), "must be >= start_s");
      ok = false;
    }
    if (duration && *end > *duration) {
      ck.fail(Checker::join(ipath, "end_s"), "must be <= duration_s");
      ok = false;
    }
    if constexpr (std::is_same_v<Entry, TimedEvent>) {
      if (text->empty()) {
        ck.fail(Checker::join(ipath, "visual"), "must be non-empty");
        ok = false;
      }
    }
    if (!out.empty()) {
      const auto& prev = out.back();
      if (*start < prev.start_s || (*start == prev.start_s && *end < prev.end_s)) {
        ck.fail(ipath, "entries must be sorted by (start_s, end_s)");
        ok = false;
      }
    }
    if (ok) out.push_back(Entry{*start, *end, *text});
  }
}

}  // namespace detail

// Checks a parsed script document, collecting every violation with its path.
inline ValidationResult validate_script(const json& doc) {
  detail::Checker ck;
  ValidationResult result;
  if (!doc.is_object()) {
    ck.fail("", "script document must be a JSON object");
    result.errors = std::move(ck.errors);
    return result;
  }

  SemanticScript s;
  if (auto id = ck.string_at(doc, "", "script_id")) {
    if (id->empty()) ck.fail("script_id", "must be non-empty");
    s.script_id = *id;
  }
  if (auto tag = ck.string_at(doc, "", "task_tag", false)) s.task_tag = *tag;

  std::optional<TaskType> task_type;
  if (auto tt = ck.string_at(doc, "", "task_type")) {
    task_type = parse_task_type(*tt);
    if (!task_type) ck.fail("task_type", fmt::format("unknown task type '{}'", *tt));
  }
  if (auto q = ck.string_at(doc, "", "question")) s.question = *q;

  if (const json* opts = ck.field(doc, "", "options", false); opts && !opts->is_null()) {
    if (!opts->is_object()) {
      ck.fail("options", "expected object");
    } else {
      std::map<std::string, std::string> options;
      for (const auto& [k, v] : opts->items()) {
        if (k.size() != 1 || k[0] < 'A' || k[0] > 'Z')
          ck.fail("options." + k, "option key must be one uppercase letter");
        if (!v.is_string()) ck.fail("options." + k, "expected string");
        else options[k] = v.get<std::string>();
      }
      s.options = std::move(options);
    }
  }

  auto gold = detail::check_gold(ck, doc);

  if (task_type) {
    s.task_type = *task_type;
    const bool wants_options = is_choice_task(*task_type);
    if (wants_options && !s.options) ck.fail("options", "required for choice tasks");
    if (!wants_options && s.options) ck.fail("options", "only allowed for choice tasks");
    if (gold && task_type_of(*gold) != *task_type)
      ck.fail("gold", fmt::format("gold/task_type mismatch: {} gold for {} task",
                                  kind_name(*gold), to_string(*task_type)));
    if (gold && s.options) {
      std::string letters;
      if (auto* l = std::get_if<Letter>(&*gold)) letters = l->value;
      if (auto* ls = std::get_if<LetterSet>(&*gold)) letters = ls->value;
      for (char c : letters)
        if (!s.options->count(std::string(1, c)))
          ck.fail("gold.value", fmt::format("letter '{}' is not an option", c));
    }
  }
  if (gold) s.gold = *gold;

  if (const json* videos = ck.field(doc, "", "videos")) {
    if (!videos->is_array()) {
      ck.fail("videos", "expected array");
    } else {
      if (videos->size() < 2) ck.fail("videos", "cross-video scripts need at least 2 videos");
      for (std::size_t i = 0; i < videos->size(); ++i) {
        const json& v = (*videos)[i];
        const std::string vpath = detail::Checker::index("videos", i);
        if (!v.is_object()) {
          ck.fail(vpath, "expected object");
          continue;
        }
        VideoScript video;
        if (const json* idx = ck.field(v, vpath, "video_index")) {
          if (!idx->is_number_integer())
            ck.fail(vpath + ".video_index", "expected integer");
          else if (idx->get<long long>() != static_cast<long long>(i) + 1)
            ck.fail(vpath + ".video_index",
                    fmt::format("must equal position {} (1-based, sequential)", i + 1));
          video.video_index = static_cast<int>(i) + 1;
        }
        auto duration = ck.number_at(v, vpath, "duration_s");
        if (duration && !(*duration > 0)) {
          ck.fail(vpath + ".duration_s", "must be > 0");
          duration.reset();
        }
        if (duration) video.duration_s = *duration;
        detail::check_entries(ck, v, vpath, "events", "visual", duration, video.events);
        detail::check_entries(ck, v, vpath, "captions", "text", duration, video.captions);
        s.videos.push_back(std::move(video));
      }
    }
  }

  if (ck.errors.empty()) {
    if (s.task_tag.empty()) s.task_tag = to_string(s.task_type);
    result.script = std::move(s);
  }
  result.errors = std::move(ck.errors);
  return result;
}

inline ValidationResult validate_script_text(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    ValidationResult r;
    r.errors.push_back({"", "not valid JSON"});
    return r;
  }
  return validate_script(doc);
}

// Duplicate script ids within a corpus, as (path, message) errors.
inline std::vector<ValidationError> check_unique_ids(const std::vector<SemanticScript>& corpus) {
  std::vector<ValidationError> errors;
  std::set<std::string> seen;
  for (std::size_t i = 0; i < corpus.size(); ++i)
    if (!seen.insert(corpus[i].script_id).second)
      errors.push_back({fmt::format("corpus[{}].script_id", i),
                        fmt::format("duplicate script_id '{}'", corpus[i].script_id)});
  return errors;
}

// ---------------------------------------------------------------------------
// Slicing

enum class Channel { events, captions };

struct Window {
  double start_s = 0;
  double end_s = 0;
};

struct SliceEntry {
  double start_s = 0;
  double end_s = 0;
  std::string text;
  bool operator==(const SliceEntry&) const = default;
};

// Entries of one video whose [start_s, end_s] intersects the window, boundary
// contact included. The window is clamped to [0, duration_s].
inline std::vector<SliceEntry> slice(const SemanticScript& script, int video_index,
                                     Window window, Channel channel) {
  const VideoScript* video = script.find_video(video_index);
  if (!video) throw UnknownVideoError(video_index);
  if (window.start_s > window.end_s)
    throw Error(fmt::format("slice window start {} exceeds end {}", window.start_s,
                            window.end_s));
  const double t0 = std::clamp(window.start_s, 0.0, video->duration_s);
  const double t1 = std::clamp(window.end_s, 0.0, video->duration_s);

  std::vector<SliceEntry> out;
  auto collect = [&](const auto& entries, auto text_of) {
    for (const auto& e : entries)
      if (e.start_s <= t1 && e.end_s >= t0) out.push_back({e.start_s, e.end_s, text_of(e)});
  };
  if (channel == Channel::events)
    collect(video->events, [](const TimedEvent& e) { return e.visual; });
  else
    collect(video->captions, [](const TimedCaption& c) { return c.text; });
  std::stable_sort(out.begin(), out.end(), [](const SliceEntry& a, const SliceEntry& b) {
    return a.start_s != b.start_s ? a.start_s < b.start_s : a.end_s < b.end_s;
  });
  return out;
}

inline Window full_range(const SemanticScript& script, int video_index) {
  const VideoScript* video = script.find_video(video_index);
  if (!video) throw UnknownVideoError(video_index);
  return {0.0, video->duration_s};
}

// ---------------------------------------------------------------------------
// Template generation

enum class ScriptFamily { alignment_interval, choice_behavior };

inline std::optional<ScriptFamily> parse_family(std::string_view s) {
  if (s == "alignment_interval") return ScriptFamily::alignment_interval;
  if (s == "choice_behavior") return ScriptFamily::choice_behavior;
  return std::nullopt;
}

struct GeneratorKnobs {
  std::optional<int> video_count;  // family default: 2 for alignment, 4 for choice
  double min_duration_s = 60;
  double max_duration_s = 180;
  double events_per_minute = 4;
  double min_event_s = 2;
  double max_event_s = 8;
};

namespace detail {

inline const std::vector<std::string>& procedure_steps() {
  static const std::vector<std::string> steps = {
      "peels the shrimp and cuts them in half",
      "boils the rice noodles",
      "chops a handful of fresh mint",
      "slices a cucumber into thin strips",
      "soaks a rice paper sheet in warm water",
      "rolls the filling tightly",
      "whisks the dipping sauce",
      "washes two lettuce leaves",
      "grates a carrot",
      "toasts crushed peanuts in a pan",
      "arranges the rolls on a plate",
      "wipes down the cutting board",
      "measures a cup of flour",
      "cracks two eggs into a bowl",
      "heats oil in a skillet",
      "seasons the mixture with salt",
  };
  return steps;
}

inline const std::vector<std::string>& behaviors() {
  static const std::vector<std::string> list = {
      "backs away while baring its teeth",
      "wags its tail at the visitor",
      "lies down and rolls onto its back",
      "raises the fur along its neck",
      "sniffs the ground in circles",
      "jumps up against the fence",
      "hides behind the sofa",
      "fetches a ball and drops it",
      "stares fixedly at the doorway",
      "paws at a closed door",
  };
  return list;
}

inline const std::vector<std::string>& subjects() {
  static const std::vector<std::string> list = {
      "A brown terrier", "A black labrador", "A small spaniel", "A grey husky",
      "A white poodle",  "A tan shepherd",
  };
  return list;
}

inline const std::vector<std::string>& chefs() {
  static const std::vector<std::string> list = {"The host", "A home cook", "The chef",
                                                "An instructor"};
  return list;
}

struct Slot {
  double start_s;
  double end_s;
};

// One event per equal-width slot, placed at a random offset inside it.
inline std::vector<Slot> draw_slots(Rng& rng, double duration, const GeneratorKnobs& k) {
  const int n = std::max(1, static_cast<int>(std::lround(duration * k.events_per_minute / 60.0)));
  const double width = duration / n;
  std::vector<Slot> slots;
  for (int i = 0; i < n; ++i) {
    const double len = uniform_real(rng, k.min_event_s, std::min(k.max_event_s, width));
    const double start = round_ms(width * i + uniform_real(rng, 0.0, width - len));
    const double end = std::min(round_ms(start + len), round_ms(duration));
    slots.push_back({start, std::max(end, start)});
  }
  return slots;
}

inline void check_knobs(const GeneratorKnobs& k, int video_count, int min_videos,
                        int max_videos) {
  if (video_count < min_videos || video_count > max_videos)
    throw Error(fmt::format("video_count {} outside [{}, {}]", video_count, min_videos,
                            max_videos));
  if (!(k.min_duration_s > 0) || k.min_duration_s > k.max_duration_s)
    throw Error("duration range must satisfy 0 < min_duration_s <= max_duration_s");
  if (!(k.events_per_minute > 0)) throw Error("events_per_minute must be > 0");
  if (!(k.min_event_s >= 0.01) || k.min_event_s > k.max_event_s)
    throw Error("event length range must satisfy 0.01 <= min_event_s <= max_event_s");
  // Lower bound on slot width over the whole duration range (d / (d*rate + 0.5)
  // grows with d, so the shortest duration is the binding case).
  const double per_second = k.events_per_minute / 60.0;
  const double min_width = k.min_duration_s / (k.min_duration_s * per_second + 0.5);
  if (min_width < k.min_event_s)
    throw Error(fmt::format(
        "duration range too small for event density: {} events/min of >= {}s in {}s",
        k.events_per_minute, k.min_event_s, k.min_duration_s));
}

inline VideoScript blank_video(Rng& rng, int index, const GeneratorKnobs& k) {
  VideoScript v;
  v.video_index = index;
  v.duration_s = round_ms(uniform_real(rng, k.min_duration_s, k.max_duration_s));
  return v;
}

inline SemanticScript generate_alignment(std::uint64_t seed, const GeneratorKnobs& k) {
  const int n_videos = k.video_count.value_or(2);
  check_knobs(k, n_videos, 2, 16);
  Rng rng(seed * 2 + 1);

  const auto& steps = procedure_steps();
  const int planted = uniform_int(rng, 0, static_cast<int>(steps.size()) - 1);
  const std::string& phrase = steps[planted];
  std::vector<std::string> fillers;
  for (int i = 0; i < static_cast<int>(steps.size()); ++i)
    if (i != planted) fillers.push_back(steps[i]);

  SemanticScript s;
  s.script_id = fmt::format("align-{}", seed);
  s.task_tag = "FSA";
  s.task_type = TaskType::interval;

  Interval reference{};
  Interval target{};
  for (int vi = 1; vi <= n_videos; ++vi) {
    VideoScript v = blank_video(rng, vi, k);
    const auto& who = chefs()[uniform_int(rng, 0, static_cast<int>(chefs().size()) - 1)];
    const auto slots = draw_slots(rng, v.duration_s, k);
    const int planted_slot =
        vi <= 2 ? uniform_int(rng, 0, static_cast<int>(slots.size()) - 1) : -1;
    for (int si = 0; si < static_cast<int>(slots.size()); ++si) {
      const auto& slot = slots[si];
      if (si == planted_slot) {
        v.events.push_back({slot.start_s, slot.end_s, fmt::format("{} {}", who, phrase)});
        v.captions.push_back({slot.start_s, slot.end_s, fmt::format("Now the cook {}.", phrase)});
        (vi == 1 ? reference : target) = Interval{slot.start_s, slot.end_s};
      } else {
        const auto& step = fillers[uniform_int(rng, 0, static_cast<int>(fillers.size()) - 1)];
        v.events.push_back({slot.start_s, slot.end_s, fmt::format("{} {}", who, step)});
        if (uniform01(rng) < 0.5)
          v.captions.push_back({slot.start_s, slot.end_s, fmt::format("Next, {}.", step)});
      }
    }
    s.videos.push_back(std::move(v));
  }
  s.question = fmt::format(
      "In Video 1 the cook performs the step \"{}\" at {}s-{}s. Locate the functionally "
      "equivalent segment in Video 2 and answer with its [start, end] interval in seconds.",
      phrase, format_seconds(reference.start_s), format_seconds(reference.end_s));
  s.gold = target;
  return s;
}

inline SemanticScript generate_choice(std::uint64_t seed, const GeneratorKnobs& k) {
  const int n_videos = k.video_count.value_or(4);
  check_knobs(k, n_videos, 2, 26);
  Rng rng(seed * 2 + 2);

  const auto& list = behaviors();
  const int target_idx = uniform_int(rng, 0, static_cast<int>(list.size()) - 1);
  const std::string& target = list[target_idx];
  std::vector<std::string> others;
  for (int i = 0; i < static_cast<int>(list.size()); ++i)
    if (i != target_idx) others.push_back(list[i]);

  // Non-empty proper subset of the videos.
  std::vector<bool> in_gold(n_videos, false);
  const int gold_count = uniform_int(rng, 1, n_videos - 1);
  std::vector<int> order(n_videos);
  for (int i = 0; i < n_videos; ++i) order[i] = i;
  shuffle(order, rng);
  for (int i = 0; i < gold_count; ++i) in_gold[order[i]] = true;

  SemanticScript s;
  s.script_id = fmt::format("behav-{}", seed);
  s.task_tag = "BU";
  s.task_type = TaskType::multi_select;
  std::map<std::string, std::string> options;
  std::string gold_letters;
  for (int vi = 1; vi <= n_videos; ++vi) {
    const std::string letter(1, static_cast<char>('A' + vi - 1));
    options[letter] = fmt::format("Video {}", vi);
    if (in_gold[vi - 1]) gold_letters += letter;

    VideoScript v = blank_video(rng, vi, k);
    const auto& who = subjects()[uniform_int(rng, 0, static_cast<int>(subjects().size()) - 1)];
    const auto slots = draw_slots(rng, v.duration_s, k);
    const int planted_slot =
        in_gold[vi - 1] ? uniform_int(rng, 0, static_cast<int>(slots.size()) - 1) : -1;
    for (int si = 0; si < static_cast<int>(slots.size()); ++si) {
      const auto& slot = slots[si];
      const std::string& what =
          si == planted_slot ? target
                             : others[uniform_int(rng, 0, static_cast<int>(others.size()) - 1)];
      v.events.push_back({slot.start_s, slot.end_s, fmt::format("{} {}", who, what)});
      if (uniform01(rng) < 0.3)
        v.captions.push_back({slot.start_s, slot.end_s, "The owner speaks softly off camera."});
    }
    s.videos.push_back(std::move(v));
  }
  s.question = fmt::format(
      "Which videos show a dog that \"{}\"? Select every matching video; the answer is the "
      "option letters in alphabetical order.",
      target);
  s.options = std::move(options);
  s.gold = LetterSet{gold_letters};
  return s;
}

}  // namespace detail

// Deterministic in (family, seed, knobs). Throws Error on inconsistent knobs.
inline SemanticScript generate_template_script(ScriptFamily family, std::uint64_t seed,
                                               const GeneratorKnobs& knobs = {}) {
  SemanticScript s = family == ScriptFamily::alignment_interval
                         ? detail::generate_alignment(seed, knobs)
                         : detail::generate_choice(seed, knobs);
  return s;
}

// The quoted phrase in a generated question ("...\"phrase\"..."), if any.
inline std::optional<std::string> quoted_phrase(std::string_view question) {
  const auto a = question.find('"');
  if (a == std::string_view::npos) return std::nullopt;
  const auto b = question.find('"', a + 1);
  if (b == std::string_view::npos) return std::nullopt;
  return std::string(question.substr(a + 1, b - a - 1));
}

}  // namespace cvr
