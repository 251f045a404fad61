#pragma once

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cvr/eval.hpp"
#include "cvr/grpo.hpp"
#include "cvr/remote_policy.hpp"

namespace cvr {

namespace fs = std::filesystem;

inline std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json read_json_file(const fs::path& path) {
  json doc = json::parse(read_text_file(path), nullptr, false);
  if (doc.is_discarded()) throw Error(path.string() + ": not valid JSON");
  return doc;
}

// Files under a directory (non-recursive) with one of the given extensions,
// sorted by name so corpus order does not depend on the filesystem.
inline std::vector<fs::path> list_files(const fs::path& dir, std::initializer_list<std::string_view> exts) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    for (auto e : exts)
      if (ext == e) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Scripts

struct ScriptFileError {
  std::string source;  // file, or file:line for jsonl
  std::vector<ValidationError> errors;
};

struct LoadedScripts {
  std::vector<SemanticScript> scripts;
  std::vector<ScriptFileError> failures;
};

inline void load_script_doc(const json& doc, const std::string& source, LoadedScripts& out) {
  auto r = validate_script(doc);
  if (r.ok())
    out.scripts.push_back(std::move(*r.script));
  else
    out.failures.push_back({source, std::move(r.errors)});
}

// Accepts a .json script, a .jsonl file of scripts, or a directory of either.
inline LoadedScripts load_scripts(const fs::path& path) {
  LoadedScripts out;
  std::vector<fs::path> files;
  if (fs::is_directory(path))
    files = list_files(path, {".json", ".jsonl"});
  else
    files.push_back(path);
  for (const auto& f : files) {
    if (f.extension() == ".jsonl") {
      std::istringstream lines(read_text_file(f));
      std::string line;
      int n = 0;
      while (std::getline(lines, line)) {
        ++n;
        if (trim(line).empty()) continue;
        json doc = json::parse(line, nullptr, false);
        const std::string src = fmt::format("{}:{}", f.string(), n);
        if (doc.is_discarded())
          out.failures.push_back({src, {{"", "not valid JSON"}}});
        else
          load_script_doc(doc, src, out);
      }
    } else {
      json doc = json::parse(read_text_file(f), nullptr, false);
      if (doc.is_discarded())
        out.failures.push_back({f.string(), {{"", "not valid JSON"}}});
      else
        load_script_doc(doc, f.string(), out);
    }
  }
  if (auto dup = check_unique_ids(out.scripts); !dup.empty())
    out.failures.push_back({path.string(), std::move(dup)});
  return out;
}

inline std::vector<SemanticScript> load_scripts_or_throw(const fs::path& path) {
  auto loaded = load_scripts(path);
  if (!loaded.failures.empty()) {
    const auto& f = loaded.failures.front();
    const auto& e = f.errors.front();
    throw Error(fmt::format("{}: {}: {}", f.source, e.path, e.message));
  }
  if (loaded.scripts.empty()) throw Error(path.string() + ": no scripts found");
  return std::move(loaded.scripts);
}

inline void write_script_file(const fs::path& path, const SemanticScript& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(s).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Config files. Keys mirror the struct field names; unknown keys are errors so
// a typo never silently falls back to a default.

namespace detail {

class FieldReader {
 public:
  FieldReader(const json& doc, std::string what) : doc_(doc), what_(std::move(what)) {
    if (!doc.is_object()) throw Error(what_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->get<T>();
    } catch (const json::exception&) {
      throw Error(fmt::format("{}: field '{}' has the wrong type", what_, key));
    }
  }

  const json* section(const char* key) {
    seen_.insert(key);
    auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (const auto& [k, v] : doc_.items())
      if (!seen_.count(k)) throw Error(fmt::format("{}: unknown field '{}'", what_, k));
  }

 private:
  const json& doc_;
  std::string what_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline ProtocolOptions protocol_options_from_json(const json& doc) {
  ProtocolOptions p;
  detail::FieldReader r(doc, "protocol");
  r.get("strict_answer_format", p.strict_answer_format);
  r.finish();
  return p;
}

inline RewardConfig reward_config_from_json(const json& doc) {
  RewardConfig c;
  detail::FieldReader r(doc, "reward config");
  r.get("iou_threshold", c.iou_threshold);
  r.get("strict_retries", c.strict_retries);
  r.finish();
  if (!(c.iou_threshold > 0 && c.iou_threshold <= 1))
    throw Error("reward config: iou_threshold must be in (0, 1]");
  return c;
}

inline RemotePolicyConfig remote_config_from_json(const json& doc) {
  RemotePolicyConfig c;
  detail::FieldReader r(doc, "remote config");
  r.get("endpoint", c.endpoint);
  r.get("model", c.model);
  r.get("temperature", c.temperature);
  r.get("max_tokens", c.max_tokens);
  r.get("timeout_s", c.timeout_s);
  r.get("retries", c.retries);
  r.get("backoff_base_s", c.backoff_base_s);
  r.get("max_in_flight", c.max_in_flight);
  r.finish();
  c.validate();
  return c;
}

// Episode config plus optional "protocol", "reward" and "remote" sections.
struct RunConfig {
  EpisodeConfig episode;
  RewardConfig reward;
  RemotePolicyConfig remote;
};

inline EpisodeConfig episode_config_fields(detail::FieldReader& r) {
  EpisodeConfig c;
  r.get("t_max", c.t_max);
  r.get("t_tol", c.t_tol);
  r.get("min_tool_calls", c.min_tool_calls);
  r.get("retry_budget", c.retry_budget);
  std::string mode = "flag_only";
  r.get("min_tool_calls_mode", mode);
  if (mode == "flag_only")
    c.min_tool_calls_mode = MinToolCallsMode::flag_only;
  else if (mode == "reject_answer")
    c.min_tool_calls_mode = MinToolCallsMode::reject_answer;
  else
    throw Error("episode config: min_tool_calls_mode must be flag_only or reject_answer");
  if (const json* p = r.section("protocol")) c.protocol = protocol_options_from_json(*p);
  c.validate();
  return c;
}

inline EpisodeConfig episode_config_from_json(const json& doc) {
  detail::FieldReader r(doc, "episode config");
  auto c = episode_config_fields(r);
  r.finish();
  return c;
}

inline RunConfig run_config_from_json(const json& doc) {
  RunConfig rc;
  detail::FieldReader r(doc, "episode config");
  rc.episode = episode_config_fields(r);
  if (const json* s = r.section("reward")) rc.reward = reward_config_from_json(*s);
  if (const json* s = r.section("remote")) rc.remote = remote_config_from_json(*s);
  r.finish();
  return rc;
}

// GRPO config plus optional "episode" and "reward" sections.
struct TrainConfig {
  GrpoConfig grpo;
  EpisodeConfig episode;
  RewardConfig reward;
};

inline TrainConfig train_config_from_json(const json& doc) {
  TrainConfig tc;
  detail::FieldReader r(doc, "grpo config");
  auto& g = tc.grpo;
  r.get("group_size", g.group_size);
  r.get("clip_eps", g.clip_eps);
  r.get("kl_beta", g.kl_beta);
  r.get("learning_rate", g.learning_rate);
  r.get("sigma_floor", g.sigma_floor);
  r.get("iterations", g.iterations);
  r.get("scripts_per_iteration", g.scripts_per_iteration);
  r.get("seed", g.seed);
  r.get("threads", g.threads);
  if (const json* s = r.section("episode")) tc.episode = episode_config_from_json(*s);
  if (const json* s = r.section("reward")) tc.reward = reward_config_from_json(*s);
  r.finish();
  g.validate();
  return tc;
}

// ---------------------------------------------------------------------------
// Trajectory logs

inline GoldAnswer gold_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("kind") || !doc.contains("value"))
    throw Error("gold: expected {\"kind\", \"value\"}");
  const auto kind = doc.at("kind").get<std::string>();
  const json& v = doc.at("value");
  if (kind == "interval") {
    if (!v.is_array() || v.size() != 2) throw Error("gold: interval must be [start, end]");
    return Interval{v[0].get<double>(), v[1].get<double>()};
  }
  const auto s = v.get<std::string>();
  if (kind == "letter") return Letter{s};
  if (kind == "letter_set") return LetterSet{s};
  if (kind == "sequence") return Sequence{s};
  if (kind == "free_text") return FreeText{s};
  throw Error("gold: unknown kind '" + kind + "'");
}

inline AnswerValue answer_from_json(const json& v, TaskType type) {
  auto r = canonicalize_answer(v, type);
  if (const auto* e = std::get_if<ShapeError>(&r)) throw Error("logged answer: expected " + e->expected);
  return std::get<CanonicalAnswer>(r).value;
}

struct LoggedEpisode {
  std::string source;
  std::string script_id;
  std::string task_tag;
  TaskType task_type = TaskType::single_choice;
  std::optional<AnswerValue> final_answer;
  std::optional<GoldAnswer> gold;
  bool abstained = false;
  bool errored = false;
  std::vector<double> tool_timings;  // elapsed_s of executed tool turns
};

// A log file holds one or more episodes; each ends with its "final" record.
inline std::vector<LoggedEpisode> read_trajectory_log(const fs::path& path) {
  std::vector<LoggedEpisode> out;
  std::istringstream lines(read_text_file(path));
  std::string line;
  std::vector<double> timings;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    if (trim(line).empty()) continue;
    json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.is_object())
      throw Error(fmt::format("{}:{}: not a JSON object", path.string(), n));
    const auto type = rec.value("type", std::string());
    try {
      if (type == "turn") {
        if (rec.value("executed", false)) timings.push_back(rec.at("elapsed_s").get<double>());
      } else if (type == "final") {
        LoggedEpisode e;
        e.source = path.string();
        e.script_id = rec.at("script_id").get<std::string>();
        e.task_tag = rec.at("task_tag").get<std::string>();
        const auto tt = parse_task_type(rec.at("task_type").get<std::string>());
        if (!tt) throw Error("unknown task_type");
        e.task_type = *tt;
        if (!rec.at("final_answer").is_null()) e.final_answer = answer_from_json(rec["final_answer"], *tt);
        if (rec.contains("gold")) e.gold = gold_from_json(rec["gold"]);
        e.abstained = rec.value("abstained", false);
        e.errored = rec.value("errored", false);
        e.tool_timings = std::move(timings);
        timings.clear();
        out.push_back(std::move(e));
      } else {
        throw Error("unknown record type '" + type + "'");
      }
    } catch (const std::exception& ex) {
      throw Error(fmt::format("{}:{}: {}", path.string(), n, ex.what()));
    }
  }
  return out;
}

inline std::vector<LoggedEpisode> read_trajectory_logs(const fs::path& path) {
  if (!fs::is_directory(path)) return read_trajectory_log(path);
  std::vector<LoggedEpisode> out;
  for (const auto& f : list_files(path, {".jsonl"})) {
    auto part = read_trajectory_log(f);
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

// Logged episodes -> scored items. Episodes without gold cannot be scored.
inline std::vector<ScoredItem> scored_items(const std::vector<LoggedEpisode>& logs) {
  std::vector<ScoredItem> items;
  for (const auto& e : logs) {
    if (!e.gold) throw Error(e.source + ": episode " + e.script_id + " has no gold answer");
    items.push_back({e.task_tag, *e.gold, e.final_answer});
  }
  return items;
}

// Pairs two runs by script_id. Scripts present in only one run, or with an
// answer missing on either side, are listed as unpaired.
inline AlignmentBlock compare_runs(const std::vector<LoggedEpisode>& sim,
                                   const std::vector<LoggedEpisode>& real) {
  std::map<std::string, const LoggedEpisode*> real_by_id;
  for (const auto& e : real) real_by_id[e.script_id] = &e;
  std::vector<std::pair<AnswerValue, AnswerValue>> discrete;
  std::vector<std::pair<Interval, Interval>> intervals;
  std::vector<double> sim_t, real_t;
  AlignmentBlock block;
  std::set<std::string> matched;
  for (const auto& s : sim) {
    auto it = real_by_id.find(s.script_id);
    if (it == real_by_id.end()) {
      block.unpaired.push_back(s.script_id + " (sim only)");
      continue;
    }
    const auto& r = *it->second;
    matched.insert(s.script_id);
    sim_t.insert(sim_t.end(), s.tool_timings.begin(), s.tool_timings.end());
    real_t.insert(real_t.end(), r.tool_timings.begin(), r.tool_timings.end());
    if (!s.final_answer || !r.final_answer) {
      block.unpaired.push_back(s.script_id + " (no answer)");
      continue;
    }
    if (s.task_type == TaskType::interval && r.task_type == TaskType::interval)
      intervals.push_back({std::get<Interval>(*s.final_answer), std::get<Interval>(*r.final_answer)});
    else if (s.task_type != TaskType::free_form)
      discrete.push_back({*s.final_answer, *r.final_answer});
  }
  for (const auto& r : real)
    if (!matched.count(r.script_id)) block.unpaired.push_back(r.script_id + " (real only)");
  if (!discrete.empty()) block.decision_overlap_pct = decision_overlap_rate(discrete);
  if (!intervals.empty()) block.mean_sim_real_iou_pct = sim_real_interval_alignment(intervals);
  if (!sim_t.empty() && !real_t.empty()) {
    const auto lat = latency_report(sim_t, real_t);
    block.sim_latency_s = lat.mean_sim_s;
    block.real_latency_s = lat.mean_real_s;
  }
  return block;
}

}  // namespace cvr
