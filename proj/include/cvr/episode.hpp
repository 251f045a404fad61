#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "cvr/action.hpp"
#include "cvr/policy.hpp"
#include "cvr/simulator.hpp"
#include "cvr/state.hpp"

namespace cvr {

enum class MinToolCallsMode { flag_only, reject_answer };

// Turn limits. t_tol is read as an answer-only grace window after t_max turns;
// retry_budget counts attempts per turn (first try included).
struct EpisodeConfig {
  int t_max = 20;
  int t_tol = 10;
  int min_tool_calls = 4;
  int retry_budget = 3;
  MinToolCallsMode min_tool_calls_mode = MinToolCallsMode::flag_only;
  ProtocolOptions protocol;

  int max_turns() const { return t_max + t_tol; }

  void validate() const {
    if (t_max < 1 || t_tol < 1 || min_tool_calls < 1 || retry_budget < 1)
      throw Error("episode config: t_max, t_tol, min_tool_calls, retry_budget must be positive");
  }
};

// Answers tool actions. The same engine loop drives a simulator binding and a
// real-tool binding; only this object differs.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Observation execute(const AgentAction& action) = 0;
};

class SimEnvironment final : public Environment {
 public:
  explicit SimEnvironment(const SemanticScript& script) : script_(script) {}
  Observation execute(const AgentAction& action) override { return simulate(script_, action); }

 private:
  const SemanticScript& script_;
};

// Binds arbitrary tools (real perception models, replays, fault injectors).
class CallbackEnvironment final : public Environment {
 public:
  using Fn = std::function<Observation(const AgentAction&)>;
  explicit CallbackEnvironment(Fn fn) : fn_(std::move(fn)) {}
  Observation execute(const AgentAction& action) override { return fn_(action); }

 private:
  Fn fn_;
};

struct TurnRecord {
  std::vector<std::string> raw_attempts;
  ParseOutcome outcome;                 // of the last attempt
  std::vector<TemplateChoice> choices;  // one per attempt, for tabular policies
  Observation observation;
  Phase phase = Phase::active;
  bool executed = false;  // a tool call reached the environment
  bool refused = false;

  int retries_used() const { return static_cast<int>(raw_attempts.size()) - 1; }
};

struct Trajectory {
  std::string script_id;
  std::string task_tag;
  TaskType task_type = TaskType::single_choice;
  std::vector<TurnRecord> turns;
  std::optional<AnswerValue> final_answer;  // empty: ABSTAIN (or error)
  bool abstained = false;
  bool errored = false;
  std::string error;
  int tool_calls = 0;
  bool format_valid_all = true;
  bool min_tool_calls_violated = false;

  bool terminated() const { return final_answer.has_value() || abstained || errored; }

  std::vector<double> timings() const {
    std::vector<double> t;
    for (const auto& r : turns) t.push_back(r.observation.elapsed_s);
    return t;
  }

  // elapsed_s of the calls that reached the environment.
  std::vector<double> tool_timings() const {
    std::vector<double> t;
    for (const auto& r : turns)
      if (r.executed) t.push_back(r.observation.elapsed_s);
    return t;
  }

  std::vector<TemplateChoice> all_choices() const {
    std::vector<TemplateChoice> out;
    for (const auto& r : turns) out.insert(out.end(), r.choices.begin(), r.choices.end());
    return out;
  }
};

inline constexpr std::string_view kToleranceNotice =
    "NOTICE: The turn limit has been reached. Only the answer action is accepted now; reply "
    "with {\"action\": \"answer\", ...}.";

inline std::string render_history(const EpisodeState& state) {
  std::string out = state.query;
  for (std::size_t i = 0; i < state.history.size(); ++i) {
    const auto& h = state.history[i];
    out += fmt::format("\n\n[Turn {}] Action: {}", i + 1,
                       h.action ? serialize(*h.action) : std::string("(invalid)"));
    out += "\nObservation: " + h.observation.text;
  }
  if (state.phase == Phase::tolerance) out += "\n\n" + std::string(kToleranceNotice);
  return out;
}

// s_t = (q, H_t) as text: system prompt, query, every (action, observation)
// pair in order, then the forced-answer notice in the tolerance phase.
inline std::string render_state(const EpisodeState& state, std::string_view system_prompt) {
  std::string out(system_prompt);
  if (!out.empty()) out += "\n\n";
  out += render_history(state);
  return out;
}

namespace detail {

inline Observation engine_note(std::string text) {
  return Observation{std::move(text), ObservationSource::sim_deterministic, 0.0};
}

}  // namespace detail

struct RunOptions {
  std::string system_prompt;
  std::uint64_t seed = 0;
};

// One episode of the POMDP loop. Deterministic for deterministic policies and
// environments. Policy or environment exceptions end the episode as errored,
// which is distinct from ABSTAIN.
inline Trajectory run_episode(Policy& policy, Environment& env, const EpisodeTask& task,
                              const EpisodeConfig& config, const RunOptions& run = {}) {
  config.validate();
  Rng rng(run.seed);
  ProtocolOptions protocol = config.protocol;
  protocol.video_count = task.video_count();

  Trajectory traj;
  traj.script_id = task.task_id;
  traj.task_tag = task.task_tag;
  traj.task_type = task.task_type;

  EpisodeState state;
  state.query = render_query(task);

  while (state.turn < config.max_turns()) {
    state.phase = state.turn < config.t_max ? Phase::active : Phase::tolerance;
    std::string conversation = render_history(state);

    TurnRecord rec;
    rec.phase = state.phase;
    for (int attempt = 1; attempt <= config.retry_budget; ++attempt) {
      DecisionContext ctx{run.system_prompt, conversation, task, state, attempt};
      Decision d;
      try {
        d = policy.decide(ctx, rng);
      } catch (const std::exception& e) {
        traj.errored = true;
        traj.error = std::string("policy failure: ") + e.what();
        traj.tool_calls = state.tool_calls;
        return traj;
      }
      rec.raw_attempts.push_back(d.text);
      if (d.choice) rec.choices.push_back(*d.choice);
      rec.outcome = parse_action(d.text, task.task_type, protocol);
      rec.outcome.attempt = attempt;
      if (is_format_valid(rec.outcome)) break;
      if (attempt < config.retry_budget)
        conversation += "\n\nSYSTEM: " + build_retry_message(attempt, rec.outcome);
    }
    if (!is_format_valid(rec.outcome)) traj.format_valid_all = false;

    HistoryEntry entry;
    if (!is_executable(rec.outcome)) {
      entry.observation = detail::engine_note(std::string(kInvalidActionObservation));
    } else {
      const AgentAction& action = *rec.outcome.action;
      entry.action = action;
      if (!action.is_tool()) {
        const bool early = state.tool_calls < config.min_tool_calls;
        if (early && state.phase == Phase::active &&
            config.min_tool_calls_mode == MinToolCallsMode::reject_answer) {
          entry.refused = rec.refused = true;
          entry.observation = detail::engine_note(fmt::format(
              "Answer refused: at least {} tool calls are required before answering ({} so far).",
              config.min_tool_calls, state.tool_calls));
        } else {
          traj.min_tool_calls_violated = early;
          traj.final_answer = std::get<Answer>(action.body).final_answer;
          entry.observation = detail::engine_note("Answer submitted.");
        }
      } else if (state.phase == Phase::tolerance) {
        entry.refused = rec.refused = true;
        entry.observation = detail::engine_note(
            "Tool call refused: the turn limit has been reached; submit the answer now.");
      } else {
        try {
          entry.observation = env.execute(action);
        } catch (const std::exception& e) {
          traj.errored = true;
          traj.error = e.what();
          rec.observation = detail::engine_note(std::string("ENVIRONMENT ERROR: ") + e.what());
          traj.turns.push_back(std::move(rec));
          traj.tool_calls = state.tool_calls;
          return traj;
        }
        rec.executed = true;
        ++state.tool_calls;
      }
    }
    rec.observation = entry.observation;
    state.history.push_back(std::move(entry));
    traj.turns.push_back(std::move(rec));
    ++state.turn;
    if (traj.final_answer) break;
  }
  state.phase = Phase::terminated;
  traj.tool_calls = state.tool_calls;
  if (!traj.final_answer) traj.abstained = true;
  return traj;
}

// Runs independent episodes on `threads` workers. Policies that declare
// serialize_me get their decide() calls serialized.
struct EpisodeJob {
  const EpisodeTask* task = nullptr;
  Environment* env = nullptr;
  std::uint64_t seed = 0;
};

inline std::vector<Trajectory> run_episodes(Policy& policy, const std::vector<EpisodeJob>& jobs,
                                            const EpisodeConfig& config,
                                            std::string_view system_prompt, int threads) {
  SerializedPolicy guarded(policy);
  std::vector<Trajectory> out(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++)
      out[i] = run_episode(guarded, *jobs[i].env, *jobs[i].task, config,
                           RunOptions{std::string(system_prompt), jobs[i].seed});
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < std::max(1, threads); ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

// ---------------------------------------------------------------------------
// JSONL trajectory log: one record per turn, then a terminal record.

inline json turn_json(const TurnRecord& r, int index) {
  json j;
  j["type"] = "turn";
  j["turn"] = index;
  j["phase"] = to_string(r.phase);
  j["raw"] = r.raw_attempts;
  j["attempts"] = static_cast<int>(r.raw_attempts.size());
  j["violations"] = r.outcome.violations;
  j["format_valid"] = is_format_valid(r.outcome);
  j["action"] = r.outcome.action ? to_json(*r.outcome.action) : json(nullptr);
  j["executed"] = r.executed;
  j["refused"] = r.refused;
  j["observation"] = r.observation.text;
  j["source"] = to_string(r.observation.source);
  j["elapsed_s"] = r.observation.elapsed_s;
  if (!r.choices.empty()) {
    json c = json::array();
    for (const auto& ch : r.choices)
      c.push_back({{"turn_index", ch.key.turn_index},
                   {"last_action", to_string(ch.key.last_action)},
                   {"bucket", ch.key.obs_bucket},
                   {"template", ch.index},
                   {"log_prob", ch.log_prob},
                   {"fallback", ch.fallback}});
    j["choices"] = c;
  }
  return j;
}

inline json terminal_json(const Trajectory& t, const std::optional<GoldAnswer>& gold) {
  json j;
  j["type"] = "final";
  j["script_id"] = t.script_id;
  j["task_tag"] = t.task_tag;
  j["task_type"] = to_string(t.task_type);
  j["final_answer"] = t.final_answer ? answer_value_json(*t.final_answer) : json(nullptr);
  j["tool_calls"] = t.tool_calls;
  j["turns"] = static_cast<int>(t.turns.size());
  j["abstained"] = t.abstained;
  j["errored"] = t.errored;
  if (t.errored) j["error"] = t.error;
  j["format_valid_all"] = t.format_valid_all;
  j["min_tool_calls_violated"] = t.min_tool_calls_violated;
  if (gold) j["gold"] = to_json(*gold);
  return j;
}

inline void write_trajectory_jsonl(std::ostream& os, const Trajectory& t,
                                   const std::optional<GoldAnswer>& gold = std::nullopt,
                                   const std::optional<json>& reward = std::nullopt) {
  for (std::size_t i = 0; i < t.turns.size(); ++i) os << turn_json(t.turns[i], static_cast<int>(i) + 1).dump() << '\n';
  json fin = terminal_json(t, gold);
  if (reward) fin["reward"] = *reward;
  os << fin.dump() << '\n';
}

}  // namespace cvr
