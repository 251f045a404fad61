#include <gtest/gtest.h>

#include <sstream>

#include "cvr/episode.hpp"
#include "cvr/grpo.hpp"
#include "fixtures.hpp"
#include "generators.hpp"

using namespace cvr;
using fixtures::answer_call;
using fixtures::caption_call;
using fixtures::observe_call;

namespace {

// Scripted outputs plus a record of every context the engine showed.
class RecordingPolicy final : public Policy {
 public:
  explicit RecordingPolicy(std::vector<std::string> outputs) : inner_(std::move(outputs)) {}
  Decision decide(const DecisionContext& ctx, Rng& rng) override {
    conversations.emplace_back(ctx.conversation);
    attempts.push_back(ctx.attempt);
    history_sizes.push_back(ctx.state.history.size());
    return inner_.decide(ctx, rng);
  }
  Concurrency concurrency() const override { return Concurrency::serialize_me; }

  std::vector<std::string> conversations;
  std::vector<int> attempts;
  std::vector<std::size_t> history_sizes;

 private:
  ScriptedPolicy inner_;
};

struct Fixture {
  SemanticScript script;
  EpisodeTask task;
  SimEnvironment env;
  explicit Fixture(const json& doc) : script(fixtures::load(doc)), task(make_task(script)), env(script) {}
};

}  // namespace

TEST(RunEpisode, FourToolCallsThenAnswer) {
  Fixture f(fixtures::choice_doc());
  ScriptedPolicy p({caption_call(1), caption_call(2), observe_call(1, 0, 60), observe_call(2, 0, 90), answer_call("\"D\"")});
  const auto t = run_episode(p, f.env, f.task, EpisodeConfig{});
  EXPECT_EQ(t.turns.size(), 5u);
  EXPECT_EQ(t.tool_calls, 4);
  ASSERT_TRUE(t.final_answer);
  EXPECT_EQ(*t.final_answer, AnswerValue{Letter{"D"}});
  EXPECT_TRUE(t.format_valid_all);
  EXPECT_FALSE(t.min_tool_calls_violated);
  EXPECT_FALSE(t.abstained);
  EXPECT_TRUE(t.terminated());
  EXPECT_EQ(t.turns[0].observation.text, "[0s - 10s]: Set the oven to 200 degrees.");
  EXPECT_EQ(t.turns[3].observation.text, "FOCUS: what happens here\nVideo 2 [0s-90s]: A tray slides into an oven");
  EXPECT_EQ(p.calls(), 5u);
}

TEST(RunEpisode, ProseForeverAbstainsAtTurnLimit) {
  Fixture f(fixtures::choice_doc());
  ScriptedPolicy p({"I would rather chat."});
  EpisodeConfig cfg;
  const auto t = run_episode(p, f.env, f.task, cfg);
  EXPECT_EQ(static_cast<int>(t.turns.size()), cfg.t_max + cfg.t_tol);
  EXPECT_TRUE(t.abstained);
  EXPECT_FALSE(t.final_answer);
  EXPECT_FALSE(t.format_valid_all);
  EXPECT_EQ(t.tool_calls, 0);
  for (const auto& turn : t.turns) {
    EXPECT_EQ(turn.retries_used(), cfg.retry_budget - 1);
    EXPECT_EQ(turn.observation.text, kInvalidActionObservation);
    EXPECT_FALSE(turn.executed);
  }
  EXPECT_EQ(p.calls(), 90u);
}

TEST(RunEpisode, EarlyAnswerFlagOnly) {
  Fixture f(fixtures::choice_doc());
  ScriptedPolicy p({answer_call("\"D\"")});
  const auto t = run_episode(p, f.env, f.task, EpisodeConfig{});
  EXPECT_EQ(t.turns.size(), 1u);
  EXPECT_TRUE(t.final_answer);
  EXPECT_TRUE(t.min_tool_calls_violated);
}

TEST(RunEpisode, EarlyAnswerRejectedUntilToleranceOrEnoughCalls) {
  Fixture f(fixtures::choice_doc());
  EpisodeConfig cfg;
  cfg.min_tool_calls_mode = MinToolCallsMode::reject_answer;
  {
    ScriptedPolicy p({answer_call("\"D\"")});
    const auto t = run_episode(p, f.env, f.task, cfg);
    EXPECT_EQ(static_cast<int>(t.turns.size()), cfg.t_max + 1);
    for (int i = 0; i < cfg.t_max; ++i) EXPECT_TRUE(t.turns[i].refused);
    EXPECT_TRUE(t.final_answer);
    EXPECT_TRUE(t.min_tool_calls_violated);
  }
  {
    ScriptedPolicy p({caption_call(1), answer_call("\"A\""), caption_call(2), caption_call(1), caption_call(2),
                      answer_call("\"D\"")});
    const auto t = run_episode(p, f.env, f.task, cfg);
    EXPECT_EQ(t.turns.size(), 6u);
    EXPECT_TRUE(t.turns[1].refused);
    EXPECT_EQ(*t.final_answer, AnswerValue{Letter{"D"}});
    EXPECT_FALSE(t.min_tool_calls_violated);
  }
}

TEST(RunEpisode, ToleranceAcceptsOnlyAnswer) {
  Fixture f(fixtures::choice_doc());
  EpisodeConfig cfg;
  ScriptedPolicy tools({caption_call(1)});
  const auto t = run_episode(tools, f.env, f.task, cfg);
  EXPECT_EQ(static_cast<int>(t.turns.size()), cfg.max_turns());
  EXPECT_EQ(t.tool_calls, cfg.t_max);
  for (int i = cfg.t_max; i < cfg.max_turns(); ++i) {
    EXPECT_EQ(t.turns[i].phase, Phase::tolerance);
    EXPECT_TRUE(t.turns[i].refused);
    EXPECT_FALSE(t.turns[i].executed);
  }
  EXPECT_TRUE(t.abstained);

  std::vector<std::string> outputs(cfg.t_max + 3, caption_call(2));
  outputs.push_back(answer_call("\"B\""));
  ScriptedPolicy late(outputs);
  const auto t2 = run_episode(late, f.env, f.task, cfg);
  EXPECT_EQ(static_cast<int>(t2.turns.size()), cfg.t_max + 4);
  EXPECT_EQ(*t2.final_answer, AnswerValue{Letter{"B"}});
  EXPECT_FALSE(t2.abstained);
}

TEST(RunEpisode, RetryInjectsCorrectiveMessage) {
  Fixture f(fixtures::choice_doc());
  RecordingPolicy p({"garbled", caption_call(1), answer_call("\"D\"")});
  const auto t = run_episode(p, f.env, f.task, EpisodeConfig{});
  ASSERT_EQ(t.turns.size(), 2u);
  EXPECT_EQ(t.turns[0].retries_used(), 1);
  EXPECT_TRUE(t.turns[0].executed);
  EXPECT_EQ(p.attempts, (std::vector<int>{1, 2, 1}));
  EXPECT_EQ(p.conversations[0].find("Format issue"), std::string::npos);
  EXPECT_NE(p.conversations[1].find("SYSTEM: !Format issue on attempt 1"), std::string::npos);
  EXPECT_EQ(p.conversations[2].find("Format issue"), std::string::npos);
  // a recovered retry still counts as format-valid for the turn
  EXPECT_TRUE(t.format_valid_all);
}

TEST(RunEpisode, RepairedAnswerExecutesButIsNotFormatValid) {
  json doc = fixtures::choice_doc();
  doc["task_type"] = "multi_select";
  doc["gold"] = {{"kind", "letter_set"}, {"value", "AD"}};
  Fixture m(doc);
  ScriptedPolicy p({answer_call("\"da\"")});
  const auto t = run_episode(p, m.env, m.task, EpisodeConfig{});
  ASSERT_EQ(t.turns.size(), 1u);
  EXPECT_EQ(t.turns[0].retries_used(), 2);
  EXPECT_EQ(*t.final_answer, AnswerValue{LetterSet{"AD"}});
  EXPECT_FALSE(t.format_valid_all);
}

TEST(RunEpisode, HistoryIsMonotone) {
  Fixture f(fixtures::shrimp_doc());
  RecordingPolicy p({caption_call(1), "oops", "oops", "oops", observe_call(2, 80, 110), caption_call(2),
                     answer_call("[86, 104]")});
  run_episode(p, f.env, f.task, EpisodeConfig{});
  std::string prev;
  std::size_t prev_size = 0;
  for (std::size_t i = 0; i < p.conversations.size(); ++i) {
    if (p.attempts[i] != 1) continue;
    const auto& c = p.conversations[i];
    EXPECT_EQ(c.rfind(prev, 0), 0u) << i;
    EXPECT_GE(p.history_sizes[i], prev_size);
    prev = c;
    prev_size = p.history_sizes[i];
  }
}

TEST(RunEpisode, EnvironmentFailureIsErroredNotAbstain) {
  Fixture f(fixtures::choice_doc());
  CallbackEnvironment broken([](const AgentAction&) -> Observation { throw std::runtime_error("camera offline"); });
  ScriptedPolicy p({caption_call(1)});
  const auto t = run_episode(p, broken, f.task, EpisodeConfig{});
  EXPECT_TRUE(t.errored);
  EXPECT_FALSE(t.abstained);
  EXPECT_NE(t.error.find("camera offline"), std::string::npos);
  EXPECT_EQ(t.turns.size(), 1u);
  EXPECT_THROW(total_reward(t, f.script.gold), Error);
}

TEST(RunEpisode, PolicyFailureIsErrored) {
  class Throwing final : public Policy {
   public:
    Decision decide(const DecisionContext&, Rng&) override { throw std::runtime_error("server down"); }
    Concurrency concurrency() const override { return Concurrency::concurrent_ok; }
  } p;
  Fixture f(fixtures::choice_doc());
  const auto t = run_episode(p, f.env, f.task, EpisodeConfig{});
  EXPECT_TRUE(t.errored);
  EXPECT_FALSE(t.abstained);
  EXPECT_TRUE(t.turns.empty());
}

TEST(RunEpisode, RealToolBindingUsesTheSameLoop) {
  Fixture f(fixtures::choice_doc());
  int calls = 0;
  CallbackEnvironment real([&](const AgentAction& a) {
    ++calls;
    return Observation{"tool saw " + to_string(a.kind()), ObservationSource::real_tool, 0.5};
  });
  ScriptedPolicy p({caption_call(1), observe_call(2, 0, 5), answer_call("\"C\"")});
  const auto t = run_episode(p, real, f.task, EpisodeConfig{});
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(t.turns[1].observation.text, "tool saw observe");
  EXPECT_EQ(t.tool_timings(), (std::vector<double>{0.5, 0.5}));
}

TEST(RunEpisode, DeterministicLogs) {
  Fixture f(fixtures::shrimp_doc());
  auto once = [&] {
    ScriptedPolicy p({caption_call(1), "junk", observe_call(2, 80, 110), answer_call("[85.88, 105.24]")});
    auto t = run_episode(p, f.env, f.task, EpisodeConfig{});
    for (auto& turn : t.turns) turn.observation.elapsed_s = 0;
    std::ostringstream os;
    write_trajectory_jsonl(os, t, f.script.gold);
    return os.str();
  };
  EXPECT_EQ(once(), once());
}

TEST(RunEpisode, ThousandRandomEpisodesTerminate) {
  gen::RandomPolicy p;
  EpisodeConfig cfg;
  for (int i = 0; i < 1000; ++i) {
    const auto s = generate_template_script(i % 2 ? ScriptFamily::choice_behavior : ScriptFamily::alignment_interval, i);
    const auto task = make_task(s);
    SimEnvironment env(s);
    const auto t = run_episode(p, env, task, cfg, RunOptions{"", static_cast<std::uint64_t>(i)});
    ASSERT_TRUE(t.terminated());
    ASSERT_FALSE(t.errored) << t.error;
    ASSERT_LE(static_cast<int>(t.turns.size()), cfg.max_turns());
    EXPECT_NE(t.final_answer.has_value(), t.abstained);
    if (t.final_answer) {
      EXPECT_EQ(t.turns.back().outcome.action->kind(), ActionKind::answer);
    }
  }
}

TEST(RunEpisodes, ConcurrentMatchesSequential) {
  std::vector<SemanticScript> scripts;
  for (int i = 0; i < 6; ++i) scripts.push_back(generate_template_script(ScriptFamily::choice_behavior, i));
  std::vector<EpisodeTask> tasks;
  std::vector<SimEnvironment> envs;
  for (const auto& s : scripts) tasks.push_back(make_task(s)), envs.emplace_back(s);
  std::vector<EpisodeJob> jobs;
  for (std::size_t i = 0; i < scripts.size(); ++i)
    for (int g = 0; g < 4; ++g) jobs.push_back({&tasks[i], &envs[i], i * 10 + g});
  PolicyParams params;
  params.templates = default_template_set();
  SoftmaxPolicy policy(params);
  const auto seq = run_episodes(policy, jobs, EpisodeConfig{}, "", 1);
  const auto par = run_episodes(policy, jobs, EpisodeConfig{}, "", 4);
  ASSERT_EQ(seq.size(), par.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    EXPECT_EQ(seq[i].final_answer, par[i].final_answer);
    ASSERT_EQ(seq[i].turns.size(), par[i].turns.size());
    for (std::size_t k = 0; k < seq[i].turns.size(); ++k)
      EXPECT_EQ(seq[i].turns[k].raw_attempts, par[i].turns[k].raw_attempts);
  }
}

TEST(RenderState, Examples) {
  Fixture f(fixtures::choice_doc());
  EpisodeState st;
  st.query = render_query(f.task);
  EXPECT_EQ(render_state(st, "SYSTEM PROMPT"), "SYSTEM PROMPT\n\n" + st.query);
  EXPECT_NE(st.query.find("D. Both"), std::string::npos);
  EXPECT_NE(st.query.find("Video 2: 90s"), std::string::npos);

  AgentAction cap{GetCaption{1, {}, {}}, "listen"};
  st.history.push_back({cap, simulate(f.script, cap), false});
  const auto one = render_state(st, "SYSTEM PROMPT");
  EXPECT_NE(one.find("Set the oven to 200 degrees."), std::string::npos);
  EXPECT_EQ(one.find(kToleranceNotice), std::string::npos);

  st.phase = Phase::tolerance;
  EXPECT_NE(render_state(st, "SYSTEM PROMPT").find(kToleranceNotice), std::string::npos);
  EXPECT_EQ(render_state(st, "x"), render_state(st, "x"));
}

TEST(TrajectoryLog, TerminalRecordFields) {
  Fixture f(fixtures::shrimp_doc());
  ScriptedPolicy p({caption_call(2), answer_call("[85.88, 105.24]")});
  const auto t = run_episode(p, f.env, f.task, EpisodeConfig{});
  std::ostringstream os;
  write_trajectory_jsonl(os, t, f.script.gold, to_json(total_reward(t, f.script.gold)));
  std::istringstream in(os.str());
  std::vector<json> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(json::parse(l));
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0]["type"], "turn");
  EXPECT_EQ(lines[0]["executed"], true);
  const auto& fin = lines[2];
  EXPECT_EQ(fin["type"], "final");
  EXPECT_EQ(fin["final_answer"], json::array({85.88, 105.24}));
  EXPECT_EQ(fin["tool_calls"], 1);
  EXPECT_EQ(fin["turns"], 2);
  EXPECT_EQ(fin["abstained"], false);
  EXPECT_DOUBLE_EQ(fin["reward"]["r_total"].get<double>(), 1.1);
  EXPECT_EQ(fin["min_tool_calls_violated"], true);
}

TEST(EpisodeConfig, RejectsNonPositive) {
  EpisodeConfig c;
  c.t_tol = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.retry_budget = 0;
  EXPECT_THROW(c.validate(), Error);
}
