#pragma once

#include "cvr/action.hpp"
#include "cvr/policy.hpp"
#include "fixtures.hpp"

namespace gen {

using namespace cvr;

// Random well-formed action for the given task type; observe targets stay
// within the frame budget.
inline AgentAction random_action(Rng& rng, TaskType tt) {
  AgentAction a;
  a.thought = fmt::format("thought {} with \"quotes\" and {{braces}}", uniform_int(rng, 0, 999));
  const int kind = uniform_int(rng, 0, 2);
  if (kind == 0) {
    Observe o;
    int budget = kFrameBudget;
    const int n = uniform_int(rng, 1, 3);
    for (int i = 0; i < n; ++i) {
      ObserveTarget t;
      t.video_index = uniform_int(rng, 1, 4);
      t.start_time = round_ms(uniform_real(rng, 0, 100));
      t.end_time = round_ms(t.start_time + uniform_real(rng, 0, 50));
      t.num_frames = uniform_int(rng, 1, std::max(1, budget - (n - i - 1)));
      budget -= t.num_frames;
      if (budget < 0) t.num_frames += budget, budget = 0;
      if (t.num_frames < 1) t.num_frames = 1;
      o.targets.push_back(t);
    }
    o.focus_prompt = uniform01(rng) < 0.5 ? "" : "track the hands";
    a.body = o;
  } else if (kind == 1) {
    GetCaption g;
    g.video_index = uniform_int(rng, 1, 4);
    if (uniform01(rng) < 0.5) {
      g.start_time = round_ms(uniform_real(rng, 0, 50));
      g.end_time = round_ms(*g.start_time + uniform_real(rng, 0, 50));
    }
    a.body = g;
  } else {
    switch (tt) {
      case TaskType::single_choice: a.body = Answer{Letter{std::string(1, char('A' + uniform_int(rng, 0, 3)))}}; break;
      case TaskType::multi_select: {
        std::string s;
        for (char c : std::string("ABCD"))
          if (uniform01(rng) < 0.5) s += c;
        if (s.empty()) s = "B";
        a.body = Answer{LetterSet{s}};
        break;
      }
      case TaskType::sequence: a.body = Answer{Sequence{"3->5->4->2->1"}}; break;
      case TaskType::interval: {
        const double s = round_ms(uniform_real(rng, 0, 100));
        a.body = Answer{Interval{s, s + 1 + round_ms(uniform_real(rng, 0, 20))}};
        break;
      }
      case TaskType::free_form: a.body = Answer{FreeText{"Video A uses hands; video B a fork."}}; break;
    }
  }
  return a;
}

// Mixes valid tool calls, answers, junk, and near-misses. answer_rate is the
// chance of emitting some kind of answer on a given call.
class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(double answer_rate = 0.375) : answer_rate_(answer_rate) {}

  Decision decide(const DecisionContext& ctx, Rng& rng) override {
    const int n = ctx.task.video_count();
    const int v = uniform_int(rng, 1, n + 1);  // sometimes out of range
    if (uniform01(rng) < answer_rate_) {
      switch (uniform_int(rng, 0, 2)) {
        case 0: return {fixtures::answer_call("\"D\""), std::nullopt};
        case 1: return {fixtures::answer_call("[1, 0.5]"), std::nullopt};
        default: return {fixtures::answer_call(uniform01(rng) < 0.5 ? "\"b\"" : "\"AC\""), std::nullopt};
      }
    }
    switch (uniform_int(rng, 0, 4)) {
      case 0: return {fixtures::caption_call(v), std::nullopt};
      case 1: return {fixtures::observe_call(v, uniform_int(rng, 0, 50), uniform_int(rng, 0, 90), uniform_int(rng, 1, 140)), std::nullopt};
      case 2: return {"let me think about it", std::nullopt};
      case 3: return {fixtures::caption_call(v) + fixtures::caption_call(1), std::nullopt};
      default: return {"{\"action\": \"observe\", \"params\": {", std::nullopt};
    }
  }
  Concurrency concurrency() const override { return Concurrency::concurrent_ok; }

 private:
  double answer_rate_;
};

}  // namespace gen
