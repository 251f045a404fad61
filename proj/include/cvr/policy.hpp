#pragma once

#include <cstdio>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "cvr/state.hpp"
#include "cvr/tabular.hpp"

namespace cvr {

enum class Concurrency { concurrent_ok, serialize_me };

struct DecisionContext {
  std::string_view system_prompt;
  std::string_view conversation;  // query, history, notices, retry messages
  const EpisodeTask& task;
  const EpisodeState& state;
  int attempt = 1;

  std::string rendered_state() const {
    std::string out(system_prompt);
    if (!out.empty()) out += "\n\n";
    out += conversation;
    return out;
  }
};

// A sampled template, recorded so the trajectory log-probability can be
// recomputed under other parameters.
struct TemplateChoice {
  StateKey key;
  int index = 0;
  double log_prob = 0;  // under the parameters that sampled it
  bool fallback = false;
};

struct Decision {
  std::string text;
  std::optional<TemplateChoice> choice;
};

// Decision source for the episode engine. decide() is total: it always returns
// text, which may be malformed.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual Decision decide(const DecisionContext& ctx, Rng& rng) = 0;
  virtual Concurrency concurrency() const = 0;
};

// Replays fixed outputs in order, repeating the last one once exhausted.
class ScriptedPolicy final : public Policy {
 public:
  explicit ScriptedPolicy(std::vector<std::string> outputs) : outputs_(std::move(outputs)) {
    if (outputs_.empty()) throw Error("scripted policy needs at least one output");
  }

  Decision decide(const DecisionContext&, Rng&) override {
    const std::size_t i = std::min(cursor_, outputs_.size() - 1);
    ++cursor_;
    return {outputs_[i], std::nullopt};
  }

  Concurrency concurrency() const override { return Concurrency::serialize_me; }
  std::size_t calls() const { return cursor_; }
  void reset() { cursor_ = 0; }

 private:
  std::vector<std::string> outputs_;
  std::size_t cursor_ = 0;
};

struct SoftmaxSample {
  int index = 0;
  std::string text;
  double log_prob = 0;
  bool fallback = false;
};

// Samples k ~ softmax(logits[key]) and instantiates template k. A template that
// does not apply falls back to a safe caption request, flagged.
inline SoftmaxSample softmax_policy_decide(const PolicyParams& params, const StateKey& key,
                                           const EpisodeTask& task, const EpisodeState& state,
                                           Rng& rng) {
  const auto logits = params.row(key);
  const auto lp = log_softmax(logits);
  const double u = uniform01(rng);
  double acc = 0;
  int k = static_cast<int>(lp.size()) - 1;
  for (int i = 0; i < static_cast<int>(lp.size()); ++i) {
    acc += std::exp(lp[i]);
    if (u < acc) {
      k = i;
      break;
    }
  }
  SoftmaxSample s{k, {}, lp[k], false};
  if (auto text = instantiate_template(params.templates[k], task, state)) {
    s.text = std::move(*text);
  } else {
    s.text = fallback_action_text();
    s.fallback = true;
  }
  return s;
}

// Holds a reference to frozen parameters; safe to call concurrently.
class SoftmaxPolicy final : public Policy {
 public:
  explicit SoftmaxPolicy(const PolicyParams& params) : params_(params) {}

  Decision decide(const DecisionContext& ctx, Rng& rng) override {
    const StateKey key = make_state_key(ctx.state, params_.bucket_count);
    auto s = softmax_policy_decide(params_, key, ctx.task, ctx.state, rng);
    return {std::move(s.text), TemplateChoice{key, s.index, s.log_prob, s.fallback}};
  }

  Concurrency concurrency() const override { return Concurrency::concurrent_ok; }

 private:
  const PolicyParams& params_;
};

// Wraps a serialize_me policy so concurrent episodes can share it.
class SerializedPolicy final : public Policy {
 public:
  explicit SerializedPolicy(Policy& inner) : inner_(inner) {}
  Decision decide(const DecisionContext& ctx, Rng& rng) override {
    if (inner_.concurrency() == Concurrency::concurrent_ok) return inner_.decide(ctx, rng);
    std::lock_guard lock(mutex_);
    return inner_.decide(ctx, rng);
  }
  Concurrency concurrency() const override { return Concurrency::concurrent_ok; }

 private:
  Policy& inner_;
  std::mutex mutex_;
};

}  // namespace cvr
