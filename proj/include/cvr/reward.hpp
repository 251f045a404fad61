#pragma once

#include <functional>
#include <optional>

#include "cvr/episode.hpp"
#include "cvr/script.hpp"

namespace cvr {

inline constexpr double kFormatReward = 0.1;

// |a ∩ b| / |a ∪ b| over the time axis.
inline double interval_iou(const Interval& a, const Interval& b) {
  if (!(a.start_s < a.end_s) || !(b.start_s < b.end_s))
    throw Error("interval_iou: intervals must satisfy start < end");
  const double inter = std::max(0.0, std::min(a.end_s, b.end_s) - std::max(a.start_s, b.start_s));
  const double uni = (a.end_s - a.start_s) + (b.end_s - b.start_s) - inter;
  return inter / uni;
}

struct Correctness {
  double value = 0;           // 0 or 1
  std::optional<double> iou;  // interval tasks only
};

// Scores a canonical prediction (nullopt = ABSTAIN) against gold. Free-form
// gold is not auto-scorable and throws; route it to a FreeFormJudge.
inline Correctness correctness(const GoldAnswer& gold, const std::optional<AnswerValue>& predicted,
                               double iou_threshold = 0.5) {
  if (std::holds_alternative<FreeText>(gold))
    throw Error("correctness: free-form answers need a judge");
  if (!predicted) return {0.0, std::nullopt};
  if (predicted->index() != gold.index())
    throw Error(fmt::format("correctness: {} prediction for {} gold", kind_name(*predicted),
                            kind_name(gold)));
  if (const auto* g = std::get_if<Interval>(&gold)) {
    const double iou = interval_iou(*g, std::get<Interval>(*predicted));
    return {iou >= iou_threshold ? 1.0 : 0.0, iou};
  }
  return {*predicted == gold ? 1.0 : 0.0, std::nullopt};
}

// (gold text, predicted text) -> score in [0, 1]; no built-in implementation.
using FreeFormJudge = std::function<double(const std::string&, const std::string&)>;

struct RewardConfig {
  double iou_threshold = 0.5;
  // Any retry, even a successful one, forfeits the formatting reward.
  bool strict_retries = false;
};

struct RewardBreakdown {
  double r_ans = 0;
  double r_fmt = 0;
  double r_total = 0;
  std::optional<double> iou;
};

inline json to_json(const RewardBreakdown& r) {
  json j = {{"r_ans", r.r_ans}, {"r_fmt", r.r_fmt}, {"r_total", r.r_total}};
  if (r.iou) j["iou"] = *r.iou;
  return j;
}

// Trajectory-level conjunction: every turn's final parse must be format-valid.
inline bool formatting_ok(const Trajectory& t, const RewardConfig& config) {
  for (const auto& turn : t.turns) {
    if (!is_format_valid(turn.outcome)) return false;
    if (config.strict_retries && turn.retries_used() > 0) return false;
  }
  return true;
}

inline RewardBreakdown total_reward(const Trajectory& t, const GoldAnswer& gold,
                                    const RewardConfig& config = {}) {
  if (!t.terminated()) throw Error("total_reward: trajectory has not terminated");
  if (t.errored) throw Error("total_reward: errored trajectory: " + t.error);
  const Correctness c = correctness(gold, t.final_answer, config.iou_threshold);
  RewardBreakdown r;
  r.r_ans = c.value;
  r.r_fmt = formatting_ok(t, config) ? kFormatReward : 0.0;
  r.r_total = r.r_ans + r.r_fmt;
  r.iou = c.iou;
  return r;
}

}  // namespace cvr
