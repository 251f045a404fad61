#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cvr/reward.hpp"
#include "cvr/script.hpp"

namespace cvr {

struct TaskResult {
  std::string task_tag;
  int n = 0;
  double correct = 0;   // sum of per-item scores
  double accuracy = 0;  // percent, full precision
  std::optional<double> mean_iou;
};

// task tag -> dimension; dimensions listed in presentation order.
struct DimensionMap {
  std::vector<std::pair<std::string, std::vector<std::string>>> dimensions;

  std::optional<std::string> dimension_of(const std::string& task) const {
    for (const auto& [dim, tasks] : dimensions)
      if (std::find(tasks.begin(), tasks.end(), task) != tasks.end()) return dim;
    return std::nullopt;
  }
};

// Comparative (C), Temporal (T), Multi-view (M), Free-form (F).
inline DimensionMap default_dimension_map() {
  return {{{"C", {"BU", "NC", "CC", "PEA"}},
           {"T", {"PI", "FSA", "PSS"}},
           {"M", {"MSR", "MOC"}},
           {"F", {"CCQA"}}}};
}

inline DimensionMap dimension_map_from_json(const json& doc) {
  DimensionMap m;
  if (!doc.is_object()) throw Error("dimension map must be an object of dimension -> [tasks]");
  for (const auto& [dim, tasks] : doc.items()) m.dimensions.push_back({dim, tasks.get<std::vector<std::string>>()});
  return m;
}

enum class Weighting { unweighted, instance_weighted };

struct AlignmentBlock {
  std::optional<double> decision_overlap_pct;
  std::optional<double> mean_sim_real_iou_pct;
  std::optional<double> sim_latency_s;
  std::optional<double> real_latency_s;
  std::vector<std::string> unpaired;
};

struct EvalReport {
  std::vector<TaskResult> tasks;  // dimension order, then task order within it
  std::vector<std::pair<std::string, double>> dimension_averages;  // ("C.Avg", value)
  double overall = 0;
  std::optional<AlignmentBlock> alignment;

  std::optional<double> dimension_average(std::string_view label) const {
    for (const auto& [l, v] : dimension_averages)
      if (l == label) return v;
    return std::nullopt;
  }
};

struct ScoredItem {
  std::string task_tag;
  GoldAnswer gold;
  std::optional<AnswerValue> predicted;  // nullopt: ABSTAIN
};

struct AggregateOptions {
  double iou_threshold = 0.5;
  Weighting weighting = Weighting::unweighted;
  FreeFormJudge judge;  // required only when free-form items are present
};

// Averages over already-scored tasks. Only dimensions with at least one task
// present get an average.
inline EvalReport aggregate_task_results(std::vector<TaskResult> results, const DimensionMap& map,
                                         Weighting weighting = Weighting::unweighted) {
  if (results.empty()) throw Error("aggregate: no results");
  EvalReport report;
  for (const auto& [dim, tasks] : map.dimensions) {
    double acc_sum = 0, correct = 0;
    int count = 0, n = 0;
    for (const auto& tag : tasks) {
      auto it = std::find_if(results.begin(), results.end(),
                             [&](const TaskResult& r) { return r.task_tag == tag; });
      if (it == results.end()) continue;
      report.tasks.push_back(*it);
      acc_sum += it->accuracy;
      correct += it->correct;
      n += it->n;
      ++count;
    }
    if (count == 0) continue;
    const double avg = weighting == Weighting::unweighted ? acc_sum / count : 100.0 * correct / n;
    report.dimension_averages.push_back({dim + ".Avg", avg});
  }
  for (const auto& r : results)
    if (!map.dimension_of(r.task_tag)) throw Error("aggregate: unmapped task '" + r.task_tag + "'");

  double acc_sum = 0, correct = 0;
  int n = 0;
  for (const auto& r : report.tasks) {
    acc_sum += r.accuracy;
    correct += r.correct;
    n += r.n;
  }
  report.overall = weighting == Weighting::unweighted
                       ? acc_sum / static_cast<double>(report.tasks.size())
                       : 100.0 * correct / n;
  return report;
}

inline EvalReport aggregate(std::span<const ScoredItem> items, const DimensionMap& map,
                            const AggregateOptions& options = {}) {
  if (items.empty()) throw Error("aggregate: no results");
  std::map<std::string, TaskResult> by_task;
  std::map<std::string, std::vector<double>> ious;
  for (const auto& item : items) {
    if (!map.dimension_of(item.task_tag))
      throw Error("aggregate: unmapped task '" + item.task_tag + "'");
    auto& r = by_task[item.task_tag];
    r.task_tag = item.task_tag;
    ++r.n;
    if (const auto* ft = std::get_if<FreeText>(&item.gold)) {
      if (!options.judge) throw Error("aggregate: free-form task '" + item.task_tag + "' needs a judge");
      const auto* pred = item.predicted ? std::get_if<FreeText>(&*item.predicted) : nullptr;
      r.correct += pred ? options.judge(ft->text, pred->text) : 0.0;
      continue;
    }
    const auto c = correctness(item.gold, item.predicted, options.iou_threshold);
    r.correct += c.value;
    if (std::holds_alternative<Interval>(item.gold)) ious[item.task_tag].push_back(c.iou.value_or(0.0));
  }
  std::vector<TaskResult> results;
  for (auto& [tag, r] : by_task) {
    r.accuracy = 100.0 * r.correct / r.n;
    if (auto it = ious.find(tag); it != ious.end()) {
      double s = 0;
      for (double v : it->second) s += v;
      r.mean_iou = s / static_cast<double>(it->second.size());
    }
    results.push_back(r);
  }
  return aggregate_task_results(std::move(results), map, options.weighting);
}

// Percent of pairs where the simulated and real runs chose the same answer.
inline double decision_overlap_rate(std::span<const std::pair<AnswerValue, AnswerValue>> paired) {
  if (paired.empty()) throw Error("decision_overlap_rate: no pairs");
  int same = 0;
  for (const auto& [sim, real] : paired) same += sim == real ? 1 : 0;
  return 100.0 * same / static_cast<double>(paired.size());
}

// 100 x mean IoU between simulated and real interval predictions.
inline double sim_real_interval_alignment(std::span<const std::pair<Interval, Interval>> paired) {
  if (paired.empty()) throw Error("sim_real_interval_alignment: no pairs");
  double sum = 0;
  for (const auto& [sim, real] : paired) sum += interval_iou(sim, real);
  return 100.0 * sum / static_cast<double>(paired.size());
}

struct LatencyReport {
  double mean_sim_s = 0;
  double mean_real_s = 0;
  double speedup = 0;  // mean_real / mean_sim
};

inline LatencyReport latency_report(std::span<const double> sim, std::span<const double> real) {
  if (sim.empty() || real.empty()) throw Error("latency_report: empty timing list");
  auto mean = [](std::span<const double> v) {
    double s = 0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  LatencyReport r{mean(sim), mean(real), 0};
  r.speedup = r.mean_real_s / r.mean_sim_s;
  return r;
}

// ---------------------------------------------------------------------------
// Presentation: rounding happens here only.

inline std::string format_table(const EvalReport& report) {
  std::string out = fmt::format("{:<8} {:>6} {:>9} {:>9}\n", "task", "n", "acc(%)", "mean_iou");
  for (const auto& t : report.tasks)
    out += fmt::format("{:<8} {:>6} {:>9} {:>9}\n", t.task_tag, t.n, format_fixed(t.accuracy, 2),
                       t.mean_iou ? format_fixed(*t.mean_iou, 3) : std::string("-"));
  for (const auto& [label, v] : report.dimension_averages)
    out += fmt::format("{:<8} {:>6} {:>9}\n", label, "", format_fixed(v, 2));
  out += fmt::format("{:<8} {:>6} {:>9}\n", "O.Avg", "", format_fixed(report.overall, 2));
  if (report.alignment) {
    const auto& a = *report.alignment;
    if (a.decision_overlap_pct)
      out += fmt::format("decision overlap rate: {}%\n", format_fixed(*a.decision_overlap_pct, 1));
    if (a.mean_sim_real_iou_pct)
      out += fmt::format("sim-to-real IoU: {}\n", format_fixed(*a.mean_sim_real_iou_pct, 1));
    if (a.sim_latency_s && a.real_latency_s)
      out += fmt::format("latency: sim {}s, real {}s, speedup {}x\n", format_fixed(*a.sim_latency_s, 3),
                         format_fixed(*a.real_latency_s, 3),
                         format_fixed(*a.real_latency_s / *a.sim_latency_s, 2));
    for (const auto& id : a.unpaired) out += "unpaired: " + id + "\n";
  }
  return out;
}

inline json to_json(const EvalReport& report) {
  json tasks = json::array();
  for (const auto& t : report.tasks) {
    json j = {{"task", t.task_tag}, {"n", t.n}, {"accuracy", round_half_up(t.accuracy, 2)}};
    if (t.mean_iou) j["mean_iou"] = round_half_up(*t.mean_iou, 4);
    tasks.push_back(j);
  }
  json dims = json::object();
  for (const auto& [label, v] : report.dimension_averages) dims[label] = round_half_up(v, 2);
  json out = {{"tasks", tasks}, {"dimensions", dims}, {"O.Avg", round_half_up(report.overall, 2)}};
  if (report.alignment) {
    const auto& a = *report.alignment;
    json j = json::object();
    if (a.decision_overlap_pct) j["decision_overlap_pct"] = round_half_up(*a.decision_overlap_pct, 1);
    if (a.mean_sim_real_iou_pct) j["mean_sim_real_iou_pct"] = round_half_up(*a.mean_sim_real_iou_pct, 1);
    if (a.sim_latency_s) j["sim_latency_s"] = *a.sim_latency_s;
    if (a.real_latency_s) j["real_latency_s"] = *a.real_latency_s;
    j["unpaired"] = a.unpaired;
    out["alignment"] = j;
  }
  return out;
}

}  // namespace cvr
