// cvr_cli: script generation/validation, episodes, training, evaluation.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "cvr/cvr.hpp"

using namespace cvr;

namespace {

std::unique_ptr<Policy> make_policy(const std::string& spec, const RunConfig& rc,
                                    std::optional<PolicyParams>& params_storage) {
  const auto colon = spec.find(':');
  const std::string kind = spec.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : spec.substr(colon + 1);
  if (kind == "scripted") {
    if (arg.empty()) throw Error("scripted policy needs a file: scripted:FILE");
    const json doc = read_json_file(arg);
    if (!doc.is_array()) throw Error(arg + ": expected a JSON array of output strings");
    return std::make_unique<ScriptedPolicy>(doc.get<std::vector<std::string>>());
  }
  if (kind == "softmax") {
    params_storage = arg.empty() ? PolicyParams{} : policy_params_from_json(read_json_file(arg));
    return std::make_unique<SoftmaxPolicy>(*params_storage);
  }
  if (kind == "remote") return std::make_unique<RemotePolicy>(rc.remote);
  throw Error("unknown policy '" + spec + "' (scripted:FILE, softmax[:PARAMS], remote)");
}

std::string optional_text(const std::string& path) { return path.empty() ? std::string() : read_text_file(path); }

int gen_scripts(const std::string& family_name, int count, std::uint64_t seed, const std::string& out,
                std::optional<int> videos) {
  const auto family = parse_family(family_name);
  if (!family) throw Error("unknown family '" + family_name + "' (alignment_interval, choice_behavior)");
  if (count < 1) throw Error("--count must be >= 1");
  fs::create_directories(out);
  GeneratorKnobs knobs;
  knobs.video_count = videos;
  for (int i = 0; i < count; ++i) {
    const auto s = generate_template_script(*family, seed + static_cast<std::uint64_t>(i), knobs);
    write_script_file(fs::path(out) / (s.script_id + ".json"), s);
  }
  std::cout << fmt::format("wrote {} scripts to {}\n", count, out);
  return 0;
}

int validate_scripts(const std::vector<std::string>& paths) {
  int valid = 0, invalid = 0;
  for (const auto& p : paths) {
    LoadedScripts loaded;
    try {
      loaded = load_scripts(p);
    } catch (const std::exception& e) {
      std::cerr << p << ": " << e.what() << '\n';
      ++invalid;
      continue;
    }
    valid += static_cast<int>(loaded.scripts.size());
    for (const auto& f : loaded.failures) {
      ++invalid;
      for (const auto& e : f.errors)
        std::cerr << fmt::format("{}: {}: {}\n", f.source, e.path.empty() ? "(root)" : e.path, e.message);
    }
  }
  std::cout << fmt::format("{} valid, {} invalid\n", valid, invalid);
  return invalid == 0 ? 0 : 1;
}

int run_episodes_cmd(const std::string& script_path, const std::string& policy_spec,
                     const std::string& config_path, const std::string& log_path, std::uint64_t seed,
                     const std::string& prompt_path, int threads) {
  RunConfig rc;
  if (!config_path.empty()) rc = run_config_from_json(read_json_file(config_path));
  const auto scripts = load_scripts_or_throw(script_path);
  std::optional<PolicyParams> params;
  auto policy = make_policy(policy_spec, rc, params);
  const std::string system_prompt = optional_text(prompt_path);

  std::vector<EpisodeTask> tasks;
  std::vector<SimEnvironment> envs;
  tasks.reserve(scripts.size());
  envs.reserve(scripts.size());
  std::vector<EpisodeJob> jobs;
  for (std::size_t i = 0; i < scripts.size(); ++i) {
    tasks.push_back(make_task(scripts[i]));
    envs.emplace_back(scripts[i]);
  }
  for (std::size_t i = 0; i < scripts.size(); ++i) jobs.push_back({&tasks[i], &envs[i], seed + i});
  const auto trajectories = run_episodes(*policy, jobs, rc.episode, system_prompt, threads);

  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path, std::ios::binary);
    if (!log) throw Error("cannot write " + log_path);
  }
  int errored = 0;
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const auto& t = trajectories[i];
    const auto& s = scripts[i];
    std::optional<json> reward;
    std::string summary;
    if (!t.errored && !std::holds_alternative<FreeText>(s.gold)) {
      const auto r = total_reward(t, s.gold, rc.reward);
      reward = json{{"r_ans", r.r_ans}, {"r_fmt", r.r_fmt}, {"r_total", r.r_total}};
      summary = fmt::format("r_total={}", r.r_total);
    }
    errored += t.errored;
    const std::string outcome = t.errored ? "ERROR: " + t.error
                                : t.final_answer ? answer_to_string(*t.final_answer)
                                                 : std::string("ABSTAIN");
    std::cout << fmt::format("{}: {} turns, {} tool calls, answer {} {}\n", t.script_id, t.turns.size(),
                             t.tool_calls, outcome, summary);
    if (log.is_open()) write_trajectory_jsonl(log, t, s.gold, reward);
  }
  return errored == 0 ? 0 : 2;
}

int train_cmd(const std::string& corpus_path, const std::string& config_path, const std::string& out,
              const std::string& history_path, const std::string& init_path) {
  TrainConfig tc;
  if (!config_path.empty()) tc = train_config_from_json(read_json_file(config_path));
  const auto corpus = load_scripts_or_throw(corpus_path);
  PolicyParams init = init_path.empty() ? PolicyParams{} : policy_params_from_json(read_json_file(init_path));
  const auto result = train(corpus, tc.grpo, tc.episode, tc.reward, std::move(init));
  if (!out.empty()) {
    std::ofstream o(out, std::ios::binary);
    if (!o) throw Error("cannot write " + out);
    o << to_json(result.params).dump(2) << '\n';
  }
  if (!history_path.empty()) {
    std::ofstream h(history_path, std::ios::binary);
    if (!h) throw Error("cannot write " + history_path);
    result.history.write_csv(h);
  }
  const auto& last = result.history.rows.back();
  std::cout << fmt::format("{} iterations; last mean_r_total={:.4f} entropy={:.4f} kl={:.4f}\n",
                           result.history.rows.size(), last.mean_r_total, last.entropy, last.kl_to_ref);
  return 0;
}

void print_report(const EvalReport& report, const std::string& format) {
  if (format == "json")
    std::cout << to_json(report).dump(2) << '\n';
  else
    std::cout << format_table(report);
}

int eval_cmd(const std::string& logs_path, const std::string& map_path, const std::string& format,
             bool weighted, double iou_threshold, const std::string& sim_logs, const std::string& real_logs) {
  const auto logs = read_trajectory_logs(logs_path);
  std::vector<LoggedEpisode> scorable;
  int skipped = 0;
  for (const auto& e : logs) {
    if (e.task_type == TaskType::free_form) {
      ++skipped;
      continue;
    }
    scorable.push_back(e);
  }
  if (skipped) std::cerr << fmt::format("skipped {} free-form episodes (no judge configured)\n", skipped);
  const auto map = map_path.empty() ? default_dimension_map() : dimension_map_from_json(read_json_file(map_path));
  AggregateOptions opts;
  opts.iou_threshold = iou_threshold;
  opts.weighting = weighted ? Weighting::instance_weighted : Weighting::unweighted;
  const auto items = scored_items(scorable);
  auto report = aggregate(items, map, opts);
  if (!sim_logs.empty() && !real_logs.empty())
    report.alignment = compare_runs(read_trajectory_logs(sim_logs), read_trajectory_logs(real_logs));
  print_report(report, format);
  return 0;
}

int sim_vs_real_cmd(const std::string& sim_logs, const std::string& real_logs, const std::string& format) {
  const auto block = compare_runs(read_trajectory_logs(sim_logs), read_trajectory_logs(real_logs));
  if (format == "json") {
    json j = json::object();
    if (block.decision_overlap_pct) j["decision_overlap_pct"] = round_half_up(*block.decision_overlap_pct, 1);
    if (block.mean_sim_real_iou_pct) j["mean_sim_real_iou_pct"] = round_half_up(*block.mean_sim_real_iou_pct, 1);
    if (block.sim_latency_s) j["sim_latency_s"] = *block.sim_latency_s;
    if (block.real_latency_s) j["real_latency_s"] = *block.real_latency_s;
    if (block.sim_latency_s && block.real_latency_s)
      j["speedup"] = round_half_up(*block.real_latency_s / *block.sim_latency_s, 2);
    j["unpaired"] = block.unpaired;
    std::cout << j.dump(2) << '\n';
    return 0;
  }
  auto show = [](const std::optional<double>& v, int digits) {
    return v ? format_fixed(*v, digits) : std::string("n/a");
  };
  std::cout << fmt::format("decision overlap rate: {}%\n", show(block.decision_overlap_pct, 1));
  std::cout << fmt::format("sim-to-real IoU: {}\n", show(block.mean_sim_real_iou_pct, 1));
  if (block.sim_latency_s && block.real_latency_s)
    std::cout << fmt::format("latency: sim {}s, real {}s, speedup {}x\n", format_fixed(*block.sim_latency_s, 3),
                             format_fixed(*block.real_latency_s, 3),
                             format_fixed(*block.real_latency_s / *block.sim_latency_s, 2));
  for (const auto& id : block.unpaired) std::cout << "unpaired: " << id << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cross-video reasoning agent toolkit"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-scripts", "generate template scripts");
  std::string family, out_dir;
  int count = 10;
  std::uint64_t gen_seed = 0;
  std::optional<int> videos;
  gen->add_option("--family", family, "alignment_interval | choice_behavior")->required();
  gen->add_option("--count", count, "number of scripts");
  gen->add_option("--seed", gen_seed, "first seed");
  gen->add_option("--videos", videos, "videos per script");
  gen->add_option("--out", out_dir, "output directory")->required();

  auto* val = app.add_subcommand("validate-scripts", "validate script files or directories");
  std::vector<std::string> val_paths;
  val->add_option("paths", val_paths, "files or directories")->required();

  auto* run = app.add_subcommand("run-episode", "run episodes against the simulator");
  std::string script_path, policy_spec = "softmax", run_config, log_path, prompt_path;
  std::uint64_t run_seed = 0;
  int threads = 1;
  run->add_option("--script", script_path, "script file, jsonl, or directory")->required();
  run->add_option("--policy", policy_spec, "scripted:FILE | softmax[:PARAMS] | remote");
  run->add_option("--config", run_config, "episode config JSON");
  run->add_option("--log", log_path, "trajectory JSONL output");
  run->add_option("--seed", run_seed, "episode seed");
  run->add_option("--system-prompt", prompt_path, "file holding the agent's system prompt");
  run->add_option("--threads", threads, "parallel episodes");

  auto* tr = app.add_subcommand("train", "GRPO training in the simulator");
  std::string corpus, grpo_config, params_out, history_out, init_params;
  tr->add_option("--corpus", corpus, "script file, jsonl, or directory")->required();
  tr->add_option("--grpo-config", grpo_config, "training config JSON");
  tr->add_option("--init", init_params, "initial policy parameters");
  tr->add_option("--out", params_out, "trained parameters JSON");
  tr->add_option("--history", history_out, "per-iteration CSV");

  auto* ev = app.add_subcommand("eval", "score trajectory logs");
  std::string logs, dim_map, format = "table", ev_sim, ev_real;
  bool weighted = false;
  double iou_threshold = 0.5;
  ev->add_option("--logs", logs, "log file or directory")->required();
  ev->add_option("--dimension-map", dim_map, "dimension -> task tags JSON");
  ev->add_option("--format", format, "table | json")->check(CLI::IsMember({"table", "json"}));
  ev->add_flag("--weighted", weighted, "instance-weighted averages");
  ev->add_option("--iou-threshold", iou_threshold, "interval correctness threshold");
  ev->add_option("--sim-logs", ev_sim, "simulated-run logs for the alignment block");
  ev->add_option("--real-logs", ev_real, "real-run logs for the alignment block");

  auto* svr = app.add_subcommand("sim-vs-real", "compare simulated and real runs");
  std::string sim_logs, real_logs, svr_format = "table";
  svr->add_option("--sim-logs", sim_logs, "simulated-run logs")->required();
  svr->add_option("--real-logs", real_logs, "real-run logs")->required();
  svr->add_option("--format", svr_format, "table | json")->check(CLI::IsMember({"table", "json"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return gen_scripts(family, count, gen_seed, out_dir, videos);
    if (val->parsed()) return validate_scripts(val_paths);
    if (run->parsed())
      return run_episodes_cmd(script_path, policy_spec, run_config, log_path, run_seed, prompt_path, threads);
    if (tr->parsed()) return train_cmd(corpus, grpo_config, params_out, history_out, init_params);
    if (ev->parsed()) return eval_cmd(logs, dim_map, format, weighted, iou_threshold, ev_sim, ev_real);
    if (svr->parsed()) return sim_vs_real_cmd(sim_logs, real_logs, svr_format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
