#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cvr/simulator.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace cvr;

namespace {

AgentAction caption(int video, std::optional<double> t0 = {}, std::optional<double> t1 = {}) {
  return AgentAction{GetCaption{video, t0, t1}, ""};
}

AgentAction observe(std::vector<ObserveTarget> targets, std::string focus = "") {
  return AgentAction{Observe{std::move(targets), std::move(focus)}, ""};
}

std::vector<std::string> split(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  for (;;) {
    auto next = s.find(sep, pos);
    out.push_back(s.substr(pos, next - pos));
    if (next == std::string::npos) return out;
    pos = next + sep.size();
  }
}

}  // namespace

TEST(Simulate, ShrimpCaptionLineWithTimestamps) {
  const auto s = fixtures::load(fixtures::shrimp_doc());
  const auto obs = simulate(s, caption(2));
  EXPECT_NE(obs.text.find("[85.88s - 105.24s]: Now wash and peel eight large cooked shrimp and cut them in half."),
            std::string::npos)
      << obs.text;
  EXPECT_EQ(obs.source, ObservationSource::sim_deterministic);
  EXPECT_GE(obs.elapsed_s, 0.0);
}

TEST(Simulate, CaptionWindowLimitsLines) {
  const auto s = fixtures::load(fixtures::shrimp_doc());
  EXPECT_EQ(simulate(s, caption(2, 0.0, 30.0)).text, "[10s - 20s]: First, bring the water to a boil.");
  EXPECT_EQ(simulate(s, caption(2, 25.0, 30.0)).text, kNoEvidence);
  EXPECT_EQ(simulate(s, caption(2, 100.0)).text.find("[85.88s"), 0u);
}

TEST(Simulate, DisjointObserveGivesSentinel) {
  const auto s = fixtures::load(fixtures::shrimp_doc());
  EXPECT_EQ(simulate(s, observe({{1, 60, 100, 16}})).text, kNoEvidence);
  EXPECT_EQ(simulate(s, observe({{1, 60, 100, 16}, {2, 30, 80, 16}}, "anything")).text, kNoEvidence);
}

TEST(Simulate, RenderFormat) {
  const auto s = fixtures::load(fixtures::shrimp_doc());
  EXPECT_EQ(simulate(s, observe({{1, 0, 60, 32}})).text,
            "Video 1 [0s-60s]: A woman lays out rice paper sheets | A woman peels shrimp and halves them");
  EXPECT_EQ(simulate(s, observe({{1, 0, 20, 8}, {2, 0, 15, 8}}, "what\nhappens")).text,
            "FOCUS: what happens\nVideo 1 [0s-20s]: A woman lays out rice paper sheets\n"
            "Video 2 [0s-15s]: A man boils water in a pot");
}

TEST(Simulate, FocusNeverChangesSelection) {
  const auto s = fixtures::load(fixtures::shrimp_doc());
  const auto plain = simulate(s, observe({{2, 0, 180, 16}})).text;
  const auto focused = simulate(s, observe({{2, 0, 180, 16}}, "only the shrimp please")).text;
  EXPECT_EQ(focused, "FOCUS: only the shrimp please\n" + plain);
}

TEST(Simulate, TwoFullTargetsListEveryVisualOnce) {
  for (int seed = 0; seed < 30; ++seed) {
    const auto s = generate_template_script(ScriptFamily::alignment_interval, seed);
    const auto text = simulate(s, observe({{1, 0, s.videos[0].duration_s, 64},
                                           {2, 0, s.videos[1].duration_s, 64}}))
                          .text;
    std::multiset<std::string> got;
    for (const auto& line : split(text, "\n")) {
      const auto colon = line.find("]: ");
      for (const auto& piece : split(line.substr(colon + 3), " | ")) got.insert(piece);
    }
    std::multiset<std::string> expected;
    for (int vi = 1; vi <= 2; ++vi)
      for (const auto& e : slice(s, vi, full_range(s, vi), Channel::events)) expected.insert(e.text);
    EXPECT_EQ(got, expected);
  }
}

TEST(Simulate, Errors) {
  const auto s = fixtures::load(fixtures::shrimp_doc());
  EXPECT_THROW(simulate(s, AgentAction{Answer{Interval{1, 2}}, ""}), Error);
  EXPECT_THROW(simulate(s, caption(3)), UnknownVideoError);
  EXPECT_THROW(simulate(s, observe({{9, 0, 1, 1}})), UnknownVideoError);
}

TEST(Simulate, Deterministic) {
  const auto s = generate_template_script(ScriptFamily::choice_behavior, 5);
  const auto a = observe({{1, 0, 50, 16}, {3, 10, 90, 16}}, "x");
  EXPECT_EQ(simulate(s, a).text, simulate(s, a).text);
}

// Every fragment of an Observe rendering is the visual of an event that
// overlaps its target window, and the sentinel shows up exactly when all slices
// are empty.
TEST(Simulate, SoundnessOverGeneratedScripts) {
  Rng rng(99);
  for (int n = 0; n < 200; ++n) {
    const auto s = generate_template_script(n % 2 ? ScriptFamily::choice_behavior : ScriptFamily::alignment_interval, n);
    for (int q = 0; q < 5; ++q) {
      std::vector<ObserveTarget> targets;
      const int count = uniform_int(rng, 1, 3);
      for (int i = 0; i < count; ++i) {
        const int vi = uniform_int(rng, 1, static_cast<int>(s.videos.size()));
        const double d = s.videos[vi - 1].duration_s;
        const double t0 = round_ms(uniform_real(rng, 0, d)), t1 = round_ms(std::min(d, t0 + uniform_real(rng, 0, 20)));
        targets.push_back({vi, t0, t1, 8});
      }
      const auto text = simulate(s, observe(targets)).text;
      bool all_empty = true;
      for (const auto& t : targets)
        for (const auto& e : s.videos[t.video_index - 1].events)
          if (oracle::closed_overlap(e.start_s, e.end_s, t.start_time, t.end_time)) all_empty = false;
      EXPECT_EQ(text == kNoEvidence, all_empty);
      if (all_empty) continue;
      std::size_t line_no = 0;
      const auto lines = split(text, "\n");
      for (const auto& t : targets) {
        bool has = false;
        for (const auto& e : s.videos[t.video_index - 1].events)
          has |= oracle::closed_overlap(e.start_s, e.end_s, t.start_time, t.end_time);
        if (!has) continue;
        ASSERT_LT(line_no, lines.size());
        const auto& line = lines[line_no++];
        const std::string prefix =
            fmt::format("Video {} [{}s-{}s]: ", t.video_index, format_seconds(t.start_time), format_seconds(t.end_time));
        ASSERT_EQ(line.rfind(prefix, 0), 0u) << line;
        for (const auto& piece : split(line.substr(prefix.size()), " | ")) {
          bool traced = false;
          for (const auto& e : s.videos[t.video_index - 1].events)
            traced |= e.visual == piece && oracle::closed_overlap(e.start_s, e.end_s, t.start_time, t.end_time);
          EXPECT_TRUE(traced) << piece;
        }
      }
      EXPECT_EQ(line_no, lines.size());
    }
  }
}

TEST(SimPrompt, BeginsWithSystemPromptAndKeepsNoEvidenceRule) {
  const auto s = fixtures::load(fixtures::shrimp_doc());
  const auto a = observe({{1, 60, 100, 16}});
  const auto slice_text = render_script_slice(s, a);
  EXPECT_TRUE(slice_text.empty());
  const auto prompt = compose_sim_prompt(slice_text, a);
  EXPECT_EQ(prompt.rfind(std::string(kSimulatorSystemPrompt), 0), 0u);
  EXPECT_NE(prompt.find("No significant action observed."), std::string::npos);
  EXPECT_THROW(compose_sim_prompt("", AgentAction{Answer{Interval{1, 2}}, ""}), Error);
}

TEST(SimPrompt, SliceWithBracesAndQuotesRoundTrips) {
  const std::string tricky = "Video 1 [0s - 4s]: He says \"{hot}\" and writes {\"a\": [1, 2]} \\ done\nline two";
  const auto a = caption(1);
  const auto prompt = compose_sim_prompt(tricky, a);
  const auto body = prompt.substr(kSimulatorSystemPrompt.size());
  const json payload = json::parse(body);
  EXPECT_EQ(payload.at("video_script_ground_truth").get<std::string>(), tricky);
  EXPECT_EQ(payload.at("query").get<std::string>(), describe_query(a));
}

TEST(SimPrompt, SliceRenderingCoversCaptionsAndEvents) {
  const auto s = fixtures::load(fixtures::shrimp_doc());
  EXPECT_EQ(render_script_slice(s, caption(2, 80.0, 90.0)),
            "Video 2 [85.88s - 105.24s]: Now wash and peel eight large cooked shrimp and cut them in half.");
  EXPECT_EQ(render_script_slice(s, observe({{1, 0, 6, 4}})), "Video 1 [5s - 12s]: A woman lays out rice paper sheets");
}

TEST(SimPrompt, AssetFileMatchesConstant) {
  std::ifstream in(std::string(CVR_SOURCE_DIR) + "/prompts/simulator_system.txt", std::ios::binary);
  ASSERT_TRUE(in);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), std::string(kSimulatorSystemPrompt));
}
