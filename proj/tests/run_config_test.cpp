#include <gtest/gtest.h>

#include <cmath>

#include "rydsim/run_config.hpp"

using namespace rydsim;
using namespace rydsim::config;

namespace {

int error_line(const std::string& text) {
  try {
    parse(text, "t.json");
  } catch (const LoadError& e) {
    return e.line();
  }
  return -1;
}

std::string error_text(const std::string& text) {
  try {
    parse(text, "t.json");
  } catch (const LoadError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsRoundTrip) {
  const RunConfig c;
  const std::string a = dump(c);
  const RunConfig back = parse(a);
  EXPECT_EQ(dump(back), a);
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, EmptyObjectGivesDefaults) {
  EXPECT_EQ(dump(parse("{}")), dump(RunConfig{}));
}

TEST(Config, ModifiedRoundTripAndHash) {
  const std::string text = R"({
  "seed": 7,
  "realizations": 3,
  "sweep": {"N": 8, "JT": 40, "modes": ["fixed"], "ramp": {"direction": "up", "grid": 64}},
  "phase_diagram": {"omega_over_4J": [0.1, 0.4], "Jz_over_J": {"start": -1, "stop": 1, "count": 3}},
  "evaporate": {"schedule": {
    "knots": [{"t_s": 0, "L_um": 200, "left_height_Hz": 4e6, "right_height_Hz": 3e6},
              {"t_s": 0.01, "L_um": 150, "left_height_Hz": 4e6, "right_height_Hz": 3e6}],
    "phases": [{"name": "II", "t_begin_s": 0, "t_end_s": 0.01, "dt_s": 1e-6}]}},
  "lifetime": {"atoms": 10}
})";
  const RunConfig c = parse(text);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.sweep.N, 8);
  EXPECT_EQ(c.sweep.ramp.direction, ramps::Direction::up);
  EXPECT_EQ(c.phase_diagram.omega_over_4J.expand(), (std::vector<double>{0.1, 0.4}));
  EXPECT_EQ(c.phase_diagram.Jz_over_J.expand().size(), 3u);
  EXPECT_FALSE(c.evaporate.use_sequence);
  EXPECT_EQ(c.evaporate.model.schedule.knots.size(), 2u);
  EXPECT_EQ(c.lifetime.atoms, 10);
  const std::string a = dump(c);
  EXPECT_EQ(dump(parse(a)), a);
  EXPECT_NE(config_hash(c), config_hash(RunConfig{}));
}

TEST(Config, NonFiniteNumbersAsStrings) {
  const RunConfig c = parse(R"({"lifetime": {"channels": [{"name": "x", "lifetime_s": "inf", "note": "n"}]}})");
  ASSERT_EQ(c.lifetime.channels.size(), 1u);
  EXPECT_TRUE(std::isinf(c.lifetime.channels[0].lifetime));
  EXPECT_EQ(dump(parse(dump(c))), dump(c));
}

TEST(Config, UnknownKeyIsAnchored) {
  const std::string text = "{\n  \"seed\": 1,\n  \"sweep\": {\n    \"N\": 8,\n    \"bogus\": 3\n  }\n}\n";
  EXPECT_EQ(error_line(text), 5);
  const std::string msg = error_text(text);
  EXPECT_NE(msg.find("t.json:5:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("/sweep/bogus"), std::string::npos) << msg;
}

TEST(Config, TypeErrorIsAnchored) {
  const std::string text = "{\n  \"gaps\": {\n    \"N\": \"twelve\"\n  }\n}\n";
  EXPECT_EQ(error_line(text), 3);
  EXPECT_NE(error_text(text).find("/gaps/N"), std::string::npos);
}

TEST(Config, EmptyGridRejected) {
  const std::string text = "{\n  \"phase_diagram\": {\n    \"omega_over_4J\": []\n  }\n}\n";
  EXPECT_EQ(error_line(text), 3);
  EXPECT_NE(error_text(text).find("empty"), std::string::npos);
}

TEST(Config, SyntaxErrorLine) {
  EXPECT_EQ(error_line("{\n  \"seed\": 1,\n  \"threads\": ,\n}\n"), 3);
}

TEST(Config, ValueChecks) {
  EXPECT_GT(error_line(R"({"realizations": 0})"), 0);
  EXPECT_GT(error_line(R"({"threads": 0})"), 0);
  EXPECT_GT(error_line(R"({"sweep": {"modes": ["sideways"]}})"), 0);
  EXPECT_GT(error_line(R"({"evaporate": {"sequence": {"durations_s": [0.1, 0, 0.1, 0.1]}}})"), 0);
  EXPECT_GT(error_line(R"({"gaps": {"boundary": "twisted"}})"), 0);
}

TEST(Config, HashIsStable) {
  RunConfig a, b;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 2;
  EXPECT_NE(config_hash(a), config_hash(b));
}
