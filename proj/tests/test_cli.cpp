#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "controlvae/cli.hpp"

using namespace controlvae;
namespace fs = std::filesystem;

namespace {

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("controlvae_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::string write_config(const std::string& body, const std::string& name = "cfg.json") const {
    std::ofstream(path(name)) << body;
    return path(name);
  }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "controlvae");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    out_.str("");
    err_.str("");
    return run_cli(static_cast<int>(argv.size()), argv.data(), out_, err_);
  }

  static std::string slurp(const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

// Minimal RFC 4180 reader: CRLF records, no quoting needed for numeric data,
// every record has the header's field count.
std::vector<std::vector<std::string>> parse_csv_strict(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const std::size_t end = text.find("\r\n", pos);
    if (end == std::string::npos) throw std::runtime_error("record without CRLF terminator");
    const std::string line = text.substr(pos, end - pos);
    if (line.find('\n') != std::string::npos || line.find('\r') != std::string::npos)
      throw std::runtime_error("bare line break inside record");
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (!rows.empty() && fields.size() != rows.front().size()) throw std::runtime_error("ragged record");
    rows.push_back(fields);
    pos = end + 2;
  }
  return rows;
}

}  // namespace

TEST_F(CliTest, VersionAndUsage) {
  EXPECT_EQ(run({"--version"}), 0);
  EXPECT_NE(out_.str().find(kVersion), std::string::npos);
  EXPECT_EQ(run({"--bogus"}), 1);
  EXPECT_EQ(run({}), 1);
  EXPECT_NE(err_.str().find("--config"), std::string::npos);
}

TEST_F(CliTest, EmptyConfigNamesMissingField) {
  EXPECT_EQ(run({"--config", write_config("")}), 1);
  EXPECT_NE(err_.str().find("experiment"), std::string::npos);
  EXPECT_EQ(run({"--config", path("does_not_exist.json")}), 1);
}

TEST_F(CliTest, MalformedJsonReportsLine) {
  EXPECT_EQ(run({"--config", write_config("{\n  \"experiment\": \"gain_check\",\n  oops\n}")}), 1);
  EXPECT_NE(err_.str().find("line 3"), std::string::npos) << err_.str();
}

TEST_F(CliTest, UnknownKeysAndBadValuesAreConfigErrors) {
  EXPECT_EQ(run({"--config", write_config(R"({"experiment":"gain_check","kp":0.01,"ki":1e-4,"setpoint":3,"kpp":1})")}),
            1);
  EXPECT_NE(err_.str().find("kpp"), std::string::npos);
  EXPECT_EQ(run({"--config", write_config(R"({"experiment":"nope"})")}), 1);
  const std::string neg = R"({"experiment":"controller_trace","output":")" + path("t") +
                          R"(","controller":{"preset":"language"},"setpoint_schedule":{"type":"constant","value":3},"observed_kl":[1,-2]})";
  EXPECT_EQ(run({"--config", write_config(neg)}), 1);
  EXPECT_NE(err_.str().find("observed_kl[1]"), std::string::npos);
  const std::string missing_sched = R"({"experiment":"vae_train","output":")" + path("v") +
                                    R"(","train":{"objective":"controlled","controller":{"preset":"language"}}})";
  EXPECT_EQ(run({"--config", write_config(missing_sched)}), 1);
  EXPECT_NE(err_.str().find("setpoint_schedule"), std::string::npos);
}

TEST_F(CliTest, GainCheck) {
  const std::string cfg = R"({"experiment":"gain_check","output":")" + path("g") +
                          R"(","kp":0.01,"ki":1e-4,"setpoint":3})";
  ASSERT_EQ(run({"--config", write_config(cfg), "--quiet"}), 0) << err_.str();
  const auto j = nlohmann::json::parse(slurp(path("g.summary.json")));
  EXPECT_TRUE(j["kp_ok"].get<bool>());
  EXPECT_NEAR(j["kp_bound"].get<double>(), 0.0210855, 1e-6);
  EXPECT_EQ(j["run_id"], "g");
}

TEST_F(CliTest, ControllerTraceValues) {
  const std::string cfg = R"({"experiment":"controller_trace","output":")" + path("trace") +
                          R"(","controller":{"preset":"language"},"setpoint_schedule":{"type":"constant","value":3},"observed_kl":[0,0,0]})";
  ASSERT_EQ(run({"--config", write_config(cfg)}), 0) << err_.str();
  const auto rows = parse_csv_strict(slurp(path("trace.csv")));
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0][0], "t");
  EXPECT_EQ(rows[0].back(), "beta");
  EXPECT_NEAR(std::stod(rows[1][7]), 1.7425873177566778e-4, 1e-12);
  EXPECT_NEAR(std::stod(rows[2][6]), -1.2574126822433225e-4, 1e-12);
  EXPECT_EQ(std::stod(rows[2][7]), 0.0);
  EXPECT_EQ(std::stod(rows[3][7]), 0.0);

  const auto j = nlohmann::json::parse(slurp(path("trace.summary.json")));
  EXPECT_EQ(j["checkpoint"]["step_count"].get<std::uint64_t>(), 3u);
  EXPECT_NEAR(j["checkpoint"]["integral"].get<double>(), -6e-4, 1e-15);
}

TEST_F(CliTest, ControllerTraceResumesFromCheckpoint) {
  const std::string base = R"({"experiment":"controller_trace","controller":{"preset":"language"},"setpoint_schedule":{"type":"constant","value":3},)";
  ASSERT_EQ(run({"--config", write_config(base + R"("output":")" + path("full") + R"(","observed_kl":[1,2,4,8]})")}), 0);
  ASSERT_EQ(run({"--config", write_config(base + R"("output":")" + path("first") + R"(","observed_kl":[1,2]})")}), 0);
  const auto ck = nlohmann::json::parse(slurp(path("first.summary.json")))["checkpoint"];
  ASSERT_EQ(run({"--config", write_config(base + R"("output":")" + path("second") + R"(","observed_kl":[4,8],"initial_state":)" +
                                          ck.dump() + "}")}),
            0)
      << err_.str();
  const auto full = parse_csv_strict(slurp(path("full.csv")));
  const auto second = parse_csv_strict(slurp(path("second.csv")));
  EXPECT_EQ(full[3][7], second[1][7]);
  EXPECT_EQ(full[4][7], second[2][7]);
}

TEST_F(CliTest, PlantLoopIsDeterministicAndRfc4180) {
  const std::string cfg = R"({"experiment":"plant_loop","output":")" + path("p") +
                          R"(","plant":{"noise_std":0.3,"seed":1},"controller":{"preset":"sprite","beta_max":1},"setpoint_schedule":{"type":"constant","value":5},"steps":300})";
  const std::string c = write_config(cfg);
  ASSERT_EQ(run({"--config", c, "--seed", "7", "--quiet"}), 0) << err_.str();
  const std::string first = slurp(path("p.csv"));
  const std::string first_summary = slurp(path("p.summary.json"));
  ASSERT_EQ(run({"--config", c, "--seed", "7", "--quiet"}), 0);
  EXPECT_EQ(first, slurp(path("p.csv")));
  EXPECT_EQ(first_summary, slurp(path("p.summary.json")));

  const auto rows = parse_csv_strict(first);
  ASSERT_EQ(rows.size(), 301u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "beta", "kl", "recon", "setpoint", "total"}));

  ASSERT_EQ(run({"--config", c, "--seed", "8", "--quiet"}), 0);
  EXPECT_NE(first, slurp(path("p.csv")));
  EXPECT_NE(nlohmann::json::parse(first_summary)["config_hash"],
            nlohmann::json::parse(slurp(path("p.summary.json")))["config_hash"]);
}

TEST_F(CliTest, VaeTrainZeroStepsWritesHeaderOnly) {
  const std::string cfg = R"({"experiment":"vae_train","output":")" + path("v") +
                          R"(","checkpoint":true,"train":{"objective":"controlled","controller":{"preset":"sprite"},"setpoint_schedule":{"type":"constant","value":2}}})";
  ASSERT_EQ(run({"--config", write_config(cfg), "--steps", "0"}), 0) << err_.str();
  EXPECT_EQ(slurp(path("v.csv")), "t,beta,kl,recon,setpoint,total\r\n");
  EXPECT_TRUE(fs::exists(path("v.klp")));
  const auto j = nlohmann::json::parse(slurp(path("v.summary.json")));
  EXPECT_TRUE(j["kl_mean_final"].is_null());
}

TEST_F(CliTest, VaeTrainShortRunAndFailure) {
  const std::string ok = R"({"experiment":"vae_train","output":")" + path("v") +
                         R"(","train":{"objective":"beta_fixed","beta_schedule":{"type":"constant","beta":1},"steps":50,"log_every":10}})";
  ASSERT_EQ(run({"--config", write_config(ok), "--quiet"}), 0) << err_.str();
  EXPECT_EQ(parse_csv_strict(slurp(path("v.csv"))).size(), 6u);

  const std::string bad = R"({"experiment":"vae_train","output":")" + path("bad") +
                          R"(","train":{"objective":"elbo","learning_rate":1000,"steps":100}})";
  EXPECT_EQ(run({"--config", write_config(bad), "--quiet"}), 2);
  const auto j = nlohmann::json::parse(slurp(path("bad.summary.json")));
  EXPECT_TRUE(j.contains("error"));
  EXPECT_EQ(parse_csv_strict(slurp(path("bad.csv"))).size(), 1u + j["failed_step"].get<std::size_t>());
}

TEST_F(CliTest, SetpointBoundsOnPlant) {
  const std::string cfg = R"({"experiment":"setpoint_bounds","output":")" + path("b") +
                          R"(","runner":"plant","plant":{},"controller":{"preset":"language"},"steps":2000})";
  ASSERT_EQ(run({"--config", write_config(cfg), "--quiet"}), 0) << err_.str();
  const auto j = nlohmann::json::parse(slurp(path("b.summary.json")));
  EXPECT_NEAR(j["v_min"].get<double>(), 1.0, 0.02);
  EXPECT_NEAR(j["v_max"].get<double>(), 20.0, 0.4);

  const std::string noisy = R"({"experiment":"setpoint_bounds","output":")" + path("n") +
                            R"(","runner":"plant","plant":{"noise_std":5,"v_at_beta_max":0.5},"controller":{"preset":"language"},"steps":2000})";
  EXPECT_EQ(run({"--config", write_config(noisy), "--quiet"}), 2);
  EXPECT_TRUE(nlohmann::json::parse(slurp(path("n.summary.json"))).contains("trace"));
}

TEST(SampleConfigs, AllParse) {
  std::size_t seen = 0;
  for (const auto& entry : fs::directory_iterator(CONTROLVAE_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    std::ifstream in(entry.path());
    std::ostringstream ss;
    ss << in.rdbuf();
    EXPECT_NO_THROW(parse_experiment_text(ss.str())) << entry.path();
    ++seen;
  }
  EXPECT_GE(seen, 5u);
}
