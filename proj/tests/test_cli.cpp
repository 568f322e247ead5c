// Copyright 2026 The mtraj Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "support.hpp"

namespace
{

using namespace mtraj;
using mtraj::testing::read_file;
using mtraj::testing::scratch_dir;

struct Result
{
  int code = -1;
  std::string out;
  std::string err;
};

Result run(const std::string & dir, const std::string & args)
{
  const std::string out = dir + "/stdout.txt", err = dir + "/stderr.txt";
  const std::string cmd = std::string(MTRAJ_CLI_PATH) + " " + args + " >" + out + " 2>" + err;
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

std::size_t lines(const std::string & s)
{
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

nlohmann::json first_json_line(const std::string & s)
{
  return nlohmann::json::parse(s.substr(0, s.find('\n')));
}

// The resolved-config block printed first on stdout.
nlohmann::json resolved_block(const std::string & s)
{
  return nlohmann::json::parse(s.substr(0, s.find("\n}\n") + 2));
}

class Cli : public ::testing::Test
{
protected:
  void SetUp() override
  {
    dir = scratch_dir(std::string("cli_") + ::testing::UnitTest::GetInstance()->current_test_info()->name());
  }

  std::string gen(const std::string & profile, std::size_t n, std::size_t steps = 8, int seed = 0)
  {
    const std::string path = dir + "/" + profile + ".jsonl";
    const Result r = run(dir, "gen-data --profile " + profile + " --out " + path + " --n " + std::to_string(n) +
      " --agents 3 --steps " + std::to_string(steps) + " --seed " + std::to_string(seed));
    EXPECT_EQ(r.code, 0) << r.err;
    return path;
  }

  std::string tiny_config()
  {
    const std::string path = dir + "/config.json";
    std::ofstream(path) << R"({"epochs": 1, "batch_size": 4, "k_train": 2, "d_model": 8, "d_z": 8,
      "encoder_heads": 2, "adapter_heads": 2, "d_p": 4})";
    return path;
  }

  std::string dir;
};

TEST_F(Cli, GenDataWritesRequestedRows)
{
  const std::string path = gen("basketball", 7);
  EXPECT_EQ(lines(read_file(path)), 7u);
  const Result r = run(dir, "gen-data --profile soccer --out " + dir + "/x.jsonl --n 2 --agents 3 --steps 8");
  const nlohmann::json head = resolved_block(r.out);
  EXPECT_EQ(head.at("command"), "gen-data");
  EXPECT_EQ(head.at("config").at("n"), 2);
}

TEST_F(Cli, GenDataIsDeterministic)
{
  const std::string a = read_file(gen("football", 4, 8, 3));
  const std::string b = read_file(gen("football", 4, 8, 3));
  EXPECT_EQ(a, b);
}

TEST_F(Cli, TooFewAgentsRejectedWithJsonError)
{
  const Result r = run(dir, "gen-data --out " + dir + "/x.jsonl --agents 1");
  EXPECT_EQ(r.code, 1);
  const nlohmann::json e = first_json_line(r.err);
  EXPECT_EQ(e.at("error"), "config");
  EXPECT_FALSE(e.at("message").get<std::string>().empty());
}

TEST_F(Cli, UnknownFlagIsUsageError)
{
  const Result r = run(dir, "gen-data --out " + dir + "/x.jsonl --colour red");
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(first_json_line(r.err).contains("error"));
}

TEST_F(Cli, StatsWritesTable)
{
  const std::string data = gen("basketball", 3);
  const Result r = run(dir, "stats --data " + data + " --out " + dir + "/stats.csv");
  ASSERT_EQ(r.code, 0) << r.err;
  const std::string csv = read_file(dir + "/stats.csv");
  EXPECT_EQ(csv.rfind("dataset,role,step,path_l,path_d_discrepancy,path_d_endpoint\n", 0), 0u);
  EXPECT_NE(csv.find("basketball,ball,"), std::string::npos);
}

TEST_F(Cli, TrainEvalExportRoundTrip)
{
  const std::string bb = gen("basketball", 4), sc = gen("soccer", 4);
  const Result t = run(dir, "train --config " + tiny_config() + " --data " + bb + " --data " + sc + " --out " + dir +
    "/run");
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(resolved_block(t.out).at("config").at("train").at("epochs"), 1);
  EXPECT_EQ(lines(read_file(dir + "/run/train_log.csv")), 2u);

  const Result e = run(dir, "eval --ckpt " + dir + "/run/checkpoint.json --data " + sc + " --k 3 --out " + dir +
    "/eval");
  ASSERT_EQ(e.code, 0) << e.err;
  const std::string csv = read_file(dir + "/eval/u2s_model_soccer.csv");
  EXPECT_NE(csv.find("soccer,u2s/model,all,min_ade,"), std::string::npos) << csv;

  const Result x = run(dir, "export-embeddings --ckpt " + dir + "/run/checkpoint.json --data " + bb + " --out " +
    dir + "/emb.csv");
  ASSERT_EQ(x.code, 0) << x.err;
  const std::string emb = read_file(dir + "/emb.csv");
  EXPECT_EQ(emb.substr(0, emb.find('\n')), "seq_id,agent_id,role,domain,space,c0,c1,c2,c3");
  EXPECT_NE(emb.find(",role,"), std::string::npos);
  EXPECT_NE(emb.find(",domain,"), std::string::npos);
  // 4 scenes x 3 agents x 2 spaces.
  EXPECT_EQ(lines(emb), 1u + 24u);
}

TEST_F(Cli, EvalBaselineNeedsNoCheckpointFile)
{
  const std::string data = gen("football", 3);
  const Result r = run(dir, "eval --ckpt mean --data " + data + " --out " + dir + "/eval");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir + "/eval/u2s_mean_football.csv"));
}

TEST_F(Cli, NegativeWeightConfigRejected)
{
  const std::string data = gen("basketball", 2);
  const std::string cfg = dir + "/bad.json";
  std::ofstream(cfg) << R"({"lambda3": -1})";
  const Result r = run(dir, "train --config " + cfg + " --data " + data + " --out " + dir + "/run");
  EXPECT_EQ(r.code, 1);
  EXPECT_EQ(first_json_line(r.err).at("error"), "config");
}

TEST_F(Cli, MissingDataFileReported)
{
  const Result r = run(dir, "stats --data " + dir + "/nope.jsonl --out " + dir + "/s.csv");
  EXPECT_EQ(r.code, 1);
  EXPECT_TRUE(first_json_line(r.err).contains("message"));
}

}  // namespace
