#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>

#include "cli_runner.hpp"
#include "damflow/damflow.hpp"

using namespace damflow;
namespace fs = std::filesystem;

namespace {

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (char c : line) {
      if (c == '"') quoted = !quoted;
      else if (c == ',' && !quoted) {
        cells.push_back(cell);
        cell.clear();
      } else {
        cell += c;
      }
    }
    cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    work_ = cli::scratch(::testing::UnitTest::GetInstance()->current_test_info()->name());
    config_ = cli::write_config(work_, "p_test.json", cli::p_test_config());
  }
  void TearDown() override { fs::remove_all(work_); }

  cli::Result run(const std::string& args) { return cli::run(args, work_); }

  fs::path work_, config_;
};

}  // namespace

TEST_F(Cli, ValidateNamesTheViolatedRule) {
  EXPECT_EQ(run("validate --config " + config_.string()).code, 0);
  json narrow = cli::p_test_config();
  narrow["geometry"]["H_plus"] = 2.0;
  narrow["geometry"].erase("H_minus");
  const auto r = run("validate --config " + cli::write_config(work_, "narrow.json", narrow).string());
  EXPECT_EQ(r.code, 2);
  const json rep = json::parse(r.out);
  EXPECT_FALSE(rep["valid"].get<bool>());
  ASSERT_EQ(rep["violations"].size(), 1u);
  EXPECT_EQ(rep["violations"][0], "isthmus_second: H+ + H1 - H3 > 0");
  json flipped = cli::p_test_config();
  flipped["geometry"]["H"][1] = -1.0;
  const auto f = run("validate --format csv --config " + cli::write_config(work_, "flip.json", flipped).string());
  EXPECT_EQ(f.code, 2);
  EXPECT_NE(f.out.find("sign_H2,\"H2 > 0\",false"), std::string::npos);
  EXPECT_NE(f.err.find("sign_H2"), std::string::npos);
}

TEST_F(Cli, SolveWritesParametersAndReusesTheCache) {
  const std::string args = "solve --config " + config_.string() + " --cache-dir " + (work_ / "cache").string();
  const auto first = run(args);
  ASSERT_EQ(first.code, 0) << first.err;
  const json a = json::parse(first.out);
  EXPECT_EQ(a["cache"], "miss");
  EXPECT_TRUE(a["lemma"]["omega_in_cone"].get<bool>());
  EXPECT_LT(a["residual"]["scaled_norm"].get<double>(), 1e-10);
  const ExtendedParams ep = params_from_json(a["params"], "params");
  const double om[3] = {ep.mp.omega.a11, ep.mp.omega.a12, ep.mp.omega.a22};
  EXPECT_TRUE(om[1] > 0.0 && om[1] < std::min(om[0], om[2]));
  EXPECT_LT(residual(ep.mp, ep.cuts.base).norm(), 1e-9);

  const auto second = run(args);
  ASSERT_EQ(second.code, 0);
  const json b = json::parse(second.out);
  EXPECT_EQ(b["cache"], "hit");
  EXPECT_LE(b["newton_steps"].get<int>(), 1);
  EXPECT_EQ(b["params"], a["params"]);
  // The default directory comes from the environment.
  const auto env = cli::run(std::string("solve --config ") + config_.string(), work_);
  EXPECT_EQ(json::parse(env.out)["cache"], "disabled");
  setenv(kCacheDirEnv, (work_ / "cache").c_str(), 1);
  const auto from_env = run("solve --config " + config_.string());
  unsetenv(kCacheDirEnv);
  EXPECT_EQ(json::parse(from_env.out)["cache"], "hit");
}

TEST_F(Cli, KappaReportsBothRoutes) {
  const auto r = run("kappa --no-cache --config " + config_.string());
  ASSERT_EQ(r.code, 0) << r.err;
  const json k = json::parse(r.out);
  EXPECT_GT(k["lambda"].get<double>(), 1.0);
  EXPECT_LT(std::abs(k["kappa_difference"].get<double>()), 1e-10);
  EXPECT_EQ(k["Q"].get<double>(), k["kappa"].get<double>());
  json flow = cli::p_test_config();
  flow["flow"] = {{"permeability", 2.0}, {"head_drop", 0.75}};
  const json q = json::parse(run("kappa --no-cache --config " + cli::write_config(work_, "flow.json", flow).string()).out);
  EXPECT_NEAR(q["Q"].get<double>(), 1.5 * k["kappa"].get<double>(), 1e-15);
}

TEST_F(Cli, MapRowsCarryRoundTripAndErrors) {
  const auto r = run("map --no-cache --format csv --config " + config_.string() +
                     " --point 1,0 --point 2,0.5 --point 0.1,3 --point 0.3,-1");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0][3], "re_w");
  EXPECT_EQ(std::stod(rows[1][3]), 0.0);
  EXPECT_EQ(std::stod(rows[1][4]), 0.0);
  EXPECT_EQ(rows[1][6], "boundary");
  for (int i : {2, 3}) {
    EXPECT_EQ(rows[i][6], "ok");
    EXPECT_LT(std::stod(rows[i][5]), 1e-8);
  }
  EXPECT_EQ(rows[4][6].rfind("error: exterior", 0), 0u);
  const auto back = run("map --no-cache --direction w2x --format csv --config " + config_.string() +
                        " --point=-1,-2.5 --point=0.5,0.5");
  const auto brows = csv_rows(back.out);
  EXPECT_EQ(brows[1][6], "ok");
  EXPECT_LT(std::stod(brows[1][5]), 1e-8);
  EXPECT_EQ(brows[2][6].rfind("error: exterior", 0), 0u);
}

TEST_F(Cli, StreamlinesStayInsideAndSvgParses) {
  const auto r = run("streamlines --no-cache --format csv --config " + config_.string() + " --svg " +
                     (work_ / "plot.svg").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = csv_rows(r.out);
  ASSERT_EQ(rows[0], (std::vector<std::string>{"line_id", "index", "re_w", "im_w"}));
  const PolygonSpec P{{-1.0, 1.0, 1.0, -1.0, 2.0}, 3.0, 3.0};
  std::vector<std::vector<cplx>> lines(9);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const cplx w(std::stod(rows[i][2]), std::stod(rows[i][3]));
    EXPECT_TRUE(P.contains(w) || P.boundary_distance(w) < 1e-9) << w;
    lines.at(std::stoul(rows[i][0])).push_back(w);
  }
  for (const auto& l : lines) EXPECT_EQ(l.size(), 33u);
  boost::property_tree::ptree tree;
  ASSERT_NO_THROW(boost::property_tree::read_xml((work_ / "plot.svg").string(), tree));
  EXPECT_EQ(tree.get_child("svg").count("path"), 2u + 9u);
  EXPECT_EQ(tree.get<std::string>("svg.<xmlattr>.viewBox"), "-5.16 -0.16 8.32 3.32");
}

TEST_F(Cli, OutputIsDeterministic) {
  for (const std::string cmd : {"solve --timestamp", "kappa --timestamp", "streamlines --format csv", "sweep --format csv"}) {
    const auto a = run(cmd + " --no-cache --config " + config_.string());
    const auto b = run(cmd + " --no-cache --config " + config_.string());
    ASSERT_EQ(a.code, 0) << cmd << ": " << a.err;
    if (cmd.find("timestamp") != std::string::npos) {
      EXPECT_TRUE(json::parse(a.out).contains("timestamp"));
      EXPECT_EQ(cli::without_timestamp(a.out), cli::without_timestamp(b.out)) << cmd;
    } else {
      EXPECT_EQ(a.out, b.out) << cmd;
    }
  }
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("solve --no-cache --config " + config_.string()).code, 0);
  json bad = cli::p_test_config();
  bad["geometry"]["H"][3] = 1.0;
  EXPECT_EQ(run("solve --no-cache --config " + cli::write_config(work_, "bad.json", bad).string()).code, 2);
  EXPECT_EQ(run("solve --no-cache --tol 1e-30 --config " + config_.string()).code, 3);
  EXPECT_EQ(run("solve --config " + (work_ / "missing.json").string()).code, 4);
  EXPECT_EQ(run("kappa --no-cache --config " + config_.string() + " --output /nonexistent/dir/k.json").code, 4);
  std::ofstream(work_ / "broken.json") << "{\n  \"schema_version\": 1,\n  \"geometry\": {\"H\": [1, 2,\n}";
  const auto parse = run("solve --config " + (work_ / "broken.json").string());
  EXPECT_EQ(parse.code, 2);
  EXPECT_NE(parse.err.find("broken.json:4:1"), std::string::npos) << parse.err;
  EXPECT_EQ(run("solve --config " + config_.string() + " --bogus").code, 2);
}

TEST_F(Cli, ZeroGridSweepEqualsKappa) {
  const auto s = run("sweep --no-cache --format csv --config " + config_.string());
  const auto k = run("kappa --no-cache --format csv --config " + config_.string());
  ASSERT_EQ(s.code, 0) << s.err;
  const auto srows = csv_rows(s.out), krows = csv_rows(k.out);
  ASSERT_EQ(srows.size(), 2u);
  EXPECT_EQ(srows[1][4], krows[1][1]);
  EXPECT_EQ(srows[1][5], krows[1][0]);
}

TEST_F(Cli, SweepResumesAfterInterrupt) {
  json cfg = cli::p_test_config();
  cfg["sweep"] = {{"w2", {0.05, 0.1, 0.15, 0.2}}, {"w4", {0.05, 0.1, 0.15, 0.2}}, {"w5", {0.0}}};
  const fs::path path = cli::write_config(work_, "sweep.json", cfg);
  const fs::path cache = work_ / "cache";
  fs::create_directories(cache);
  const std::string args = "sweep --format csv --config " + path.string() + " --cache-dir " + cache.string();
  const int left = cli::run_and_kill(args, cache, 5);
  EXPECT_GE(left, 1);
  EXPECT_LT(left, 16);
  const auto resumed = run(args);
  ASSERT_EQ(resumed.code, 0) << resumed.err;
  EXPECT_NE(resumed.err.find(std::to_string(left) + " from cache"), std::string::npos) << resumed.err;
  const auto fresh = run("sweep --format csv --no-cache --config " + path.string());
  EXPECT_EQ(resumed.out, fresh.out);
  const auto again = run(args);
  EXPECT_NE(again.err.find("16 from cache"), std::string::npos) << again.err;
  EXPECT_EQ(again.out, fresh.out);
}
