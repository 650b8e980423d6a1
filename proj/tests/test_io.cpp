#include <doctest.h>

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "fpreg/errors.hpp"
#include "fpreg/io.hpp"

using namespace fpreg;
using njson = nlohmann::json;

namespace {

const std::string kDataDir = FPREG_TEST_DATA_DIR;

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name, const std::string& content) {
    path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << content;
  }
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
};

RunConfig estimate_config(const std::string& data_path) {
  RunConfig cfg;
  cfg.command = "estimate";
  cfg.data_path = data_path;
  cfg.outcome = "y";
  cfg.causes = {"x"};
  return cfg;
}
}  // namespace

TEST_CASE("the example csv loads with an automatic intercept") {
  const CsvData csv = load_sample(estimate_config(kDataDir + "/binary_example.csv"));
  CHECK(csv.data.size() == 4);
  CHECK(csv.data.k() == 1);
  CHECK(csv.data.q() == 1);
  CHECK(csv.cause_names.size() == 1);
  CHECK(csv.attribute_names.size() == 1);
  CHECK(csv.attribute_names[0] == "(intercept)");
  CHECK(csv.data.y(0) == 1.0);
  CHECK(csv.data.y(3) == 2.0);
  CHECK(csv.data.u(0, 0) == 1.0);
  CHECK(csv.data.u(2, 0) == 0.0);
  CHECK((csv.data.z.col(0).array() == 1.0).all());
}

TEST_CASE("quoted fields and windows line endings parse") {
  TempFile f("fpreg_quoted.csv",
             "\"y\",x,\"note, with comma\"\r\n"
             "\"1\",1,\"a\"\"b\"\r\n"
             "2,1,c\r\n"
             "0,0,d\r\n"
             "\"2\",0,e\r\n");
  const CsvData csv = load_sample(estimate_config(f.path.string()));
  CHECK(csv.data.size() == 4);
  CHECK(csv.data.y(0) == 1.0);
  CHECK(csv.data.y(3) == 2.0);
}

TEST_CASE("a file without a trailing newline still yields its last row") {
  TempFile f("fpreg_notail.csv", "y,x\n1,1\n2,1\n0,0\n2,0");
  const CsvData csv = load_sample(estimate_config(f.path.string()));
  CHECK(csv.data.size() == 4);
  CHECK(csv.data.y(3) == 2.0);
}

TEST_CASE("missing columns are named") {
  RunConfig cfg = estimate_config(kDataDir + "/binary_example.csv");
  cfg.outcome = "nope";
  try {
    load_sample(cfg);
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("missing column: nope") != std::string::npos);
  }
}

TEST_CASE("non-numeric cells report the row and column") {
  TempFile f("fpreg_bad.csv", "y,x\n1,1\n2,oops\n0,0\n2,0\n");
  try {
    load_sample(estimate_config(f.path.string()));
    FAIL("expected an error");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("oops") != std::string::npos);
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("column x") != std::string::npos);
  }
}

TEST_CASE("ragged rows are rejected with their index") {
  TempFile f("fpreg_ragged.csv", "y,x\n1,1\n2\n0,0\n2,0\n");
  try {
    load_sample(estimate_config(f.path.string()));
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("selecting a duplicated column is an error") {
  TempFile f("fpreg_dup.csv", "y,x,x\n1,1,2\n2,1,2\n0,0,1\n2,0,1\n");
  try {
    load_sample(estimate_config(f.path.string()));
    FAIL("expected an error");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("duplicate column name: x") != std::string::npos);
  }
}

TEST_CASE("infinities and too-few rows are rejected") {
  TempFile inf("fpreg_inf.csv", "y,x\ninf,1\n2,1\n0,0\n2,0\n");
  CHECK_THROWS_AS(load_sample(estimate_config(inf.path.string())), DataError);

  TempFile tiny("fpreg_tiny.csv", "y,x\n1,1\n2,0\n");
  CHECK_THROWS_AS(load_sample(estimate_config(tiny.path.string())), DataError);
}

TEST_CASE("an existing all-ones column becomes the intercept") {
  TempFile f("fpreg_ones.csv",
             "y,x,w,one\n1,1,5,1\n2,1,3,1\n0,0,2,1\n2,0,4,1\n9,1,1,1\n");
  RunConfig cfg = estimate_config(f.path.string());
  cfg.attributes = {"w", "one"};
  const CsvData csv = load_sample(cfg);
  REQUIRE(csv.attribute_names.size() == 2);
  CHECK(csv.attribute_names[0] == "one");
  CHECK(csv.attribute_names[1] == "w");
  CHECK((csv.data.z.col(0).array() == 1.0).all());
  CHECK(csv.data.z(0, 1) == 5.0);
}

TEST_CASE("a too-small population size is rejected") {
  RunConfig cfg = estimate_config(kDataDir + "/binary_example.csv");
  cfg.population_size = 3;
  CHECK_THROWS_AS(load_sample(cfg), DataError);
}

TEST_CASE("config validation catches bad selections") {
  RunConfig cfg = estimate_config("x.csv");
  cfg.ci = 1.0;
  CHECK_THROWS_AS(validate_config(cfg), DataError);
  cfg = estimate_config("x.csv");
  cfg.reps = 0;
  CHECK_THROWS_AS(validate_config(cfg), DataError);
  cfg = estimate_config("x.csv");
  cfg.estimand = "everything";
  CHECK_THROWS_AS(validate_config(cfg), DataError);
  cfg = estimate_config("x.csv");
  cfg.attributes = {"x"};
  CHECK_THROWS_AS(validate_config(cfg), DataError);
  cfg = estimate_config("x.csv");
  cfg.outcome = "x";
  CHECK_THROWS_AS(validate_config(cfg), DataError);
  cfg = estimate_config("");
  CHECK_THROWS_AS(validate_config(cfg), DataError);
}

TEST_CASE("population specs round-trip through serialization") {
  const std::string text = R"({
    "n": 4,
    "outcomes": {"kind": "binary", "y1": [1, 2, 3, 4], "y0": [0, 0, 0, 2]},
    "sampling": {"kind": "srs", "sample_size": 2},
    "assignment": {"kind": "complete", "treated": 2}
  })";
  const Population pop = parse_population_json(text);
  CHECK(pop.n == 4);
  const std::string once = serialize_population(pop);
  const std::string twice = serialize_population(parse_population_json(once));
  CHECK(once == twice);
}

TEST_CASE("a full population spec round-trips every section") {
  const std::string text = R"({
    "n": 3,
    "outcomes": {"kind": "linear", "theta": [[1], [5], [2]], "xi": [4, -3, 7]},
    "attributes": [[1, -1], [1, 0], [1, 1]],
    "causes": {"kind": "bernoulli", "p": [0.3, 0.5, 0.7]},
    "sampling": {"kind": "bernoulli", "rate": 0.6},
    "assignment": {"kind": "independent"}
  })";
  const Population pop = parse_population_json(text);
  CHECK(pop.attributes.q() == 2);
  REQUIRE(pop.causes.has_value());
  CHECK(pop.causes->bernoulli_form);
  const std::string once = serialize_population(pop);
  const std::string twice = serialize_population(parse_population_json(once));
  CHECK(once == twice);

  // discrete cause laws survive as well
  const std::string discrete = R"({
    "n": 2,
    "outcomes": {"kind": "linear", "theta": [[1], [2]], "xi": [0, 1]},
    "causes": {"kind": "discrete", "support": [[0], [2]], "probs": [[0.5, 0.5], [0.25, 0.75]]},
    "sampling": {"kind": "bernoulli", "rate": 1.0},
    "assignment": {"kind": "independent"}
  })";
  const Population p2 = parse_population_json(discrete);
  const std::string s2 = serialize_population(p2);
  CHECK(serialize_population(parse_population_json(s2)) == s2);
}

TEST_CASE("unknown keys in population specs are rejected") {
  const std::string text = R"({
    "n": 4,
    "outcomes": {"kind": "binary", "y1": [1, 2, 3, 4], "y0": [0, 0, 0, 2]},
    "sampling": {"kind": "srs", "sample_size": 2},
    "assignment": {"kind": "complete", "treated": 2},
    "extra": 1
  })";
  CHECK_THROWS_AS(parse_population_json(text), DataError);

  const std::string nested = R"({
    "n": 4,
    "outcomes": {"kind": "binary", "y1": [1, 2, 3, 4], "y0": [0, 0, 0, 2], "y2": []},
    "sampling": {"kind": "srs", "sample_size": 2},
    "assignment": {"kind": "complete", "treated": 2}
  })";
  CHECK_THROWS_AS(parse_population_json(nested), DataError);
}

TEST_CASE("estimate on the worked example reproduces the closed forms") {
  const RunConfig cfg = estimate_config(kDataDir + "/binary_example.csv");
  const njson j = njson::parse(run_estimate(cfg));
  CHECK(j["command"] == "estimate");
  CHECK(j["n_sample"] == 4);
  CHECK(j["n_population"].is_null());
  CHECK(j["rho_hat"] == 0.0);
  CHECK(j["theta_hat"][0].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(j["gamma_hat"][0].get<double>() == doctest::Approx(1.0).epsilon(1e-12));

  const auto& c = j["coefficients"][0];
  CHECK(c["name"] == "x");
  const double se2 = c["se_ehw"].get<double>() * c["se_ehw"].get<double>();
  CHECK(se2 == doctest::Approx(0.625).epsilon(1e-12));
  // no population size: every flavor collapses to the ehw answer
  CHECK(c["se_causal"].get<double>() == doctest::Approx(c["se_ehw"].get<double>()));
  CHECK(c["se_descriptive"].get<double>() ==
        doctest::Approx(c["se_ehw"].get<double>()));

  const auto& b = j["binary"];
  CHECK(b["sampled_treated"] == 2);
  CHECK(b["mean_treated"].get<double>() == doctest::Approx(1.5));
  CHECK(b["mean_control"].get<double>() == doctest::Approx(1.0));
  CHECK(b["estimate"].get<double>() == doctest::Approx(0.5));
  CHECK(b["s2_treated_hat"].get<double>() == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(b["s2_control_hat"].get<double>() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(b["v_plug_in"].get<double>() == doctest::Approx(0.625).epsilon(1e-12));
  CHECK(b["v_adjusted"].get<double>() == doctest::Approx(1.25).epsilon(1e-12));

  CHECK(j["matrices"]["v_ehw"][0][0].get<double>() ==
        doctest::Approx(2.5).epsilon(1e-12));

  // byte-stable across repeated runs
  CHECK(run_estimate(cfg) == run_estimate(cfg));
}

TEST_CASE("a census zeroes the descriptive standard errors") {
  RunConfig cfg = estimate_config(kDataDir + "/binary_example.csv");
  cfg.population_size = 4;
  const njson j = njson::parse(run_estimate(cfg));
  CHECK(j["rho_hat"].get<double>() == doctest::Approx(1.0));
  CHECK(j["coefficients"][0]["se_descriptive"].get<double>() == 0.0);
  CHECK(j["coefficients"][0]["se_causal"].get<double>() ==
        doctest::Approx(j["coefficients"][0]["se_causal_sample"].get<double>()));
}

TEST_CASE("the estimand selector trims the report") {
  RunConfig cfg = estimate_config(kDataDir + "/binary_example.csv");
  cfg.estimand = "causal";
  const njson j = njson::parse(run_estimate(cfg));
  const auto& c = j["coefficients"][0];
  CHECK(c.contains("se_ehw"));
  CHECK(c.contains("se_causal"));
  CHECK(!c.contains("se_causal_sample"));
  CHECK(!c.contains("se_descriptive"));
  CHECK(j["matrices"].contains("v_ehw"));
  CHECK(j["matrices"].contains("v_causal"));
  CHECK(!j["matrices"].contains("v_descriptive"));
}

TEST_CASE("numbers survive the seventeen-digit serialization") {
  RunConfig cfg = estimate_config(kDataDir + "/binary_example.csv");
  cfg.population_size = 7;  // rho = 4/7 exercises a non-terminating decimal
  const njson j = njson::parse(run_estimate(cfg));
  CHECK(j["rho_hat"].get<double>() == 4.0 / 7.0);
}

TEST_CASE("enumeration report carries the worked example oracle") {
  RunConfig cfg;
  cfg.command = "enumerate";
  cfg.data_path = kDataDir + "/pop_binary.json";
  const njson j = njson::parse(run_enumerate(cfg));
  CHECK(j["command"] == "enumerate");
  CHECK(j["pairs"] == 36);
  CHECK(j["target_causal"].get<double>() == doctest::Approx(2.0));
  REQUIRE(j["cells"].size() == 3);
  const auto& cell = j["cells"][1];
  CHECK(cell["sampled_treated"] == 1);
  CHECK(cell["var_estimate"].get<double>() == doctest::Approx(2.5).epsilon(1e-10));
  CHECK(cell["mean_plug_in"].is_null());  // one unit per group
  CHECK(j["cells"][0]["excluded"] == true);
  CHECK(j["cells"][0]["mean_estimate"].is_null());
  CHECK(j["cells"][0]["decomposition"].is_null());
  CHECK(cell["decomposition"]["mean_var_given_assignment"].get<double>() ==
        doctest::Approx(4.0 / 3.0).epsilon(1e-10));

  // identical bytes regardless of the worker count
  RunConfig one = cfg, eight = cfg;
  one.threads = 1;
  eight.threads = 8;
  CHECK(run_enumerate(one) == run_enumerate(eight));
}

TEST_CASE("simulation reports are byte-stable in seed and workers") {
  RunConfig cfg;
  cfg.command = "simulate";
  cfg.data_path = kDataDir + "/pop_binary_sim.json";
  cfg.reps = 300;
  cfg.seed = 7;
  const std::string a = run_simulate(cfg);
  const std::string b = run_simulate(cfg);
  CHECK(a == b);
  RunConfig two = cfg;
  two.threads = 2;
  CHECK(run_simulate(two) == a);

  const njson j = njson::parse(a);
  CHECK(j["model"] == "binary");
  CHECK(j["reps"] == 300);
  CHECK(j["kept"].get<long long>() + j["skipped"].get<long long>() == 300);
  CHECK(j["coverage"]["causal"].contains("adjusted"));

  RunConfig other = cfg;
  other.seed = 8;
  CHECK(run_simulate(other) != a);
}

TEST_CASE("a single-replication simulation reports null spread statistics") {
  TempFile f("fpreg_pop_census.json", R"({
    "n": 4,
    "outcomes": {"kind": "binary", "y1": [1, 2, 3, 4], "y0": [0, 0, 0, 2]},
    "sampling": {"kind": "srs", "sample_size": 4},
    "assignment": {"kind": "complete", "treated": 2}
  })");
  RunConfig cfg;
  cfg.command = "simulate";
  cfg.data_path = f.path.string();
  cfg.reps = 1;
  const njson j = njson::parse(run_simulate(cfg));
  CHECK(j["kept"] == 1);
  CHECK(!j["estimate"]["mean"].is_null());
  CHECK(j["estimate"]["var"].is_null());
  CHECK(j["estimate"]["var_se"].is_null());
}

TEST_CASE("regression simulations expose per-coefficient aggregates") {
  TempFile f("fpreg_pop_reg.json", R"({
    "n": 30,
    "outcomes": {"kind": "linear",
                 "theta": [[2],[2],[2],[2],[2],[2],[2],[2],[2],[2],
                           [2],[2],[2],[2],[2],[2],[2],[2],[2],[2],
                           [2],[2],[2],[2],[2],[2],[2],[2],[2],[2]],
                 "xi": [0,1,2,0,1,2,0,1,2,0,1,2,0,1,2,0,1,2,0,1,2,0,1,2,0,1,2,0,1,2]},
    "causes": {"kind": "bernoulli", "p": 0.5},
    "sampling": {"kind": "bernoulli", "rate": 0.8},
    "assignment": {"kind": "independent"}
  })");
  RunConfig cfg;
  cfg.command = "simulate";
  cfg.data_path = f.path.string();
  cfg.reps = 200;
  cfg.seed = 5;
  const njson j = njson::parse(run_simulate(cfg));
  CHECK(j["model"] == "regression");
  CHECK(j["k"] == 1);
  CHECK(j["target_causal"][0].get<double>() == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(j["se2"]["ehw"]["mean"][0].get<double>() > 0.0);
  CHECK(j["coverage"]["causal"]["ehw"][0].get<double>() >= 0.0);
  CHECK(run_simulate(cfg) == run_simulate(cfg));
}

TEST_CASE("bayes reports the three posteriors") {
  RunConfig cfg;
  cfg.command = "bayes";
  cfg.bayes.sigma1 = 1.0;
  cfg.bayes.sigma0 = 1.0;
  cfg.bayes.kappa = 1.0;
  cfg.bayes.n = 16;
  cfg.bayes.n1 = 8;
  cfg.bayes.n0 = 8;
  cfg.bayes.sampled1 = 4;
  cfg.bayes.sampled0 = 4;
  cfg.bayes.ybar1 = 3.0;
  cfg.bayes.ybar0 = 1.0;
  const njson j = njson::parse(run_bayes(cfg));
  CHECK(j["posteriors"]["super_causal"]["mean"].get<double>() == doctest::Approx(2.0));
  CHECK(j["posteriors"]["super_causal"]["variance"].get<double>() ==
        doctest::Approx(0.5));
  CHECK(j["posteriors"]["descriptive"]["variance"].get<double>() ==
        doctest::Approx(0.25));
  CHECK(j["posteriors"]["causal_finite"]["variance"].get<double>() ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("error payloads carry code kind and message") {
  const njson j = njson::parse(error_json(2, "data", "missing column: y"));
  CHECK(j["error"]["code"] == 2);
  CHECK(j["error"]["kind"] == "data");
  CHECK(j["error"]["message"] == "missing column: y");
}

TEST_CASE("reports are written atomically") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto out = dir / "fpreg_report.json";
  std::error_code ec;
  std::filesystem::remove(out, ec);
  write_report(out.string(), "{\"a\":1}");
  std::ifstream in(out);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  CHECK(content == "{\"a\":1}\n");
  CHECK(!std::filesystem::exists(out.string() + ".tmp"));
  std::filesystem::remove(out, ec);

  // an unwritable target throws and leaves nothing behind
  CHECK_THROWS_AS(write_report((dir / "no_such_dir" / "x.json").string(), "{}"),
                  DataError);
  CHECK(!std::filesystem::exists(dir / "no_such_dir"));
}
