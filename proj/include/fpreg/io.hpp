#pragma once
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fpreg/bayes.hpp"
#include "fpreg/population.hpp"
#include "fpreg/regression.hpp"

namespace fpreg {

struct RunConfig {
  std::string command;  // estimate | simulate | enumerate | bayes
  std::string data_path;
  std::string out_path;  // empty = standard output
  std::string outcome;
  std::vector<std::string> causes;
  std::vector<std::string> attributes;
  std::optional<long long> population_size;
  std::string estimand = "all";  // descriptive | causal-sample | causal | all
  long long reps = 10000;
  std::uint64_t seed = 1;
  double ci = 0.95;
  int threads = 0;
  long long max_pairs = 10'000'000;
  BayesModel bayes;
};

void validate_config(const RunConfig& cfg);

struct CsvData {
  SampleData data;
  std::vector<std::string> cause_names;
  std::vector<std::string> attribute_names;  // element 0 is the intercept
};

// Header-checked numeric CSV ingestion with automatic intercept handling.
CsvData load_sample(const RunConfig& cfg);

Population parse_population_json(const std::string& text);
std::string serialize_population(const Population& pop);

// Each returns the full report as a JSON string; errors are thrown.
std::string run_estimate(const RunConfig& cfg);
std::string run_simulate(const RunConfig& cfg);
std::string run_enumerate(const RunConfig& cfg);
std::string run_bayes(const RunConfig& cfg);

std::string error_json(int code, const std::string& kind, const std::string& message);

// Build-then-write: the payload lands in one shot (via a temp file and
// rename), so failures never leave a partial report behind.
void write_report(const std::string& out_path, const std::string& payload);

}  // namespace fpreg
