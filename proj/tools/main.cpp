#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fpreg/errors.hpp"
#include "fpreg/io.hpp"

int main(int argc, char** argv) {
  fpreg::RunConfig cfg;
  long long pop_size = 0;

  CLI::App app{
      "Regression estimates with sampling-based and design-based standard "
      "errors for finite populations"};
  app.require_subcommand(1);

  auto* est = app.add_subcommand(
      "estimate", "Fit a least-squares regression from a CSV file");
  est->add_option("--data", cfg.data_path, "CSV data file")->required();
  est->add_option("--outcome", cfg.outcome, "outcome column name")->required();
  est->add_option("--causes", cfg.causes, "cause column names")
      ->required()
      ->delimiter(',');
  est->add_option("--attributes", cfg.attributes, "attribute column names")
      ->delimiter(',');
  est->add_option("--population-size", pop_size,
                  "number of units in the population (omit if unknown)");
  est->add_option("--estimand", cfg.estimand,
                  "descriptive | causal-sample | causal | all");
  est->add_option("--out", cfg.out_path, "output path (default: stdout)");

  auto* sim = app.add_subcommand(
      "simulate", "Monte Carlo over sampling and assignment for a population spec");
  sim->add_option("--data", cfg.data_path, "population spec JSON file")->required();
  sim->add_option("--reps", cfg.reps, "number of replications");
  sim->add_option("--seed", cfg.seed, "random seed");
  sim->add_option("--ci", cfg.ci, "confidence level for coverage checks");
  sim->add_option("--threads", cfg.threads, "worker threads (0 = hardware)");
  sim->add_option("--out", cfg.out_path, "output path (default: stdout)");

  auto* enu = app.add_subcommand(
      "enumerate", "Exact enumeration of every sampling/assignment pair");
  enu->add_option("--data", cfg.data_path, "population spec JSON file")->required();
  enu->add_option("--threads", cfg.threads, "worker threads (0 = hardware)");
  enu->add_option("--max-pairs", cfg.max_pairs, "largest admissible pair count");
  enu->add_option("--out", cfg.out_path, "output path (default: stdout)");

  auto* bay = app.add_subcommand(
      "bayes", "Posterior summaries for the two-group normal model");
  bay->add_option("--ybar1", cfg.bayes.ybar1, "observed treated mean")->required();
  bay->add_option("--ybar0", cfg.bayes.ybar0, "observed control mean")->required();
  bay->add_option("--sigma1", cfg.bayes.sigma1, "treated outcome sd")->required();
  bay->add_option("--sigma0", cfg.bayes.sigma0, "control outcome sd")->required();
  bay->add_option("--kappa", cfg.bayes.kappa,
                  "correlation between the two potential outcomes");
  bay->add_option("--n", cfg.bayes.n, "population size")->required();
  bay->add_option("--n1", cfg.bayes.n1, "population treated count")->required();
  bay->add_option("--n0", cfg.bayes.n0, "population control count")->required();
  bay->add_option("--sampled1", cfg.bayes.sampled1, "observed treated count")
      ->required();
  bay->add_option("--sampled0", cfg.bayes.sampled0, "observed control count")
      ->required();
  bay->add_option("--out", cfg.out_path, "output path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << fpreg::error_json(2, "usage", e.what()) << "\n";
    return 2;
  }

  try {
    std::string payload;
    if (est->parsed()) {
      cfg.command = "estimate";
      if (est->count("--population-size") > 0) cfg.population_size = pop_size;
      payload = fpreg::run_estimate(cfg);
    } else if (sim->parsed()) {
      cfg.command = "simulate";
      payload = fpreg::run_simulate(cfg);
    } else if (enu->parsed()) {
      cfg.command = "enumerate";
      payload = fpreg::run_enumerate(cfg);
    } else {
      cfg.command = "bayes";
      payload = fpreg::run_bayes(cfg);
    }
    fpreg::write_report(cfg.out_path, payload);
    return 0;
  } catch (const fpreg::SingularError& e) {
    std::cerr << fpreg::error_json(3, "singular", e.what()) << "\n";
    return 3;
  } catch (const fpreg::DataError& e) {
    std::cerr << fpreg::error_json(2, "data", e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << fpreg::error_json(1, "internal", e.what()) << "\n";
    return 1;
  }
}
