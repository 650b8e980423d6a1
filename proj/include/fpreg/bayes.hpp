#pragma once
#include "fpreg/errors.hpp"

namespace fpreg {

// Normal model with known variances, correlation kappa between the two
// potential outcomes, flat priors on the two means. Data enter only through
// the observed group means and counts.
struct BayesModel {
  double sigma1 = 1.0;
  double sigma0 = 1.0;
  double kappa = 0.0;
  long long n = 0;         // population size
  long long n1 = 0;        // population treated
  long long n0 = 0;        // population control
  long long sampled1 = 0;  // observed treated
  long long sampled0 = 0;  // observed control
  double ybar1 = 0.0;
  double ybar0 = 0.0;
};

struct PosteriorSummary {
  double mean;
  double variance;
};

void validate_bayes_model(const BayesModel& m);

// Difference of the two superpopulation means.
PosteriorSummary posterior_super_causal(const BayesModel& m);

// Difference in means over the n-unit population at the realized assignment.
PosteriorSummary posterior_descriptive(const BayesModel& m);

// Average unit-level effect over the n-unit population.
PosteriorSummary posterior_causal_finite(const BayesModel& m);

}  // namespace fpreg
