#pragma once
#include <optional>

#include "fpreg/population.hpp"
#include "fpreg/regression.hpp"

namespace fpreg {

// Finite-population dispersions with the n-1 divisor.
struct PopulationDispersions {
  double s2_treated;  // of y1
  double s2_control;  // of y0
  double s2_effect;   // of y1 - y0
};
PopulationDispersions population_dispersions(const BinaryPotentialOutcomes& pot);

// The five variance components for the difference-in-means estimator.
// Sampled group sizes are required; population group sizes and the population
// total may each be absent, meaning infinite.
struct BinaryVarianceComponents {
  double total;                  // variance over sampling and assignment jointly
  double sampling;               // holding the assignment fixed
  double design_given_sampling;  // assignment noise after sampling
  double design;                 // holding the sample fixed
  double sampling_given_design;  // sampling noise after assignment
};
BinaryVarianceComponents binary_variance_components(
    const PopulationDispersions& d, long long sampled_treated,
    long long sampled_control,
    std::optional<long long> pop_treated = std::nullopt,
    std::optional<long long> pop_control = std::nullopt,
    std::optional<long long> pop_total = std::nullopt);

// Heteroskedasticity-robust estimates from one realized sample.
struct BinaryEhwEstimates {
  double plug_in;   // (N1-1)/N1^2 s1^2 + (N0-1)/N0^2 s0^2, the sandwich value
  double adjusted;  // s1^2/N1 + s0^2/N0, unbiased for the infinite-pop limit
  double s2_treated_hat;
  double s2_control_hat;
  long long sampled_treated;
  long long sampled_control;
};
BinaryEhwEstimates binary_ehw(const Vec& y, const Mask& x, const Mask& r);

// Feasible variance estimators for a fitted regression. All matrices are on
// the sqrt(N) scale; standard errors divide the diagonal by N.
struct GeneralVarianceReport {
  double rho_hat = 0.0;  // N / n, zero when the population is unknown
  Mat h_hat;             // k x k cause second moment
  Mat delta_ehw;         // k x k robust meat
  Mat g_hat;             // k x q attribute regression of the scores
  Mat delta_z;           // k x k attribute-adjusted meat
  Mat v_ehw;
  Mat v_causal;
  Mat v_causal_sample;
  Mat v_descriptive;
  Vec se_ehw;
  Vec se_causal;
  Vec se_causal_sample;
  Vec se_descriptive;
};
GeneralVarianceReport general_variance(const FitResult& fit,
                                       std::optional<long long> n_population);

}  // namespace fpreg
