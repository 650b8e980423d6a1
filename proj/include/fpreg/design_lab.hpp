#pragma once
#include <cstdint>
#include <variant>

#include "fpreg/population.hpp"
#include "fpreg/rng.hpp"

namespace fpreg {

// One joint draw: sampling indicators, then realized causes, each consumed
// from the stream in unit order so replications are reproducible.
struct DrawResult {
  Mask sampled;
  Mat causes;  // n x k
};
DrawResult draw(const Population& pop, CounterRng& rng);

// ---- exact enumeration over all (sample, assignment) pairs ----

struct EnumerationCell {
  long long sampled_treated = 0;
  long long sampled_control = 0;
  long long pairs = 0;
  double probability = 0.0;
  bool excluded = false;  // one group empty; the estimator is undefined
  double mean_estimate = 0.0;
  double var_estimate = 0.0;
  // conditional means of the two robust variance estimators (groups >= 2)
  bool estimators_defined = false;
  double mean_plug_in = 0.0;
  double mean_adjusted = 0.0;
  // decomposition pieces, conditioning on the assignment
  double mean_var_given_assignment = 0.0;
  double var_descriptive = 0.0;
  double max_sampling_gap = 0.0;  // max |E[est | assignment, cell] - descriptive|
  // and conditioning on the sample
  double mean_var_given_sample = 0.0;
  double var_causal_sample = 0.0;
  double max_design_gap = 0.0;  // max |E[est | sample, cell] - causal_sample|
};

struct EnumerationReport {
  long long n = 0;
  long long sample_size = 0;
  long long treated = 0;
  long long pair_count = 0;
  double target_causal = 0.0;
  double excluded_probability = 0.0;
  double overall_mean = 0.0;  // over included cells, renormalized
  double overall_var = 0.0;
  std::vector<EnumerationCell> cells;  // ordered by sampled_treated
};

struct EnumerationOptions {
  int threads = 0;                      // 0 = hardware
  long long max_pairs = 10'000'000;     // refuse larger state spaces
};

// Fixed-size sampling + complete randomization over a binary outcome table.
EnumerationReport enumerate_exact(const Population& pop,
                                  const EnumerationOptions& opts = {});

// ---- seeded Monte Carlo ----

struct MonteCarloOptions {
  long long reps = 10000;
  std::uint64_t seed = 1;
  double ci_level = 0.95;
  int threads = 0;
};

// estimand rows: 0 descriptive, 1 causal_sample, 2 causal
inline constexpr int kEstimands = 3;

struct BinaryMcReport {
  long long reps = 0, kept = 0, skipped = 0;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  double target_causal = 0.0;
  double est_mean = 0.0, est_var = 0.0, est_var_se = 0.0;
  double target_descr_mean = 0.0, target_descr_var = 0.0;
  double target_cs_mean = 0.0, target_cs_var = 0.0;
  double err_mean[kEstimands] = {0, 0, 0};
  double err_var[kEstimands] = {0, 0, 0};
  double mean_plug_in = 0.0, mean_plug_in_se = 0.0;
  double mean_adjusted = 0.0, mean_adjusted_se = 0.0;
  double coverage[kEstimands][2] = {{0, 0}, {0, 0}, {0, 0}};  // plug_in, adjusted
};

// estimator columns: 0 ehw, 1 causal, 2 causal_sample, 3 descriptive
inline constexpr int kEstimators = 4;

struct RegressionMcReport {
  long long reps = 0, kept = 0, skipped = 0;
  std::uint64_t seed = 0;
  double ci_level = 0.95;
  int k = 0;
  Vec target_causal;
  Vec est_mean, est_var, est_var_se;
  Vec target_descr_mean, target_descr_var;
  Vec target_cs_mean, target_cs_var;
  Vec err_mean[kEstimands];
  Vec err_var[kEstimands];
  Vec mean_se2[kEstimators];
  Vec mean_se2_se[kEstimators];
  Vec coverage[kEstimands][kEstimators];
};

using MonteCarloReport = std::variant<BinaryMcReport, RegressionMcReport>;

// Complete randomization runs the two-group machinery; independent
// assignment runs the regression pipeline with exact per-draw targets.
MonteCarloReport monte_carlo(const Population& pop, const MonteCarloOptions& opts);

// Sup-norm gap between the causal coefficient solved from expected moments
// and the E[XX']-weighted average of unit slopes. Zero when expected causes
// are linear in attributes, or when effects are constant and the level part
// is orthogonal to the expected cause residuals.
double causal_weighting_gap(const LinearPotentialOutcomes& outcomes,
                            const CauseDistribution& causes,
                            const AttributeMatrix& attrs);

}  // namespace fpreg
