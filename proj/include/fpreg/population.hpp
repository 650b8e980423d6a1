#pragma once
#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "fpreg/errors.hpp"

namespace fpreg {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Mask = std::vector<std::uint8_t>;  // one 0/1 flag per unit

struct BinaryPotentialOutcomes {
  Vec y1;  // outcome under treatment
  Vec y0;  // outcome under control
  long long n() const { return y1.size(); }
  Vec effects() const { return y1 - y0; }
};

// Y_i(u) = theta_i' u + xi_i
struct LinearPotentialOutcomes {
  Mat theta;  // n x k unit slopes
  Vec xi;     // n unit levels
  long long n() const { return xi.size(); }
  int k() const { return static_cast<int>(theta.cols()); }
};

using PotentialOutcomes =
    std::variant<BinaryPotentialOutcomes, LinearPotentialOutcomes>;

long long outcome_units(const PotentialOutcomes& pot);
int cause_dim(const PotentialOutcomes& pot);  // 1 for the binary table

// Y_i at a given cause vector (binary wants a single 0/1 coordinate).
double outcome_at(const PotentialOutcomes& pot, long long i,
                  const Eigen::Ref<const Vec>& u);

// Y_i at the realized cause matrix (n x k).
Vec realize_outcomes(const PotentialOutcomes& pot, const Mat& causes);

// Binary table viewed as the k=1 linear form: theta_i = y1-y0, xi_i = y0.
LinearPotentialOutcomes as_linear(const PotentialOutcomes& pot);

struct AttributeMatrix {
  Mat z;  // n x q, first column all ones
  long long n() const { return z.rows(); }
  int q() const { return static_cast<int>(z.cols()); }
};

// Per-unit distribution over cause vectors with a shared finite support.
struct CauseDistribution {
  Mat support;                  // m x k support points
  Mat probs;                    // n x m, rows sum to 1
  bool bernoulli_form = false;  // parsed from the {"kind":"bernoulli"} shape

  long long n() const { return probs.rows(); }
  int k() const { return static_cast<int>(support.cols()); }
  int m() const { return static_cast<int>(support.rows()); }

  Vec mean(long long i) const;           // E[U_i]
  Mat second_moment(long long i) const;  // E[U_i U_i']
  Mat means() const;                     // n x k, rows E[U_i]'

  static CauseDistribution bernoulli(const Vec& p);
};

struct FixedSizeSrs {
  long long sample_size = 0;
};
struct BernoulliSampling {
  double rate = 1.0;
};
using SamplingDesign = std::variant<FixedSizeSrs, BernoulliSampling>;

struct CompleteRandomization {
  long long treated = 0;
};
struct IndependentAssignment {};
using AssignmentDesign = std::variant<CompleteRandomization, IndependentAssignment>;

struct Population {
  long long n = 0;
  PotentialOutcomes outcomes;
  AttributeMatrix attributes;
  std::optional<CauseDistribution> causes;  // optional under complete randomization
  SamplingDesign sampling;
  AssignmentDesign assignment;
};

// Complete randomization is not independent across units, but every expected
// moment used here needs only the per-unit marginals, Bernoulli(treated/n).
CauseDistribution marginal_causes(const Population& pop);

// Human-readable consistency violations; empty means the population is usable.
std::vector<std::string> validate_population(const Population& pop);

}  // namespace fpreg
