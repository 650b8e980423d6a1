#pragma once
#include <vector>

#include "fpreg/population.hpp"

namespace fpreg {

enum class MomentKind { Realized, Expected, SampleRealized, SampleExpected };

// Second-moment table of (Y, X, Z), ordered [Y | X | Z] and normalized by the
// relevant unit count. Expected variants are exact sums over the cause law.
struct MomentMatrices {
  Mat m;  // (1+k+q) x (1+k+q) symmetric
  int k = 0;
  int q = 0;
  MomentKind kind = MomentKind::Realized;

  double yy() const { return m(0, 0); }
  Mat xy() const { return m.block(1, 0, k, 1); }
  Mat zy() const { return m.block(1 + k, 0, q, 1); }
  Mat xx() const { return m.block(1, 1, k, k); }
  Mat xz() const { return m.block(1, 1 + k, k, q); }
  Mat zz() const { return m.block(1 + k, 1 + k, q, q); }
};

struct TransformResult {
  Mat lambda;  // k x q, least-squares of expected causes on attributes
  Mat x;       // n x k residualized expectations, sum_i x_i z_i' = 0
};

TransformResult transform_causes(const Mat& expected_u, const AttributeMatrix& attrs);

// x = u - z * lambda', rowwise.
Mat apply_transform(const Mat& u, const Mat& lambda, const Mat& z);

struct BinaryEstimands {
  double descriptive;    // population difference in realized group means
  double causal_sample;  // average effect over sampled units
  double causal;         // average effect over the population
};
BinaryEstimands binary_estimands(const BinaryPotentialOutcomes& pot, const Mask& x,
                                 const Mask& r);

MomentMatrices realized_moments(const Vec& y, const Mat& x, const Mat& z);
MomentMatrices realized_moments_sampled(const Vec& y, const Mat& x, const Mat& z,
                                        const Mask& r);
MomentMatrices expected_moments(const PotentialOutcomes& pot,
                                const CauseDistribution& causes,
                                const AttributeMatrix& attrs, const Mat& lambda);
MomentMatrices expected_moments_sampled(const PotentialOutcomes& pot,
                                        const CauseDistribution& causes,
                                        const AttributeMatrix& attrs,
                                        const Mat& lambda, const Mask& r);

struct EstimandSolution {
  Vec theta;  // k
  Vec gamma;  // q
  MomentKind kind = MomentKind::Realized;
};

// Solves the stacked (X,Z) normal equations of the moment table.
EstimandSolution general_estimands(const MomentMatrices& mm);

Vec population_residuals(const Vec& y, const Mat& x, const Mat& z, const Vec& theta,
                         const Vec& gamma);

// (1/n) sum_i E[(X_i; Z_i) eps_i]; zero at the expected-moment solution.
Vec expected_orthogonality_gap(const PotentialOutcomes& pot,
                               const CauseDistribution& causes,
                               const AttributeMatrix& attrs, const Mat& lambda,
                               const Vec& theta, const Vec& gamma);

// Per-unit E[X_i X_i'] under the cause law, with X = U - lambda Z.
std::vector<Mat> expected_xx_per_unit(const CauseDistribution& causes,
                                      const AttributeMatrix& attrs,
                                      const Mat& lambda);

// Matrix-weighted average of unit slopes, optionally restricted to r = 1.
Vec weighted_cause_average(const std::vector<Mat>& weights, const Mat& unit_theta,
                           const Mask* r = nullptr);

}  // namespace fpreg
