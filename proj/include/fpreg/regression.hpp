#pragma once
#include <optional>

#include "fpreg/population.hpp"

namespace fpreg {

struct SampleData {
  Vec y;   // N outcomes
  Mat u;   // N x k observed causes
  Mat z;   // N x q attributes, first column ones
  std::optional<long long> n_population;  // absent when unknown / infinite

  long long size() const { return y.size(); }
  int k() const { return static_cast<int>(u.cols()); }
  int q() const { return static_cast<int>(z.cols()); }
};

// Least-squares coefficients of each target column on z, plus residuals.
struct PartialOutResult {
  Mat coef;       // q x m
  Mat residuals;  // rows x m, target - z * coef
};
PartialOutResult partial_out(const Mat& target, const Mat& z);

struct FitResult {
  Vec theta_hat;   // k, coefficients on the causes
  Vec gamma_hat;   // q, coefficients on attributes in the raw (u, z) form
  Mat lambda_hat;  // k x q sample cause-on-attribute coefficients
  Mat x_hat;       // N x k residualized causes, u - z * lambda_hat'
  Vec residuals;   // N
  Mat z;           // attribute matrix carried for the variance step
  long long n_sample = 0;
  std::optional<long long> n_population;
};

// OLS of y on (u, z). theta_hat and the residuals are invariant to replacing
// u by x_hat = u - lambda_hat z, so the variance step may work with x_hat.
FitResult fit_ols(const SampleData& data);

}  // namespace fpreg
