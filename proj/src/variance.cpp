#include "fpreg/variance.hpp"

#include <cmath>
#include <sstream>

namespace fpreg {

namespace {
double dispersion(const Vec& v) {
  const long long n = v.size();
  if (n < 2) throw DataError("dispersion needs at least two units");
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(n - 1);
}
}  // namespace

PopulationDispersions population_dispersions(const BinaryPotentialOutcomes& pot) {
  if (pot.y1.size() != pot.y0.size())
    throw DataError("population_dispersions: y1 and y0 lengths disagree");
  PopulationDispersions d;
  d.s2_treated = dispersion(pot.y1);
  d.s2_control = dispersion(pot.y0);
  d.s2_effect = dispersion(pot.effects());
  return d;
}

BinaryVarianceComponents binary_variance_components(
    const PopulationDispersions& d, long long sampled_treated,
    long long sampled_control, std::optional<long long> pop_treated,
    std::optional<long long> pop_control, std::optional<long long> pop_total) {
  const long long m1 = sampled_treated, m0 = sampled_control;
  if (m1 < 1 || m0 < 1)
    throw DataError("variance components need both sampled groups non-empty");
  if (pop_treated && *pop_treated < m1)
    throw DataError("population treated count smaller than the sampled one");
  if (pop_control && *pop_control < m0)
    throw DataError("population control count smaller than the sampled one");
  if (pop_treated && pop_control) {
    const long long implied = *pop_treated + *pop_control;
    if (pop_total && *pop_total != implied)
      throw DataError("population total disagrees with group counts");
    if (!pop_total) pop_total = implied;
  }
  if (pop_total && *pop_total < m1 + m0)
    throw DataError("population total smaller than the sample");

  const double s1 = d.s2_treated, s0 = d.s2_control, st = d.s2_effect;
  const double N1 = static_cast<double>(m1), N0 = static_cast<double>(m0);
  const double N = N1 + N0;
  const auto inv = [](std::optional<long long> v) {
    return v ? 1.0 / static_cast<double>(*v) : 0.0;
  };
  const double inv_n1 = inv(pop_treated), inv_n0 = inv(pop_control);
  const double inv_n = inv(pop_total);

  BinaryVarianceComponents c;
  c.total = s1 / N1 + s0 / N0 - st * inv_n;
  c.sampling = (s1 / N1) * (1.0 - N1 * inv_n1) + (s0 / N0) * (1.0 - N0 * inv_n0);
  c.design_given_sampling = s1 * inv_n1 + s0 * inv_n0 - st * inv_n;
  c.design = s1 / N1 + s0 / N0 - st / N;
  c.sampling_given_design = (st / N) * (1.0 - N * inv_n);
  return c;
}

BinaryEhwEstimates binary_ehw(const Vec& y, const Mask& x, const Mask& r) {
  const long long n = y.size();
  if (static_cast<long long>(x.size()) != n || static_cast<long long>(r.size()) != n)
    throw DataError("binary_ehw: masks do not match the data");
  double sum1 = 0, sum0 = 0, ssq1 = 0, ssq0 = 0;
  long long m1 = 0, m0 = 0;
  for (long long i = 0; i < n; ++i) {
    if (!r[i]) continue;
    if (x[i]) {
      ++m1;
      sum1 += y(i);
      ssq1 += y(i) * y(i);
    } else {
      ++m0;
      sum0 += y(i);
      ssq0 += y(i) * y(i);
    }
  }
  if (m1 < 2 || m0 < 2)
    throw DataError("binary_ehw: each sampled group needs at least two units");
  const double N1 = static_cast<double>(m1), N0 = static_cast<double>(m0);
  BinaryEhwEstimates e;
  e.s2_treated_hat = (ssq1 - sum1 * sum1 / N1) / (N1 - 1.0);
  e.s2_control_hat = (ssq0 - sum0 * sum0 / N0) / (N0 - 1.0);
  e.plug_in = (N1 - 1.0) / (N1 * N1) * e.s2_treated_hat +
              (N0 - 1.0) / (N0 * N0) * e.s2_control_hat;
  e.adjusted = e.s2_treated_hat / N1 + e.s2_control_hat / N0;
  e.sampled_treated = m1;
  e.sampled_control = m0;
  return e;
}

GeneralVarianceReport general_variance(const FitResult& fit,
                                       std::optional<long long> n_population) {
  const long long n = fit.n_sample;
  const int k = static_cast<int>(fit.x_hat.cols());
  const int q = static_cast<int>(fit.z.cols());
  if (fit.x_hat.rows() != n || fit.residuals.size() != n || fit.z.rows() != n)
    throw DataError("general_variance: fit pieces disagree on rows");
  if (n_population && *n_population < n)
    throw DataError("general_variance: population smaller than the sample");

  GeneralVarianceReport rep;
  rep.rho_hat =
      n_population ? static_cast<double>(n) / static_cast<double>(*n_population) : 0.0;

  const double dn = static_cast<double>(n);
  rep.h_hat = fit.x_hat.transpose() * fit.x_hat / dn;
  Eigen::ColPivHouseholderQR<Mat> qr(rep.h_hat);
  qr.setThreshold(1e-10);
  if (qr.rank() < k)
    throw SingularError("general_variance: cause second moment is singular");
  const Mat h_inv = qr.solve(Mat::Identity(k, k));

  // scores m_i = x_hat_i * eps_i, meat = (1/N) sum m_i m_i'
  const Mat scores =
      (fit.x_hat.array().colwise() * fit.residuals.array()).matrix();
  rep.delta_ehw = scores.transpose() * scores / dn;

  // project the scores on attributes; the residual meat shrinks toward the
  // conditional one exactly by the explained part
  Eigen::ColPivHouseholderQR<Mat> zqr(fit.z);
  zqr.setThreshold(1e-10);
  if (zqr.rank() < q)
    throw SingularError("general_variance: attribute cross-product is singular");
  const Mat coef = zqr.solve(scores);  // q x k
  rep.g_hat = coef.transpose();
  const Mat resid = scores - fit.z * coef;
  rep.delta_z = resid.transpose() * resid / dn;

  const double rho = rep.rho_hat;
  rep.v_ehw = h_inv * rep.delta_ehw * h_inv;
  rep.v_causal_sample = h_inv * rep.delta_z * h_inv;
  rep.v_causal = h_inv * (rho * rep.delta_z + (1.0 - rho) * rep.delta_ehw) * h_inv;
  rep.v_descriptive = (1.0 - rho) * rep.v_ehw;

  const auto se_of = [&](const Mat& v) {
    return (v.diagonal().array() / dn).sqrt().matrix().eval();
  };
  rep.se_ehw = se_of(rep.v_ehw);
  rep.se_causal = se_of(rep.v_causal);
  rep.se_causal_sample = se_of(rep.v_causal_sample);
  rep.se_descriptive = se_of(rep.v_descriptive);
  return rep;
}

}  // namespace fpreg
