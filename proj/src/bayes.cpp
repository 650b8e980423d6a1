#include "fpreg/bayes.hpp"

#include <cmath>

namespace fpreg {

void validate_bayes_model(const BayesModel& m) {
  if (!(m.sigma1 > 0.0) || !(m.sigma0 > 0.0) || !std::isfinite(m.sigma1) ||
      !std::isfinite(m.sigma0))
    throw DataError("bayes: sigma1 and sigma0 must be positive");
  if (!(m.kappa >= -1.0 && m.kappa <= 1.0))
    throw DataError("bayes: kappa must lie in [-1, 1]");
  if (m.n1 + m.n0 != m.n) throw DataError("bayes: n1 + n0 must equal n");
  if (m.sampled1 < 1 || m.sampled1 > m.n1)
    throw DataError("bayes: sampled treated count must lie in [1, n1]");
  if (m.sampled0 < 1 || m.sampled0 > m.n0)
    throw DataError("bayes: sampled control count must lie in [1, n0]");
  if (!std::isfinite(m.ybar1) || !std::isfinite(m.ybar0))
    throw DataError("bayes: group means must be finite");
}

PosteriorSummary posterior_super_causal(const BayesModel& m) {
  validate_bayes_model(m);
  const double N1 = static_cast<double>(m.sampled1);
  const double N0 = static_cast<double>(m.sampled0);
  return {m.ybar1 - m.ybar0, m.sigma1 * m.sigma1 / N1 + m.sigma0 * m.sigma0 / N0};
}

PosteriorSummary posterior_descriptive(const BayesModel& m) {
  validate_bayes_model(m);
  const double N1 = static_cast<double>(m.sampled1);
  const double N0 = static_cast<double>(m.sampled0);
  const double n1 = static_cast<double>(m.n1);
  const double n0 = static_cast<double>(m.n0);
  const double v = (m.sigma1 * m.sigma1 / N1) * (1.0 - N1 / n1) +
                   (m.sigma0 * m.sigma0 / N0) * (1.0 - N0 / n0);
  return {m.ybar1 - m.ybar0, v};
}

PosteriorSummary posterior_causal_finite(const BayesModel& m) {
  validate_bayes_model(m);
  const double s1 = m.sigma1, s0 = m.sigma0, kap = m.kappa;
  const double N1 = static_cast<double>(m.sampled1);
  const double N0 = static_cast<double>(m.sampled0);
  const double N = N1 + N0;
  const double n = static_cast<double>(m.n);
  const double one_m_k2 = 1.0 - kap * kap;

  // imputation noise for observed units, full noise for never-sampled ones,
  // then the posterior spread of the two superpopulation means
  double v = (N0 / (n * n)) * s1 * s1 * one_m_k2 +
             (N1 / (n * n)) * s0 * s0 * one_m_k2;
  v += ((n - N) / (n * n)) * s1 * s1 + ((n - N) / (n * n)) * s0 * s0 -
       2.0 * ((n - N) / (n * n)) * kap * s1 * s0;
  const double c1 = 1.0 - (1.0 - kap * s0 / s1) * N1 / n;
  const double c0 = 1.0 - (1.0 - kap * s1 / s0) * N0 / n;
  v += (s1 * s1 / N1) * c1 * c1 + (s0 * s0 / N0) * c0 * c0;
  return {m.ybar1 - m.ybar0, v};
}

}  // namespace fpreg
