#include "fpreg/estimands.hpp"

#include <sstream>

#include "fpreg/regression.hpp"

namespace fpreg {

TransformResult transform_causes(const Mat& expected_u, const AttributeMatrix& attrs) {
  if (expected_u.rows() != attrs.n())
    throw DataError("transform_causes: expectation rows do not match attributes");
  auto part = partial_out(expected_u, attrs.z);
  TransformResult t;
  t.lambda = part.coef.transpose();
  t.x = part.residuals;
  return t;
}

Mat apply_transform(const Mat& u, const Mat& lambda, const Mat& z) {
  if (u.rows() != z.rows() || lambda.rows() != u.cols() || lambda.cols() != z.cols())
    throw DataError("apply_transform: shape mismatch");
  return u - z * lambda.transpose();
}

BinaryEstimands binary_estimands(const BinaryPotentialOutcomes& pot, const Mask& x,
                                 const Mask& r) {
  const long long n = pot.n();
  if (static_cast<long long>(x.size()) != n || static_cast<long long>(r.size()) != n)
    throw DataError("binary_estimands: masks do not match the population");
  long long n1 = 0, sampled = 0;
  double sum1 = 0.0, sum0 = 0.0, eff_sample = 0.0, eff_all = 0.0;
  for (long long i = 0; i < n; ++i) {
    if (x[i]) {
      ++n1;
      sum1 += pot.y1(i);
    } else {
      sum0 += pot.y0(i);
    }
    const double eff = pot.y1(i) - pot.y0(i);
    eff_all += eff;
    if (r[i]) {
      ++sampled;
      eff_sample += eff;
    }
  }
  const long long n0 = n - n1;
  if (n1 == 0 || n0 == 0)
    throw DataError("binary_estimands: both assignment groups must be non-empty");
  if (sampled == 0) throw DataError("binary_estimands: empty sample");
  BinaryEstimands est;
  est.descriptive = sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
  est.causal_sample = eff_sample / static_cast<double>(sampled);
  est.causal = eff_all / static_cast<double>(n);
  return est;
}

namespace {

MomentMatrices realized_impl(const Vec& y, const Mat& x, const Mat& z, const Mask* r,
                             MomentKind kind) {
  const long long n = y.size();
  const int k = static_cast<int>(x.cols()), q = static_cast<int>(z.cols());
  if (x.rows() != n || z.rows() != n)
    throw DataError("moments: y, x, z disagree on rows");
  const int d = 1 + k + q;
  Mat acc = Mat::Zero(d, d);
  Vec row(d);
  long long used = 0;
  for (long long i = 0; i < n; ++i) {
    if (r && !(*r)[i]) continue;
    ++used;
    row(0) = y(i);
    row.segment(1, k) = x.row(i).transpose();
    row.segment(1 + k, q) = z.row(i).transpose();
    acc.noalias() += row * row.transpose();
  }
  if (used == 0) throw DataError("moments: no units selected");
  MomentMatrices mm;
  mm.m = acc / static_cast<double>(used);
  mm.k = k;
  mm.q = q;
  mm.kind = kind;
  return mm;
}

// Exact per-unit expected contribution: sum over the support of
// (y; u - lambda z; z)(y; u - lambda z; z)' weighted by the unit's law.
void add_expected_unit(const PotentialOutcomes& pot, const CauseDistribution& causes,
                       const Mat& z, const Mat& lambda, long long i, Mat& acc,
                       Vec& row) {
  const int k = causes.k();
  const int q = static_cast<int>(z.cols());
  const Vec zi = z.row(i).transpose();
  const Vec shift = lambda * zi;  // k
  for (int j = 0; j < causes.m(); ++j) {
    const double w = causes.probs(i, j);
    if (w == 0.0) continue;
    const Vec u = causes.support.row(j).transpose();
    row(0) = outcome_at(pot, i, u);
    row.segment(1, k) = u - shift;
    row.segment(1 + k, q) = zi;
    acc.noalias() += w * (row * row.transpose());
  }
}

MomentMatrices expected_impl(const PotentialOutcomes& pot,
                             const CauseDistribution& causes,
                             const AttributeMatrix& attrs, const Mat& lambda,
                             const Mask* r, MomentKind kind) {
  const long long n = outcome_units(pot);
  if (causes.n() != n || attrs.n() != n)
    throw DataError("expected moments: shapes disagree");
  const int k = causes.k(), q = attrs.q();
  if (lambda.rows() != k || lambda.cols() != q)
    throw DataError("expected moments: lambda shape mismatch");
  const int d = 1 + k + q;
  Mat acc = Mat::Zero(d, d);
  Vec row(d);
  long long used = 0;
  for (long long i = 0; i < n; ++i) {
    if (r && !(*r)[i]) continue;
    ++used;
    add_expected_unit(pot, causes, attrs.z, lambda, i, acc, row);
  }
  if (used == 0) throw DataError("expected moments: no units selected");
  MomentMatrices mm;
  mm.m = acc / static_cast<double>(used);
  mm.k = k;
  mm.q = q;
  mm.kind = kind;
  return mm;
}

}  // namespace

MomentMatrices realized_moments(const Vec& y, const Mat& x, const Mat& z) {
  return realized_impl(y, x, z, nullptr, MomentKind::Realized);
}

MomentMatrices realized_moments_sampled(const Vec& y, const Mat& x, const Mat& z,
                                        const Mask& r) {
  if (r.size() != static_cast<std::size_t>(y.size()))
    throw DataError("moments: sampling mask length mismatch");
  return realized_impl(y, x, z, &r, MomentKind::SampleRealized);
}

MomentMatrices expected_moments(const PotentialOutcomes& pot,
                                const CauseDistribution& causes,
                                const AttributeMatrix& attrs, const Mat& lambda) {
  return expected_impl(pot, causes, attrs, lambda, nullptr, MomentKind::Expected);
}

MomentMatrices expected_moments_sampled(const PotentialOutcomes& pot,
                                        const CauseDistribution& causes,
                                        const AttributeMatrix& attrs,
                                        const Mat& lambda, const Mask& r) {
  if (r.size() != static_cast<std::size_t>(outcome_units(pot)))
    throw DataError("expected moments: sampling mask length mismatch");
  return expected_impl(pot, causes, attrs, lambda, &r, MomentKind::SampleExpected);
}

EstimandSolution general_estimands(const MomentMatrices& mm) {
  const int k = mm.k, q = mm.q;
  Mat a(k + q, k + q);
  a.topLeftCorner(k, k) = mm.xx();
  a.topRightCorner(k, q) = mm.xz();
  a.bottomLeftCorner(q, k) = mm.xz().transpose();
  a.bottomRightCorner(q, q) = mm.zz();
  Vec b(k + q);
  b.head(k) = mm.xy();
  b.tail(q) = mm.zy();
  Eigen::ColPivHouseholderQR<Mat> qr(a);
  qr.setThreshold(1e-10);
  if (qr.rank() < k + q) {
    std::ostringstream os;
    os << "moment system is singular: row/column "
       << qr.colsPermutation().indices()(qr.rank()) << " is dependent";
    throw SingularError(os.str());
  }
  Vec sol = qr.solve(b);
  EstimandSolution out;
  out.theta = sol.head(k);
  out.gamma = sol.tail(q);
  out.kind = mm.kind;
  return out;
}

Vec population_residuals(const Vec& y, const Mat& x, const Mat& z, const Vec& theta,
                         const Vec& gamma) {
  if (x.rows() != y.size() || z.rows() != y.size())
    throw DataError("population_residuals: shapes disagree");
  if (x.cols() != theta.size() || z.cols() != gamma.size())
    throw DataError("population_residuals: coefficient lengths disagree");
  return y - x * theta - z * gamma;
}

Vec expected_orthogonality_gap(const PotentialOutcomes& pot,
                               const CauseDistribution& causes,
                               const AttributeMatrix& attrs, const Mat& lambda,
                               const Vec& theta, const Vec& gamma) {
  const long long n = outcome_units(pot);
  const int k = causes.k(), q = attrs.q();
  if (theta.size() != k || gamma.size() != q)
    throw DataError("orthogonality gap: coefficient lengths disagree");
  Vec acc = Vec::Zero(k + q);
  for (long long i = 0; i < n; ++i) {
    const Vec zi = attrs.z.row(i).transpose();
    const Vec shift = lambda * zi;
    for (int j = 0; j < causes.m(); ++j) {
      const double w = causes.probs(i, j);
      if (w == 0.0) continue;
      const Vec u = causes.support.row(j).transpose();
      const Vec xi = u - shift;
      const double eps = outcome_at(pot, i, u) - xi.dot(theta) - zi.dot(gamma);
      acc.head(k) += w * eps * xi;
      acc.tail(q) += w * eps * zi;
    }
  }
  return acc / static_cast<double>(n);
}

std::vector<Mat> expected_xx_per_unit(const CauseDistribution& causes,
                                      const AttributeMatrix& attrs,
                                      const Mat& lambda) {
  const long long n = causes.n();
  if (attrs.n() != n) throw DataError("expected_xx_per_unit: shapes disagree");
  const int k = causes.k();
  std::vector<Mat> out(static_cast<std::size_t>(n));
  for (long long i = 0; i < n; ++i) {
    const Vec shift = lambda * attrs.z.row(i).transpose();
    Mat acc = Mat::Zero(k, k);
    for (int j = 0; j < causes.m(); ++j) {
      const double w = causes.probs(i, j);
      if (w == 0.0) continue;
      const Vec x = causes.support.row(j).transpose() - shift;
      acc.noalias() += w * (x * x.transpose());
    }
    out[static_cast<std::size_t>(i)] = acc;
  }
  return out;
}

Vec weighted_cause_average(const std::vector<Mat>& weights, const Mat& unit_theta,
                           const Mask* r) {
  const long long n = static_cast<long long>(weights.size());
  if (unit_theta.rows() != n)
    throw DataError("weighted_cause_average: weight/slope counts disagree");
  if (n == 0) throw DataError("weighted_cause_average: empty input");
  const int k = static_cast<int>(unit_theta.cols());
  Mat wsum = Mat::Zero(k, k);
  Vec tsum = Vec::Zero(k);
  for (long long i = 0; i < n; ++i) {
    if (r && !(*r)[i]) continue;
    const Mat& w = weights[static_cast<std::size_t>(i)];
    wsum += w;
    tsum += w * unit_theta.row(i).transpose();
  }
  Eigen::ColPivHouseholderQR<Mat> qr(wsum);
  qr.setThreshold(1e-10);
  if (qr.rank() < k)
    throw SingularError("weighted_cause_average: weight sum is singular");
  return qr.solve(tsum);
}

}  // namespace fpreg
