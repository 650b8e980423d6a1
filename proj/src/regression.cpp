#include "fpreg/regression.hpp"

#include <sstream>

namespace fpreg {

namespace {
constexpr double kRankTol = 1e-10;  // pivots below this fraction of the largest drop the rank

// QR with column pivoting; throws naming the first dependent column.
Eigen::ColPivHouseholderQR<Mat> checked_qr(const Mat& m, const char* what) {
  Eigen::ColPivHouseholderQR<Mat> qr(m);
  qr.setThreshold(kRankTol);
  if (qr.rank() < m.cols()) {
    std::ostringstream os;
    os << what << " is rank deficient: column "
       << qr.colsPermutation().indices()(qr.rank())
       << " adds no independent variation";
    throw SingularError(os.str());
  }
  return qr;
}
}  // namespace

PartialOutResult partial_out(const Mat& target, const Mat& z) {
  if (target.rows() != z.rows())
    throw DataError("partial_out: target and attributes disagree on rows");
  if (z.rows() < z.cols())
    throw DataError("partial_out: more attribute columns than rows");
  auto qr = checked_qr(z, "attribute matrix");
  PartialOutResult res;
  res.coef = qr.solve(target);
  res.residuals = target - z * res.coef;
  return res;
}

FitResult fit_ols(const SampleData& data) {
  const long long n = data.size();
  const int k = data.k(), q = data.q();
  if (data.u.rows() != n || data.z.rows() != n)
    throw DataError("fit_ols: y, u, z disagree on rows");
  if (k < 1) throw DataError("fit_ols: need at least one cause column");
  if (n < k + q + 1) throw DataError("fit_ols: need at least k+q+1 observations");
  if (data.n_population && *data.n_population < n)
    throw DataError("fit_ols: population size smaller than the sample");

  FitResult fit;
  auto part = partial_out(data.u, data.z);
  fit.lambda_hat = part.coef.transpose();  // k x q
  fit.x_hat = part.residuals;

  // gamma_hat reported in the raw (u, z) parametrization; theta_hat and the
  // residuals are identical under either regressor set
  Mat design(n, k + q);
  design.leftCols(k) = data.u;
  design.rightCols(q) = data.z;
  Eigen::ColPivHouseholderQR<Mat> qr(design);
  qr.setThreshold(kRankTol);
  if (qr.rank() < design.cols()) {
    const int col = qr.colsPermutation().indices()(qr.rank());
    std::ostringstream os;
    if (col < k)
      os << "cause column " << col;
    else
      os << "attribute column " << col - k;
    os << " adds no independent variation";
    throw SingularError(os.str());
  }
  Vec coef = qr.solve(data.y);
  fit.theta_hat = coef.head(k);
  fit.gamma_hat = coef.tail(q);
  fit.residuals = data.y - design * coef;
  fit.z = data.z;
  fit.n_sample = n;
  fit.n_population = data.n_population;
  return fit;
}

}  // namespace fpreg
