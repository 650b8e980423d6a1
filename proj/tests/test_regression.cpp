#include <doctest.h>

#include <string>

#include "fpreg/errors.hpp"
#include "fpreg/regression.hpp"

using namespace fpreg;

namespace {
Vec vec(std::initializer_list<double> xs) {
  Vec v(static_cast<long long>(xs.size()));
  long long i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

SampleData binary_example() {
  // Y = [1,2,0,2], U = [1,1,0,0], intercept only
  SampleData d;
  d.y = vec({1, 2, 0, 2});
  d.u = Mat(4, 1);
  d.u << 1, 1, 0, 0;
  d.z = Mat::Ones(4, 1);
  return d;
}
}  // namespace

TEST_CASE("partial_out demeans against an intercept") {
  Mat target(3, 1);
  target << 0, 1, 2;
  const PartialOutResult r = partial_out(target, Mat::Ones(3, 1));
  CHECK(r.coef(0, 0) == doctest::Approx(1.0));
  CHECK(r.residuals(0, 0) == doctest::Approx(-1.0));
  CHECK(r.residuals(1, 0) == doctest::Approx(0.0));
  CHECK(r.residuals(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("partial_out residuals are orthogonal to the attributes") {
  Mat z(5, 2);
  z << 1, -2, 1, -1, 1, 0, 1, 1, 1, 2;
  Mat target(5, 2);
  target << 3, 1, 0, 2, 5, 4, 2, 2, 1, 9;
  const PartialOutResult r = partial_out(target, z);
  const Mat cross = z.transpose() * r.residuals;
  CHECK(cross.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("partial_out rejects rank-deficient attributes") {
  Mat z(4, 2);
  z << 1, 2, 1, 2, 1, 2, 1, 2;
  try {
    partial_out(Mat::Ones(4, 1), z);
    FAIL("expected a singularity error");
  } catch (const SingularError& e) {
    CHECK(std::string(e.what()).find("column") != std::string::npos);
  }
}

TEST_CASE("difference in means on the binary example") {
  const FitResult fit = fit_ols(binary_example());
  CHECK(fit.theta_hat(0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(fit.gamma_hat(0) == doctest::Approx(1.0).epsilon(1e-12));  // control mean
  CHECK(fit.n_sample == 4);
  // residuals: treated deviations -0.5, 0.5; control deviations -1, 1
  CHECK(fit.residuals(0) == doctest::Approx(-0.5));
  CHECK(fit.residuals(1) == doctest::Approx(0.5));
  CHECK(fit.residuals(2) == doctest::Approx(-1.0));
  CHECK(fit.residuals(3) == doctest::Approx(1.0));
  // residualized cause is the demeaned treatment indicator
  CHECK(fit.lambda_hat(0, 0) == doctest::Approx(0.5));
  CHECK(fit.x_hat(0, 0) == doctest::Approx(0.5));
  CHECK(fit.x_hat(2, 0) == doctest::Approx(-0.5));
}

TEST_CASE("exact linear data is recovered with zero residuals") {
  SampleData d;
  d.u = Mat(5, 1);
  d.u << 0, 1, 2, 3, 4;
  d.z = Mat::Ones(5, 1);
  d.y = 2.0 * d.u.col(0) + Vec::Constant(5, 3.0);
  const FitResult fit = fit_ols(d);
  CHECK(fit.theta_hat(0) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(fit.gamma_hat(0) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("theta matches the partialled-out regression") {
  // Frisch-Waugh: regressing y on (u, z) and y on residualized u give the
  // same cause coefficients.
  Mat z(6, 2);
  z << 1, -1, 1, 0, 1, 1, 1, 2, 1, -2, 1, 3;
  Mat u(6, 2);
  u << 2, 0, 1, 1, 0, 3, 4, 1, 5, 2, 1, 0;
  Vec y = vec({1, 0, 4, 2, 7, 3});

  SampleData d{y, u, z, std::nullopt};
  const FitResult fit = fit_ols(d);

  const PartialOutResult pu = partial_out(u, z);
  const PartialOutResult py = partial_out(y, z);
  const Mat xtx = pu.residuals.transpose() * pu.residuals;
  const Vec alt = xtx.ldlt().solve(pu.residuals.transpose() * py.residuals).col(0);
  CHECK((fit.theta_hat - alt).cwiseAbs().maxCoeff() < 1e-10);

  // x_hat is the residualized cause block
  CHECK((fit.x_hat - pu.residuals).cwiseAbs().maxCoeff() < 1e-10);
  // fitted residuals orthogonal to all regressors
  CHECK((d.u.transpose() * fit.residuals).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((d.z.transpose() * fit.residuals).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("scaling the outcome scales the coefficients") {
  SampleData d;
  d.u = Mat(5, 1);
  d.u << 1, 4, 2, 0, 3;
  d.z = Mat::Ones(5, 1);
  d.y = vec({2, 1, 5, 0, 3});
  const FitResult a = fit_ols(d);
  d.y *= -7.0;
  const FitResult b = fit_ols(d);
  CHECK(b.theta_hat(0) == doctest::Approx(-7.0 * a.theta_hat(0)));
  CHECK(b.gamma_hat(0) == doctest::Approx(-7.0 * a.gamma_hat(0)));
}

TEST_CASE("row order does not change the fit") {
  SampleData d;
  d.u = Mat(4, 1);
  d.u << 1, 1, 0, 0;
  d.z = Mat::Ones(4, 1);
  d.y = vec({1, 2, 0, 2});
  const FitResult a = fit_ols(d);

  SampleData p;
  p.u = Mat(4, 1);
  p.u << 0, 1, 0, 1;
  p.z = Mat::Ones(4, 1);
  p.y = vec({2, 2, 0, 1});
  const FitResult b = fit_ols(p);
  CHECK(a.theta_hat(0) == doctest::Approx(b.theta_hat(0)).epsilon(1e-12));
  CHECK(a.gamma_hat(0) == doctest::Approx(b.gamma_hat(0)).epsilon(1e-12));
}

TEST_CASE("collinear causes raise a named singularity") {
  SampleData d;
  d.u = Mat(5, 2);
  d.u << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10;
  d.z = Mat::Ones(5, 1);
  d.y = vec({1, 2, 0, 2, 1});
  try {
    fit_ols(d);
    FAIL("expected a singularity error");
  } catch (const SingularError& e) {
    CHECK(std::string(e.what()).find("column") != std::string::npos);
  }
}

TEST_CASE("a cause collinear with attributes is flagged") {
  SampleData d;
  d.u = Mat::Ones(5, 1);  // equal to the intercept
  d.z = Mat::Ones(5, 1);
  d.y = vec({1, 2, 0, 2, 1});
  CHECK_THROWS_AS(fit_ols(d), SingularError);
}

TEST_CASE("carried metadata survives the fit") {
  SampleData d = binary_example();
  d.n_population = 100;
  const FitResult fit = fit_ols(d);
  REQUIRE(fit.n_population.has_value());
  CHECK(*fit.n_population == 100);
  CHECK(fit.z.rows() == 4);
  CHECK(fit.z.cols() == 1);
}
