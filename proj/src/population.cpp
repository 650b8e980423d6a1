#include "fpreg/population.hpp"

#include <cmath>
#include <sstream>

namespace fpreg {

long long outcome_units(const PotentialOutcomes& pot) {
  return std::visit([](const auto& p) { return p.n(); }, pot);
}

int cause_dim(const PotentialOutcomes& pot) {
  if (std::holds_alternative<BinaryPotentialOutcomes>(pot)) return 1;
  return std::get<LinearPotentialOutcomes>(pot).k();
}

double outcome_at(const PotentialOutcomes& pot, long long i,
                  const Eigen::Ref<const Vec>& u) {
  if (const auto* b = std::get_if<BinaryPotentialOutcomes>(&pot)) {
    if (u.size() != 1 || (u(0) != 0.0 && u(0) != 1.0))
      throw DataError("binary outcomes need a single 0/1 cause value");
    return u(0) == 1.0 ? b->y1(i) : b->y0(i);
  }
  const auto& lin = std::get<LinearPotentialOutcomes>(pot);
  if (u.size() != lin.theta.cols())
    throw DataError("cause vector length does not match outcome slopes");
  return lin.theta.row(i).dot(u) + lin.xi(i);
}

Vec realize_outcomes(const PotentialOutcomes& pot, const Mat& causes) {
  const long long n = outcome_units(pot);
  if (causes.rows() != n || causes.cols() != cause_dim(pot))
    throw DataError("cause matrix shape does not match the population");
  Vec y(n);
  for (long long i = 0; i < n; ++i) y(i) = outcome_at(pot, i, causes.row(i).transpose());
  return y;
}

LinearPotentialOutcomes as_linear(const PotentialOutcomes& pot) {
  if (const auto* b = std::get_if<BinaryPotentialOutcomes>(&pot)) {
    LinearPotentialOutcomes lin;
    lin.theta = b->effects();
    lin.xi = b->y0;
    return lin;
  }
  return std::get<LinearPotentialOutcomes>(pot);
}

Vec CauseDistribution::mean(long long i) const {
  return support.transpose() * probs.row(i).transpose();
}

Mat CauseDistribution::second_moment(long long i) const {
  Mat s = Mat::Zero(k(), k());
  for (int j = 0; j < m(); ++j)
    s += probs(i, j) * support.row(j).transpose() * support.row(j);
  return s;
}

Mat CauseDistribution::means() const {
  return probs * support;
}

CauseDistribution CauseDistribution::bernoulli(const Vec& p) {
  CauseDistribution d;
  d.support = Mat(2, 1);
  d.support << 0.0, 1.0;
  d.probs = Mat(p.size(), 2);
  d.probs.col(0) = (1.0 - p.array()).matrix();
  d.probs.col(1) = p;
  d.bernoulli_form = true;
  return d;
}

CauseDistribution marginal_causes(const Population& pop) {
  if (pop.causes) return *pop.causes;
  const auto* cr = std::get_if<CompleteRandomization>(&pop.assignment);
  if (!cr)
    throw DataError("population has no cause distribution and is not completely randomized");
  const double p = static_cast<double>(cr->treated) / static_cast<double>(pop.n);
  return CauseDistribution::bernoulli(Vec::Constant(pop.n, p));
}

namespace {

bool all_finite(const Mat& m) { return m.allFinite(); }

void check_shapes(const Population& pop, std::vector<std::string>& out) {
  if (pop.n <= 0) out.push_back("population size must be positive");
  if (outcome_units(pop.outcomes) != pop.n)
    out.push_back("outcome table row count does not match n");
  if (pop.attributes.n() != pop.n)
    out.push_back("attribute matrix row count does not match n");
  if (pop.causes) {
    if (pop.causes->n() != pop.n)
      out.push_back("cause distribution row count does not match n");
    if (pop.causes->k() != cause_dim(pop.outcomes))
      out.push_back("cause dimension does not match the outcome model");
  }
}

void check_values(const Population& pop, std::vector<std::string>& out) {
  if (const auto* b = std::get_if<BinaryPotentialOutcomes>(&pop.outcomes)) {
    if (b->y1.size() != b->y0.size())
      out.push_back("y1 and y0 have different lengths");
    if (!b->y1.allFinite() || !b->y0.allFinite())
      out.push_back("potential outcomes contain non-finite values");
  } else {
    const auto& lin = std::get<LinearPotentialOutcomes>(pop.outcomes);
    if (lin.theta.rows() != lin.xi.size())
      out.push_back("theta and xi have different lengths");
    if (!all_finite(lin.theta) || !lin.xi.allFinite())
      out.push_back("potential outcomes contain non-finite values");
    if (lin.k() < 1) out.push_back("outcome model needs at least one cause");
  }
  if (!all_finite(pop.attributes.z))
    out.push_back("attributes contain non-finite values");
}

void check_attributes(const AttributeMatrix& attrs, std::vector<std::string>& out) {
  if (attrs.q() < 1) {
    out.push_back("attribute matrix needs at least the intercept column");
    return;
  }
  if ((attrs.z.col(0).array() != 1.0).any())
    out.push_back("attribute column 0 must be the all-ones intercept");
  if (attrs.n() >= attrs.q()) {
    Eigen::ColPivHouseholderQR<Mat> qr(attrs.z);
    qr.setThreshold(1e-10);
    if (qr.rank() < attrs.q()) out.push_back("attribute matrix is rank deficient");
  } else {
    out.push_back("more attribute columns than units");
  }
}

void check_causes(const CauseDistribution& c, std::vector<std::string>& out) {
  if (c.m() < 1) out.push_back("cause support is empty");
  if (!all_finite(c.support) || !all_finite(c.probs))
    out.push_back("cause distribution contains non-finite values");
  for (long long i = 0; i < c.n(); ++i) {
    double s = 0.0;
    for (int j = 0; j < c.m(); ++j) {
      if (c.probs(i, j) < 0.0) {
        std::ostringstream os;
        os << "unit " << i << " has a negative cause probability";
        out.push_back(os.str());
        break;
      }
      s += c.probs(i, j);
    }
    if (std::abs(s - 1.0) > 1e-12) {
      std::ostringstream os;
      os << "unit " << i << " cause probabilities sum to " << s << ", not 1";
      out.push_back(os.str());
    }
  }
}

void check_designs(const Population& pop, std::vector<std::string>& out) {
  if (const auto* srs = std::get_if<FixedSizeSrs>(&pop.sampling)) {
    if (srs->sample_size < 1 || srs->sample_size > pop.n)
      out.push_back("fixed-size sample must draw between 1 and n units");
  } else {
    const auto& bern = std::get<BernoulliSampling>(pop.sampling);
    if (!(bern.rate > 0.0) || bern.rate > 1.0 || !std::isfinite(bern.rate))
      out.push_back("sampling rate must lie in (0, 1]");
  }
  if (const auto* cr = std::get_if<CompleteRandomization>(&pop.assignment)) {
    if (cr->treated < 1 || cr->treated > pop.n - 1)
      out.push_back("complete randomization needs between 1 and n-1 treated units");
    if (cause_dim(pop.outcomes) != 1)
      out.push_back("complete randomization assigns a single binary cause");
  } else {
    if (!pop.causes)
      out.push_back("independent assignment requires a cause distribution");
  }
  if (pop.causes && std::holds_alternative<BinaryPotentialOutcomes>(pop.outcomes)) {
    for (int j = 0; j < pop.causes->m(); ++j) {
      const double v = pop.causes->support(j, 0);
      if (v != 0.0 && v != 1.0) {
        out.push_back("binary outcomes need 0/1 cause support");
        break;
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate_population(const Population& pop) {
  std::vector<std::string> out;
  check_shapes(pop, out);
  check_values(pop, out);
  check_attributes(pop.attributes, out);
  if (pop.causes) check_causes(*pop.causes, out);
  check_designs(pop, out);
  return out;
}

}  // namespace fpreg
