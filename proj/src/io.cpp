#include "fpreg/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "fpreg/design_lab.hpp"
#include "fpreg/estimands.hpp"
#include "fpreg/variance.hpp"

namespace fpreg {
namespace {

using ojson = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// serialization: insertion-ordered tree, doubles at 17 significant digits,
// non-finite numbers as null
// ---------------------------------------------------------------------------

void emit(const ojson& v, std::string& out) {
  switch (v.type()) {
    case ojson::value_t::object: {
      out += '{';
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(it.key()).dump();
        out += ':';
        emit(it.value(), out);
      }
      out += '}';
      break;
    }
    case ojson::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& e : v) {
        if (!first) out += ',';
        first = false;
        emit(e, out);
      }
      out += ']';
      break;
    }
    case ojson::value_t::string:
      out += nlohmann::json(v.get<std::string>()).dump();
      break;
    case ojson::value_t::boolean:
      out += v.get<bool>() ? "true" : "false";
      break;
    case ojson::value_t::number_integer:
      out += std::to_string(v.get<long long>());
      break;
    case ojson::value_t::number_unsigned:
      out += std::to_string(v.get<unsigned long long>());
      break;
    case ojson::value_t::number_float: {
      const double d = v.get<double>();
      if (!std::isfinite(d)) {
        out += "null";
        break;
      }
      char buf[40];
      std::snprintf(buf, sizeof buf, "%.17g", d);
      out += buf;
      break;
    }
    default:
      out += "null";
  }
}

std::string dump17(const ojson& v) {
  std::string s;
  emit(v, s);
  return s;
}

ojson vec_json(const Vec& v) {
  ojson a = ojson::array();
  for (long long i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

ojson mat_json(const Mat& m) {
  ojson rows = ojson::array();
  for (long long i = 0; i < m.rows(); ++i) {
    ojson row = ojson::array();
    for (long long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> rec;
  std::string field;
  bool in_quotes = false;
  bool pending = false;  // anything seen since the last record boundary
  const auto end_field = [&] {
    rec.push_back(field);
    field.clear();
  };
  const auto end_record = [&] {
    end_field();
    records.push_back(std::move(rec));
    rec.clear();
    pending = false;
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const char ch = text[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          i += 2;
          continue;
        }
        in_quotes = false;
        ++i;
        continue;
      }
      field += ch;
      ++i;
      continue;
    }
    if (ch == '"' && field.empty()) {
      in_quotes = true;
      pending = true;
      ++i;
      continue;
    }
    if (ch == ',') {
      end_field();
      pending = true;
      ++i;
      continue;
    }
    if (ch == '\n' || ch == '\r') {
      end_record();
      i += (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ? 2 : 1;
      continue;
    }
    field += ch;
    pending = true;
    ++i;
  }
  if (in_quotes) throw DataError("unterminated quoted field in " + path);
  if (pending || !field.empty() || !rec.empty()) end_record();
  if (records.empty()) throw DataError("empty data file: " + path);
  CsvTable t;
  t.header = records.front();
  t.rows.assign(std::make_move_iterator(records.begin() + 1),
                std::make_move_iterator(records.end()));
  return t;
}

double parse_cell(const std::string& raw, std::size_t data_row,
                  const std::string& col) {
  const std::size_t b = raw.find_first_not_of(" \t");
  const std::size_t e = raw.find_last_not_of(" \t");
  const std::string s = b == std::string::npos ? "" : raw.substr(b, e - b + 1);
  double val = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  const auto res = std::from_chars(first, last, val);
  if (s.empty() || res.ec != std::errc{} || res.ptr != last ||
      !std::isfinite(val)) {
    throw DataError("non-numeric value \"" + raw + "\" at data row " +
                    std::to_string(data_row) + ", column " + col);
  }
  return val;
}

}  // namespace

void validate_config(const RunConfig& cfg) {
  if (!(cfg.ci > 0.0 && cfg.ci < 1.0))
    throw DataError("confidence level must lie strictly between 0 and 1");
  if (cfg.reps < 1) throw DataError("reps must be at least 1");
  if (cfg.threads < 0) throw DataError("threads must be nonnegative");
  if (cfg.max_pairs < 1) throw DataError("max pairs must be positive");
  static const std::set<std::string> kEstimands = {"descriptive", "causal-sample",
                                                   "causal", "all"};
  if (!kEstimands.count(cfg.estimand))
    throw DataError("unknown estimand selector: " + cfg.estimand);
  if (cfg.command != "bayes" && cfg.data_path.empty())
    throw DataError("a data file is required");
  if (cfg.command == "estimate") {
    if (cfg.outcome.empty()) throw DataError("an outcome column is required");
    if (cfg.causes.empty()) throw DataError("at least one cause column is required");
    std::set<std::string> causes(cfg.causes.begin(), cfg.causes.end());
    if (causes.size() != cfg.causes.size())
      throw DataError("cause columns must be distinct");
    std::set<std::string> attrs(cfg.attributes.begin(), cfg.attributes.end());
    if (attrs.size() != cfg.attributes.size())
      throw DataError("attribute columns must be distinct");
    for (const auto& a : cfg.attributes)
      if (causes.count(a))
        throw DataError("column listed as both cause and attribute: " + a);
    if (causes.count(cfg.outcome) || attrs.count(cfg.outcome))
      throw DataError("outcome column cannot also be a regressor: " + cfg.outcome);
    if (cfg.population_size && *cfg.population_size < 1)
      throw DataError("population size must be positive");
  }
}

CsvData load_sample(const RunConfig& cfg) {
  const CsvTable t = read_csv_file(cfg.data_path);
  std::unordered_map<std::string, int> index;
  std::set<std::string> duplicated;
  for (std::size_t i = 0; i < t.header.size(); ++i) {
    if (index.count(t.header[i]))
      duplicated.insert(t.header[i]);
    else
      index[t.header[i]] = static_cast<int>(i);
  }
  const auto col_index = [&](const std::string& name) {
    if (duplicated.count(name)) throw DataError("duplicate column name: " + name);
    const auto it = index.find(name);
    if (it == index.end()) throw DataError("missing column: " + name);
    return it->second;
  };
  const int y_col = col_index(cfg.outcome);
  std::vector<int> u_cols, z_cols;
  for (const auto& name : cfg.causes) u_cols.push_back(col_index(name));
  for (const auto& name : cfg.attributes) z_cols.push_back(col_index(name));

  const long long n = static_cast<long long>(t.rows.size());
  const int k = static_cast<int>(u_cols.size());
  const int qa = static_cast<int>(z_cols.size());
  Vec y(n);
  Mat u(n, k), za(n, qa);
  for (long long r = 0; r < n; ++r) {
    const auto& row = t.rows[static_cast<std::size_t>(r)];
    if (row.size() != t.header.size()) {
      std::ostringstream os;
      os << "data row " << r + 1 << " has " << row.size() << " fields; expected "
         << t.header.size();
      throw DataError(os.str());
    }
    y(r) = parse_cell(row[static_cast<std::size_t>(y_col)],
                      static_cast<std::size_t>(r + 1), cfg.outcome);
    for (int j = 0; j < k; ++j)
      u(r, j) = parse_cell(row[static_cast<std::size_t>(u_cols[static_cast<std::size_t>(j)])],
                           static_cast<std::size_t>(r + 1),
                           cfg.causes[static_cast<std::size_t>(j)]);
    for (int j = 0; j < qa; ++j)
      za(r, j) = parse_cell(row[static_cast<std::size_t>(z_cols[static_cast<std::size_t>(j)])],
                            static_cast<std::size_t>(r + 1),
                            cfg.attributes[static_cast<std::size_t>(j)]);
  }

  // the intercept must be attribute column 0: reuse an all-ones column when
  // the file has one, otherwise prepend a synthetic one
  int ones_col = -1;
  for (int j = 0; j < qa && ones_col < 0; ++j)
    if ((za.col(j).array() == 1.0).all()) ones_col = j;
  CsvData out;
  out.cause_names = cfg.causes;
  if (ones_col >= 0) {
    out.data.z = Mat(n, qa);
    out.data.z.col(0) = za.col(ones_col);
    out.attribute_names.push_back(cfg.attributes[static_cast<std::size_t>(ones_col)]);
    int dest = 1;
    for (int j = 0; j < qa; ++j) {
      if (j == ones_col) continue;
      out.data.z.col(dest++) = za.col(j);
      out.attribute_names.push_back(cfg.attributes[static_cast<std::size_t>(j)]);
    }
  } else {
    out.data.z = Mat(n, qa + 1);
    out.data.z.col(0) = Vec::Ones(n);
    out.attribute_names.push_back("(intercept)");
    for (int j = 0; j < qa; ++j) {
      out.data.z.col(j + 1) = za.col(j);
      out.attribute_names.push_back(cfg.attributes[static_cast<std::size_t>(j)]);
    }
  }
  out.data.y = std::move(y);
  out.data.u = std::move(u);
  const long long need = k + static_cast<long long>(out.data.z.cols()) + 1;
  if (n < need) {
    std::ostringstream os;
    os << "need at least " << need << " rows for " << k << " causes and "
       << out.data.z.cols() << " attributes; found " << n;
    throw DataError(os.str());
  }
  if (cfg.population_size) {
    if (*cfg.population_size < n)
      throw DataError("population size is smaller than the sample");
    out.data.n_population = *cfg.population_size;
  }
  return out;
}

// ---------------------------------------------------------------------------
// population specs
// ---------------------------------------------------------------------------

namespace {

void expect_keys(const ojson& o, const char* where,
                 std::initializer_list<const char*> keys) {
  if (!o.is_object())
    throw DataError(std::string(where) + " must be a JSON object");
  for (auto it = o.begin(); it != o.end(); ++it) {
    bool known = false;
    for (const char* k : keys)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw DataError("unknown key \"" + it.key() + "\" in " + where);
  }
}

const ojson& require_key(const ojson& o, const char* key, const char* where) {
  const auto it = o.find(key);
  if (it == o.end())
    throw DataError(std::string(where) + " is missing \"" + key + "\"");
  return *it;
}

double get_num(const ojson& v, const std::string& where) {
  if (!v.is_number()) throw DataError(where + " must be a number");
  return v.get<double>();
}

long long get_int(const ojson& v, const std::string& where) {
  if (!v.is_number_integer() && !v.is_number_unsigned())
    throw DataError(where + " must be an integer");
  return v.get<long long>();
}

std::string get_str(const ojson& v, const std::string& where) {
  if (!v.is_string()) throw DataError(where + " must be a string");
  return v.get<std::string>();
}

Vec read_vec(const ojson& a, const std::string& where) {
  if (!a.is_array()) throw DataError(where + " must be an array of numbers");
  Vec v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    v(static_cast<long long>(i)) =
        get_num(a[i], where + "[" + std::to_string(i) + "]");
  return v;
}

Mat read_mat(const ojson& a, const std::string& where) {
  if (!a.is_array() || a.empty())
    throw DataError(where + " must be a non-empty array of rows");
  const std::size_t rows = a.size();
  if (!a[0].is_array())
    throw DataError(where + " rows must be arrays of numbers");
  const std::size_t cols = a[0].size();
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (!a[i].is_array() || a[i].size() != cols)
      throw DataError(where + " rows must all have the same length");
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<long long>(i), static_cast<long long>(j)) = get_num(
          a[i][j], where + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
  }
  return m;
}

}  // namespace

Population parse_population_json(const std::string& text) {
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("population spec: ") + e.what());
  }
  expect_keys(j, "population spec",
              {"n", "outcomes", "attributes", "causes", "sampling", "assignment"});
  Population pop;
  pop.n = get_int(require_key(j, "n", "population spec"), "\"n\"");

  const ojson& oc = require_key(j, "outcomes", "population spec");
  const std::string okind = get_str(require_key(oc, "kind", "\"outcomes\""),
                                    "\"outcomes\".\"kind\"");
  if (okind == "binary") {
    expect_keys(oc, "\"outcomes\"", {"kind", "y1", "y0"});
    BinaryPotentialOutcomes b;
    b.y1 = read_vec(require_key(oc, "y1", "\"outcomes\""), "\"y1\"");
    b.y0 = read_vec(require_key(oc, "y0", "\"outcomes\""), "\"y0\"");
    pop.outcomes = std::move(b);
  } else if (okind == "linear") {
    expect_keys(oc, "\"outcomes\"", {"kind", "theta", "xi"});
    LinearPotentialOutcomes lin;
    lin.theta = read_mat(require_key(oc, "theta", "\"outcomes\""), "\"theta\"");
    lin.xi = read_vec(require_key(oc, "xi", "\"outcomes\""), "\"xi\"");
    pop.outcomes = std::move(lin);
  } else {
    throw DataError("unknown outcomes kind: " + okind);
  }

  if (j.contains("attributes"))
    pop.attributes.z = read_mat(j["attributes"], "\"attributes\"");
  else
    pop.attributes.z = Mat::Ones(pop.n, 1);

  if (j.contains("causes")) {
    const ojson& cc = j["causes"];
    const std::string ckind =
        get_str(require_key(cc, "kind", "\"causes\""), "\"causes\".\"kind\"");
    if (ckind == "bernoulli") {
      expect_keys(cc, "\"causes\"", {"kind", "p"});
      const ojson& p = require_key(cc, "p", "\"causes\"");
      Vec pv;
      if (p.is_number())
        pv = Vec::Constant(pop.n, get_num(p, "\"p\""));
      else
        pv = read_vec(p, "\"p\"");
      pop.causes = CauseDistribution::bernoulli(pv);
    } else if (ckind == "discrete") {
      expect_keys(cc, "\"causes\"", {"kind", "support", "probs"});
      CauseDistribution d;
      d.support = read_mat(require_key(cc, "support", "\"causes\""), "\"support\"");
      d.probs = read_mat(require_key(cc, "probs", "\"causes\""), "\"probs\"");
      pop.causes = std::move(d);
    } else {
      throw DataError("unknown causes kind: " + ckind);
    }
  }

  const ojson& sp = require_key(j, "sampling", "population spec");
  const std::string skind =
      get_str(require_key(sp, "kind", "\"sampling\""), "\"sampling\".\"kind\"");
  if (skind == "srs") {
    expect_keys(sp, "\"sampling\"", {"kind", "sample_size"});
    pop.sampling = FixedSizeSrs{
        get_int(require_key(sp, "sample_size", "\"sampling\""), "\"sample_size\"")};
  } else if (skind == "bernoulli") {
    expect_keys(sp, "\"sampling\"", {"kind", "rate"});
    pop.sampling = BernoulliSampling{
        get_num(require_key(sp, "rate", "\"sampling\""), "\"rate\"")};
  } else {
    throw DataError("unknown sampling kind: " + skind);
  }

  const ojson& as = require_key(j, "assignment", "population spec");
  const std::string akind =
      get_str(require_key(as, "kind", "\"assignment\""), "\"assignment\".\"kind\"");
  if (akind == "complete") {
    expect_keys(as, "\"assignment\"", {"kind", "treated"});
    pop.assignment = CompleteRandomization{
        get_int(require_key(as, "treated", "\"assignment\""), "\"treated\"")};
  } else if (akind == "independent") {
    expect_keys(as, "\"assignment\"", {"kind"});
    pop.assignment = IndependentAssignment{};
  } else {
    throw DataError("unknown assignment kind: " + akind);
  }
  return pop;
}

std::string serialize_population(const Population& pop) {
  ojson j;
  j["n"] = pop.n;
  if (const auto* b = std::get_if<BinaryPotentialOutcomes>(&pop.outcomes)) {
    j["outcomes"] = {{"kind", "binary"}, {"y1", vec_json(b->y1)}, {"y0", vec_json(b->y0)}};
  } else {
    const auto& lin = std::get<LinearPotentialOutcomes>(pop.outcomes);
    j["outcomes"] = {
        {"kind", "linear"}, {"theta", mat_json(lin.theta)}, {"xi", vec_json(lin.xi)}};
  }
  j["attributes"] = mat_json(pop.attributes.z);
  if (pop.causes) {
    const auto& c = *pop.causes;
    if (c.bernoulli_form) {
      j["causes"] = {{"kind", "bernoulli"}, {"p", vec_json(c.probs.col(1))}};
    } else {
      j["causes"] = {{"kind", "discrete"},
                     {"support", mat_json(c.support)},
                     {"probs", mat_json(c.probs)}};
    }
  }
  if (const auto* srs = std::get_if<FixedSizeSrs>(&pop.sampling))
    j["sampling"] = {{"kind", "srs"}, {"sample_size", srs->sample_size}};
  else
    j["sampling"] = {{"kind", "bernoulli"},
                     {"rate", std::get<BernoulliSampling>(pop.sampling).rate}};
  if (const auto* cr = std::get_if<CompleteRandomization>(&pop.assignment))
    j["assignment"] = {{"kind", "complete"}, {"treated", cr->treated}};
  else
    j["assignment"] = {{"kind", "independent"}};
  return dump17(j);
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open data file: " + path);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

Population load_population(const RunConfig& cfg) {
  Population pop = parse_population_json(read_text_file(cfg.data_path));
  const auto problems = validate_population(pop);
  if (!problems.empty()) {
    std::string msg = "invalid population spec: ";
    for (std::size_t i = 0; i < problems.size(); ++i) {
      if (i) msg += "; ";
      msg += problems[i];
    }
    throw DataError(msg);
  }
  return pop;
}

ojson summary_json(double mean, double var) {
  return ojson{{"mean", mean}, {"var", var}};
}

}  // namespace

std::string run_estimate(const RunConfig& cfg) {
  validate_config(cfg);
  const CsvData csv = load_sample(cfg);
  const FitResult fit = fit_ols(csv.data);
  const GeneralVarianceReport gv = general_variance(fit, csv.data.n_population);
  const bool want_descr = cfg.estimand == "all" || cfg.estimand == "descriptive";
  const bool want_cs = cfg.estimand == "all" || cfg.estimand == "causal-sample";
  const bool want_causal = cfg.estimand == "all" || cfg.estimand == "causal";

  ojson j;
  j["command"] = "estimate";
  j["data"] = {{"path", cfg.data_path},
               {"rows", fit.n_sample},
               {"outcome", cfg.outcome},
               {"causes", csv.cause_names},
               {"attributes", csv.attribute_names}};
  j["n_sample"] = fit.n_sample;
  j["n_population"] =
      cfg.population_size ? ojson(*cfg.population_size) : ojson(nullptr);
  j["rho_hat"] = gv.rho_hat;
  j["estimand"] = cfg.estimand;
  j["theta_hat"] = vec_json(fit.theta_hat);
  j["gamma_hat"] = vec_json(fit.gamma_hat);
  j["lambda_hat"] = mat_json(fit.lambda_hat);

  ojson coefs = ojson::array();
  for (int i = 0; i < fit.theta_hat.size(); ++i) {
    ojson c;
    c["name"] = csv.cause_names[static_cast<std::size_t>(i)];
    c["estimate"] = fit.theta_hat(i);
    c["se_ehw"] = gv.se_ehw(i);
    if (want_causal) c["se_causal"] = gv.se_causal(i);
    if (want_cs) c["se_causal_sample"] = gv.se_causal_sample(i);
    if (want_descr) c["se_descriptive"] = gv.se_descriptive(i);
    coefs.push_back(std::move(c));
  }
  j["coefficients"] = std::move(coefs);

  ojson mats;
  mats["h_hat"] = mat_json(gv.h_hat);
  mats["delta_ehw"] = mat_json(gv.delta_ehw);
  mats["g_hat"] = mat_json(gv.g_hat);
  mats["delta_z"] = mat_json(gv.delta_z);
  mats["v_ehw"] = mat_json(gv.v_ehw);
  if (want_causal) mats["v_causal"] = mat_json(gv.v_causal);
  if (want_cs) mats["v_causal_sample"] = mat_json(gv.v_causal_sample);
  if (want_descr) mats["v_descriptive"] = mat_json(gv.v_descriptive);
  j["matrices"] = std::move(mats);

  // two-group extras when the data are exactly the binary design
  const Mat& u = csv.data.u;
  const bool unit_z = csv.data.z.cols() == 1 &&
                      (csv.data.z.col(0).array() == 1.0).all();
  bool binary_u = u.cols() == 1;
  long long n1 = 0, n0 = 0;
  if (binary_u)
    for (long long i = 0; i < u.rows(); ++i) {
      if (u(i, 0) == 1.0)
        ++n1;
      else if (u(i, 0) == 0.0)
        ++n0;
      else {
        binary_u = false;
        break;
      }
    }
  if (unit_z && binary_u && n1 >= 2 && n0 >= 2) {
    Mask x(static_cast<std::size_t>(u.rows()), 0);
    for (long long i = 0; i < u.rows(); ++i)
      x[static_cast<std::size_t>(i)] = u(i, 0) == 1.0 ? 1 : 0;
    const Mask r(static_cast<std::size_t>(u.rows()), 1);
    const BinaryEhwEstimates ehw = binary_ehw(csv.data.y, x, r);
    double sum1 = 0, sum0 = 0;
    for (long long i = 0; i < u.rows(); ++i)
      (x[static_cast<std::size_t>(i)] ? sum1 : sum0) += csv.data.y(i);
    ojson b;
    b["sampled_treated"] = ehw.sampled_treated;
    b["sampled_control"] = ehw.sampled_control;
    b["mean_treated"] = sum1 / static_cast<double>(n1);
    b["mean_control"] = sum0 / static_cast<double>(n0);
    b["estimate"] = sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
    b["s2_treated_hat"] = ehw.s2_treated_hat;
    b["s2_control_hat"] = ehw.s2_control_hat;
    b["v_plug_in"] = ehw.plug_in;
    b["v_adjusted"] = ehw.adjusted;
    b["se_plug_in"] = std::sqrt(ehw.plug_in);
    b["se_adjusted"] = std::sqrt(ehw.adjusted);
    j["binary"] = std::move(b);
  }
  return dump17(j);
}

std::string run_enumerate(const RunConfig& cfg) {
  validate_config(cfg);
  const Population pop = load_population(cfg);
  EnumerationOptions opts;
  opts.threads = cfg.threads;
  opts.max_pairs = cfg.max_pairs;
  const EnumerationReport rep = enumerate_exact(pop, opts);

  ojson j;
  j["command"] = "enumerate";
  j["n"] = rep.n;
  j["sample_size"] = rep.sample_size;
  j["treated"] = rep.treated;
  j["pairs"] = rep.pair_count;
  j["target_causal"] = rep.target_causal;
  j["excluded_probability"] = rep.excluded_probability;
  j["overall"] = summary_json(rep.overall_mean, rep.overall_var);
  ojson cells = ojson::array();
  for (const auto& c : rep.cells) {
    ojson cj;
    cj["sampled_treated"] = c.sampled_treated;
    cj["sampled_control"] = c.sampled_control;
    cj["pairs"] = c.pairs;
    cj["probability"] = c.probability;
    cj["excluded"] = c.excluded;
    cj["mean_estimate"] = c.excluded ? ojson(nullptr) : ojson(c.mean_estimate);
    cj["var_estimate"] = c.excluded ? ojson(nullptr) : ojson(c.var_estimate);
    cj["mean_plug_in"] =
        c.estimators_defined ? ojson(c.mean_plug_in) : ojson(nullptr);
    cj["mean_adjusted"] =
        c.estimators_defined ? ojson(c.mean_adjusted) : ojson(nullptr);
    if (c.excluded) {
      cj["decomposition"] = nullptr;
    } else {
      cj["decomposition"] = ojson{{"mean_var_given_assignment", c.mean_var_given_assignment},
                                  {"var_descriptive", c.var_descriptive},
                                  {"max_sampling_gap", c.max_sampling_gap},
                                  {"mean_var_given_sample", c.mean_var_given_sample},
                                  {"var_causal_sample", c.var_causal_sample},
                                  {"max_design_gap", c.max_design_gap}};
    }
    cells.push_back(std::move(cj));
  }
  j["cells"] = std::move(cells);
  return dump17(j);
}

namespace {

ojson binary_mc_json(const BinaryMcReport& r) {
  ojson j;
  j["command"] = "simulate";
  j["model"] = "binary";
  j["reps"] = r.reps;
  j["kept"] = r.kept;
  j["skipped"] = r.skipped;
  j["seed"] = r.seed;
  j["ci_level"] = r.ci_level;
  j["target_causal"] = r.target_causal;
  j["estimate"] = ojson{
      {"mean", r.est_mean}, {"var", r.est_var}, {"var_se", r.est_var_se}};
  j["targets"] = ojson{
      {"descriptive", summary_json(r.target_descr_mean, r.target_descr_var)},
      {"causal_sample", summary_json(r.target_cs_mean, r.target_cs_var)}};
  j["errors"] = ojson{{"descriptive", summary_json(r.err_mean[0], r.err_var[0])},
                      {"causal_sample", summary_json(r.err_mean[1], r.err_var[1])},
                      {"causal", summary_json(r.err_mean[2], r.err_var[2])}};
  j["variance_estimators"] =
      ojson{{"plug_in", ojson{{"mean", r.mean_plug_in}, {"mean_se", r.mean_plug_in_se}}},
            {"adjusted",
             ojson{{"mean", r.mean_adjusted}, {"mean_se", r.mean_adjusted_se}}}};
  j["coverage"] = ojson{
      {"descriptive",
       ojson{{"plug_in", r.coverage[0][0]}, {"adjusted", r.coverage[0][1]}}},
      {"causal_sample",
       ojson{{"plug_in", r.coverage[1][0]}, {"adjusted", r.coverage[1][1]}}},
      {"causal",
       ojson{{"plug_in", r.coverage[2][0]}, {"adjusted", r.coverage[2][1]}}}};
  return j;
}

ojson regression_mc_json(const RegressionMcReport& r) {
  static const char* kEstimandNames[kEstimands] = {"descriptive", "causal_sample",
                                                   "causal"};
  static const char* kEstimatorNames[kEstimators] = {"ehw", "causal",
                                                     "causal_sample", "descriptive"};
  ojson j;
  j["command"] = "simulate";
  j["model"] = "regression";
  j["reps"] = r.reps;
  j["kept"] = r.kept;
  j["skipped"] = r.skipped;
  j["seed"] = r.seed;
  j["ci_level"] = r.ci_level;
  j["k"] = r.k;
  j["target_causal"] = vec_json(r.target_causal);
  j["estimate"] = ojson{{"mean", vec_json(r.est_mean)},
                        {"var", vec_json(r.est_var)},
                        {"var_se", vec_json(r.est_var_se)}};
  j["targets"] =
      ojson{{"descriptive", ojson{{"mean", vec_json(r.target_descr_mean)},
                                  {"var", vec_json(r.target_descr_var)}}},
            {"causal_sample", ojson{{"mean", vec_json(r.target_cs_mean)},
                                    {"var", vec_json(r.target_cs_var)}}}};
  ojson errs;
  for (int t = 0; t < kEstimands; ++t)
    errs[kEstimandNames[t]] = ojson{{"mean", vec_json(r.err_mean[t])},
                                    {"var", vec_json(r.err_var[t])}};
  j["errors"] = std::move(errs);
  ojson se2;
  for (int e = 0; e < kEstimators; ++e)
    se2[kEstimatorNames[e]] = ojson{{"mean", vec_json(r.mean_se2[e])},
                                    {"mean_se", vec_json(r.mean_se2_se[e])}};
  j["se2"] = std::move(se2);
  ojson cov;
  for (int t = 0; t < kEstimands; ++t) {
    ojson row;
    for (int e = 0; e < kEstimators; ++e)
      row[kEstimatorNames[e]] = vec_json(r.coverage[t][e]);
    cov[kEstimandNames[t]] = std::move(row);
  }
  j["coverage"] = std::move(cov);
  return j;
}

}  // namespace

std::string run_simulate(const RunConfig& cfg) {
  validate_config(cfg);
  const Population pop = load_population(cfg);
  MonteCarloOptions opts;
  opts.reps = cfg.reps;
  opts.seed = cfg.seed;
  opts.ci_level = cfg.ci;
  opts.threads = cfg.threads;
  const MonteCarloReport rep = monte_carlo(pop, opts);
  if (const auto* b = std::get_if<BinaryMcReport>(&rep))
    return dump17(binary_mc_json(*b));
  return dump17(regression_mc_json(std::get<RegressionMcReport>(rep)));
}

std::string run_bayes(const RunConfig& cfg) {
  validate_config(cfg);
  validate_bayes_model(cfg.bayes);
  const PosteriorSummary sc = posterior_super_causal(cfg.bayes);
  const PosteriorSummary de = posterior_descriptive(cfg.bayes);
  const PosteriorSummary cf = posterior_causal_finite(cfg.bayes);
  const auto post = [](const PosteriorSummary& p) {
    return ojson{{"mean", p.mean},
                 {"variance", p.variance},
                 {"sd", std::sqrt(p.variance)}};
  };
  ojson j;
  j["command"] = "bayes";
  j["model"] = {{"ybar1", cfg.bayes.ybar1},   {"ybar0", cfg.bayes.ybar0},
                {"sigma1", cfg.bayes.sigma1}, {"sigma0", cfg.bayes.sigma0},
                {"kappa", cfg.bayes.kappa},   {"n", cfg.bayes.n},
                {"n1", cfg.bayes.n1},         {"n0", cfg.bayes.n0},
                {"sampled1", cfg.bayes.sampled1},
                {"sampled0", cfg.bayes.sampled0}};
  j["posteriors"] = ojson{{"super_causal", post(sc)},
                          {"descriptive", post(de)},
                          {"causal_finite", post(cf)}};
  return dump17(j);
}

std::string error_json(int code, const std::string& kind, const std::string& message) {
  ojson j;
  j["error"] = {{"code", code}, {"kind", kind}, {"message", message}};
  return dump17(j);
}

void write_report(const std::string& out_path, const std::string& payload) {
  if (out_path.empty()) {
    std::cout << payload << "\n";
    return;
  }
  const std::string tmp = out_path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write output file: " + out_path);
    out << payload << "\n";
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw DataError("failed while writing output file: " + out_path);
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, out_path, ec);
  if (ec) {
    std::error_code ec2;
    std::filesystem::remove(tmp, ec2);
    throw DataError("cannot move output into place: " + out_path);
  }
}

}  // namespace fpreg
