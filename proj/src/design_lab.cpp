#include "fpreg/design_lab.hpp"

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "fpreg/estimands.hpp"
#include "fpreg/regression.hpp"
#include "fpreg/stats.hpp"
#include "fpreg/variance.hpp"

namespace fpreg {
namespace {

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw ? static_cast<int>(hw) : 1;
}

// Chunk c is always a complete unit of work, so any in-order merge of chunk
// results is identical no matter how many threads raced over the chunks.
void run_chunks(long long num_chunks, int threads,
                const std::function<void(long long)>& body) {
  threads = static_cast<int>(std::min<long long>(threads, num_chunks));
  if (threads <= 1) {
    for (long long c = 0; c < num_chunks; ++c) body(c);
    return;
  }
  std::atomic<long long> next{0};
  std::exception_ptr first_error;
  std::mutex mu;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const long long c = next.fetch_add(1);
        if (c >= num_chunks) return;
        try {
          body(c);
        } catch (...) {
          std::lock_guard<std::mutex> g(mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::uint64_t binom(int n, int k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  unsigned __int128 r = 1;
  for (int i = 1; i <= k; ++i) r = r * static_cast<unsigned>(n - k + i) / static_cast<unsigned>(i);
  return static_cast<std::uint64_t>(r);
}

// t-th k-subset of {0..n-1} in ascending numeric-mask order
std::uint64_t unrank_subset(std::uint64_t t, int n, int k) {
  std::uint64_t mask = 0;
  int kk = k;
  for (int c = n - 1; kk > 0; --c) {
    const std::uint64_t b = binom(c, kk);
    if (b <= t) {
      mask |= std::uint64_t{1} << c;
      t -= b;
      --kk;
    }
  }
  return mask;
}

// next integer with the same popcount (snoob)
std::uint64_t next_subset(std::uint64_t v) {
  const std::uint64_t t = (v | (v - 1)) + 1;
  return t | ((((t & -t) / (v & -v)) >> 1) - 1);
}

BinaryPotentialOutcomes to_binary(const PotentialOutcomes& pot) {
  if (const auto* b = std::get_if<BinaryPotentialOutcomes>(&pot)) return *b;
  const auto& lin = std::get<LinearPotentialOutcomes>(pot);
  if (lin.k() != 1)
    throw DataError("two-group analysis needs a binary table or a single cause");
  BinaryPotentialOutcomes b;
  b.y0 = lin.xi;
  b.y1 = lin.xi + lin.theta.col(0);
  return b;
}

}  // namespace

DrawResult draw(const Population& pop, CounterRng& rng) {
  const long long n = pop.n;
  DrawResult d;
  if (const auto* srs = std::get_if<FixedSizeSrs>(&pop.sampling)) {
    d.sampled = sample_mask(n, srs->sample_size, rng);
  } else {
    const double rate = std::get<BernoulliSampling>(pop.sampling).rate;
    d.sampled.resize(static_cast<std::size_t>(n));
    for (long long i = 0; i < n; ++i)
      d.sampled[static_cast<std::size_t>(i)] = rng.bernoulli(rate) ? 1 : 0;
  }
  if (const auto* cr = std::get_if<CompleteRandomization>(&pop.assignment)) {
    const Mask x = sample_mask(n, cr->treated, rng);
    d.causes = Mat(n, 1);
    for (long long i = 0; i < n; ++i)
      d.causes(i, 0) = x[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
  } else {
    if (!pop.causes)
      throw DataError("draw: independent assignment needs a cause distribution");
    const auto& c = *pop.causes;
    d.causes = Mat(n, c.k());
    std::vector<double> row(static_cast<std::size_t>(c.m()));
    for (long long i = 0; i < n; ++i) {
      for (int j = 0; j < c.m(); ++j) row[static_cast<std::size_t>(j)] = c.probs(i, j);
      const int pick = rng.discrete(row.data(), c.m());
      d.causes.row(i) = c.support.row(pick);
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// exact enumeration
// ---------------------------------------------------------------------------

namespace {

struct PairEval {
  int n1s = 0;
  bool est_def = false;
  bool var_def = false;
  double est = 0.0;
  double vplug = 0.0;
  double vadj = 0.0;
};

inline PairEval eval_pair(std::uint64_t r, std::uint64_t x, const double* y1,
                          const double* y0, const double* y1sq, const double* y0sq,
                          int sample_size) {
  PairEval pe;
  pe.n1s = std::popcount(r & x);
  const int n0s = sample_size - pe.n1s;
  pe.est_def = pe.n1s >= 1 && n0s >= 1;
  if (!pe.est_def) return pe;
  double s1 = 0, s0 = 0, q1 = 0, q0 = 0;
  std::uint64_t m = r;
  while (m) {
    const int i = std::countr_zero(m);
    m &= m - 1;
    if ((x >> i) & 1) {
      s1 += y1[i];
      q1 += y1sq[i];
    } else {
      s0 += y0[i];
      q0 += y0sq[i];
    }
  }
  const double d1 = pe.n1s, d0 = n0s;
  pe.est = s1 / d1 - s0 / d0;
  pe.var_def = pe.n1s >= 2 && n0s >= 2;
  if (pe.var_def) {
    const double s2_1 = (q1 - s1 * s1 / d1) / (d1 - 1.0);
    const double s2_0 = (q0 - s0 * s0 / d0) / (d0 - 1.0);
    pe.vadj = s2_1 / d1 + s2_0 / d0;
    pe.vplug = (d1 - 1.0) / (d1 * d1) * s2_1 + (d0 - 1.0) / (d0 * d0) * s2_0;
  }
  return pe;
}

struct EnumChunk {
  std::vector<long long> cnt;                    // all pairs per cell
  std::vector<KahanSum> sum, sum2, vplug, vadj;  // raw estimator sums
  std::vector<KahanSum> wvar, wc, wc2;           // decomposition pieces
  std::vector<double> gap;
  explicit EnumChunk(std::size_t cells)
      : cnt(cells, 0), sum(cells), sum2(cells), vplug(cells), vadj(cells),
        wvar(cells), wc(cells), wc2(cells), gap(cells, 0.0) {}
};

struct ChunkPlan {
  long long num_chunks;
  long long chunk_len;
};

// depends only on the problem size, never on the thread count
ChunkPlan plan_chunks(long long total) {
  const long long chunks = std::clamp<long long>(total / 256, 1, 1024);
  const long long len = (total + chunks - 1) / chunks;
  return {(total + len - 1) / len, len};
}

}  // namespace

EnumerationReport enumerate_exact(const Population& pop,
                                  const EnumerationOptions& opts) {
  const auto* srs = std::get_if<FixedSizeSrs>(&pop.sampling);
  const auto* cr = std::get_if<CompleteRandomization>(&pop.assignment);
  if (!srs || !cr)
    throw DataError(
        "enumeration covers fixed-size sampling with complete randomization");
  const BinaryPotentialOutcomes pot = to_binary(pop.outcomes);
  const int n = static_cast<int>(pop.n);
  if (pot.n() != n) throw DataError("enumeration: outcome rows disagree with n");
  if (n > 62) throw DataError("enumeration supports at most 62 units");
  const int sample_size = static_cast<int>(srs->sample_size);
  const int n1 = static_cast<int>(cr->treated);
  const int n0 = n - n1;
  if (sample_size < 1 || sample_size > n)
    throw DataError("enumeration: sample size out of range");
  if (n1 < 1 || n1 > n - 1) throw DataError("enumeration: treated count out of range");

  const std::uint64_t total_r = binom(n, sample_size);
  const std::uint64_t total_x = binom(n, n1);
  const unsigned __int128 pairs =
      static_cast<unsigned __int128>(total_r) * total_x;
  if (pairs > static_cast<unsigned __int128>(opts.max_pairs)) {
    std::ostringstream os;
    os << "enumeration budget exceeded: " << static_cast<double>(total_r) << " x "
       << static_cast<double>(total_x) << " pairs";
    throw DataError(os.str());
  }
  const double total_pairs = static_cast<double>(total_r) * static_cast<double>(total_x);

  std::vector<double> y1(n), y0(n), y1sq(n), y0sq(n), eff(n);
  for (int i = 0; i < n; ++i) {
    y1[i] = pot.y1(i);
    y0[i] = pot.y0(i);
    y1sq[i] = y1[i] * y1[i];
    y0sq[i] = y0[i] * y0[i];
    eff[i] = y1[i] - y0[i];
  }
  const std::size_t cells = static_cast<std::size_t>(sample_size) + 1;
  const int threads = resolve_threads(opts.threads);

  // pass A: outer loop over assignments; within a cell, pairs sharing an
  // assignment form one conditional distribution of the estimator
  const auto passA = plan_chunks(static_cast<long long>(total_x));
  std::vector<EnumChunk> chunksA(
      static_cast<std::size_t>((total_x + passA.chunk_len - 1) / passA.chunk_len),
      EnumChunk(cells));
  run_chunks(static_cast<long long>(chunksA.size()), threads, [&](long long c) {
    EnumChunk& acc = chunksA[static_cast<std::size_t>(c)];
    const std::uint64_t lo = static_cast<std::uint64_t>(c * passA.chunk_len);
    const std::uint64_t hi = std::min<std::uint64_t>(total_x, lo + passA.chunk_len);
    std::vector<long long> gcnt(cells);
    std::vector<double> gsd(cells), gsd2(cells);
    std::uint64_t x = unrank_subset(lo, n, n1);
    for (std::uint64_t xi = lo;;) {
      double t1 = 0, t0 = 0;
      for (int i = 0; i < n; ++i) {
        if ((x >> i) & 1)
          t1 += y1[i];
        else
          t0 += y0[i];
      }
      const double tdescr = t1 / n1 - t0 / n0;
      std::fill(gcnt.begin(), gcnt.end(), 0);
      std::fill(gsd.begin(), gsd.end(), 0.0);
      std::fill(gsd2.begin(), gsd2.end(), 0.0);
      std::uint64_t r = unrank_subset(0, n, sample_size);
      for (std::uint64_t ri = 0;;) {
        const PairEval pe = eval_pair(r, x, y1.data(), y0.data(), y1sq.data(),
                                      y0sq.data(), sample_size);
        const std::size_t cell = static_cast<std::size_t>(pe.n1s);
        ++acc.cnt[cell];
        if (pe.est_def) {
          acc.sum[cell].add(pe.est);
          acc.sum2[cell].add(pe.est * pe.est);
          const double dev = pe.est - tdescr;
          ++gcnt[cell];
          gsd[cell] += dev;
          gsd2[cell] += dev * dev;
          if (pe.var_def) {
            acc.vplug[cell].add(pe.vplug);
            acc.vadj[cell].add(pe.vadj);
          }
        }
        if (++ri >= total_r) break;
        r = next_subset(r);
      }
      for (std::size_t cell = 0; cell < cells; ++cell) {
        if (gcnt[cell] == 0) continue;
        const double cntd = static_cast<double>(gcnt[cell]);
        const double mean_dev = gsd[cell] / cntd;
        const double var = std::max(0.0, gsd2[cell] / cntd - mean_dev * mean_dev);
        acc.wvar[cell].add(cntd * var);
        acc.wc[cell].add(cntd * tdescr);
        acc.wc2[cell].add(cntd * tdescr * tdescr);
        acc.gap[cell] = std::max(acc.gap[cell], std::abs(mean_dev));
      }
      if (++xi >= hi) break;
      x = next_subset(x);
    }
  });

  // pass B: outer loop over samples, for the other conditioning direction
  const auto passB = plan_chunks(static_cast<long long>(total_r));
  std::vector<EnumChunk> chunksB(
      static_cast<std::size_t>((total_r + passB.chunk_len - 1) / passB.chunk_len),
      EnumChunk(cells));
  run_chunks(static_cast<long long>(chunksB.size()), threads, [&](long long c) {
    EnumChunk& acc = chunksB[static_cast<std::size_t>(c)];
    const std::uint64_t lo = static_cast<std::uint64_t>(c * passB.chunk_len);
    const std::uint64_t hi = std::min<std::uint64_t>(total_r, lo + passB.chunk_len);
    std::vector<long long> gcnt(cells);
    std::vector<double> gsd(cells), gsd2(cells);
    std::uint64_t r = unrank_subset(lo, n, sample_size);
    for (std::uint64_t ri = lo;;) {
      double esum = 0;
      std::uint64_t m = r;
      while (m) {
        const int i = std::countr_zero(m);
        m &= m - 1;
        esum += eff[i];
      }
      const double tcs = esum / sample_size;
      std::fill(gcnt.begin(), gcnt.end(), 0);
      std::fill(gsd.begin(), gsd.end(), 0.0);
      std::fill(gsd2.begin(), gsd2.end(), 0.0);
      std::uint64_t x = unrank_subset(0, n, n1);
      for (std::uint64_t xi = 0;;) {
        const PairEval pe = eval_pair(r, x, y1.data(), y0.data(), y1sq.data(),
                                      y0sq.data(), sample_size);
        if (pe.est_def) {
          const std::size_t cell = static_cast<std::size_t>(pe.n1s);
          const double dev = pe.est - tcs;
          ++gcnt[cell];
          gsd[cell] += dev;
          gsd2[cell] += dev * dev;
        }
        if (++xi >= total_x) break;
        x = next_subset(x);
      }
      for (std::size_t cell = 0; cell < cells; ++cell) {
        if (gcnt[cell] == 0) continue;
        const double cntd = static_cast<double>(gcnt[cell]);
        const double mean_dev = gsd[cell] / cntd;
        const double var = std::max(0.0, gsd2[cell] / cntd - mean_dev * mean_dev);
        acc.wvar[cell].add(cntd * var);
        acc.wc[cell].add(cntd * tcs);
        acc.wc2[cell].add(cntd * tcs * tcs);
        acc.gap[cell] = std::max(acc.gap[cell], std::abs(mean_dev));
      }
      if (++ri >= hi) break;
      r = next_subset(r);
    }
  });

  // merge in chunk-index order
  EnumChunk a(cells), b(cells);
  for (const auto& ch : chunksA) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      a.cnt[cell] += ch.cnt[cell];
      a.sum[cell].merge(ch.sum[cell]);
      a.sum2[cell].merge(ch.sum2[cell]);
      a.vplug[cell].merge(ch.vplug[cell]);
      a.vadj[cell].merge(ch.vadj[cell]);
      a.wvar[cell].merge(ch.wvar[cell]);
      a.wc[cell].merge(ch.wc[cell]);
      a.wc2[cell].merge(ch.wc2[cell]);
      a.gap[cell] = std::max(a.gap[cell], ch.gap[cell]);
    }
  }
  for (const auto& ch : chunksB) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      b.wvar[cell].merge(ch.wvar[cell]);
      b.wc[cell].merge(ch.wc[cell]);
      b.wc2[cell].merge(ch.wc2[cell]);
      b.gap[cell] = std::max(b.gap[cell], ch.gap[cell]);
    }
  }

  EnumerationReport rep;
  rep.n = n;
  rep.sample_size = sample_size;
  rep.treated = n1;
  rep.pair_count = static_cast<long long>(total_pairs);
  double effsum = 0;
  for (int i = 0; i < n; ++i) effsum += eff[i];
  rep.target_causal = effsum / n;

  KahanSum inc_mass, inc_mean, inc_raw2;
  for (std::size_t cell = 0; cell < cells; ++cell) {
    if (a.cnt[cell] == 0) continue;
    EnumerationCell out;
    out.sampled_treated = static_cast<long long>(cell);
    out.sampled_control = sample_size - out.sampled_treated;
    out.pairs = a.cnt[cell];
    out.probability = static_cast<double>(a.cnt[cell]) / total_pairs;
    out.excluded = out.sampled_treated == 0 || out.sampled_control == 0;
    if (out.excluded) {
      rep.excluded_probability += out.probability;
      rep.cells.push_back(out);
      continue;
    }
    const double cnt = static_cast<double>(a.cnt[cell]);
    const double mean = a.sum[cell].value() / cnt;
    const double raw2 = a.sum2[cell].value() / cnt;
    out.mean_estimate = mean;
    out.var_estimate = raw2 - mean * mean;
    out.estimators_defined = out.sampled_treated >= 2 && out.sampled_control >= 2;
    if (out.estimators_defined) {
      out.mean_plug_in = a.vplug[cell].value() / cnt;
      out.mean_adjusted = a.vadj[cell].value() / cnt;
    }
    out.mean_var_given_assignment = a.wvar[cell].value() / cnt;
    const double wd = a.wc[cell].value() / cnt, wd2 = a.wc2[cell].value() / cnt;
    out.var_descriptive = std::max(0.0, wd2 - wd * wd);
    out.max_sampling_gap = a.gap[cell];
    out.mean_var_given_sample = b.wvar[cell].value() / cnt;
    const double wr = b.wc[cell].value() / cnt, wr2 = b.wc2[cell].value() / cnt;
    out.var_causal_sample = std::max(0.0, wr2 - wr * wr);
    out.max_design_gap = b.gap[cell];
    rep.cells.push_back(out);
    inc_mass.add(out.probability);
    inc_mean.add(out.probability * mean);
    inc_raw2.add(out.probability * raw2);
  }
  const double mass = inc_mass.value();
  if (mass > 0) {
    rep.overall_mean = inc_mean.value() / mass;
    rep.overall_var = inc_raw2.value() / mass - rep.overall_mean * rep.overall_mean;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

namespace {

constexpr double kCoverSlack = 1e-10;  // SE = 0 against an identical target counts

bool covers(double est, double target, double se, double zcrit) {
  return std::abs(est - target) <= zcrit * se + kCoverSlack * (1.0 + std::abs(target));
}

struct SummaryStats {
  double mean = 0, var = 0, var_se = 0, mean_se = 0;
};

SummaryStats summarize(const std::function<double(long long)>& value,
                       const std::vector<std::uint8_t>& kept, long long kept_count,
                       long long reps) {
  if (kept_count < 1) throw DataError("simulate: every replication was degenerate");
  const auto masked = [&](std::size_t i) {
    return kept[i] ? value(static_cast<long long>(i)) : 0.0;
  };
  SummaryStats s;
  const double kc = static_cast<double>(kept_count);
  s.mean = pairwise_sum(masked, 0, static_cast<std::size_t>(reps)) / kc;
  if (kept_count < 2) {  // spread undefined from one draw; serialized as null
    s.var = s.var_se = s.mean_se = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  const double mean = s.mean;
  const double m2 = pairwise_sum(
      [&](std::size_t i) {
        if (!kept[i]) return 0.0;
        const double d = value(static_cast<long long>(i)) - mean;
        return d * d;
      },
      0, static_cast<std::size_t>(reps));
  const double m4 = pairwise_sum(
      [&](std::size_t i) {
        if (!kept[i]) return 0.0;
        const double d = value(static_cast<long long>(i)) - mean;
        return d * d * d * d;
      },
      0, static_cast<std::size_t>(reps));
  s.var = m2 / (kc - 1.0);
  const double m4n = m4 / kc;
  s.var_se = std::sqrt(
      std::max(0.0, (m4n - s.var * s.var * (kc - 3.0) / (kc - 1.0)) / kc));
  s.mean_se = std::sqrt(s.var / kc);
  return s;
}

double coverage_rate(const std::vector<std::uint8_t>& bits, long long reps,
                     long long stride, long long offset,
                     const std::vector<std::uint8_t>& kept, long long kept_count) {
  long long hits = 0;
  for (long long i = 0; i < reps; ++i)
    if (kept[static_cast<std::size_t>(i)])
      hits += bits[static_cast<std::size_t>(i * stride + offset)];
  return static_cast<double>(hits) / static_cast<double>(kept_count);
}

BinaryMcReport mc_binary(const Population& pop, const MonteCarloOptions& opts) {
  const auto& cr = std::get<CompleteRandomization>(pop.assignment);
  const BinaryPotentialOutcomes pot = to_binary(pop.outcomes);
  const long long n = pop.n;
  const long long n1 = cr.treated, n0 = n - n1;
  if (n1 < 1 || n0 < 1) throw DataError("simulate: treated count out of range");
  const long long reps = opts.reps;
  if (reps < 1) throw DataError("simulate: need at least one replication");
  const double zcrit = normal_quantile(0.5 + opts.ci_level / 2.0);

  const Vec eff = pot.effects();
  const double target_causal = eff.mean();

  // per-replication records: estimate, descriptive target, sample target,
  // plug-in variance, adjusted variance
  constexpr int kStride = 5;
  std::vector<double> rec(static_cast<std::size_t>(reps * kStride), 0.0);
  std::vector<std::uint8_t> kept(static_cast<std::size_t>(reps), 0);
  std::vector<std::uint8_t> cover(static_cast<std::size_t>(reps * kEstimands * 2), 0);

  const long long chunk = 256;
  const long long num_chunks = (reps + chunk - 1) / chunk;
  run_chunks(num_chunks, resolve_threads(opts.threads), [&](long long c) {
    const long long lo = c * chunk, hi = std::min(reps, lo + chunk);
    for (long long repi = lo; repi < hi; ++repi) {
      CounterRng rng(opts.seed, static_cast<std::uint64_t>(repi));
      const DrawResult dr = draw(pop, rng);
      double s1 = 0, s0 = 0, q1 = 0, q0 = 0, esum = 0, t1 = 0, t0 = 0;
      long long m1 = 0, m0 = 0;
      for (long long i = 0; i < n; ++i) {
        const bool x = dr.causes(i, 0) == 1.0;
        if (x)
          t1 += pot.y1(i);
        else
          t0 += pot.y0(i);
        if (!dr.sampled[static_cast<std::size_t>(i)]) continue;
        esum += eff(i);
        if (x) {
          ++m1;
          s1 += pot.y1(i);
          q1 += pot.y1(i) * pot.y1(i);
        } else {
          ++m0;
          s0 += pot.y0(i);
          q0 += pot.y0(i) * pot.y0(i);
        }
      }
      if (m1 < 2 || m0 < 2) continue;  // degenerate draw, skipped and counted
      const double d1 = static_cast<double>(m1), d0 = static_cast<double>(m0);
      const double est = s1 / d1 - s0 / d0;
      const double s2_1 = (q1 - s1 * s1 / d1) / (d1 - 1.0);
      const double s2_0 = (q0 - s0 * s0 / d0) / (d0 - 1.0);
      const double vplug = (d1 - 1.0) / (d1 * d1) * s2_1 + (d0 - 1.0) / (d0 * d0) * s2_0;
      const double vadj = s2_1 / d1 + s2_0 / d0;
      const double tdescr = t1 / static_cast<double>(n1) - t0 / static_cast<double>(n0);
      const double tcs = esum / static_cast<double>(m1 + m0);
      double* r = &rec[static_cast<std::size_t>(repi * kStride)];
      r[0] = est;
      r[1] = tdescr;
      r[2] = tcs;
      r[3] = vplug;
      r[4] = vadj;
      kept[static_cast<std::size_t>(repi)] = 1;
      const double targets[kEstimands] = {tdescr, tcs, target_causal};
      const double vs[2] = {vplug, vadj};
      for (int t = 0; t < kEstimands; ++t)
        for (int e = 0; e < 2; ++e)
          cover[static_cast<std::size_t>(repi * kEstimands * 2 + t * 2 + e)] =
              covers(est, targets[t], std::sqrt(vs[e]), zcrit) ? 1 : 0;
    }
  });

  long long kept_count = 0;
  for (auto f : kept) kept_count += f;
  BinaryMcReport out;
  out.reps = reps;
  out.kept = kept_count;
  out.skipped = reps - kept_count;
  out.seed = opts.seed;
  out.ci_level = opts.ci_level;
  out.target_causal = target_causal;

  const auto slot = [&](int off) {
    return std::function<double(long long)>(
        [&rec, off](long long i) { return rec[static_cast<std::size_t>(i * kStride + off)]; });
  };
  const auto est_stats = summarize(slot(0), kept, kept_count, reps);
  out.est_mean = est_stats.mean;
  out.est_var = est_stats.var;
  out.est_var_se = est_stats.var_se;
  const auto descr_stats = summarize(slot(1), kept, kept_count, reps);
  out.target_descr_mean = descr_stats.mean;
  out.target_descr_var = descr_stats.var;
  const auto cs_stats = summarize(slot(2), kept, kept_count, reps);
  out.target_cs_mean = cs_stats.mean;
  out.target_cs_var = cs_stats.var;
  for (int t = 0; t < kEstimands; ++t) {
    const auto err = std::function<double(long long)>([&rec, t, target_causal](long long i) {
      const double* r = &rec[static_cast<std::size_t>(i * kStride)];
      const double target = t == 0 ? r[1] : (t == 1 ? r[2] : target_causal);
      return r[0] - target;
    });
    const auto es = summarize(err, kept, kept_count, reps);
    out.err_mean[t] = es.mean;
    out.err_var[t] = es.var;
  }
  const auto plug_stats = summarize(slot(3), kept, kept_count, reps);
  out.mean_plug_in = plug_stats.mean;
  out.mean_plug_in_se = plug_stats.mean_se;
  const auto adj_stats = summarize(slot(4), kept, kept_count, reps);
  out.mean_adjusted = adj_stats.mean;
  out.mean_adjusted_se = adj_stats.mean_se;
  for (int t = 0; t < kEstimands; ++t)
    for (int e = 0; e < 2; ++e)
      out.coverage[t][e] =
          coverage_rate(cover, reps, kEstimands * 2, t * 2 + e, kept, kept_count);
  return out;
}

RegressionMcReport mc_regression(const Population& pop, const MonteCarloOptions& opts) {
  if (!pop.causes)
    throw DataError("simulate: independent assignment needs a cause distribution");
  const auto& causes = *pop.causes;
  const auto& attrs = pop.attributes;
  const long long n = pop.n;
  const int k = causes.k(), q = attrs.q();
  const long long reps = opts.reps;
  if (reps < 1) throw DataError("simulate: need at least one replication");
  const double zcrit = normal_quantile(0.5 + opts.ci_level / 2.0);

  const Mat lambda = transform_causes(causes.means(), attrs).lambda;
  const MomentMatrices omega = expected_moments(pop.outcomes, causes, attrs, lambda);
  const Vec target_causal = general_estimands(omega).theta;

  // exact per-unit expected contributions, reused for every draw's sample
  const int d = 1 + k + q;
  std::vector<Mat> unit_moment(static_cast<std::size_t>(n));
  {
    Vec row(d);
    for (long long i = 0; i < n; ++i) {
      Mat acc = Mat::Zero(d, d);
      const Vec zi = attrs.z.row(i).transpose();
      const Vec shift = lambda * zi;
      for (int j = 0; j < causes.m(); ++j) {
        const double w = causes.probs(i, j);
        if (w == 0.0) continue;
        const Vec u = causes.support.row(j).transpose();
        row(0) = outcome_at(pop.outcomes, i, u);
        row.segment(1, k) = u - shift;
        row.segment(1 + k, q) = zi;
        acc.noalias() += w * (row * row.transpose());
      }
      unit_moment[static_cast<std::size_t>(i)] = acc;
    }
  }

  // record layout per replication:
  // [theta(k) | tdescr(k) | tcs(k) | se2 per estimator (4k)]
  const int stride = 7 * k;
  const int cover_stride = kEstimands * kEstimators * k;
  std::vector<double> rec(static_cast<std::size_t>(reps) * stride, 0.0);
  std::vector<std::uint8_t> kept(static_cast<std::size_t>(reps), 0);
  std::vector<std::uint8_t> cover(static_cast<std::size_t>(reps) * cover_stride, 0);

  const long long chunk = 256;
  const long long num_chunks = (reps + chunk - 1) / chunk;
  run_chunks(num_chunks, resolve_threads(opts.threads), [&](long long c) {
    const long long lo = c * chunk, hi = std::min(reps, lo + chunk);
    for (long long repi = lo; repi < hi; ++repi) {
      CounterRng rng(opts.seed, static_cast<std::uint64_t>(repi));
      const DrawResult dr = draw(pop, rng);
      try {
        const Vec y = realize_outcomes(pop.outcomes, dr.causes);
        const Mat x_pop = apply_transform(dr.causes, lambda, attrs.z);
        const Vec tdescr =
            general_estimands(realized_moments(y, x_pop, attrs.z)).theta;

        long long m = 0;
        for (auto f : dr.sampled) m += f;
        if (m < k + q + 1) continue;
        Mat omega_s = Mat::Zero(d, d);
        for (long long i = 0; i < n; ++i)
          if (dr.sampled[static_cast<std::size_t>(i)])
            omega_s += unit_moment[static_cast<std::size_t>(i)];
        MomentMatrices mm;
        mm.m = omega_s / static_cast<double>(m);
        mm.k = k;
        mm.q = q;
        mm.kind = MomentKind::SampleExpected;
        const Vec tcs = general_estimands(mm).theta;

        SampleData sd;
        sd.y = Vec(m);
        sd.u = Mat(m, k);
        sd.z = Mat(m, q);
        sd.n_population = n;
        long long rI = 0;
        for (long long i = 0; i < n; ++i) {
          if (!dr.sampled[static_cast<std::size_t>(i)]) continue;
          sd.y(rI) = y(i);
          sd.u.row(rI) = dr.causes.row(i);
          sd.z.row(rI) = attrs.z.row(i);
          ++rI;
        }
        const FitResult fit = fit_ols(sd);
        const GeneralVarianceReport gv = general_variance(fit, n);

        double* r = &rec[static_cast<std::size_t>(repi) * stride];
        for (int j = 0; j < k; ++j) {
          r[j] = fit.theta_hat(j);
          r[k + j] = tdescr(j);
          r[2 * k + j] = tcs(j);
          r[3 * k + j] = gv.se_ehw(j) * gv.se_ehw(j);
          r[4 * k + j] = gv.se_causal(j) * gv.se_causal(j);
          r[5 * k + j] = gv.se_causal_sample(j) * gv.se_causal_sample(j);
          r[6 * k + j] = gv.se_descriptive(j) * gv.se_descriptive(j);
        }
        kept[static_cast<std::size_t>(repi)] = 1;
        std::uint8_t* cb = &cover[static_cast<std::size_t>(repi) * cover_stride];
        for (int j = 0; j < k; ++j) {
          const double targets[kEstimands] = {tdescr(j), tcs(j), target_causal(j)};
          const double ses[kEstimators] = {gv.se_ehw(j), gv.se_causal(j),
                                           gv.se_causal_sample(j),
                                           gv.se_descriptive(j)};
          for (int t = 0; t < kEstimands; ++t)
            for (int e = 0; e < kEstimators; ++e)
              cb[(t * kEstimators + e) * k + j] =
                  covers(fit.theta_hat(j), targets[t], ses[e], zcrit) ? 1 : 0;
        }
      } catch (const SingularError&) {
        // unlucky draw; stays skipped
      } catch (const DataError&) {
      }
    }
  });

  long long kept_count = 0;
  for (auto f : kept) kept_count += f;
  RegressionMcReport out;
  out.reps = reps;
  out.kept = kept_count;
  out.skipped = reps - kept_count;
  out.seed = opts.seed;
  out.ci_level = opts.ci_level;
  out.k = k;
  out.target_causal = target_causal;
  out.est_mean = Vec(k);
  out.est_var = Vec(k);
  out.est_var_se = Vec(k);
  out.target_descr_mean = Vec(k);
  out.target_descr_var = Vec(k);
  out.target_cs_mean = Vec(k);
  out.target_cs_var = Vec(k);
  for (int t = 0; t < kEstimands; ++t) {
    out.err_mean[t] = Vec(k);
    out.err_var[t] = Vec(k);
  }
  for (int e = 0; e < kEstimators; ++e) {
    out.mean_se2[e] = Vec(k);
    out.mean_se2_se[e] = Vec(k);
  }
  for (int t = 0; t < kEstimands; ++t)
    for (int e = 0; e < kEstimators; ++e) out.coverage[t][e] = Vec(k);

  const auto slot = [&](int off) {
    return std::function<double(long long)>([&rec, off, stride](long long i) {
      return rec[static_cast<std::size_t>(i) * stride + off];
    });
  };
  for (int j = 0; j < k; ++j) {
    const auto es = summarize(slot(j), kept, kept_count, reps);
    out.est_mean(j) = es.mean;
    out.est_var(j) = es.var;
    out.est_var_se(j) = es.var_se;
    const auto ds = summarize(slot(k + j), kept, kept_count, reps);
    out.target_descr_mean(j) = ds.mean;
    out.target_descr_var(j) = ds.var;
    const auto cs = summarize(slot(2 * k + j), kept, kept_count, reps);
    out.target_cs_mean(j) = cs.mean;
    out.target_cs_var(j) = cs.var;
    for (int t = 0; t < kEstimands; ++t) {
      const double tc = target_causal(j);
      const auto err = std::function<double(long long)>(
          [&rec, stride, t, j, tc, kk = k](long long i) {
            const double* r = &rec[static_cast<std::size_t>(i) * stride];
            const double target = t == 0 ? r[kk + j] : (t == 1 ? r[2 * kk + j] : tc);
            return r[j] - target;
          });
      const auto st = summarize(err, kept, kept_count, reps);
      out.err_mean[t](j) = st.mean;
      out.err_var[t](j) = st.var;
    }
    for (int e = 0; e < kEstimators; ++e) {
      const auto st = summarize(slot((3 + e) * k + j), kept, kept_count, reps);
      out.mean_se2[e](j) = st.mean;
      out.mean_se2_se[e](j) = st.mean_se;
    }
    for (int t = 0; t < kEstimands; ++t)
      for (int e = 0; e < kEstimators; ++e)
        out.coverage[t][e](j) = coverage_rate(cover, reps, cover_stride,
                                              (t * kEstimators + e) * k + j, kept,
                                              kept_count);
  }
  return out;
}

}  // namespace

MonteCarloReport monte_carlo(const Population& pop, const MonteCarloOptions& opts) {
  if (opts.ci_level <= 0.0 || opts.ci_level >= 1.0)
    throw DataError("simulate: confidence level must lie in (0, 1)");
  if (std::holds_alternative<CompleteRandomization>(pop.assignment))
    return mc_binary(pop, opts);
  return mc_regression(pop, opts);
}

double causal_weighting_gap(const LinearPotentialOutcomes& outcomes,
                            const CauseDistribution& causes,
                            const AttributeMatrix& attrs) {
  const Mat lambda = transform_causes(causes.means(), attrs).lambda;
  const PotentialOutcomes pot = outcomes;
  const MomentMatrices omega = expected_moments(pot, causes, attrs, lambda);
  const Vec theta_moment = general_estimands(omega).theta;
  const auto weights = expected_xx_per_unit(causes, attrs, lambda);
  const Vec theta_weighted = weighted_cause_average(weights, outcomes.theta);
  return (theta_moment - theta_weighted).cwiseAbs().maxCoeff();
}

}  // namespace fpreg
