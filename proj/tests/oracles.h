// Independent reference implementations used only by the tests. They favour
// obviousness over speed and share no code with the library.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

struct Moments {
  double debut, max, mean, std, length, sum, skewness, kurtosis;
};

// Straight from the definitions in long double, one loop per quantity.
inline Moments brute_force_moments(const std::vector<int>& s) {
  Moments m{};
  const long double n = static_cast<long double>(s.size());
  m.debut = s.front();
  int mx = s.front();
  long long total = 0;
  for (int v : s) {
    if (v > mx) mx = v;
    total += v;
  }
  m.max = mx;
  m.sum = static_cast<double>(total);
  m.length = static_cast<double>(s.size());
  long double mean = 0;
  for (int v : s) mean += v;
  mean /= n;
  long double m2 = 0, m3 = 0, m4 = 0;
  for (int v : s) {
    const long double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  m.mean = static_cast<double>(mean);
  m.std = static_cast<double>(std::sqrt(m2));
  if (m2 == 0) {
    m.skewness = 0;
    m.kurtosis = 0;
  } else {
    m.skewness = static_cast<double>(m3 / std::pow(m2, 1.5L));
    m.kurtosis = static_cast<double>(m4 / (m2 * m2) - 3.0L);
  }
  return m;
}

inline std::vector<std::complex<double>> naive_dft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<long double> acc = 0;
    for (std::size_t t = 0; t < n; ++t) {
      const long double a = -2.0L * std::numbers::pi_v<long double> * k * t / n;
      acc += std::complex<long double>(x[t] * std::cos(a), x[t] * std::sin(a));
    }
    out[k] = {static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
  }
  return out;
}

// DCT-II, unnormalised, evaluated term by term.
inline std::vector<double> direct_dct(const std::vector<double>& x, int n_out) {
  const std::size_t n = x.size();
  std::vector<double> out(static_cast<std::size_t>(n_out));
  for (int k = 0; k < n_out; ++k) {
    long double acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += x[i] * std::cos(std::numbers::pi_v<long double> * k * (2.0L * i + 1.0L) / (2.0L * n));
    }
    out[static_cast<std::size_t>(k)] = static_cast<double>(acc);
  }
  return out;
}

// JSD as the mean of two KL divergences against the midpoint, natural logs
// converted to bits at the end.
inline double kl_jsd(const std::vector<double>& p, const std::vector<double>& q) {
  long double kl_p = 0, kl_q = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const long double m = 0.5L * (static_cast<long double>(p[i]) + q[i]);
    if (p[i] > 0) kl_p += p[i] * std::log(p[i] / m);
    if (q[i] > 0) kl_q += q[i] * std::log(q[i] / m);
  }
  return static_cast<double>(0.5L * (kl_p + kl_q) / std::log(2.0L));
}

inline std::vector<double> normalise_for_jsd(std::vector<double> v) {
  double mn = 0;
  for (double x : v) mn = std::min(mn, x);
  if (mn < 0) {
    for (double& x : v) x += -mn + 1e-9;
  }
  double s = 0;
  for (double x : v) s += x;
  if (s == 0) return std::vector<double>(v.size(), 1.0 / v.size());
  for (double& x : v) x /= s;
  return v;
}

// Mean SC for window w: every before/after window sum materialised from
// scratch at every position.
inline double brute_force_sc(const std::vector<std::vector<double>>& seq, std::size_t w, bool* valid) {
  const std::size_t n = seq.size();
  const std::size_t dim = seq.empty() ? 0 : seq[0].size();
  if (n < 2 * w) {
    *valid = false;
    return 0.0;
  }
  *valid = true;
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = w; i + w <= n; ++i) {
    std::vector<double> before(dim, 0.0), after(dim, 0.0);
    for (std::size_t t = i - w; t < i; ++t) {
      for (std::size_t d = 0; d < dim; ++d) before[d] += seq[t][d];
    }
    for (std::size_t t = i; t < i + w; ++t) {
      for (std::size_t d = 0; d < dim; ++d) after[d] += seq[t][d];
    }
    total += kl_jsd(normalise_for_jsd(before), normalise_for_jsd(after));
    ++count;
  }
  return total / count;
}

// Triangle filter with the given corner frequencies.
inline double triangle(double f, double lo, double mid, double hi) {
  if (f <= lo || f >= hi) return 0.0;
  return f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
}

inline double ba_from_counts(double tp, double fn, double tn, double fp) {
  return 0.5 * (tp / (tp + fn) + tn / (tn + fp));
}

inline std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> v(n);
  double s = 0;
  for (double& x : v) s += (x = e(rng));
  for (double& x : v) x /= s;
  return v;
}

}  // namespace oracle
