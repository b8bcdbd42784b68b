#pragma once

// Trace processing for free-decay identification: Butterworth low-pass,
// peak picking, the logarithmic-decrement chain and linear sensor
// calibration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "prbm/errors.hpp"
#include "prbm/trace.hpp"

namespace prbm::signal {

// ---------------------------------------------------------------------------
// Butterworth low-pass
// ---------------------------------------------------------------------------

/// Direct-form II transposed second-order section, a0 normalized to 1.
/// First-order sections carry b2 = a2 = 0.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

/// Digital Butterworth low-pass as a cascade of sections (bilinear transform
/// with frequency prewarping, so the -3 dB point lands exactly on cutoff_hz).
inline std::vector<Biquad> design_butterworth(int order, double cutoff_hz, double sample_rate_hz) {
  if (order < 1) throw ParameterError("filter order must be >= 1");
  if (!(sample_rate_hz > 0.0)) throw ParameterError("sample rate must be > 0");
  if (!(cutoff_hz > 0.0 && cutoff_hz < 0.5 * sample_rate_hz))
    throw ParameterError("cutoff must lie in (0, Nyquist)");
  const double K = std::tan(kPi * cutoff_hz / sample_rate_hz);
  std::vector<Biquad> sections;
  for (int k = 0; k < order / 2; ++k) {
    // Analog prototype section s^2 + c s + 1 for the conjugate pole pair k.
    const double c = 2.0 * std::sin(kPi * (2.0 * k + 1.0) / (2.0 * order));
    const double norm = 1.0 / (1.0 + c * K + K * K);
    Biquad s;
    s.b0 = K * K * norm;
    s.b1 = 2.0 * s.b0;
    s.b2 = s.b0;
    s.a1 = 2.0 * (K * K - 1.0) * norm;
    s.a2 = (1.0 - c * K + K * K) * norm;
    sections.push_back(s);
  }
  if (order % 2 == 1) {
    Biquad s;
    s.b0 = K / (1.0 + K);
    s.b1 = s.b0;
    s.a1 = (K - 1.0) / (K + 1.0);
    sections.push_back(s);
  }
  return sections;
}

namespace detail {

/// Runs the cascade in place. When `steady_from_first` is set every section
/// starts in the steady state of a constant input equal to x[0] (each section
/// has unit DC gain), which removes the start-up transient.
inline void run_cascade(std::span<const Biquad> sections, std::vector<double>& x,
                        bool steady_from_first) {
  if (x.empty()) return;
  for (const Biquad& s : sections) {
    double z1 = 0.0, z2 = 0.0;
    if (steady_from_first) {
      const double x0 = x.front();
      z1 = (1.0 - s.b0) * x0;
      z2 = (s.b2 - s.a2) * x0;
    }
    for (double& v : x) {
      const double in = v;
      const double out = s.b0 * in + z1;
      z1 = s.b1 * in - s.a1 * out + z2;
      z2 = s.b2 * in - s.a2 * out;
      v = out;
    }
  }
}

}  // namespace detail

/// Single causal pass, zero initial state.
inline Trace butterworth_forward(const Trace& trace, double cutoff_hz, int order) {
  trace.validate();
  const auto sections = design_butterworth(order, cutoff_hz, trace.sample_rate_hz);
  Trace out = trace;
  detail::run_cascade(sections, out.values, false);
  return out;
}

/// Zero-phase forward-backward filtering with odd-reflection padding at both
/// ends. The effective magnitude response is the square of the single pass.
inline Trace butterworth_lowpass(const Trace& trace, double cutoff_hz, int order = 2) {
  trace.validate();
  const auto sections = design_butterworth(order, cutoff_hz, trace.sample_rate_hz);
  const std::vector<double>& x = trace.values;
  const std::size_t n = x.size();
  const std::size_t pad = std::min<std::size_t>(3 * (2 * sections.size() + 1), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[n - 1 - i]);

  detail::run_cascade(sections, ext, true);
  std::reverse(ext.begin(), ext.end());
  detail::run_cascade(sections, ext, true);
  std::reverse(ext.begin(), ext.end());

  Trace out = trace;
  std::copy(ext.begin() + static_cast<std::ptrdiff_t>(pad),
            ext.begin() + static_cast<std::ptrdiff_t>(pad + n), out.values.begin());
  return out;
}

// ---------------------------------------------------------------------------
// Peaks
// ---------------------------------------------------------------------------

/// Maxima on the bending side of the settling value, in time order.
struct PeakSet {
  std::vector<std::size_t> indices;
  std::vector<double> positions;   // sub-sample location from a parabolic fit, in samples
  std::vector<double> amplitudes;  // peak value minus settle_value, > 0
  double settle_value = 0.0;

  std::size_t size() const noexcept { return indices.size(); }
};

inline std::size_t default_settle_window(std::size_t n, double fraction = 0.1) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(fraction * n)));
}

inline double settle_value(std::span<const double> x, std::size_t window) {
  window = std::clamp<std::size_t>(window, 1, x.size());
  const auto tail = x.last(window);
  return std::accumulate(tail.begin(), tail.end(), 0.0) / static_cast<double>(window);
}

namespace detail {

/// Topographic prominence: drop to the higher of the two lowest points
/// reached before meeting a strictly higher sample on either side.
inline double prominence(std::span<const double> x, std::size_t i) {
  const double h = x[i];
  double left_min = h;
  for (std::size_t k = i; k-- > 0;) {
    if (x[k] > h) break;
    left_min = std::min(left_min, x[k]);
  }
  double right_min = h;
  for (std::size_t k = i + 1; k < x.size(); ++k) {
    if (x[k] > h) break;
    right_min = std::min(right_min, x[k]);
  }
  return h - std::max(left_min, right_min);
}

/// Local maxima; flat tops report their middle sample.
inline std::vector<std::size_t> local_maxima(std::span<const double> x) {
  std::vector<std::size_t> out;
  std::size_t i = 1;
  while (i + 1 < x.size()) {
    if (x[i] > x[i - 1]) {
      std::size_t j = i;
      while (j + 1 < x.size() && x[j + 1] == x[i]) ++j;
      if (j + 1 < x.size() && x[j + 1] < x[i]) {
        out.push_back((i + j) / 2);
        i = j + 1;
        continue;
      }
      i = j + 1;
      continue;
    }
    ++i;
  }
  return out;
}

}  // namespace detail

/// Detects maxima above the settling value (mean of the last `settle_window`
/// samples, 10 % of the trace when 0) whose prominence is at least
/// `min_prominence`. Throws InsufficientPeaksError when fewer than two remain.
inline PeakSet detect_peaks(const Trace& trace, double min_prominence, std::size_t settle_window = 0) {
  trace.validate();
  if (trace.size() <= 3) throw ParameterError("peak detection needs more than 3 samples");
  const std::span<const double> x(trace.values);
  if (settle_window == 0) settle_window = default_settle_window(x.size());

  PeakSet set;
  set.settle_value = settle_value(x, settle_window);
  for (std::size_t i : detail::local_maxima(x)) {
    if (!(x[i] > set.settle_value)) continue;
    if (detail::prominence(x, i) < min_prominence) continue;
    double pos = static_cast<double>(i);
    double peak = x[i];
    const double curv = x[i - 1] - 2.0 * x[i] + x[i + 1];
    if (curv < 0.0) {
      const double off = 0.5 * (x[i - 1] - x[i + 1]) / curv;
      pos += off;
      peak = x[i] - 0.25 * (x[i - 1] - x[i + 1]) * off;
    }
    set.indices.push_back(i);
    set.positions.push_back(pos);
    set.amplitudes.push_back(peak - set.settle_value);
  }
  if (set.size() < 2) throw InsufficientPeaksError(set.size());
  return set;
}

/// Leading run of peaks whose amplitude stays at or above `floor`.
inline PeakSet leading_peaks_above(const PeakSet& peaks, double floor) {
  PeakSet out;
  out.settle_value = peaks.settle_value;
  for (std::size_t i = 0; i < peaks.size(); ++i) {
    if (peaks.amplitudes[i] < floor) break;
    out.indices.push_back(peaks.indices[i]);
    out.positions.push_back(peaks.positions[i]);
    out.amplitudes.push_back(peaks.amplitudes[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Logarithmic decrement
// ---------------------------------------------------------------------------

struct LdmEstimate {
  double delta = 0.0;
  double zeta = 0.0;
  double omega_d_rad_s = 0.0;
  double omega_n_rad_s = 0.0;
  double stiffness_k = 0.0;
  double damping_b = 0.0;
  std::size_t n_peaks_used = 0;
};

/// Damping ratio from the decrement, delta / sqrt(4 pi^2 + delta^2).
inline double damping_ratio_from_decrement(double delta) {
  return delta / std::sqrt(4.0 * kPi * kPi + delta * delta);
}

/// Decrement over the first and last peak of the set, with n = count - 1
/// oscillations between them and the period taken as the mean peak interval.
inline LdmEstimate log_decrement(const PeakSet& peaks, double sample_rate_hz) {
  if (peaks.size() < 2) throw InsufficientPeaksError(peaks.size());
  if (!(sample_rate_hz > 0.0)) throw ParameterError("sample rate must be > 0");
  const double x_first = peaks.amplitudes.front();
  const double x_last = peaks.amplitudes.back();
  if (!(x_first > 0.0 && x_last > 0.0))
    throw EstimationError("peak amplitudes must be positive");
  if (x_last > x_first)
    throw NegativeDecrementError("peak amplitudes grow (" + std::to_string(x_first) + " -> " +
                                 std::to_string(x_last) + "); trace is not decaying");

  const double n = static_cast<double>(peaks.size() - 1);
  const double period_s = (peaks.positions.back() - peaks.positions.front()) / n / sample_rate_hz;
  if (!(period_s > 0.0)) throw EstimationError("non-positive oscillation period");

  LdmEstimate est;
  est.n_peaks_used = peaks.size();
  est.delta = std::log(x_first / x_last) / n;
  est.zeta = damping_ratio_from_decrement(est.delta);
  if (!(est.zeta < 1.0)) throw OverdampedError("damping ratio >= 1; decrement undefined");
  est.omega_d_rad_s = 2.0 * kPi / period_s;
  est.omega_n_rad_s = est.omega_d_rad_s / std::sqrt(1.0 - est.zeta * est.zeta);
  return est;
}

/// k = A wn^2, b = 2 zeta wn A.
inline LdmEstimate coefficients_from_ldm(LdmEstimate est, double inertia_A) {
  if (!(inertia_A > 0.0)) throw ParameterError("inertia must be > 0");
  est.stiffness_k = inertia_A * est.omega_n_rad_s * est.omega_n_rad_s;
  est.damping_b = 2.0 * est.zeta * est.omega_n_rad_s * inertia_A;
  return est;
}

struct TrialAggregate {
  LdmEstimate mean;
  LdmEstimate stddev;  // sample standard deviation, zero for a single trial
  std::size_t trials = 0;
};

inline TrialAggregate aggregate_trials(std::span<const LdmEstimate> estimates) {
  if (estimates.empty()) throw ParameterError("no estimates to aggregate");
  const double n = static_cast<double>(estimates.size());
  auto stats = [&](auto field, double& mean, double& sd) {
    double sum = 0.0;
    for (const auto& e : estimates) sum += e.*field;
    mean = sum / n;
    double ss = 0.0;
    for (const auto& e : estimates) ss += (e.*field - mean) * (e.*field - mean);
    sd = estimates.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  };
  TrialAggregate agg;
  agg.trials = estimates.size();
  stats(&LdmEstimate::delta, agg.mean.delta, agg.stddev.delta);
  stats(&LdmEstimate::zeta, agg.mean.zeta, agg.stddev.zeta);
  stats(&LdmEstimate::omega_d_rad_s, agg.mean.omega_d_rad_s, agg.stddev.omega_d_rad_s);
  stats(&LdmEstimate::omega_n_rad_s, agg.mean.omega_n_rad_s, agg.stddev.omega_n_rad_s);
  stats(&LdmEstimate::stiffness_k, agg.mean.stiffness_k, agg.stddev.stiffness_k);
  stats(&LdmEstimate::damping_b, agg.mean.damping_b, agg.stddev.damping_b);
  std::size_t peaks = 0;
  for (const auto& e : estimates) peaks += e.n_peaks_used;
  agg.mean.n_peaks_used = static_cast<std::size_t>(std::lround(static_cast<double>(peaks) / n));
  return agg;
}

// ---------------------------------------------------------------------------
// End-to-end free-decay pipeline
// ---------------------------------------------------------------------------

struct LdmOptions {
  bool filter = true;
  double cutoff_hz = 10.0;
  int filter_order = 2;
  double settle_fraction = 0.1;
  /// Minimum prominence as a fraction of the largest candidate peak amplitude.
  double prominence_fraction = 0.02;
  /// Peaks below this fraction of the first usable peak end the usable run.
  double min_amplitude_fraction = 0.1;
  /// Peaks below this many settle-window standard deviations end the usable run.
  double noise_floor_factor = 4.0;
};

/// filter -> peaks -> decrement -> (k, b) for one free-decay angle trace.
inline LdmEstimate estimate_free_decay(const Trace& raw, double inertia_A,
                                       const LdmOptions& opt = {}) {
  raw.validate();
  const Trace x = opt.filter ? butterworth_lowpass(raw, opt.cutoff_hz, opt.filter_order) : raw;
  const std::size_t window = default_settle_window(x.size(), opt.settle_fraction);

  // Bootstrap pass without a prominence threshold to size the real one.
  const PeakSet candidates = detect_peaks(x, 0.0, window);
  const double largest =
      *std::max_element(candidates.amplitudes.begin(), candidates.amplitudes.end());
  const PeakSet peaks = detect_peaks(x, opt.prominence_fraction * largest, window);

  const std::span<const double> tail = std::span<const double>(x.values).last(
      std::min(window, x.size()));
  double var = 0.0;
  for (double v : tail) var += (v - peaks.settle_value) * (v - peaks.settle_value);
  const double noise_sd = std::sqrt(var / static_cast<double>(tail.size()));

  std::size_t first = 0;
  const double first_amp = *std::max_element(peaks.amplitudes.begin(), peaks.amplitudes.end());
  while (peaks.amplitudes[first] < first_amp) ++first;  // start at the largest peak
  PeakSet from_first;
  from_first.settle_value = peaks.settle_value;
  from_first.indices.assign(peaks.indices.begin() + static_cast<std::ptrdiff_t>(first), peaks.indices.end());
  from_first.positions.assign(peaks.positions.begin() + static_cast<std::ptrdiff_t>(first), peaks.positions.end());
  from_first.amplitudes.assign(peaks.amplitudes.begin() + static_cast<std::ptrdiff_t>(first), peaks.amplitudes.end());

  const double floor =
      std::max(opt.min_amplitude_fraction * first_amp, opt.noise_floor_factor * noise_sd);
  const PeakSet usable = leading_peaks_above(from_first, floor);
  if (usable.size() < 2) throw InsufficientPeaksError(usable.size());
  return coefficients_from_ldm(log_decrement(usable, x.sample_rate_hz), inertia_A);
}

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

/// Ordinary least squares reference = slope * raw + intercept.
///
/// r^2 is 1 - SS_res / SS_tot; when the reference has zero variance it is 1
/// if the residuals vanish and 0 otherwise.
inline LinearFit calibrate_linear(const Trace& raw, const Trace& reference) {
  if (raw.size() != reference.size())
    throw ParameterError("raw and reference traces differ in length");
  raw.validate();
  reference.validate();
  const auto& x = raw.values;
  const auto& y = reference.values;
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DegenerateFitError("raw trace is constant; slope undefined");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ss_res = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double r = y[i] - (fit.slope * x[i] + fit.intercept);
    ss_res += r * r;
  }
  if (syy > 0.0) {
    fit.r_squared = 1.0 - ss_res / syy;
  } else {
    fit.r_squared = ss_res == 0.0 ? 1.0 : 0.0;
  }
  return fit;
}

}  // namespace prbm::signal
