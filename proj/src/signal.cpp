#include "harfuse/signal.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace harfuse {

namespace {

using Complex = std::complex<double>;

/// Coefficients of prod (z - r_k), highest power first.
std::vector<Complex> poly(const std::vector<Complex>& roots) {
  std::vector<Complex> c{1.0};
  for (const auto& r : roots) {
    c.push_back(0.0);
    for (std::size_t i = c.size() - 1; i > 0; --i) c[i] -= r * c[i - 1];
  }
  return c;
}

std::vector<double> real_parts(const std::vector<Complex>& c) {
  std::vector<double> out;
  out.reserve(c.size());
  for (const auto& v : c) out.push_back(v.real());
  return out;
}

}  // namespace

IirFilter butterworth_lowpass(int order, double cutoff_hz, double sample_rate_hz) {
  if (order < 1) throw ParameterError("butterworth order must be >= 1");
  if (!(sample_rate_hz > 0.0)) throw ParameterError("sample rate must be positive");
  if (!(cutoff_hz > 0.0) || !(cutoff_hz < sample_rate_hz / 2.0)) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "cutoff %g Hz outside (0, %g) (Nyquist at %g Hz sampling)", cutoff_hz,
                  sample_rate_hz / 2.0, sample_rate_hz);
    throw ParameterError(buf);
  }
  const double fs2 = 2.0 * sample_rate_hz;
  const double warped = fs2 * std::tan(std::numbers::pi * cutoff_hz / sample_rate_hz);
  std::vector<Complex> poles, zeros;
  for (int k = 1; k <= order; ++k) {
    const Complex s = warped * std::polar(1.0, std::numbers::pi * (2.0 * k + order - 1) / (2.0 * order));
    poles.push_back((fs2 + s) / (fs2 - s));
    zeros.emplace_back(-1.0, 0.0);
  }
  IirFilter f{real_parts(poly(zeros)), real_parts(poly(poles))};
  double sum_a = 0.0, sum_b = 0.0;
  for (double v : f.a) sum_a += v;
  for (double v : f.b) sum_b += v;
  for (double& v : f.b) v *= sum_a / sum_b;
  return f;
}

double magnitude_response(const IirFilter& f, double hz, double sample_rate_hz) {
  const double w = 2.0 * std::numbers::pi * hz / sample_rate_hz;
  const auto eval = [&](const std::vector<double>& c) {
    Complex acc = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) acc += c[k] * std::polar(1.0, -w * static_cast<double>(k));
    return acc;
  };
  return std::abs(eval(f.b) / eval(f.a));
}

std::vector<double> lfilter(const IirFilter& f, const std::vector<double>& x, std::vector<double> zi) {
  const std::size_t n = std::max(f.a.size(), f.b.size());
  std::vector<double> a(f.a), b(f.b);
  a.resize(n, 0.0);
  b.resize(n, 0.0);
  if (a[0] != 1.0) throw ParameterError("lfilter expects a[0] == 1");
  if (zi.empty()) zi.assign(n - 1, 0.0);
  if (zi.size() != n - 1) throw ShapeError("lfilter: zi length mismatch");
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double out = b[0] * x[i] + (n > 1 ? zi[0] : 0.0);
    for (std::size_t k = 1; k < n; ++k) {
      zi[k - 1] = b[k] * x[i] - a[k] * out + (k < n - 1 ? zi[k] : 0.0);
    }
    y[i] = out;
  }
  return y;
}

std::vector<double> lfilter_zi(const IirFilter& f) {
  const std::size_t n = std::max(f.a.size(), f.b.size());
  std::vector<double> a(f.a), b(f.b);
  a.resize(n, 0.0);
  b.resize(n, 0.0);
  const auto m = static_cast<Eigen::Index>(n - 1);
  if (m == 0) return {};
  // (I - companion(a)^T) zi = b[1:] - a[1:] b[0]
  Eigen::MatrixXd lhs = Eigen::MatrixXd::Identity(m, m);
  Eigen::VectorXd rhs(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    lhs(i, 0) += a[static_cast<std::size_t>(i + 1)];
    if (i + 1 < m) lhs(i, i + 1) -= 1.0;
    rhs(i) = b[static_cast<std::size_t>(i + 1)] - a[static_cast<std::size_t>(i + 1)] * b[0];
  }
  const Eigen::VectorXd zi = lhs.partialPivLu().solve(rhs);
  return {zi.data(), zi.data() + m};
}

std::vector<double> filtfilt(const IirFilter& f, const std::vector<double>& x) {
  if (x.size() < 2) return x;
  const std::size_t pad = std::min<std::size_t>(3 * std::max(f.a.size(), f.b.size()), x.size() - 1);
  std::vector<double> ext;
  ext.reserve(x.size() + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x.front() - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x.back() - x[x.size() - 1 - i]);

  const auto zi = lfilter_zi(f);
  const auto scaled = [&](double s) {
    auto z = zi;
    for (double& v : z) v *= s;
    return z;
  };
  auto y = lfilter(f, ext, scaled(ext.front()));
  std::reverse(y.begin(), y.end());
  y = lfilter(f, y, scaled(y.front()));
  std::reverse(y.begin(), y.end());
  return {y.begin() + static_cast<std::ptrdiff_t>(pad), y.end() - static_cast<std::ptrdiff_t>(pad)};
}

namespace {

void require_signal(const Tensor& signal, const char* op) {
  if (signal.rank() != 2) throw ShapeError(std::string(op) + ": expected [T, C], got " + shape_string(signal.shape()));
}

}  // namespace

Tensor lowpass_filter(const Tensor& signal, double sample_rate_hz, double cutoff_hz) {
  require_signal(signal, "lowpass_filter");
  const IirFilter f = butterworth_lowpass(kFilterOrder, cutoff_hz, sample_rate_hz);
  const Index t = signal.dim(0), c = signal.dim(1);
  Tensor out(signal.shape());
  std::vector<double> column(static_cast<std::size_t>(t));
  for (Index ch = 0; ch < c; ++ch) {
    for (Index i = 0; i < t; ++i) column[static_cast<std::size_t>(i)] = signal(i, ch);
    const auto y = filtfilt(f, column);
    for (Index i = 0; i < t; ++i) out(i, ch) = y[static_cast<std::size_t>(i)];
  }
  return out;
}

std::string to_string(NormMode mode) { return mode == NormMode::ZScore ? "zscore" : "unit_l2"; }

NormMode parse_norm_mode(const std::string& text) {
  if (text == "zscore") return NormMode::ZScore;
  if (text == "unit_l2" || text == "l2") return NormMode::UnitL2;
  throw ConfigError("unknown normalization mode '" + text + "' (zscore | l2)");
}

Tensor normalize(const Tensor& signal, NormMode mode, std::vector<std::string>* warnings) {
  require_signal(signal, "normalize");
  const Index t = signal.dim(0), c = signal.dim(1);
  if (t < 2) throw ParameterError("normalize needs at least 2 samples, got " + std::to_string(t));
  Tensor out(signal.shape());
  auto in = signal.as_matrix(t);
  auto res = out.as_matrix(t);
  for (Index ch = 0; ch < c; ++ch) {
    const Eigen::VectorXd centered = in.col(ch).array() - in.col(ch).mean();
    const double norm = centered.norm();
    const double scale = in.col(ch).cwiseAbs().maxCoeff();
    if (norm == 0.0 || norm <= 1e-12 * scale * std::sqrt(static_cast<double>(t))) {
      res.col(ch).setZero();
      if (warnings) warnings->push_back("constant channel " + std::to_string(ch) + " left at zero");
      continue;
    }
    const double divisor = mode == NormMode::ZScore ? norm / std::sqrt(static_cast<double>(t)) : norm;
    res.col(ch) = centered / divisor;
  }
  return out;
}

Tensor standardize_length(const Tensor& signal, Index target) {
  require_signal(signal, "standardize_length");
  if (target < 1) throw ParameterError("standardize_length target must be positive");
  const Index t = signal.dim(0), c = signal.dim(1);
  if (t < 1) throw ShapeError("standardize_length: empty signal");
  Tensor out({target, c});
  for (Index i = 0; i < target; ++i) {
    for (Index ch = 0; ch < c; ++ch) out(i, ch) = signal(i % t, ch);
  }
  return out;
}

}  // namespace harfuse
