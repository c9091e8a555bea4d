#ifndef HARFUSE_SIGNAL_HPP
#define HARFUSE_SIGNAL_HPP

#include <string>
#include <vector>

#include "harfuse/tensor.hpp"

namespace harfuse {

/// Transfer function coefficients, a[0] == 1.
struct IirFilter {
  std::vector<double> b;
  std::vector<double> a;
};

/// Digital Butterworth low-pass via the bilinear transform with prewarping.
/// Unit gain at DC.
IirFilter butterworth_lowpass(int order, double cutoff_hz, double sample_rate_hz);

/// |H(e^{jw})| at frequency `hz`.
double magnitude_response(const IirFilter& f, double hz, double sample_rate_hz);

/// Direct form II transposed; `zi` (length max(|a|,|b|) - 1) is the initial state.
std::vector<double> lfilter(const IirFilter& f, const std::vector<double>& x, std::vector<double> zi = {});

/// Steady-state initial conditions for a unit step input.
std::vector<double> lfilter_zi(const IirFilter& f);

/// Zero-phase forward-backward filtering with odd extension at both ends
/// (pad length 3 * max(|a|,|b|), shortened for short signals).
std::vector<double> filtfilt(const IirFilter& f, const std::vector<double>& x);

constexpr int kFilterOrder = 3;
constexpr double kDefaultCutoffHz = 20.0;

/// Per-channel zero-phase order-3 Butterworth low-pass of a [T, C] signal.
Tensor lowpass_filter(const Tensor& signal, double sample_rate_hz, double cutoff_hz = kDefaultCutoffHz);

enum class NormMode { ZScore, UnitL2 };

std::string to_string(NormMode mode);
/// Accepts "zscore", "unit_l2" and "l2".
NormMode parse_norm_mode(const std::string& text);

/// Per channel: zscore gives mean 0 and (population) std 1; unit_l2 gives
/// mean 0 and Euclidean norm 1. A constant channel becomes zeros and a
/// warning is appended to `warnings` when given.
Tensor normalize(const Tensor& signal, NormMode mode, std::vector<std::string>* warnings = nullptr);

constexpr Index kStandardLength = 1024;

/// Truncates to the first `target` rows, or repeats the rows cyclically from
/// the start until there are `target` of them.
Tensor standardize_length(const Tensor& signal, Index target = kStandardLength);

}  // namespace harfuse

#endif  // HARFUSE_SIGNAL_HPP
