#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nvtherm {

enum class ErrorCode {
  invalid_argument,
  invalid_axis,
  invalid_matrix,
  regime,
  model,
  invalid_mode,
  degenerate_fit,
  not_converged,
  insufficient_peaks,
  degenerate_calibration,
  non_invertible,
  insufficient_data,
  zero_slope,
  invalid_segment,
  empty_band,
  parse,
  io,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::invalid_axis: return "invalid-axis";
    case ErrorCode::invalid_matrix: return "invalid-matrix";
    case ErrorCode::regime: return "regime";
    case ErrorCode::model: return "model";
    case ErrorCode::invalid_mode: return "invalid-mode";
    case ErrorCode::degenerate_fit: return "degenerate-fit";
    case ErrorCode::not_converged: return "not-converged";
    case ErrorCode::insufficient_peaks: return "insufficient-peaks";
    case ErrorCode::degenerate_calibration: return "degenerate-calibration";
    case ErrorCode::non_invertible: return "non-invertible";
    case ErrorCode::insufficient_data: return "insufficient-data";
    case ErrorCode::zero_slope: return "zero-slope";
    case ErrorCode::invalid_segment: return "invalid-segment";
    case ErrorCode::empty_band: return "empty-band";
    case ErrorCode::parse: return "parse";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

// Base exception for everything the library throws.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Field too strong for the m_s=0 level to remain the ground state.
class RegimeError : public Error {
 public:
  explicit RegimeError(double ratio)
      : Error(ErrorCode::regime,
              "gamma_e*|B|/D = " + std::to_string(ratio) + " is outside the weak-field regime (< 0.5)"),
        ratio_(ratio) {}

  double ratio() const noexcept { return ratio_; }

 private:
  double ratio_;
};

class DegenerateFitError : public Error {
 public:
  explicit DegenerateFitError(std::vector<std::string> params)
      : Error(ErrorCode::degenerate_fit, "singular normal matrix; collinear parameters: " + join(params)),
        params_(std::move(params)) {}

  const std::vector<std::string>& collinear_parameters() const noexcept { return params_; }

 private:
  static std::string join(const std::vector<std::string>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) out += ", ";
      out += v[i];
    }
    return out;
  }
  std::vector<std::string> params_;
};

class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

}  // namespace nvtherm
