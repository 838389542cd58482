#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace isacxt {

using Cplx = std::complex<double>;
using VecC = Eigen::VectorXcd;
using MatC = Eigen::MatrixXcd;
using VecD = Eigen::VectorXd;
using MatD = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
// Propagation speed used throughout (radar convention, matches the
// range-resolution arithmetic in the configuration defaults).
inline constexpr double kSpeedOfLight = 3.0e8;

inline constexpr Cplx kJ{0.0, 1.0};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

/// Deterministic random stream. Wraps a 64-bit Mersenne twister but
/// generates uniforms and Gaussians from raw bits so that results are
/// bit-identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  /// Independent stream derived from (seed, stream, substream) by splitmix64.
  static Rng derive(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double gaussian();

  /// Circularly symmetric complex Gaussian, unit variance (E|z|^2 = 1).
  Cplx cgaussian();

  std::uint64_t raw() { return gen_(); }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Formats a double so that parsing it back recovers the exact value.
std::string format_double(double v);

/// Minimal CSV writer; all cells are preformatted strings.
class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void row(const std::vector<std::string>& cells);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  void* file_;  // FILE*
};

std::vector<std::vector<std::string>> read_csv(const std::string& path);

}  // namespace isacxt
