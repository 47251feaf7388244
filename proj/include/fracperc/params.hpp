#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

namespace fracperc {

/// Raised when a precondition on the percolation parameters or a regime
/// assumption (kp > 1, k^2 p > 1) is violated.
class RegimeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The pair (k, p): every square is split into k x k subsquares and each
/// subsquare of a surviving square survives independently with probability p.
class PercolationParams {
 public:
  PercolationParams(int k, double p) : k_(k), p_(p) {
    if (k < 2) {
      throw std::invalid_argument("k must be an integer >= 2, got " + std::to_string(k));
    }
    if (!(p > 0.0 && p < 1.0)) {
      std::ostringstream os;
      os << "p must lie in (0, 1), got " << p;
      throw std::invalid_argument(os.str());
    }
  }

  int k() const noexcept { return k_; }
  double p() const noexcept { return p_; }

  /// k * p, the growth rate of the number of squares met by a fixed line.
  double pk() const noexcept { return p_ * k_; }
  /// k^2 * p, the mean offspring number of the branching process.
  double mean_offspring() const noexcept { return p_ * k_ * k_; }

  bool supercritical_branching() const noexcept { return mean_offspring() > 1.0; }
  bool projection_regime() const noexcept { return pk() > 1.0; }

  void require_projection_regime(const char* what) const {
    if (!projection_regime()) {
      std::ostringstream os;
      os << what << " requires kp > 1 (k=" << k_ << ", p=" << p_ << ")";
      throw RegimeError(os.str());
    }
  }

  friend bool operator==(const PercolationParams&, const PercolationParams&) = default;

 private:
  int k_;
  double p_;
};

}  // namespace fracperc
