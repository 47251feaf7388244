#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fracperc/params.hpp"

namespace fracperc {

class InvalidAddress : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised in strict mode when a coordinate sits on a k-adic point, where
/// the axial densities are not defined.
class KadicPointError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// k^n as an unsigned integer; throws if it does not fit in 62 bits.
inline std::uint64_t checked_pow(int k, int n) {
  if (n < 0) throw std::invalid_argument("negative exponent");
  std::uint64_t r = 1;
  for (int i = 0; i < n; ++i) {
    if (r > (std::uint64_t{1} << 62) / static_cast<std::uint64_t>(k)) {
      throw std::overflow_error("k^n exceeds the supported lattice size (k=" +
                                std::to_string(k) + ", n=" + std::to_string(n) + ")");
    }
    r *= static_cast<std::uint64_t>(k);
  }
  return r;
}

/// Integer position of a level-n cell on the k^n x k^n lattice.
struct CellCoord {
  std::uint64_t ix = 0;
  std::uint64_t iy = 0;

  friend bool operator==(const CellCoord&, const CellCoord&) = default;
  friend auto operator<=>(const CellCoord&, const CellCoord&) = default;
};

/// Closed axis-aligned square [x0, x1] x [y0, y1].
struct Square {
  double x0 = 0.0;
  double x1 = 1.0;
  double y0 = 0.0;
  double y1 = 1.0;

  double side() const noexcept { return x1 - x0; }
  double area() const noexcept { return (x1 - x0) * (y1 - y0); }
};

inline Square lattice_square(CellCoord c, std::uint64_t lattice) {
  const double n = static_cast<double>(lattice);
  return {static_cast<double>(c.ix) / n, static_cast<double>(c.ix + 1) / n,
          static_cast<double>(c.iy) / n, static_cast<double>(c.iy + 1) / n};
}

namespace detail {

/// floor(x * scale) computed exactly from the binary representation of x,
/// together with the nearest integer when x is within one ulp of j/scale.
struct ScaledPosition {
  std::uint64_t floor = 0;
  bool exact = false;      // x * scale is an integer
  bool near_point = false; // |x - j/scale| <= ulp(x) for some integer j
  std::uint64_t nearest = 0;
};

inline ScaledPosition scale_exact(double x, std::uint64_t scale) {
  // callers guarantee 0 <= x <= 1
  ScaledPosition out;
  if (x == 0.0) {
    out.exact = out.near_point = true;
    return out;
  }
  int e = 0;
  const double f = std::frexp(x, &e);
  const auto mant = static_cast<std::uint64_t>(std::ldexp(f, 53));
  const int shift = 53 - e;  // x = mant * 2^-shift
  if (shift >= 120 || scale > (std::uint64_t{1} << 60)) {
    const long double t = static_cast<long double>(x) * static_cast<long double>(scale);
    const long double fl = std::floor(t);
    out.floor = static_cast<std::uint64_t>(fl);
    out.exact = (t == fl);
    const long double tol = static_cast<long double>(scale) * std::ldexp(1.0L, -shift);
    const long double r = std::nearbyint(t);
    out.near_point = std::fabs(t - r) <= tol;
    out.nearest = static_cast<std::uint64_t>(r);
    return out;
  }
  using u128 = unsigned __int128;
  const u128 t = static_cast<u128>(mant) * scale;
  const u128 unit = static_cast<u128>(1) << shift;
  out.floor = static_cast<std::uint64_t>(t >> shift);
  const u128 rem = t - (static_cast<u128>(out.floor) << shift);
  out.exact = (rem == 0);
  // one ulp of x is 2^-shift, i.e. `scale` units of t
  if (rem <= scale) {
    out.near_point = true;
    out.nearest = out.floor;
  } else if (unit - rem <= scale) {
    out.near_point = true;
    out.nearest = out.floor + 1;
  }
  return out;
}

inline char digit_char(int d) { return static_cast<char>(d < 10 ? '0' + d : 'a' + (d - 10)); }

inline int char_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'z') return c - 'a' + 10;
  return -1;
}

inline std::vector<int> index_digits(std::uint64_t index, int k, int depth) {
  std::vector<int> digits(static_cast<std::size_t>(depth));
  for (int l = depth - 1; l >= 0; --l) {
    digits[static_cast<std::size_t>(l)] = static_cast<int>(index % static_cast<std::uint64_t>(k));
    index /= static_cast<std::uint64_t>(k);
  }
  return digits;
}

inline std::uint64_t digits_index(const std::vector<int>& digits, int k) {
  std::uint64_t r = 0;
  for (int d : digits) r = r * static_cast<std::uint64_t>(k) + static_cast<std::uint64_t>(d);
  return r;
}

}  // namespace detail

/// Symbolic name (i_1..i_n, j_1..j_n) of a level-n square, digits stored
/// most significant first.
struct CellAddress {
  int depth = 0;
  std::vector<int> i_digits;
  std::vector<int> j_digits;

  void validate(int k) const {
    if (depth < 0) throw InvalidAddress("negative depth");
    if (i_digits.size() != static_cast<std::size_t>(depth) ||
        j_digits.size() != static_cast<std::size_t>(depth)) {
      throw InvalidAddress("digit strings must have length equal to depth " +
                           std::to_string(depth));
    }
    for (std::size_t l = 0; l < i_digits.size(); ++l) {
      if (i_digits[l] < 0 || i_digits[l] >= k || j_digits[l] < 0 || j_digits[l] >= k) {
        throw InvalidAddress("digit out of range [0," + std::to_string(k) + ") at position " +
                             std::to_string(l + 1));
      }
    }
  }

  CellCoord coord(int k) const {
    validate(k);
    checked_pow(k, depth);
    return {detail::digits_index(i_digits, k), detail::digits_index(j_digits, k)};
  }

  static CellAddress from_coord(CellCoord c, int k, int depth) {
    return {depth, detail::index_digits(c.ix, k, depth), detail::index_digits(c.iy, k, depth)};
  }

  friend bool operator==(const CellAddress&, const CellAddress&) = default;
};

/// Digit string such as "120"; base-36 characters for k > 10.
inline std::string format_digits(const std::vector<int>& digits) {
  std::string s;
  s.reserve(digits.size());
  for (int d : digits) s.push_back(detail::digit_char(d));
  return s;
}

inline std::vector<int> parse_digits(std::string_view text, int k) {
  std::vector<int> out;
  out.reserve(text.size());
  for (char c : text) {
    const int d = detail::char_digit(c);
    if (d < 0 || d >= k) {
      throw InvalidAddress("bad digit '" + std::string(1, c) + "' for k=" + std::to_string(k));
    }
    out.push_back(d);
  }
  return out;
}

/// "i:120/j:001"
inline std::string format_address(const CellAddress& a) {
  return "i:" + format_digits(a.i_digits) + "/j:" + format_digits(a.j_digits);
}

inline CellAddress parse_address(std::string_view text, int k) {
  const auto slash = text.find('/');
  if (text.substr(0, 2) != "i:" || slash == std::string_view::npos ||
      text.substr(slash, 3) != "/j:") {
    throw InvalidAddress("address must look like i:<digits>/j:<digits>, got '" +
                         std::string(text) + "'");
  }
  CellAddress a;
  a.i_digits = parse_digits(text.substr(2, slash - 2), k);
  a.j_digits = parse_digits(text.substr(slash + 3), k);
  a.depth = static_cast<int>(a.i_digits.size());
  a.validate(k);
  return a;
}

/// The square K_{i,j} = I_i x I_j named by an address.
inline Square cell_square(const PercolationParams& params, const CellAddress& addr) {
  const CellCoord c = addr.coord(params.k());
  return lattice_square(c, checked_pow(params.k(), addr.depth));
}

struct KadicInterval {
  int depth = 0;
  std::vector<int> digits;
  double left = 0.0;
  double right = 1.0;
};

enum class KadicMode { strict, left_closed };

inline bool is_kadic_point(double x, int k, int level) {
  if (!(x >= 0.0 && x <= 1.0)) return false;
  return detail::scale_exact(x, checked_pow(k, level)).near_point;
}

/// Level-n k-adic interval containing x. Strict mode refuses points within
/// one ulp of a k-adic point of level <= n; left-closed mode assigns such
/// points to the interval they open.
inline KadicInterval locate(const PercolationParams& params, double x, int depth,
                            KadicMode mode = KadicMode::strict) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::out_of_range("locate: x must lie in [0,1]");
  const int k = params.k();
  const std::uint64_t scale = checked_pow(k, depth);
  const auto pos = detail::scale_exact(x, scale);
  if (mode == KadicMode::strict && depth > 0 && pos.near_point) {
    throw KadicPointError("x is a k-adic point of level <= " + std::to_string(depth) +
                          "; the axial density is undefined there");
  }
  std::uint64_t index = pos.near_point ? pos.nearest : pos.floor;
  if (index >= scale) index = scale - 1;
  KadicInterval out;
  out.depth = depth;
  out.digits = detail::index_digits(index, k, depth);
  out.left = static_cast<double>(index) / static_cast<double>(scale);
  out.right = static_cast<double>(index + 1) / static_cast<double>(scale);
  return out;
}

/// k-symbolic distance: k^-l for the smallest level l at which a k-adic point
/// lies strictly between x and y, and 0 if there is none.
inline double rho_metric(const PercolationParams& params, double x, double y) {
  if (!(x >= 0.0 && x <= 1.0 && y >= 0.0 && y <= 1.0)) {
    throw std::out_of_range("rho_metric: arguments must lie in [0,1]");
  }
  if (x > y) std::swap(x, y);
  if (x == y) return 0.0;
  const int k = params.k();
  std::uint64_t scale = 1;
  for (int level = 1;; ++level) {
    if (scale > (std::uint64_t{1} << 58) / static_cast<std::uint64_t>(k)) return 0.0;
    scale *= static_cast<std::uint64_t>(k);
    const auto lo = detail::scale_exact(x, scale);
    const auto hi = detail::scale_exact(y, scale);
    const std::uint64_t m = lo.floor + 1;  // smallest j with j/scale > x
    if (hi.floor > m || (hi.floor == m && !hi.exact)) {
      return 1.0 / static_cast<double>(scale);
    }
  }
}

}  // namespace fracperc
