#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "fracperc/addressing.hpp"

namespace fracperc {
namespace {

TEST(CellSquare, DigitExpansion) {
  const PercolationParams k2(2, 0.5);
  const auto sq = cell_square(k2, CellAddress{1, {0}, {1}});
  EXPECT_DOUBLE_EQ(sq.x0, 0.0);
  EXPECT_DOUBLE_EQ(sq.x1, 0.5);
  EXPECT_DOUBLE_EQ(sq.y0, 0.5);
  EXPECT_DOUBLE_EQ(sq.y1, 1.0);

  const PercolationParams k3(3, 0.5);
  const auto unit = cell_square(k3, CellAddress{});
  EXPECT_EQ(unit.x0, 0.0);
  EXPECT_EQ(unit.x1, 1.0);
  EXPECT_EQ(unit.y0, 0.0);
  EXPECT_EQ(unit.y1, 1.0);

  const auto deep = cell_square(k3, CellAddress{2, {1, 2}, {0, 0}});
  EXPECT_NEAR(deep.x0, 5.0 / 9.0, 1e-15);
  EXPECT_NEAR(deep.x1, 6.0 / 9.0, 1e-15);
  EXPECT_NEAR(deep.y0, 0.0, 1e-15);
  EXPECT_NEAR(deep.y1, 1.0 / 9.0, 1e-15);
}

TEST(CellSquare, RejectsBadDigits) {
  const PercolationParams k3(3, 0.5);
  EXPECT_THROW(cell_square(k3, CellAddress{1, {3}, {0}}), InvalidAddress);
  EXPECT_THROW(cell_square(k3, CellAddress{2, {1}, {0, 0}}), InvalidAddress);
  EXPECT_THROW(cell_square(k3, CellAddress{1, {-1}, {0}}), InvalidAddress);
}

TEST(CellSquare, ChildrenTileParent) {
  const PercolationParams prm(3, 0.5);
  const CellAddress parent{2, {2, 1}, {0, 2}};
  const auto ps = cell_square(prm, parent);
  double area = 0;
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      CellAddress child = parent;
      child.depth = 3;
      child.i_digits.push_back(a);
      child.j_digits.push_back(b);
      const auto cs = cell_square(prm, child);
      EXPECT_NEAR(cs.side(), 1.0 / 27.0, 1e-15);
      EXPECT_GE(cs.x0, ps.x0 - 1e-15);
      EXPECT_LE(cs.x1, ps.x1 + 1e-15);
      EXPECT_GE(cs.y0, ps.y0 - 1e-15);
      EXPECT_LE(cs.y1, ps.y1 + 1e-15);
      area += cs.area();
    }
  }
  EXPECT_NEAR(area, ps.area(), 1e-15);
}

TEST(AddressText, Format) {
  const PercolationParams prm(3, 0.5);
  const CellAddress a{3, {1, 2, 0}, {0, 0, 1}};
  EXPECT_EQ(format_address(a), "i:120/j:001");
  EXPECT_EQ(parse_address("i:120/j:001", 3), a);
  EXPECT_EQ(parse_address("i:/j:", 3), CellAddress{});
  EXPECT_THROW(parse_address("i:13/j:00", 3), InvalidAddress);
  EXPECT_THROW(parse_address("i:12/j:0", 3), InvalidAddress);
  EXPECT_THROW(parse_address("x:12/j:00", 3), InvalidAddress);
}

TEST(Rho, Examples) {
  EXPECT_DOUBLE_EQ(rho_metric(PercolationParams(2, 0.5), 0.1, 0.4), 0.25);
  EXPECT_DOUBLE_EQ(rho_metric(PercolationParams(2, 0.5), 0.4, 0.1), 0.25);
  EXPECT_EQ(rho_metric(PercolationParams(3, 0.5), 0.37, 0.37), 0.0);
  EXPECT_DOUBLE_EQ(rho_metric(PercolationParams(3, 0.5), 0.1, 0.9), 1.0 / 3.0);
  EXPECT_THROW(rho_metric(PercolationParams(3, 0.5), -0.1, 0.5), std::out_of_range);
}

TEST(Rho, UltrametricOnRandomTriples) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k : {2, 3, 5}) {
    const PercolationParams prm(k, 0.5);
    for (int trial = 0; trial < 2000; ++trial) {
      double v[3] = {u(rng), u(rng), u(rng)};
      std::sort(v, v + 3);
      const double xy = rho_metric(prm, v[0], v[1]);
      const double yz = rho_metric(prm, v[1], v[2]);
      const double xz = rho_metric(prm, v[0], v[2]);
      ASSERT_EQ(xz, std::max(xy, yz)) << k << " " << v[0] << " " << v[1] << " " << v[2];
      ASSERT_EQ(xy, rho_metric(prm, v[1], v[0]));
      // values are 0 or exact reciprocals of powers of k
      if (xz > 0) {
        const double level = std::log(1.0 / xz) / std::log(k);
        ASSERT_NEAR(level, std::round(level), 1e-9);
        ASSERT_GE(std::round(level), 1.0);
      }
    }
  }
}

TEST(Rho, MatchesLocateAgreementDepth) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k : {2, 3}) {
    const PercolationParams prm(k, 0.5);
    for (int trial = 0; trial < 10000; ++trial) {
      const double x = u(rng), y = u(rng);
      if (x == y) continue;
      int common = 0;
      while (common < 30) {
        const auto a = locate(prm, x, common + 1, KadicMode::left_closed);
        const auto b = locate(prm, y, common + 1, KadicMode::left_closed);
        if (a.digits != b.digits) break;
        ++common;
      }
      ASSERT_DOUBLE_EQ(rho_metric(prm, x, y), std::pow(static_cast<double>(k), -(common + 1)))
          << x << " " << y;
    }
  }
}

TEST(Locate, Examples) {
  const auto a = locate(PercolationParams(2, 0.5), 0.3, 2);
  EXPECT_EQ(a.digits, (std::vector<int>{0, 1}));
  EXPECT_DOUBLE_EQ(a.left, 0.25);
  EXPECT_DOUBLE_EQ(a.right, 0.5);

  const auto b = locate(PercolationParams(3, 0.5), 0.0, 1, KadicMode::left_closed);
  EXPECT_EQ(b.digits, (std::vector<int>{0}));
  EXPECT_DOUBLE_EQ(b.left, 0.0);
  EXPECT_NEAR(b.right, 1.0 / 3.0, 1e-16);

  EXPECT_THROW(locate(PercolationParams(2, 0.5), 0.5, 1), KadicPointError);
  EXPECT_THROW(locate(PercolationParams(2, 0.5), 0.25, 3), KadicPointError);
  EXPECT_NO_THROW(locate(PercolationParams(2, 0.5), 0.25, 1));
}

TEST(Locate, SnapsWithinOneUlpOfNonDyadicPoints) {
  const PercolationParams k3(3, 0.5);
  // 1/3 and 2/9 are not representable; strict mode still recognizes them
  EXPECT_THROW(locate(k3, 1.0 / 3.0, 1), KadicPointError);
  EXPECT_THROW(locate(k3, 2.0 / 9.0, 2), KadicPointError);
  EXPECT_THROW(locate(k3, std::nextafter(1.0 / 3.0, 1.0), 1), KadicPointError);
  const auto iv = locate(k3, 1.0 / 3.0, 1, KadicMode::left_closed);
  EXPECT_EQ(iv.digits, (std::vector<int>{1}));
  EXPECT_TRUE(is_kadic_point(1.0 / 3.0, 3, 1));
  EXPECT_FALSE(is_kadic_point(1.0 / 3.0 + 1e-12, 3, 5));
}

TEST(Locate, IntervalInvariants) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k : {2, 3, 7}) {
    const PercolationParams prm(k, 0.5);
    for (int trial = 0; trial < 1000; ++trial) {
      const double x = u(rng);
      const int n = static_cast<int>(rng() % 15);
      const auto iv = locate(prm, x, n, KadicMode::left_closed);
      ASSERT_EQ(iv.digits.size(), static_cast<std::size_t>(n));
      double left = 0, w = 1;
      for (int d : iv.digits) {
        ASSERT_GE(d, 0);
        ASSERT_LT(d, k);
        w /= k;
        left += d * w;
      }
      ASSERT_NEAR(iv.left, left, 1e-15);
      ASSERT_NEAR(iv.right - iv.left, std::pow(static_cast<double>(k), -n), 1e-15);
      ASSERT_LE(iv.left, x);
      ASSERT_LE(x, iv.right);
      ASSERT_GE(iv.left, 0.0);
      ASSERT_LE(iv.right, 1.0);
    }
  }
}

}  // namespace
}  // namespace fracperc
