#include <cmath>

#include "doctest.h"
#include "mixlab/chain.hpp"
#include "mixlab/rng.hpp"
#include "mixlab/spectral.hpp"

using namespace mixlab;

namespace {

Chain lazy_cycle(int n) {
  std::vector<std::string> labels;
  std::vector<Transition> ts;
  for (int i = 0; i < n; ++i) {
    labels.push_back(std::to_string(i));
    ts.push_back({i, i, Rat(1, 2)});
    ts.push_back({i, (i + 1) % n, Rat(1, 4)});
    ts.push_back({i, (i + n - 1) % n, Rat(1, 4)});
  }
  return build_chain(labels, ts);
}

Chain lazy_complete(int n) {
  std::vector<std::string> labels;
  std::vector<Transition> ts;
  for (int i = 0; i < n; ++i) {
    labels.push_back(std::to_string(i));
    ts.push_back({i, i, Rat(1, 2)});
    for (int j = 0; j < n; ++j)
      if (j != i) ts.push_back({i, j, Rat(1, 2l * (n - 1))});
  }
  return build_chain(labels, ts);
}

// Random reversible lazy chain from random rational edge conductances.
Chain random_reversible(int n, uint64_t seed) {
  CounterRng rng(seed, 0);
  std::vector<std::vector<long>> w(n, std::vector<long>(n, 0));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      long v = (j == i + 1) ? 1 + static_cast<long>(rng.uniform_below(9))
                            : (rng.uniform_below(3) == 0
                                   ? 1 + static_cast<long>(rng.uniform_below(9))
                                   : 0);
      w[i][j] = w[j][i] = v;
    }
  std::vector<long> deg(n, 0);
  long total = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      deg[i] += w[i][j];
      total += w[i][j];
    }
  std::vector<std::string> labels;
  std::vector<Transition> ts;
  RatVec pi;
  for (int i = 0; i < n; ++i) {
    labels.push_back(std::to_string(i));
    ts.push_back({i, i, Rat(1, 2)});
    for (int j = 0; j < n; ++j)
      if (w[i][j]) ts.push_back({i, j, rat(w[i][j], 2 * deg[i])});
    pi.push_back(rat(deg[i], total));
  }
  return build_chain(labels, ts, pi);
}

}  // namespace

TEST_CASE("spectrum of the 2-state uniform kernel") {
  auto c = build_chain({"0", "1"}, {{0, 0, Rat(1, 2)},
                                    {0, 1, Rat(1, 2)},
                                    {1, 0, Rat(1, 2)},
                                    {1, 1, Rat(1, 2)}});
  auto s = eigen_spectrum(c);
  CHECK(s.eigenvalues[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.eigenvalues[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.gap == doctest::Approx(1.0));
  CHECK(s.lambda_max == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("lazy 4-cycle spectrum matches the cosine formula") {
  auto c = lazy_cycle(4);
  auto s = eigen_spectrum(c);
  // oracle: (1 + cos(2 pi k / 4)) / 2 for k = 0..3 -> {1, 1/2, 1/2, 0}
  std::vector<double> expect;
  for (int k = 0; k < 4; ++k)
    expect.push_back((1.0 + std::cos(2.0 * M_PI * k / 4)) / 2.0);
  std::sort(expect.rbegin(), expect.rend());
  for (int i = 0; i < 4; ++i)
    CHECK(s.eigenvalues[i] == doctest::Approx(expect[i]).epsilon(1e-10));
}

TEST_CASE("symmetrization preserves the spectrum (eigenpair residuals of P)") {
  for (uint64_t seed : {7ull, 8ull, 9ull}) {
    auto c = random_reversible(12, seed);
    auto s = eigen_spectrum(c, true);
    auto p = c.dense_double();
    int n = c.size();
    // left eigenvector of P from the symmetric eigenvector: w = v D^{1/2}
    for (int k = 0; k < n; ++k) {
      std::vector<double> w(n), wp(n, 0.0);
      for (int i = 0; i < n; ++i)
        w[i] = s.vectors[k][i] * std::sqrt(to_double(c.pi[i]));
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) wp[j] += w[i] * p[i][j];
      double resid = 0, norm = 0;
      for (int i = 0; i < n; ++i) {
        resid += std::pow(wp[i] - s.eigenvalues[k] * w[i], 2);
        norm += w[i] * w[i];
      }
      CHECK(std::sqrt(resid / norm) < 1e-7);
    }
  }
}

TEST_CASE("Rayleigh-Ritz: quotients below lambda1 for vectors orthogonal to v0") {
  auto c = random_reversible(10, 21);
  auto s = eigen_spectrum(c);
  int n = c.size();
  auto p = c.dense_double();
  CounterRng rng(99, 0);
  for (int trial = 0; trial < 100; ++trial) {
    // random x in L^2(pi^{-1}) with <x, pi> = sum x = 0
    std::vector<double> x(n);
    double mean = 0;
    for (int i = 0; i < n; ++i) {
      x[i] = rng.next_unit() - 0.5;
      mean += x[i];
    }
    for (int i = 0; i < n; ++i) x[i] -= mean / n;
    // <x, xP> / <x, x> with <a,b> = sum a b / pi
    std::vector<double> xp(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) xp[j] += x[i] * p[i][j];
    double num = 0, den = 0;
    for (int i = 0; i < n; ++i) {
      num += x[i] * xp[i] / to_double(c.pi[i]);
      den += x[i] * x[i] / to_double(c.pi[i]);
    }
    CHECK(num / den <= s.eigenvalues[1] + 1e-9);
  }
}

TEST_CASE("gap_mixing_bounds formula values") {
  auto c = build_chain({"0", "1"}, {{0, 0, Rat(1, 2)},
                                    {0, 1, Rat(1, 2)},
                                    {1, 0, Rat(1, 2)},
                                    {1, 1, Rat(1, 2)}});
  auto s = eigen_spectrum(c);
  auto b = gap_mixing_bounds(s, Rat(1, 2), 0.25);
  CHECK(b.lower == doctest::Approx(0.0));
  Spectrum half;
  half.eigenvalues = {1.0, 0.5};
  half.gap = 0.5;
  half.lambda_max = 0.5;
  auto b2 = gap_mixing_bounds(half, Rat(1, 6), 0.25);
  CHECK(b2.upper == doctest::Approx(2 * (std::log(6.0) + std::log(4.0))));
  Spectrum degen;
  degen.eigenvalues = {1.0, 1.0};
  degen.lambda_max = 1.0;
  CHECK_THROWS_AS(gap_mixing_bounds(degen, Rat(1, 2), 0.25), Error);
}

TEST_CASE("variational quotient upper-bounds the gap") {
  auto c = lazy_complete(4);
  auto s = eigen_spectrum(c, true);
  CHECK(s.gap == doctest::Approx(2.0 / 3).epsilon(1e-10));

  // the eigenvector pulled back through D^{1/2} attains the infimum
  std::vector<double> psi(4);
  for (int i = 0; i < 4; ++i)
    psi[i] = s.vectors[1][i] / std::sqrt(to_double(c.pi[i]));
  CHECK(variational_quotient(c, psi) == doctest::Approx(s.gap).epsilon(1e-8));

  // indicator vector on the K_{2,4} walk: a value >= gap
  std::vector<std::string> labels;
  std::vector<Transition> ts;
  for (int i = 1; i <= 6; ++i) labels.push_back(std::to_string(i));
  for (int hub = 0; hub < 2; ++hub) {
    ts.push_back({hub, hub, Rat(1, 2)});
    for (int leaf = 2; leaf < 6; ++leaf) ts.push_back({hub, leaf, Rat(1, 8)});
  }
  for (int leaf = 2; leaf < 6; ++leaf) {
    ts.push_back({leaf, leaf, Rat(1, 2)});
    ts.push_back({leaf, 0, Rat(1, 4)});
    ts.push_back({leaf, 1, Rat(1, 4)});
  }
  auto k24 = build_chain(labels, ts);
  auto sk = eigen_spectrum(k24);
  std::vector<double> ind(6, 0.0);
  ind[0] = 1.0;
  CHECK(variational_quotient(k24, ind) >= sk.gap - 1e-9);

  // random vectors on lazy K4 stay above the gap 2/3
  CounterRng rng(5, 0);
  double best = 10;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> v(4);
    for (auto& x : v) x = rng.next_unit();
    best = std::min(best, variational_quotient(c, v));
    CHECK(variational_quotient(c, v) >= s.gap - 1e-9);
  }
  CHECK(best >= 2.0 / 3 - 1e-9);

  std::vector<double> constant(4, 3.0);
  CHECK_THROWS_AS(variational_quotient(c, constant), Error);
}

TEST_CASE("spectrum csv dump") {
  auto c = lazy_complete(3);
  auto s = eigen_spectrum(c);
  auto csv = spectrum_csv(s);
  CHECK(csv.find("index,eigenvalue") == 0);
  CHECK(csv.find("gap,") != std::string::npos);
  CHECK(csv.find("lambda_max,") != std::string::npos);
}
