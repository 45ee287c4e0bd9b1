#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <vector>

#include "mixlab/chain.hpp"
#include "mixlab/errors.hpp"

namespace mixlab {

// Eigenvalue analysis of reversible chains. P is conjugated to the symmetric
// S = D^{1/2} P D^{-1/2} (D = diag(pi)) and diagonalized with cyclic Jacobi
// rotations; no external solver involved, results deterministic.

struct Spectrum {
  std::vector<double> eigenvalues;  // sorted descending
  double gap = 0.0;                 // 1 - lambda_1
  double lambda_max = 0.0;          // max(lambda_1, |lambda_{N-1}|)
  // Rows of `vectors` are eigenvectors of the symmetrized matrix, aligned
  // with `eigenvalues` (filled only when requested).
  std::vector<std::vector<double>> vectors;
};

namespace detail {

// Cyclic Jacobi on a symmetric matrix. Converges when the off-diagonal
// Frobenius norm drops below `tol`. Rotations are accumulated into `vecs`
// when non-null.
inline std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a,
                                              std::vector<std::vector<double>>* vecs,
                                              double tol = 1e-12) {
  int n = static_cast<int>(a.size());
  if (vecs) {
    vecs->assign(n, std::vector<double>(n, 0.0));
    for (int i = 0; i < n; ++i) (*vecs)[i][i] = 1.0;
  }
  auto off_norm = [&]() {
    double s = 0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += 2 * a[i][j] * a[i][j];
    return std::sqrt(s);
  };
  const int max_sweeps = 100;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    if (off_norm() < tol) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        double apq = a[p][q];
        if (apq == 0.0) continue;
        double theta = (a[q][q] - a[p][p]) / (2 * apq);
        double t = (theta >= 0 ? 1.0 : -1.0) /
                   (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        double cs = 1.0 / std::sqrt(t * t + 1.0);
        double sn = t * cs;
        for (int k = 0; k < n; ++k) {
          double akp = a[k][p], akq = a[k][q];
          a[k][p] = cs * akp - sn * akq;
          a[k][q] = sn * akp + cs * akq;
        }
        for (int k = 0; k < n; ++k) {
          double apk = a[p][k], aqk = a[q][k];
          a[p][k] = cs * apk - sn * aqk;
          a[q][k] = sn * apk + cs * aqk;
        }
        if (vecs) {
          for (int k = 0; k < n; ++k) {
            double vpk = (*vecs)[p][k], vqk = (*vecs)[q][k];
            (*vecs)[p][k] = cs * vpk - sn * vqk;
            (*vecs)[q][k] = sn * vpk + cs * vqk;
          }
        }
      }
    }
  }
  if (off_norm() >= tol * 10)
    fail(ErrorKind::LPNumericFailure, "Jacobi sweeps failed to converge");
  std::vector<double> ev(n);
  for (int i = 0; i < n; ++i) ev[i] = a[i][i];
  return ev;
}

}  // namespace detail

inline Spectrum eigen_spectrum(const Chain& c, bool want_vectors = false) {
  int n = c.size();
  if (n > 5000) fail(ErrorKind::TooLarge, "eigen_spectrum capped at N = 5000");
  for (int x = 0; x < n; ++x)
    if (c.pi[x] <= 0)
      fail(ErrorKind::NotReversible,
           "state " + c.states[x] + " carries no stationary mass");
  check_reversibility(c);

  std::vector<double> sq(n), isq(n);
  for (int i = 0; i < n; ++i) {
    sq[i] = std::sqrt(to_double(c.pi[i]));
    isq[i] = 1.0 / sq[i];
  }
  std::vector<std::vector<double>> s(n, std::vector<double>(n, 0.0));
  for (int x = 0; x < n; ++x)
    for (const auto& [y, p] : c.kernel[x]) s[x][y] = sq[x] * to_double(p) * isq[y];
  // exact detailed balance makes S symmetric; average away float noise
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      double m = (s[i][j] + s[j][i]) / 2;
      s[i][j] = s[j][i] = m;
    }

  Spectrum spec;
  std::vector<std::vector<double>> vecs;
  spec.eigenvalues = detail::jacobi_eigenvalues(s, want_vectors ? &vecs : nullptr);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return spec.eigenvalues[a] > spec.eigenvalues[b];
  });
  std::vector<double> sorted(n);
  for (int i = 0; i < n; ++i) sorted[i] = spec.eigenvalues[order[i]];
  spec.eigenvalues = sorted;
  if (want_vectors) {
    spec.vectors.resize(n);
    for (int i = 0; i < n; ++i) spec.vectors[i] = vecs[order[i]];
  }

  if (std::fabs(spec.eigenvalues[0] - 1.0) > 1e-9)
    fail(ErrorKind::DegenerateSpectrum, "lambda_0 != 1");
  for (double ev : spec.eigenvalues)
    if (std::fabs(ev) > 1.0 + 1e-9)
      fail(ErrorKind::DegenerateSpectrum, "eigenvalue outside [-1,1]");
  if (c.lazy_flag && spec.eigenvalues[n - 1] < -1e-9)
    fail(ErrorKind::DegenerateSpectrum, "negative eigenvalue on a lazy chain");

  spec.gap = n > 1 ? 1.0 - spec.eigenvalues[1] : 1.0;
  spec.lambda_max =
      n > 1 ? std::max(spec.eigenvalues[1], std::fabs(spec.eigenvalues[n - 1]))
            : 0.0;
  return spec;
}

struct GapBounds {
  double upper = 0.0;
  double lower = 0.0;
};

// Mixing-time sandwich from the spectral gap:
//   tau_x(eps) <= (1-lmax)^{-1} (ln 1/pi(x) + ln 1/eps)
//   max_x tau_x(eps) >= (1/2) lmax (1-lmax)^{-1} ln 1/(2 eps)
inline GapBounds gap_mixing_bounds(const Spectrum& s, const Rat& pi_x, double eps) {
  if (!(eps > 0 && eps < 1)) fail(ErrorKind::InvalidArgument, "eps outside (0,1)");
  if (s.lambda_max >= 1.0 - 1e-12)
    fail(ErrorKind::DegenerateSpectrum, "lambda_max at 1");
  GapBounds b;
  double relax = 1.0 / (1.0 - s.lambda_max);
  b.upper = relax * (std::log(1.0 / to_double(pi_x)) + std::log(1.0 / eps));
  b.lower = 0.5 * s.lambda_max * relax * std::log(1.0 / (2 * eps));
  return b;
}

// Dirichlet-form quotient of Eq. variational; lower-bounds nothing, it
// upper-bounds the spectral gap from above for every non-constant psi.
inline double variational_quotient(const Chain& c, const std::vector<double>& psi) {
  if (static_cast<int>(psi.size()) != c.size())
    fail(ErrorKind::LengthMismatch, "psi length");
  double num = 0, den = 0;
  for (int x = 0; x < c.size(); ++x) {
    for (const auto& [y, p] : c.kernel[x]) {
      double d = psi[x] - psi[y];
      num += d * d * to_double(c.pi[x] * p);
    }
    for (int y = 0; y < c.size(); ++y) {
      double d = psi[x] - psi[y];
      den += d * d * to_double(c.pi[x] * c.pi[y]);
    }
  }
  if (den <= 1e-300) fail(ErrorKind::ConstantVector, "psi is constant");
  return num / den;
}

inline std::string spectrum_csv(const Spectrum& s) {
  std::ostringstream out;
  out << "index,eigenvalue\n";
  out.precision(17);
  for (size_t i = 0; i < s.eigenvalues.size(); ++i)
    out << i << "," << s.eigenvalues[i] << "\n";
  out << "gap," << s.gap << "\n";
  out << "lambda_max," << s.lambda_max << "\n";
  return out.str();
}

}  // namespace mixlab
