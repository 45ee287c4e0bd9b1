#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mixlab/errors.hpp"
#include "mixlab/rational.hpp"

namespace mixlab {

// ---------------------------------------------------------------------------
// Chain: exact representation of a finite reversible Markov chain.
//
// Kernel rows are sparse lists of (column, probability) with exact rational
// entries; pi is the stationary distribution, also exact. Structural checks
// (row sums, detailed balance, pi P = pi) are always done in rationals.
// Chains are immutable after construction.
// ---------------------------------------------------------------------------

struct Transition {
  int src = 0;
  int dst = 0;
  Rat prob;
};

class Chain {
 public:
  std::vector<std::string> states;
  std::vector<std::vector<std::pair<int, Rat>>> kernel;  // rows sorted by column
  RatVec pi;
  bool lazy_flag = false;
  // Extra structure flags. `irreducible` is false only for chains with
  // transient states (Glauber over all colorings); `aperiodic` is false only
  // for the explicitly periodic variants some constructions expose.
  bool irreducible = true;
  bool aperiodic = true;

  int size() const { return static_cast<int>(states.size()); }

  Rat prob(int x, int y) const {
    const auto& row = kernel[x];
    auto it = std::lower_bound(row.begin(), row.end(), y,
                               [](const auto& e, int c) { return e.first < c; });
    if (it != row.end() && it->first == y) return it->second;
    return Rat(0);
  }

  // Q(x,y) = pi(x) P(x,y); the edge weight of the underlying graph G(M).
  Rat q(int x, int y) const { return pi[x] * prob(x, y); }

  std::vector<std::vector<double>> dense_double() const {
    int n = size();
    std::vector<std::vector<double>> p(n, std::vector<double>(n, 0.0));
    for (int x = 0; x < n; ++x)
      for (const auto& [y, v] : kernel[x]) p[x][y] = to_double(v);
    return p;
  }

  // Directed edges (x,y), x != y, with P(x,y) > 0.
  std::vector<std::pair<int, int>> move_edges() const {
    std::vector<std::pair<int, int>> out;
    for (int x = 0; x < size(); ++x)
      for (const auto& [y, v] : kernel[x])
        if (y != x && v > 0) out.emplace_back(x, y);
    return out;
  }
};

// Edge weights Q(x,y) for all positive transitions; existence of this map
// certifies detailed balance.
struct EdgeWeight {
  std::map<std::pair<int, int>, Rat> q;
};

struct Distribution {
  std::vector<double> w;
  int size() const { return static_cast<int>(w.size()); }
};

namespace detail {

inline void check_rows(const std::vector<std::string>& states,
                       const std::vector<std::vector<std::pair<int, Rat>>>& kernel) {
  for (size_t x = 0; x < kernel.size(); ++x) {
    Rat sum = 0;
    for (const auto& [y, p] : kernel[x]) {
      if (p <= 0 || p > 1)
        fail(ErrorKind::RowSum, "state " + states[x] + ": probability " +
                                    rat_str(p) + " outside (0,1]");
      sum += p;
    }
    if (sum != 1)
      fail(ErrorKind::RowSum,
           "state " + states[x] + ": row sums to " + rat_str(sum));
  }
}

// Strongly connected test over positive off-diagonal transitions: forward and
// backward reachability from state 0.
inline bool strongly_connected(const Chain& c,
                               const std::vector<int>& restrict_to,
                               std::string* bad_state) {
  int n = c.size();
  std::vector<char> member(n, 0);
  for (int v : restrict_to) member[v] = 1;
  std::vector<std::vector<int>> fwd(n), bwd(n);
  for (int x : restrict_to)
    for (const auto& [y, p] : c.kernel[x])
      if (y != x && member[y]) {
        fwd[x].push_back(y);
        bwd[y].push_back(x);
      }
  auto bfs = [&](const std::vector<std::vector<int>>& adj) {
    std::vector<char> seen(n, 0);
    std::queue<int> q;
    q.push(restrict_to[0]);
    seen[restrict_to[0]] = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          q.push(v);
        }
    }
    return seen;
  };
  auto f = bfs(fwd), b = bfs(bwd);
  for (int v : restrict_to)
    if (!f[v] || !b[v]) {
      if (bad_state) *bad_state = c.states[v];
      return false;
    }
  return true;
}

// Period of a strongly connected digraph: gcd over edges (u,v) of
// level(u) + 1 - level(v) with BFS levels. Any self-loop short-circuits.
inline int chain_period(const Chain& c, const std::vector<int>& restrict_to) {
  int n = c.size();
  std::vector<char> member(n, 0);
  for (int v : restrict_to) member[v] = 1;
  for (int x : restrict_to)
    if (c.prob(x, x) > 0) return 1;
  std::vector<long> level(n, -1);
  std::queue<int> q;
  int root = restrict_to[0];
  level[root] = 0;
  q.push(root);
  long g = 0;
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (const auto& [v, p] : c.kernel[u]) {
      if (u == v || !member[v]) continue;
      if (level[v] < 0) {
        level[v] = level[u] + 1;
        q.push(v);
      } else {
        g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
      }
    }
  }
  return g == 0 ? 0 : static_cast<int>(g);
}

// Solves pi P = pi, sum(pi) = 1 exactly: Gaussian elimination on
// (P^T - I) x = 0 with the last row replaced by the normalization.
inline RatVec solve_stationary(const Chain& c) {
  int n = c.size();
  std::vector<RatVec> a(n, RatVec(n + 1, Rat(0)));
  for (int x = 0; x < n; ++x) {
    for (const auto& [y, p] : c.kernel[x]) a[y][x] += p;
    a[x][x] -= 1;
  }
  for (int j = 0; j < n; ++j) a[n - 1][j] = 1;
  a[n - 1][n] = 1;

  std::vector<int> piv(n, -1);
  int row = 0;
  for (int col = 0; col < n && row < n; ++col) {
    int sel = -1;
    for (int r = row; r < n; ++r)
      if (a[r][col] != 0) {
        sel = r;
        break;
      }
    if (sel < 0) continue;
    std::swap(a[sel], a[row]);
    Rat inv = a[row][col];
    for (int j = col; j <= n; ++j) a[row][j] /= inv;
    for (int r = 0; r < n; ++r) {
      if (r == row || a[r][col] == 0) continue;
      Rat f = a[r][col];
      for (int j = col; j <= n; ++j) a[r][j] -= f * a[row][j];
    }
    piv[col] = row;
    ++row;
  }
  RatVec pi(n, Rat(0));
  for (int col = 0; col < n; ++col)
    if (piv[col] >= 0) pi[col] = a[piv[col]][n];
  Rat s = 0;
  for (const Rat& v : pi) s += v;
  if (s != 1)
    fail(ErrorKind::NotIrreducible, "stationary system is singular");
  return pi;
}

}  // namespace detail

// Assembles and fully validates a chain. If `pi_hint` is given it is verified
// (positivity, sum 1, pi P = pi) instead of solved for.
inline Chain build_chain(const std::vector<std::string>& states,
                         const std::vector<Transition>& transitions,
                         const std::optional<RatVec>& pi_hint = std::nullopt) {
  Chain c;
  c.states = states;
  int n = c.size();
  if (n == 0) fail(ErrorKind::EmptyStateSpace, "no states");
  c.kernel.assign(n, {});
  std::vector<std::map<int, Rat>> rows(n);
  for (const auto& t : transitions) {
    if (t.src < 0 || t.src >= n || t.dst < 0 || t.dst >= n)
      fail(ErrorKind::InvalidArgument, "transition index out of range");
    rows[t.src][t.dst] += t.prob;
  }
  for (int x = 0; x < n; ++x)
    for (auto& [y, p] : rows[x])
      if (p != 0) c.kernel[x].emplace_back(y, p);
  detail::check_rows(c.states, c.kernel);

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  std::string bad;
  if (!detail::strongly_connected(c, all, &bad))
    fail(ErrorKind::NotIrreducible, "state " + bad + " not in a single closed class");
  int period = detail::chain_period(c, all);
  if (period != 1)
    fail(ErrorKind::NotAperiodic, "period " + std::to_string(period) +
                                      " (state " + states[0] + ")");

  if (pi_hint) {
    c.pi = *pi_hint;
    if (static_cast<int>(c.pi.size()) != n)
      fail(ErrorKind::LengthMismatch, "pi hint length");
    Rat s = 0;
    for (int x = 0; x < n; ++x) {
      if (c.pi[x] <= 0)
        fail(ErrorKind::InvalidArgument, "pi hint not positive at " + states[x]);
      s += c.pi[x];
    }
    if (s != 1) fail(ErrorKind::InvalidArgument, "pi hint sums to " + rat_str(s));
    RatVec piP(n, Rat(0));
    for (int x = 0; x < n; ++x)
      for (const auto& [y, p] : c.kernel[x]) piP[y] += c.pi[x] * p;
    for (int x = 0; x < n; ++x)
      if (piP[x] != c.pi[x])
        fail(ErrorKind::InvalidArgument, "pi hint is not stationary at " + states[x]);
  } else {
    c.pi = detail::solve_stationary(c);
    for (int x = 0; x < n; ++x)
      if (c.pi[x] <= 0)
        fail(ErrorKind::NotIrreducible, "stationary mass 0 at " + states[x]);
  }

  c.lazy_flag = true;
  for (int x = 0; x < n; ++x)
    if (c.prob(x, x) < Rat(1, 2)) {
      c.lazy_flag = false;
      break;
    }
  return c;
}

// Builds a chain whose recurrent class may be a strict subset of the states
// (pi vanishing off the class), or which may be periodic. Used by the model
// zoo for the Glauber extension and the non-lazy walk variants; the strict
// entry point above rejects both.
inline Chain build_chain_with_classes(const std::vector<std::string>& states,
                                      const std::vector<Transition>& transitions,
                                      const RatVec& pi,
                                      bool require_aperiodic) {
  Chain c;
  c.states = states;
  int n = c.size();
  c.kernel.assign(n, {});
  std::vector<std::map<int, Rat>> rows(n);
  for (const auto& t : transitions) rows[t.src][t.dst] += t.prob;
  for (int x = 0; x < n; ++x)
    for (auto& [y, p] : rows[x])
      if (p != 0) c.kernel[x].emplace_back(y, p);
  detail::check_rows(c.states, c.kernel);

  c.pi = pi;
  Rat s = 0;
  std::vector<int> recurrent;
  for (int x = 0; x < n; ++x) {
    if (c.pi[x] < 0) fail(ErrorKind::InvalidArgument, "negative pi");
    if (c.pi[x] > 0) recurrent.push_back(x);
    s += c.pi[x];
  }
  if (s != 1) fail(ErrorKind::InvalidArgument, "pi sums to " + rat_str(s));
  if (recurrent.empty()) fail(ErrorKind::EmptyStateSpace, "pi vanishes everywhere");
  RatVec piP(n, Rat(0));
  for (int x = 0; x < n; ++x)
    for (const auto& [y, p] : c.kernel[x]) piP[y] += c.pi[x] * p;
  for (int x = 0; x < n; ++x)
    if (piP[x] != c.pi[x])
      fail(ErrorKind::InvalidArgument, "pi not stationary at " + states[x]);

  std::string bad;
  if (!detail::strongly_connected(c, recurrent, &bad))
    fail(ErrorKind::NotIrreducible, "recurrent class split at " + bad);
  c.irreducible = (static_cast<int>(recurrent.size()) == n);
  int period = detail::chain_period(c, recurrent);
  c.aperiodic = (period == 1);
  if (require_aperiodic && !c.aperiodic)
    fail(ErrorKind::NotAperiodic, "period " + std::to_string(period));

  c.lazy_flag = true;
  for (int x = 0; x < n; ++x)
    if (c.prob(x, x) < Rat(1, 2)) {
      c.lazy_flag = false;
      break;
    }
  return c;
}

// Detailed balance audit: returns the Q map, or reports the first violated
// pair with both sides of the equation.
inline EdgeWeight check_reversibility(const Chain& c) {
  EdgeWeight ew;
  int n = c.size();
  for (int x = 0; x < n; ++x) {
    for (const auto& [y, p] : c.kernel[x]) {
      Rat lhs = c.pi[x] * p;
      Rat rhs = c.pi[y] * c.prob(y, x);
      if (lhs != rhs)
        fail(ErrorKind::NotReversible,
             "pi(" + c.states[x] + ")P(" + c.states[x] + "," + c.states[y] +
                 ") = " + rat_str(lhs) + " but pi(" + c.states[y] + ")P(" +
                 c.states[y] + "," + c.states[x] + ") = " + rat_str(rhs));
      if (lhs > 0) ew.q[{x, y}] = lhs;
    }
  }
  return ew;
}

// P := (I + P)/2. Keeps pi, forces a non-negative spectrum.
inline Chain lazify(const Chain& c) {
  Chain out = c;
  for (int x = 0; x < c.size(); ++x) {
    std::map<int, Rat> row;
    row[x] = Rat(1, 2);
    for (const auto& [y, p] : c.kernel[x]) row[y] += p / 2;
    out.kernel[x].clear();
    for (const auto& [y, p] : row)
      if (p != 0) out.kernel[x].emplace_back(y, p);
  }
  out.lazy_flag = true;
  out.aperiodic = true;
  return out;
}

inline double variation_distance(const Distribution& a, const Distribution& b) {
  if (a.size() != b.size())
    fail(ErrorKind::LengthMismatch, "distributions of length " +
                                        std::to_string(a.size()) + " vs " +
                                        std::to_string(b.size()));
  double s = 0;
  for (int i = 0; i < a.size(); ++i) s += std::fabs(a.w[i] - b.w[i]);
  return s / 2;
}

namespace detail {

using Mat = std::vector<std::vector<double>>;

inline Mat mat_mul(const Mat& a, const Mat& b) {
  size_t n = a.size();
  Mat c(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i)
    for (size_t k = 0; k < n; ++k) {
      double v = a[i][k];
      if (v == 0.0) continue;
      const auto& brow = b[k];
      auto& crow = c[i];
      for (size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
    }
  return c;
}

inline Mat mat_pow(Mat base, uint64_t t) {
  size_t n = base.size();
  Mat r(n, std::vector<double>(n, 0.0));
  for (size_t i = 0; i < n; ++i) r[i][i] = 1.0;
  while (t > 0) {
    if (t & 1) r = mat_mul(r, base);
    t >>= 1;
    if (t) base = mat_mul(base, base);
  }
  return r;
}

inline void step_in_place(const Chain& c, std::vector<double>& v) {
  std::vector<double> next(v.size(), 0.0);
  for (int x = 0; x < c.size(); ++x) {
    if (v[x] == 0.0) continue;
    for (const auto& [y, p] : c.kernel[x]) next[y] += v[x] * to_double(p);
  }
  v.swap(next);
}

}  // namespace detail

// mu^(0) P^t in binary64, via repeated squaring of the kernel.
inline Distribution power_distribution(const Chain& c, const Distribution& start,
                                       uint64_t t) {
  if (start.size() != c.size()) fail(ErrorKind::LengthMismatch, "start length");
  if (t == 0) return start;
  // For short horizons the iterated multiply is cheaper and more accurate.
  if (t <= 64) {
    Distribution out = start;
    for (uint64_t s = 0; s < t; ++s) detail::step_in_place(c, out.w);
    return out;
  }
  auto pt = detail::mat_pow(c.dense_double(), t);
  Distribution out;
  out.w.assign(c.size(), 0.0);
  for (int x = 0; x < c.size(); ++x) {
    if (start.w[x] == 0.0) continue;
    for (int y = 0; y < c.size(); ++y) out.w[y] += start.w[x] * pt[x][y];
  }
  return out;
}

// Exact-rational variant (iterated multiply; guarded horizon).
inline RatVec power_distribution_exact(const Chain& c, const RatVec& start, uint64_t t) {
  if (t > 10000) fail(ErrorKind::TooLarge, "exact powering capped at t = 10^4");
  RatVec v = start;
  for (uint64_t s = 0; s < t; ++s) {
    RatVec next(c.size(), Rat(0));
    for (int x = 0; x < c.size(); ++x) {
      if (v[x] == 0) continue;
      for (const auto& [y, p] : c.kernel[x]) next[y] += v[x] * p;
    }
    v.swap(next);
  }
  return v;
}

inline Distribution point_mass(const Chain& c, int x) {
  Distribution d;
  d.w.assign(c.size(), 0.0);
  d.w[x] = 1.0;
  return d;
}

inline Distribution pi_distribution(const Chain& c) {
  Distribution d;
  d.w.resize(c.size());
  for (int i = 0; i < c.size(); ++i) d.w[i] = to_double(c.pi[i]);
  return d;
}

// Delta_x(t), recomputed from scratch.
inline double distance_to_stationarity(const Chain& c, int x, uint64_t t) {
  return variation_distance(power_distribution(c, point_mass(c, x), t),
                            pi_distribution(c));
}

// tau_x(eps): smallest t with Delta_x(t) <= eps. Doubling then bisection;
// monotonicity of Delta is re-checked on a window [t, t + 64] (plus 2t)
// rather than assumed.
inline uint64_t exact_mixing_time(const Chain& c, int x, double eps,
                                  uint64_t cap = 1000000) {
  if (!(eps > 0 && eps < 1)) fail(ErrorKind::InvalidArgument, "eps outside (0,1)");
  if (!c.aperiodic)
    fail(ErrorKind::NotAperiodic, "mixing time undefined for periodic chain");
  if (distance_to_stationarity(c, x, 0) <= eps) return 0;
  uint64_t hi = 1;
  while (distance_to_stationarity(c, x, hi) > eps) {
    hi *= 2;
    if (hi > cap)
      fail(ErrorKind::Diverged, "no t <= " + std::to_string(cap) +
                                    " with Delta_" + c.states[x] + "(t) <= " +
                                    std::to_string(eps));
  }
  uint64_t lo = hi / 2;  // Delta(lo) > eps, Delta(hi) <= eps
  while (hi - lo > 1) {
    uint64_t mid = lo + (hi - lo) / 2;
    if (distance_to_stationarity(c, x, mid) <= eps) hi = mid; else lo = mid;
  }
  uint64_t t = hi;
  double prev = distance_to_stationarity(c, x, t);
  for (uint64_t s = t + 1; s <= t + 64 && s <= 2 * t; ++s) {
    double cur = distance_to_stationarity(c, x, s);
    if (cur > eps + 1e-12)
      fail(ErrorKind::Diverged, "Delta not below eps on guard window at t=" +
                                    std::to_string(s));
    if (cur > prev + 1e-9)
      fail(ErrorKind::Diverged, "Delta not monotone on guard window");
    prev = cur;
  }
  if (2 * t > t + 64 && distance_to_stationarity(c, x, 2 * t) > eps + 1e-12)
    fail(ErrorKind::Diverged, "Delta above eps at window end 2t");
  return t;
}

// ---------------------------------------------------------------------------
// Chain text format (line oriented, UTF-8):
//   chain <name> <N>
//   state <index> <label>
//   t <src> <dst> <p_num>/<p_den>
// '#' starts a comment. Probabilities must be exact rationals.
// ---------------------------------------------------------------------------

inline Chain parse_chain_stream(std::istream& in,
                                const std::optional<RatVec>& pi_hint = std::nullopt) {
  std::string line;
  int lineno = 0;
  int n = -1;
  std::string name;
  std::vector<std::string> states;
  std::vector<Transition> transitions;
  auto parse_fail = [&](const std::string& why) {
    fail(ErrorKind::Parse, "line " + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (tok == "chain") {
      if (n >= 0) parse_fail("duplicate chain header");
      if (!(ls >> name >> n) || n <= 0) parse_fail("bad chain header");
      states.assign(n, "");
    } else if (tok == "state") {
      int idx;
      std::string label;
      if (n < 0) parse_fail("state before chain header");
      if (!(ls >> idx >> label) || idx < 0 || idx >= n)
        parse_fail("bad state line");
      states[idx] = label;
    } else if (tok == "t") {
      int s, d;
      std::string p;
      if (n < 0) parse_fail("transition before chain header");
      if (!(ls >> s >> d >> p) || s < 0 || s >= n || d < 0 || d >= n)
        parse_fail("bad transition line");
      try {
        transitions.push_back({s, d, parse_rat(p)});
      } catch (const Error&) {
        parse_fail("bad probability '" + p + "' (exact rationals only)");
      }
    } else {
      parse_fail("unknown directive '" + tok + "'");
    }
    std::string extra;
    if (ls >> extra) parse_fail("trailing token '" + extra + "'");
  }
  if (n < 0) fail(ErrorKind::Parse, "missing chain header");
  for (int i = 0; i < n; ++i)
    if (states[i].empty()) states[i] = std::to_string(i);
  return build_chain(states, transitions, pi_hint);
}

inline Chain parse_chain_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Parse, "cannot open " + path);
  return parse_chain_stream(in);
}

inline void write_chain(std::ostream& out, const Chain& c, const std::string& name) {
  out << "chain " << name << " " << c.size() << "\n";
  for (int i = 0; i < c.size(); ++i)
    out << "state " << i << " " << c.states[i] << "\n";
  for (int x = 0; x < c.size(); ++x)
    for (const auto& [y, p] : c.kernel[x])
      out << "t " << x << " " << y << " " << p.get_num().get_str() << "/"
          << p.get_den().get_str() << "\n";
}

}  // namespace mixlab
