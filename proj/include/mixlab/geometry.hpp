#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mixlab/chain.hpp"
#include "mixlab/errors.hpp"
#include "mixlab/rng.hpp"
#include "mixlab/simplex.hpp"
#include "mixlab/spectral.hpp"

namespace mixlab {

// ---------------------------------------------------------------------------
// Conductance, canonical-path congestion, flow resistance, trajectory flows
// and randomized rounding. Loads are exact rationals wherever the inputs are;
// the LP machinery works in binary64.
// ---------------------------------------------------------------------------

using StatePair = std::pair<int, int>;

struct CanonicalPathSet {
  std::map<StatePair, std::vector<int>> paths;  // vertex sequences x..y
};

struct Route {
  std::vector<int> vertices;
  Rat weight;
};

struct FractionalFlow {
  std::map<StatePair, std::vector<Route>> routes;
};

struct CongestionReport {
  Rat rho;            // max_e load(e)/Q(e)
  Rat rho_bar;        // length-weighted variant
  int ell = 0;        // longest (supported) path
  StatePair witness{-1, -1};

  double rho_d() const { return to_double(rho); }
  double rho_bar_d() const { return to_double(rho_bar); }
};

namespace geo_detail {

inline void check_path(const Chain& c, const StatePair& pair,
                       const std::vector<int>& path) {
  if (path.size() < 2 || path.front() != pair.first || path.back() != pair.second)
    fail(ErrorKind::InvalidPath, "pair (" + std::to_string(pair.first) + "," +
                                     std::to_string(pair.second) +
                                     "): endpoints do not match");
  std::vector<char> seen(c.size(), 0);
  for (size_t i = 0; i < path.size(); ++i) {
    int v = path[i];
    if (v < 0 || v >= c.size() || seen[v])
      fail(ErrorKind::InvalidPath, "pair (" + std::to_string(pair.first) + "," +
                                       std::to_string(pair.second) +
                                       "): path not simple");
    seen[v] = 1;
    if (i + 1 < path.size() && c.prob(v, path[i + 1]) <= 0)
      fail(ErrorKind::InvalidPath,
           "pair (" + std::to_string(pair.first) + "," +
               std::to_string(pair.second) + "): edge " + std::to_string(v) +
               "->" + std::to_string(path[i + 1]) + " has Q = 0");
  }
}

struct LoadAccumulator {
  std::map<StatePair, Rat> load, load_len;
  int ell = 0;

  void add(const std::vector<int>& path, const Rat& mass) {
    long len = static_cast<long>(path.size()) - 1;
    ell = std::max<int>(ell, static_cast<int>(len));
    for (size_t i = 0; i + 1 < path.size(); ++i) {
      StatePair e{path[i], path[i + 1]};
      load[e] += mass;
      load_len[e] += mass * len;
    }
  }

  CongestionReport report(const Chain& c) const {
    CongestionReport r;
    r.rho = 0;
    r.rho_bar = 0;
    r.ell = ell;
    for (const auto& [e, l] : load) {
      Rat q = c.q(e.first, e.second);
      Rat ratio = l / q;
      if (ratio > r.rho) {
        r.rho = ratio;
        r.witness = e;
      }
      Rat ratio_len = load_len.at(e) / q;
      if (ratio_len > r.rho_bar) r.rho_bar = ratio_len;
    }
    return r;
  }
};

}  // namespace geo_detail

// rho(Gamma), rho_bar(Gamma), max length and the witness edge, exactly.
inline CongestionReport path_congestion(const Chain& c, const CanonicalPathSet& gamma) {
  int n = c.size();
  geo_detail::LoadAccumulator acc;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      if (x == y) continue;
      auto it = gamma.paths.find({x, y});
      if (it == gamma.paths.end())
        fail(ErrorKind::InvalidPath, "pair (" + std::to_string(x) + "," +
                                         std::to_string(y) + ") has no path");
      geo_detail::check_path(c, it->first, it->second);
      acc.add(it->second, c.pi[x] * c.pi[y]);
    }
  return acc.report(c);
}

// R(f), R_bar(f) for a fractional flow; per-pair weights must sum to one.
inline CongestionReport flow_congestion(const Chain& c, const FractionalFlow& flow) {
  int n = c.size();
  geo_detail::LoadAccumulator acc;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      if (x == y) continue;
      auto it = flow.routes.find({x, y});
      if (it == flow.routes.end() || it->second.empty())
        fail(ErrorKind::WeightSum, "pair (" + std::to_string(x) + "," +
                                       std::to_string(y) + ") has no routes");
      Rat sum = 0;
      for (const Route& r : it->second) {
        if (r.weight <= 0)
          fail(ErrorKind::WeightSum, "non-positive route weight");
        geo_detail::check_path(c, it->first, r.vertices);
        sum += r.weight;
      }
      if (sum != 1)
        fail(ErrorKind::WeightSum, "pair (" + std::to_string(x) + "," +
                                       std::to_string(y) + ") weights sum to " +
                                       rat_str(sum));
      for (const Route& r : it->second)
        acc.add(r.vertices, c.pi[x] * c.pi[y] * r.weight);
    }
  return acc.report(c);
}

inline FractionalFlow as_flow(const CanonicalPathSet& gamma) {
  FractionalFlow f;
  for (const auto& [pair, path] : gamma.paths)
    f.routes[pair].push_back({path, Rat(1)});
  return f;
}

struct ConductanceResult {
  Rat phi;
  std::vector<int> witness;
};

// Exhaustive conductance: min over subsets with 0 < pi(S) <= 1/2 of
// Q(S, S-bar)/pi(S). Gray-code walk keeps the cut weight incremental.
inline ConductanceResult conductance_exact(const Chain& c) {
  int n = c.size();
  if (n > 24) fail(ErrorKind::TooLarge, "subset enumeration capped at N = 24");
  check_reversibility(c);
  std::vector<std::vector<std::pair<int, Rat>>> nbr(n);
  for (int x = 0; x < n; ++x)
    for (const auto& [y, p] : c.kernel[x])
      if (y != x && p > 0) nbr[x].emplace_back(y, c.pi[x] * p);

  Rat half(1, 2);
  Rat pi_s = 0, cross = 0;
  std::vector<char> in(n, 0);
  std::optional<Rat> best;
  uint64_t best_mask = 0;
  uint64_t total = 1ull << n;
  uint64_t mask = 0;
  for (uint64_t g = 1; g < total; ++g) {
    int v = __builtin_ctzll(g);
    uint64_t bit = 1ull << v;
    mask ^= bit;
    if (mask & bit) {  // v joined S
      in[v] = 1;
      pi_s += c.pi[v];
      for (const auto& [u, quv] : nbr[v]) cross += in[u] ? -quv : quv;
    } else {
      in[v] = 0;
      pi_s -= c.pi[v];
      for (const auto& [u, quv] : nbr[v]) cross += in[u] ? quv : -quv;
    }
    if (pi_s <= 0 || pi_s > half) continue;
    Rat ratio = cross / pi_s;
    if (!best || ratio < *best || (ratio == *best && mask < best_mask)) {
      best = ratio;
      best_mask = mask;
    }
  }
  if (!best) fail(ErrorKind::InvalidArgument, "no admissible subset");
  ConductanceResult res;
  res.phi = *best;
  for (int v = 0; v < n; ++v)
    if (best_mask >> v & 1) res.witness.push_back(v);
  return res;
}

struct CheegerReport {
  Rat phi;
  double lambda1 = 0.0;
  double left = 0.0;   // 1 - 2 Phi
  double right = 0.0;  // 1 - Phi^2/2
  double slack_left = 0.0;
  double slack_right = 0.0;
};

// Asserts 1 - 2 Phi <= lambda_1 <= 1 - Phi^2/2; a violation is a hard error,
// never an expected outcome.
inline CheegerReport cheeger_check(const Chain& c,
                                   const Spectrum* spectrum_hint = nullptr) {
  auto cond = conductance_exact(c);
  Spectrum s = spectrum_hint ? *spectrum_hint : eigen_spectrum(c);
  CheegerReport r;
  r.phi = cond.phi;
  double phi = to_double(cond.phi);
  r.lambda1 = s.eigenvalues.size() > 1 ? s.eigenvalues[1] : 0.0;
  r.left = 1.0 - 2.0 * phi;
  r.right = 1.0 - phi * phi / 2.0;
  r.slack_left = r.lambda1 - r.left;
  r.slack_right = r.right - r.lambda1;
  if (r.slack_left < -1e-9 || r.slack_right < -1e-9)
    fail(ErrorKind::CheegerViolation,
         "Phi = " + rat_str(r.phi) + ", lambda1 = " + std::to_string(r.lambda1));
  return r;
}

inline std::string subset_to_string(const Chain& c, const std::vector<int>& s) {
  std::string out = "{";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += c.states[s[i]];
  }
  return out + "}";
}

struct GapBoundsFromCongestion {
  double phi_lb = 0.0;           // Phi >= 1/(2 rho)
  double lambda_ub_quadratic = 0.0;  // 1 - 1/(8 rho^2)
  double lambda_ub_linear = 0.0;     // 1 - 1/rho_bar
  double lambda_ub_length = 0.0;     // 1 - 1/(rho ell)
};

inline GapBoundsFromCongestion congestion_gap_bounds(const CongestionReport& r) {
  GapBoundsFromCongestion g;
  double rho = r.rho_d(), rho_bar = r.rho_bar_d();
  g.phi_lb = 1.0 / (2.0 * rho);
  g.lambda_ub_quadratic = 1.0 - 1.0 / (8.0 * rho * rho);
  g.lambda_ub_linear = 1.0 - 1.0 / rho_bar;
  g.lambda_ub_length = 1.0 - 1.0 / (rho * static_cast<double>(r.ell));
  return g;
}

// Max demand and minimum edge capacity, the quantities in the rounding bound.
inline Rat max_pair_demand(const Chain& c) {
  Rat best = 0;
  for (int x = 0; x < c.size(); ++x)
    for (int y = 0; y < c.size(); ++y)
      if (x != y && c.pi[x] * c.pi[y] > best) best = c.pi[x] * c.pi[y];
  return best;
}

inline Rat min_edge_capacity(const Chain& c) {
  std::optional<Rat> best;
  for (int x = 0; x < c.size(); ++x)
    for (const auto& [y, p] : c.kernel[x]) {
      if (x == y) continue;
      Rat q = c.pi[x] * p;
      if (q > 0 && (!best || q < *best)) best = q;
    }
  if (!best) fail(ErrorKind::InvalidArgument, "chain has no move edges");
  return *best;
}

// ---------------------------------------------------------------------------
// Minimum-congestion multicommodity flow (the resistance).
// ---------------------------------------------------------------------------

enum class ResistanceMode { ExactLp, Approx };

struct ResistanceResult {
  FractionalFlow flow;
  double r = 0.0;        // congestion of `flow`; for ExactLp the LP optimum
  double lower = 0.0;    // certified lower bound on the true resistance
  long iterations = 0;
};

namespace geo_detail {

struct EdgeList {
  std::vector<StatePair> edges;
  std::map<StatePair, int> index;
  std::vector<double> q;
};

inline EdgeList move_edge_list(const Chain& c) {
  EdgeList el;
  for (auto [x, y] : c.move_edges()) {
    el.index[{x, y}] = static_cast<int>(el.edges.size());
    el.edges.push_back({x, y});
    el.q.push_back(to_double(c.q(x, y)));
  }
  return el;
}

inline std::vector<std::vector<int>> adjacency(const Chain& c) {
  std::vector<std::vector<int>> adj(c.size());
  for (auto [x, y] : c.move_edges()) adj[x].push_back(y);
  return adj;
}

inline std::vector<int> bfs_path(const std::vector<std::vector<int>>& adj, int x, int y) {
  int n = static_cast<int>(adj.size());
  std::vector<int> prev(n, -1);
  std::deque<int> q{x};
  std::vector<char> seen(n, 0);
  seen[x] = 1;
  while (!q.empty()) {
    int u = q.front();
    q.pop_front();
    if (u == y) break;
    for (int v : adj[u])
      if (!seen[v]) {
        seen[v] = 1;
        prev[v] = u;
        q.push_back(v);
      }
  }
  if (!seen[y]) fail(ErrorKind::NotIrreducible, "no path between states");
  std::vector<int> path{y};
  while (path.back() != x) path.push_back(prev[path.back()]);
  std::reverse(path.begin(), path.end());
  return path;
}

// Deterministic O(N^2) Dijkstra; ties resolved toward smaller indices.
inline void dijkstra(const std::vector<std::vector<int>>& adj,
                     const std::map<StatePair, int>& eindex,
                     const std::vector<double>& elen, int src,
                     std::vector<double>& dist, std::vector<int>& prev) {
  int n = static_cast<int>(adj.size());
  dist.assign(n, std::numeric_limits<double>::infinity());
  prev.assign(n, -1);
  std::vector<char> done(n, 0);
  dist[src] = 0;
  for (int it = 0; it < n; ++it) {
    int u = -1;
    for (int v = 0; v < n; ++v)
      if (!done[v] && (u < 0 || dist[v] < dist[u])) u = v;
    if (u < 0 || dist[u] == std::numeric_limits<double>::infinity()) break;
    done[u] = 1;
    for (int v : adj[u]) {
      double w = elen[eindex.at({u, v})];
      if (dist[u] + w < dist[v] - 1e-15) {
        dist[v] = dist[u] + w;
        prev[v] = u;
      }
    }
  }
}

inline std::vector<int> walk_prev(const std::vector<int>& prev, int x, int y) {
  std::vector<int> path{y};
  while (path.back() != x) {
    int p = prev[path.back()];
    if (p < 0) fail(ErrorKind::NotIrreducible, "disconnected in dijkstra");
    path.push_back(p);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

// Demand-normalized route weights -> exact rationals summing to 1.
inline void normalize_routes(std::map<StatePair, std::vector<Route>>& routes) {
  for (auto& [pair, rs] : routes) {
    Rat sum = 0;
    for (const Route& r : rs) sum += r.weight;
    if (sum <= 0) fail(ErrorKind::WeightSum, "empty route weights");
    for (Route& r : rs) r.weight /= sum;
  }
}

// Arc-based LP, the direct transcription: one flow variable per commodity and
// arc plus the congestion variable t.
inline ResistanceResult resistance_arc_lp(const Chain& c, const EdgeList& el) {
  int n = c.size();
  std::vector<StatePair> pairs;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (x != y) pairs.push_back({x, y});
  int npairs = static_cast<int>(pairs.size());
  int nedges = static_cast<int>(el.edges.size());

  Simplex lp;
  int t_var = lp.add_var(1.0);
  // f[q][e]
  std::vector<std::vector<int>> fvar(npairs, std::vector<int>(nedges));
  for (int qi = 0; qi < npairs; ++qi)
    for (int e = 0; e < nedges; ++e) fvar[qi][e] = lp.add_var(0.0);

  // conservation at every node but the sink
  for (int qi = 0; qi < npairs; ++qi) {
    auto [x, y] = pairs[qi];
    double d = to_double(c.pi[x] * c.pi[y]);
    for (int v = 0; v < n; ++v) {
      if (v == y) continue;
      int row = lp.add_row(Simplex::Sense::EQ, v == x ? d : 0.0);
      for (int e = 0; e < nedges; ++e) {
        if (el.edges[e].first == v) lp.set_coeff(row, fvar[qi][e], 1.0);
        if (el.edges[e].second == v) lp.set_coeff(row, fvar[qi][e], -1.0);
      }
    }
  }
  // load constraints
  for (int e = 0; e < nedges; ++e) {
    int row = lp.add_row(Simplex::Sense::LE, 0.0);
    for (int qi = 0; qi < npairs; ++qi) lp.set_coeff(row, fvar[qi][e], 1.0);
    lp.set_coeff(row, t_var, -el.q[e]);
  }

  auto sol = lp.solve();

  // Peel arc flows into simple paths, widest first.
  auto adj = adjacency(c);
  ResistanceResult res;
  res.r = sol.objective;
  res.lower = sol.objective;
  for (int qi = 0; qi < npairs; ++qi) {
    auto [x, y] = pairs[qi];
    double d = to_double(c.pi[x] * c.pi[y]);
    std::map<StatePair, double> arc;
    for (int e = 0; e < nedges; ++e) {
      double v = sol.x[fvar[qi][e]];
      if (v > d * 1e-9) arc[el.edges[e]] = v;
    }
    std::vector<Route> routes;
    double remaining = d;
    while (remaining > d * 1e-9) {
      // widest path x -> y over arcs with positive residual
      std::vector<double> width(n, 0.0);
      std::vector<int> prev(n, -1);
      width[x] = std::numeric_limits<double>::infinity();
      std::vector<char> done(n, 0);
      for (int it = 0; it < n; ++it) {
        int u = -1;
        for (int v = 0; v < n; ++v)
          if (!done[v] && width[v] > 0 && (u < 0 || width[v] > width[u])) u = v;
        if (u < 0) break;
        done[u] = 1;
        for (int v : adj[u]) {
          auto a = arc.find({u, v});
          if (a == arc.end()) continue;
          double w = std::min(width[u], a->second);
          if (w > width[v] + 1e-15) {
            width[v] = w;
            prev[v] = u;
          }
        }
      }
      if (width[y] <= 0) break;  // leftover numerical dust
      auto path = walk_prev(prev, x, y);
      double w = std::min(width[y], remaining);
      for (size_t i = 0; i + 1 < path.size(); ++i) {
        auto it = arc.find({path[i], path[i + 1]});
        it->second -= w;
        if (it->second <= d * 1e-12) arc.erase(it);
      }
      routes.push_back({path, rat_from_double(w / d)});
      remaining -= w;
    }
    if (routes.empty()) routes.push_back({bfs_path(adj, x, y), Rat(1)});
    res.flow.routes[{x, y}] = std::move(routes);
  }
  normalize_routes(res.flow.routes);
  return res;
}

// Path-based column generation: master restricted LP over generated paths,
// pricing by shortest path under the edge duals.
inline ResistanceResult resistance_column_generation(const Chain& c, const EdgeList& el) {
  int n = c.size();
  std::vector<StatePair> pairs;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (x != y) pairs.push_back({x, y});
  int npairs = static_cast<int>(pairs.size());
  int nedges = static_cast<int>(el.edges.size());
  auto adj = adjacency(c);

  std::vector<double> demand(npairs);
  for (int qi = 0; qi < npairs; ++qi)
    demand[qi] = to_double(c.pi[pairs[qi].first] * c.pi[pairs[qi].second]);

  Simplex lp;
  int t_var = lp.add_var(1.0);
  std::vector<int> pair_row(npairs), edge_row(nedges);
  for (int qi = 0; qi < npairs; ++qi)
    pair_row[qi] = lp.add_row(Simplex::Sense::EQ, 1.0);
  for (int e = 0; e < nedges; ++e) {
    edge_row[e] = lp.add_row(Simplex::Sense::LE, 0.0);
    lp.set_coeff(edge_row[e], t_var, -el.q[e]);
  }

  struct Col {
    int pair;
    std::vector<int> path;
  };
  std::vector<Col> cols;
  std::map<std::pair<int, uint64_t>, char> seen_cols;  // (pair, path hash)

  auto path_hash = [](const std::vector<int>& p) {
    uint64_t h = 1469598103934665603ull;
    for (int v : p) {
      h ^= static_cast<uint64_t>(v) + 1;
      h *= 1099511628211ull;
    }
    return h;
  };
  auto column_entries = [&](int qi, const std::vector<int>& path) {
    std::vector<std::pair<int, double>> entries;
    entries.emplace_back(pair_row[qi], 1.0);
    for (size_t i = 0; i + 1 < path.size(); ++i)
      entries.emplace_back(edge_row[el.index.at({path[i], path[i + 1]})], demand[qi]);
    return entries;
  };

  for (int qi = 0; qi < npairs; ++qi) {
    auto path = bfs_path(adj, pairs[qi].first, pairs[qi].second);
    int var = lp.add_var(0.0);
    for (auto [row, v] : column_entries(qi, path)) lp.set_coeff(row, var, v);
    cols.push_back({qi, path});
    seen_cols[{qi, path_hash(path)}] = 1;
  }

  auto sol = lp.solve();
  long rounds = 0;
  const long max_rounds = 500;
  for (; rounds < max_rounds; ++rounds) {
    // price: shortest paths under lengths max(0, -mu_e)
    std::vector<double> len(nedges);
    for (int e = 0; e < nedges; ++e) len[e] = std::max(0.0, -sol.duals[edge_row[e]]);
    bool improved = false;
    std::vector<double> dist;
    std::vector<int> prev;
    for (int x = 0; x < n; ++x) {
      bool need = false;
      for (int qi = 0; qi < npairs; ++qi)
        if (pairs[qi].first == x) need = true;
      if (!need) continue;
      dijkstra(adj, el.index, len, x, dist, prev);
      for (int qi = 0; qi < npairs; ++qi) {
        if (pairs[qi].first != x) continue;
        int y = pairs[qi].second;
        double sigma = sol.duals[pair_row[qi]];
        double rc = -sigma + demand[qi] * dist[y];
        if (rc < -1e-9 * std::max(1.0, std::fabs(sigma))) {
          auto path = walk_prev(prev, x, y);
          auto key = std::make_pair(qi, path_hash(path));
          if (seen_cols.count(key)) continue;
          seen_cols[key] = 1;
          bool entered = lp.add_column_and_reoptimize(0.0, column_entries(qi, path));
          cols.push_back({qi, path});  // keep var indices aligned with cols
          if (entered) {
            sol = lp.current();
            improved = true;
          }
        }
      }
    }
    if (!improved) break;
  }
  if (rounds == max_rounds)
    fail(ErrorKind::LPNumericFailure, "column generation did not converge");

  ResistanceResult res;
  res.r = sol.objective;
  res.lower = sol.objective;
  res.iterations = rounds;
  for (size_t ci = 0; ci < cols.size(); ++ci) {
    double z = sol.x[1 + static_cast<int>(ci)];  // var 0 is t
    if (z <= 1e-12) continue;
    auto pr = pairs[cols[ci].pair];
    res.flow.routes[pr].push_back({cols[ci].path, rat_from_double(z)});
  }
  // pairs fully served by a column rounded to ~0 keep their seed path
  for (int qi = 0; qi < npairs; ++qi)
    if (!res.flow.routes.count(pairs[qi]))
      res.flow.routes[pairs[qi]].push_back({cols[qi].path, Rat(1)});
  normalize_routes(res.flow.routes);
  return res;
}

// Multiplicative-weights / smoothed best-response re-routing with a certified
// lower bound; stops once within `rel` of optimal.
inline ResistanceResult resistance_approx(const Chain& c, const EdgeList& el,
                                          double rel = 0.01) {
  int n = c.size();
  int nedges = static_cast<int>(el.edges.size());
  auto adj = adjacency(c);
  std::vector<StatePair> pairs;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (x != y) pairs.push_back({x, y});
  int npairs = static_cast<int>(pairs.size());
  std::vector<double> demand(npairs);
  for (int qi = 0; qi < npairs; ++qi)
    demand[qi] = to_double(c.pi[pairs[qi].first] * c.pi[pairs[qi].second]);

  // averaged flow: per-pair path weights (raw * scale) and per-edge loads
  std::vector<std::map<std::vector<int>, double>> fpaths(npairs);
  std::vector<double> load(nedges, 0.0);
  double scale = 1.0;

  // seed with BFS paths
  for (int qi = 0; qi < npairs; ++qi) {
    auto p = bfs_path(adj, pairs[qi].first, pairs[qi].second);
    fpaths[qi][p] = 1.0;
    for (size_t i = 0; i + 1 < p.size(); ++i)
      load[el.index.at({p[i], p[i + 1]})] += demand[qi];
  }

  auto congestion = [&]() {
    double r = 0;
    for (int e = 0; e < nedges; ++e) r = std::max(r, load[e] / el.q[e]);
    return r;
  };

  double lb_best = 0.0;
  double beta = 0.0;
  std::vector<double> dist;
  std::vector<int> prev;
  const long max_iters = 200000;
  long it = 0;
  for (; it < max_iters; ++it) {
    double ub = congestion();
    // softmax weights over edges
    double maxratio = 0;
    for (int e = 0; e < nedges; ++e) maxratio = std::max(maxratio, load[e] / el.q[e]);
    if (beta == 0.0) beta = std::log(nedges + 1.0) / (0.002 * std::max(maxratio, 1e-9));
    std::vector<double> lam(nedges);
    double lsum = 0;
    for (int e = 0; e < nedges; ++e) {
      lam[e] = std::exp(beta * (load[e] / el.q[e] - maxratio));
      lsum += lam[e];
    }
    std::vector<double> len(nedges);
    for (int e = 0; e < nedges; ++e) {
      lam[e] /= lsum;
      len[e] = lam[e] / el.q[e];
    }
    // best response + lower bound
    double lb = 0;
    std::vector<std::vector<int>> br(npairs);
    for (int x = 0; x < n; ++x) {
      bool need = false;
      for (int qi = 0; qi < npairs; ++qi)
        if (pairs[qi].first == x) need = true;
      if (!need) continue;
      dijkstra(adj, el.index, len, x, dist, prev);
      for (int qi = 0; qi < npairs; ++qi) {
        if (pairs[qi].first != x) continue;
        br[qi] = walk_prev(prev, x, pairs[qi].second);
        lb += demand[qi] * dist[pairs[qi].second];
      }
    }
    lb_best = std::max(lb_best, lb);
    if (ub <= (1.0 + rel) * lb_best * (1 - 1e-12) || ub <= lb_best * (1 + 1e-12)) break;
    // Frank-Wolfe blend toward the best response
    double gamma = 2.0 / (it + 3.0);
    for (int e = 0; e < nedges; ++e) load[e] *= (1 - gamma);
    scale *= (1 - gamma);
    for (int qi = 0; qi < npairs; ++qi) {
      fpaths[qi][br[qi]] += gamma / scale;
      for (size_t i = 0; i + 1 < br[qi].size(); ++i)
        load[el.index.at({br[qi][i], br[qi][i + 1]})] += gamma * demand[qi];
    }
    if (scale < 1e-280) {  // renormalize the lazy scale
      for (int qi = 0; qi < npairs; ++qi)
        for (auto& [p, w] : fpaths[qi]) w *= scale;
      scale = 1.0;
    }
  }
  if (it == max_iters)
    fail(ErrorKind::LPNumericFailure, "approx resistance did not certify");

  ResistanceResult res;
  res.r = congestion();
  res.lower = lb_best;
  res.iterations = it;
  for (int qi = 0; qi < npairs; ++qi) {
    for (const auto& [p, w] : fpaths[qi]) {
      double wd = w * scale;
      if (wd <= 1e-12) continue;
      res.flow.routes[pairs[qi]].push_back({p, rat_from_double(wd)});
    }
    if (!res.flow.routes.count(pairs[qi]))
      res.flow.routes[pairs[qi]].push_back(
          {bfs_path(adj, pairs[qi].first, pairs[qi].second), Rat(1)});
  }
  normalize_routes(res.flow.routes);
  return res;
}

}  // namespace geo_detail

inline ResistanceResult resistance_min(const Chain& c, ResistanceMode mode) {
  if (!c.irreducible)
    fail(ErrorKind::NotApplicable, "resistance needs an irreducible chain");
  auto el = geo_detail::move_edge_list(c);
  if (mode == ResistanceMode::ExactLp) {
    if (c.size() > 60 || el.edges.size() > 400)
      fail(ErrorKind::TooLarge, "exact LP capped at N = 60, 400 edges");
    long npairs = static_cast<long>(c.size()) * (c.size() - 1);
    long arc_vars = npairs * static_cast<long>(el.edges.size());
    if (arc_vars <= 4000) return geo_detail::resistance_arc_lp(c, el);
    return geo_detail::resistance_column_generation(c, el);
  }
  return geo_detail::resistance_approx(c, el);
}

// ---------------------------------------------------------------------------
// Trajectory flows (the R <= 16 tau construction).
// ---------------------------------------------------------------------------

struct TrajectoryFlow {
  uint64_t t = 0;            // 2 tau
  double r_congestion = 0;   // max_e load(e)/Q(e), counted before loop-erasure
  StatePair witness{-1, -1};
  double kl_min = 0;         // min_{x,y} P^t(x,y)/pi(y)
  std::optional<FractionalFlow> flow;  // materialized when requested
};

namespace geo_detail {

inline std::vector<int> loop_erase(const std::vector<int>& walk) {
  std::vector<int> path;
  for (int v : walk) {
    auto it = std::find(path.begin(), path.end(), v);
    if (it != path.end()) path.erase(it + 1, path.end());
    else path.push_back(v);
  }
  return path;
}

inline std::vector<std::vector<Rat>> exact_power(const Chain& c, uint64_t t) {
  int n = c.size();
  std::vector<std::vector<Rat>> p(n, std::vector<Rat>(n, Rat(0)));
  for (int i = 0; i < n; ++i) p[i][i] = 1;
  for (uint64_t s = 0; s < t; ++s) {
    std::vector<std::vector<Rat>> next(n, std::vector<Rat>(n, Rat(0)));
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) {
        if (p[i][k] == 0) continue;
        for (const auto& [j, pr] : c.kernel[k]) next[i][j] += p[i][k] * pr;
      }
    p.swap(next);
  }
  return p;
}

}  // namespace geo_detail

inline TrajectoryFlow flow_from_trajectories(const Chain& c, uint64_t tau,
                                             bool materialize = false) {
  if (!c.aperiodic || !c.irreducible)
    fail(ErrorKind::NotApplicable, "trajectory flow needs an ergodic chain");
  if (tau == 0) fail(ErrorKind::InvalidArgument, "tau must be positive");
  int n = c.size();
  uint64_t t = 2 * tau;

  auto pd = c.dense_double();
  // all powers P^0..P^t
  if (t > 4096) fail(ErrorKind::TooLarge, "trajectory horizon too long");
  std::vector<detail::Mat> pow(t + 1);
  pow[0].assign(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) pow[0][i][i] = 1.0;
  for (uint64_t s = 1; s <= t; ++s) pow[s] = detail::mat_mul(pow[s - 1], pd);

  TrajectoryFlow out;
  out.t = t;
  out.kl_min = std::numeric_limits<double>::infinity();
  StatePair kl_witness{-1, -1};
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      double ratio = pow[t][x][y] / to_double(c.pi[y]);
      if (ratio < out.kl_min) {
        out.kl_min = ratio;
        kl_witness = {x, y};
      }
    }
  if (out.kl_min < 0.125 - 1e-12)
    fail(ErrorKind::KLViolation,
         "P^t(x,y)/pi(y) = " + std::to_string(out.kl_min) + " < 1/8 at pair (" +
             c.states[kl_witness.first] + "," + c.states[kl_witness.second] +
             "); tau was computed wrong");

  // load(u,v) = P(u,v) * sum_s [ (P^s)^T M (P^{t-1-s})^T ](u,v)
  // with M(x,y) = pi(x)pi(y)/P^t(x,y) off the diagonal.
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y)
      if (x != y) m[x][y] = to_double(c.pi[x] * c.pi[y]) / pow[t][x][y];
  std::vector<std::vector<double>> gsum(n, std::vector<double>(n, 0.0));
  for (uint64_t s = 0; s < t; ++s) {
    const auto& a = pow[s];
    const auto& b = pow[t - 1 - s];
    // t1 = a^T * m
    std::vector<std::vector<double>> t1(n, std::vector<double>(n, 0.0));
    for (int x = 0; x < n; ++x)
      for (int u = 0; u < n; ++u) {
        double axu = a[x][u];
        if (axu == 0.0) continue;
        for (int y = 0; y < n; ++y) t1[u][y] += axu * m[x][y];
      }
    // gsum += t1 * b^T
    for (int u = 0; u < n; ++u)
      for (int y = 0; y < n; ++y) {
        double v = t1[u][y];
        if (v == 0.0) continue;
        for (int w = 0; w < n; ++w) gsum[u][w] += v * b[w][y];
      }
  }
  out.r_congestion = 0;
  for (int u = 0; u < n; ++u)
    for (const auto& [v, p] : c.kernel[u]) {
      double load = to_double(p) * gsum[u][v];
      double q = to_double(c.pi[u] * p);
      double ratio = load / q;
      if (ratio > out.r_congestion) {
        out.r_congestion = ratio;
        out.witness = {u, v};
      }
    }

  if (materialize) {
    if (n > 12 || t > 6)
      fail(ErrorKind::TooLarge, "trajectory materialization capped at N = 12, t = 6");
    auto pt = geo_detail::exact_power(c, t);
    FractionalFlow flow;
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y) {
        if (x == y) continue;
        std::map<std::vector<int>, Rat> erased;
        // DFS over trajectories of length exactly t
        std::vector<int> walk{x};
        std::function<void(Rat)> dfs = [&](Rat prob) {
          if (walk.size() == t + 1) {
            if (walk.back() == y)
              erased[geo_detail::loop_erase(walk)] += prob / pt[x][y];
            return;
          }
          for (const auto& [z, pr] : c.kernel[walk.back()]) {
            walk.push_back(z);
            dfs(prob * pr);
            walk.pop_back();
          }
        };
        dfs(Rat(1));
        auto& routes = flow.routes[{x, y}];
        for (auto& [p, w] : erased) routes.push_back({p, w});
      }
    out.flow = std::move(flow);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Randomized rounding of a fractional flow to canonical paths.
// ---------------------------------------------------------------------------

struct RoundedPaths {
  CanonicalPathSet gamma;
  CongestionReport report;
};

inline RoundedPaths round_flow(const Chain& c, const FractionalFlow& flow,
                               uint64_t seed) {
  RoundedPaths out;
  int n = c.size();
  for (const auto& [pair, routes] : flow.routes) {
    RatVec probs;
    for (const Route& r : routes) probs.push_back(r.weight);
    CounterRng rng(seed, static_cast<uint64_t>(pair.first) * n + pair.second);
    size_t pick = 0;
    if (routes.size() > 1) {
      RationalSampler sampler(probs);
      pick = sampler.sample(rng);
    }
    out.gamma.paths[pair] = geo_detail::loop_erase(routes[pick].vertices);
  }
  out.report = path_congestion(c, out.gamma);
  return out;
}

// ---------------------------------------------------------------------------
// Dump formats.
// ---------------------------------------------------------------------------

inline void write_flow(std::ostream& os, const FractionalFlow& flow) {
  for (const auto& [pair, routes] : flow.routes)
    for (const Route& r : routes) {
      os << "path " << pair.first << " " << pair.second << " "
         << r.weight.get_num().get_str() << "/" << r.weight.get_den().get_str();
      for (int v : r.vertices) os << " " << v;
      os << "\n";
    }
}

inline void write_paths(std::ostream& os, const CanonicalPathSet& gamma) {
  write_flow(os, as_flow(gamma));
}

inline FractionalFlow parse_flow_stream(std::istream& in) {
  FractionalFlow flow;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    if (tok != "path") fail(ErrorKind::Parse, "flow line " + std::to_string(lineno));
    int x, y;
    std::string w;
    if (!(ls >> x >> y >> w)) fail(ErrorKind::Parse, "flow line " + std::to_string(lineno));
    Route r;
    r.weight = parse_rat(w);
    int v;
    while (ls >> v) r.vertices.push_back(v);
    flow.routes[{x, y}].push_back(std::move(r));
  }
  return flow;
}

inline CanonicalPathSet parse_paths_stream(std::istream& in) {
  auto flow = parse_flow_stream(in);
  CanonicalPathSet gamma;
  for (const auto& [pair, routes] : flow.routes) {
    if (routes.size() != 1 || routes[0].weight != 1)
      fail(ErrorKind::Parse, "canonical path set needs one unit-weight path per pair");
    gamma.paths[pair] = routes[0].vertices;
  }
  return gamma;
}

inline std::string congestion_csv(const CongestionReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "key,value\n";
  os << "rho," << r.rho_d() << "\n";
  os << "rho_exact," << rat_str(r.rho) << "\n";
  os << "rho_bar," << r.rho_bar_d() << "\n";
  os << "ell," << r.ell << "\n";
  os << "witness_src," << r.witness.first << "\n";
  os << "witness_dst," << r.witness.second << "\n";
  return os.str();
}

}  // namespace mixlab
