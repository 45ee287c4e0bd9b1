#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mixlab/chain.hpp"
#include "mixlab/errors.hpp"
#include "mixlab/rng.hpp"
#include "mixlab/zoo.hpp"

namespace mixlab {

// ---------------------------------------------------------------------------
// Couplings with enumerable randomness: every joint step is an explicit
// finite list of (probability, x', y') with exact rational probabilities, so
// faithfulness and contraction are decidable, not sampled.
// ---------------------------------------------------------------------------

struct JointOutcome {
  Rat p;
  int x2 = 0;
  int y2 = 0;
};

struct CouplingStrategy {
  const Chain* chain = nullptr;
  std::string name;
  // Enumerates the randomness domain for the pair (x, y).
  std::function<std::vector<JointOutcome>(int, int)> step;
};

// Memoizes joint distributions; simulations revisit the same pairs constantly.
class StepCache {
 public:
  explicit StepCache(const CouplingStrategy& cs) : cs_(&cs) {}

  const std::vector<JointOutcome>& get(int x, int y) {
    auto key = std::make_pair(x, y);
    auto it = memo_.find(key);
    if (it != memo_.end()) return it->second;
    return memo_.emplace(key, cs_->step(x, y)).first->second;
  }

 private:
  const CouplingStrategy* cs_;
  std::map<std::pair<int, int>, std::vector<JointOutcome>> memo_;
};

using Metric = std::function<long(int, int)>;

struct PathCouplingSpec {
  const Chain* chain = nullptr;
  std::string name;
  CouplingStrategy per_edge;  // defined on S and the diagonal
  // adjacency[x]: sorted list of (y, weight) with (x,y) in S
  std::vector<std::vector<std::pair<int, int>>> adjacency;
  std::vector<std::vector<long>> delta;  // all-pairs metric from H
  long diameter = 0;

  bool adjacent(int x, int y) const {
    for (auto [z, w] : adjacency[x])
      if (z == y) return true;
    return false;
  }
  long weight(int x, int y) const {
    for (auto [z, w] : adjacency[x])
      if (z == y) return w;
    fail(ErrorKind::InvalidArgument, "pair not adjacent");
  }
  Metric metric() const {
    return [this](int x, int y) { return delta[x][y]; };
  }
};

namespace coupling_detail {

// All-pairs shortest paths over the weighted adjacency structure S; also
// verifies H spans the state space and that S edges are geodesics.
inline void finish_path_coupling(PathCouplingSpec& pcs) {
  int n = pcs.chain->size();
  pcs.delta.assign(n, std::vector<long>(n, std::numeric_limits<long>::max() / 4));
  for (int s = 0; s < n; ++s) {
    auto& dist = pcs.delta[s];
    dist[s] = 0;
    // Dijkstra with small integer weights
    std::vector<char> done(n, 0);
    for (int it = 0; it < n; ++it) {
      int u = -1;
      for (int v = 0; v < n; ++v)
        if (!done[v] && (u < 0 || dist[v] < dist[u])) u = v;
      if (u < 0 || dist[u] >= std::numeric_limits<long>::max() / 8) break;
      done[u] = 1;
      for (auto [v, w] : pcs.adjacency[u])
        if (dist[u] + w < dist[v]) dist[v] = dist[u] + w;
    }
  }
  pcs.diameter = 0;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      if (pcs.delta[x][y] >= std::numeric_limits<long>::max() / 8)
        fail(ErrorKind::NoGeodesic, "adjacency graph H does not connect states " +
                                        pcs.chain->states[x] + ", " +
                                        pcs.chain->states[y]);
      pcs.diameter = std::max(pcs.diameter, pcs.delta[x][y]);
    }
  for (int x = 0; x < n; ++x)
    for (auto [y, w] : pcs.adjacency[x])
      if (pcs.delta[x][y] != w)
        fail(ErrorKind::NoGeodesic, "edge weight is not the metric distance");
}

inline std::vector<JointOutcome> diagonal_law(const Chain& c, int x) {
  std::vector<JointOutcome> out;
  for (const auto& [y, p] : c.kernel[x]) out.push_back({p, y, y});
  return out;
}

inline void merge_outcomes(std::vector<JointOutcome>& outs) {
  std::map<std::pair<int, int>, Rat> agg;
  for (const auto& o : outs) agg[{o.x2, o.y2}] += o.p;
  outs.clear();
  for (const auto& [k, p] : agg)
    if (p != 0) outs.push_back({p, k.first, k.second});
}

}  // namespace coupling_detail

// ---------------------------------------------------------------------------
// Generic couplings available on any chain.
// ---------------------------------------------------------------------------

// Product coupling off the diagonal, glued to the synchronized law on it.
inline CouplingStrategy independent_coupling(const Chain& c) {
  CouplingStrategy cs;
  cs.chain = &c;
  cs.name = "independent";
  const Chain* cp = &c;
  cs.step = [cp](int x, int y) {
    if (x == y) return coupling_detail::diagonal_law(*cp, x);
    std::vector<JointOutcome> out;
    for (const auto& [x2, px] : cp->kernel[x])
      for (const auto& [y2, py] : cp->kernel[y]) out.push_back({px * py, x2, y2});
    return out;
  };
  return cs;
}

// ---------------------------------------------------------------------------
// Faithfulness: both marginals of the joint law must equal the kernel rows,
// exactly.
// ---------------------------------------------------------------------------

struct FaithfulReport {
  long pairs_checked = 0;
};

inline void verify_faithful_pair(const CouplingStrategy& cs, int x, int y) {
  const Chain& c = *cs.chain;
  auto outs = cs.step(x, y);
  Rat total = 0;
  std::map<int, Rat> mx, my;
  for (const auto& o : outs) {
    if (o.p < 0) fail(ErrorKind::NotFaithful, "negative token probability");
    total += o.p;
    mx[o.x2] += o.p;
    my[o.y2] += o.p;
    if (x == y && o.x2 != o.y2)
      fail(ErrorKind::NotFaithful, "coupled pair split at " + c.states[x]);
  }
  if (total != 1)
    fail(ErrorKind::NotFaithful, "token probabilities sum to " + rat_str(total) +
                                     " at (" + c.states[x] + "," + c.states[y] + ")");
  auto check_side = [&](const std::map<int, Rat>& m, int from, const char* side) {
    std::map<int, Rat> row;
    for (const auto& [z, p] : c.kernel[from]) row[z] = p;
    for (const auto& [z, p] : m) {
      Rat want = row.count(z) ? row[z] : Rat(0);
      if (p != want)
        fail(ErrorKind::NotFaithful,
             std::string(side) + " marginal at (" + c.states[x] + "," +
                 c.states[y] + "): state " + c.states[z] + " got " + rat_str(p) +
                 " want " + rat_str(want));
    }
    for (const auto& [z, p] : row)
      if (p != 0 && !m.count(z))
        fail(ErrorKind::NotFaithful,
             std::string(side) + " marginal misses state " + c.states[z]);
  };
  check_side(mx, x, "X");
  check_side(my, y, "Y");
}

// pairs = nullopt checks every ordered pair (including the diagonal).
inline FaithfulReport verify_faithful(
    const CouplingStrategy& cs,
    const std::optional<std::vector<std::pair<int, int>>>& pairs = std::nullopt) {
  FaithfulReport rep;
  if (pairs) {
    for (auto [x, y] : *pairs) {
      verify_faithful_pair(cs, x, y);
      ++rep.pairs_checked;
    }
    return rep;
  }
  int n = cs.chain->size();
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      verify_faithful_pair(cs, x, y);
      ++rep.pairs_checked;
    }
  return rep;
}

// Faithfulness over S plus the diagonal for a path coupling.
inline FaithfulReport verify_faithful(const PathCouplingSpec& pcs) {
  std::vector<std::pair<int, int>> pairs;
  int n = pcs.chain->size();
  for (int x = 0; x < n; ++x) {
    pairs.emplace_back(x, x);
    for (auto [y, w] : pcs.adjacency[x]) pairs.emplace_back(x, y);
  }
  return verify_faithful(pcs.per_edge, pairs);
}

// Exact expected metric after one joint step.
inline Rat expected_one_step_distance(const CouplingStrategy& cs, int x, int y,
                                      const Metric& metric) {
  Rat e = 0;
  for (const auto& o : cs.step(x, y)) e += o.p * metric(o.x2, o.y2);
  return e;
}

struct ContractionResult {
  Rat beta;
  std::pair<int, int> witness{-1, -1};
};

// beta = max over (x,y) in S of E[delta(X',Y')]/delta(x,y).
inline ContractionResult contraction_factor(const PathCouplingSpec& pcs) {
  ContractionResult res;
  res.beta = 0;
  auto metric = pcs.metric();
  int n = pcs.chain->size();
  for (int x = 0; x < n; ++x)
    for (auto [y, w] : pcs.adjacency[x]) {
      Rat e = expected_one_step_distance(pcs.per_edge, x, y, metric);
      Rat ratio = e / w;
      if (ratio > res.beta) {
        res.beta = ratio;
        res.witness = {x, y};
      }
    }
  return res;
}

// tau(eps) <= ln(D / eps) / (1 - beta), rounded up.
inline uint64_t path_coupling_bound(const PathCouplingSpec& pcs, const Rat& beta,
                                    double eps) {
  if (!(eps > 0 && eps < 1)) fail(ErrorKind::InvalidArgument, "eps outside (0,1)");
  if (beta >= 1)
    fail(ErrorKind::NoContraction, "beta = " + rat_str(beta) + " >= 1");
  double b = to_double(beta);
  double v = std::log(static_cast<double>(pcs.diameter) / eps) / (1.0 - b);
  return static_cast<uint64_t>(std::ceil(v));
}

// ---------------------------------------------------------------------------
// Extension of a per-edge coupling along geodesics (the path-coupling proof).
// ---------------------------------------------------------------------------

// Lexicographically smallest geodesic x -> y through S.
inline std::vector<int> geodesic(const PathCouplingSpec& pcs, int x, int y) {
  std::vector<int> path{x};
  int cur = x;
  while (cur != y) {
    int next = -1;
    for (auto [z, w] : pcs.adjacency[cur]) {
      if (pcs.delta[cur][y] == w + pcs.delta[z][y]) {
        next = z;
        break;  // adjacency sorted by index: first hit is smallest
      }
    }
    if (next < 0)
      fail(ErrorKind::NoGeodesic, "no geodesic step from " +
                                      pcs.chain->states[cur] + " toward " +
                                      pcs.chain->states[y]);
    path.push_back(next);
    cur = next;
  }
  return path;
}

// Composes the per-edge couplings along the geodesic, conditioning each link
// on the previous one; returns the exact joint law of (x', y').
inline std::vector<JointOutcome> extend_along_path(const PathCouplingSpec& pcs,
                                                   int x, int y) {
  const Chain& c = *pcs.chain;
  if (x == y) return coupling_detail::diagonal_law(c, x);
  auto path = geodesic(pcs, x, y);
  // joint[(a,b)] = Pr[x' = a, current link endpoint lands on b]
  std::map<std::pair<int, int>, Rat> joint;
  for (const auto& [a, p] : c.kernel[x]) joint[{a, a}] += p;
  for (size_t l = 0; l + 1 < path.size(); ++l) {
    auto link = pcs.per_edge.step(path[l], path[l + 1]);
    // conditional law of the second component given the first
    std::map<int, std::vector<std::pair<int, Rat>>> cond;
    std::map<int, Rat> first_mass;
    for (const auto& o : link) {
      cond[o.x2].emplace_back(o.y2, o.p);
      first_mass[o.x2] += o.p;
    }
    std::map<std::pair<int, int>, Rat> next;
    for (const auto& [key, mass] : joint) {
      auto [a, u] = key;
      auto it = cond.find(u);
      if (it == cond.end())
        fail(ErrorKind::NotFaithful,
             "link coupling lacks mass at intermediate state " + c.states[u]);
      const Rat& fm = first_mass[u];
      for (const auto& [v, pv] : it->second) next[{a, v}] += mass * pv / fm;
    }
    joint.swap(next);
  }
  std::vector<JointOutcome> out;
  for (const auto& [key, p] : joint)
    if (p != 0) out.push_back({p, key.first, key.second});
  return out;
}

// The extension as a full CouplingStrategy (marginal checks run against it
// directly in the tests).
inline CouplingStrategy extended_coupling(const PathCouplingSpec& pcs) {
  CouplingStrategy cs;
  cs.chain = pcs.chain;
  cs.name = pcs.name + "+extension";
  const PathCouplingSpec* p = &pcs;
  cs.step = [p](int x, int y) { return extend_along_path(*p, x, y); };
  return cs;
}

// ---------------------------------------------------------------------------
// Monte Carlo coalescence.
// ---------------------------------------------------------------------------

struct CoalescenceCurve {
  std::vector<double> frac_uncoupled;  // index t-1 for t = 1..t_max
  std::vector<double> halfwidth;       // 99% normal approximation
  uint64_t trials = 0;
};

inline CoalescenceCurve simulate_coalescence(const CouplingStrategy& cs, int x0,
                                             int y0, int t_max, uint64_t trials,
                                             uint64_t seed) {
  if (trials < 1) fail(ErrorKind::InvalidArgument, "trials >= 1");
  StepCache cache(cs);
  std::map<std::pair<int, int>, RationalSampler> samplers;
  std::vector<uint64_t> uncoupled(t_max, 0);
  for (uint64_t j = 0; j < trials; ++j) {
    CounterRng rng(seed, j);
    int x = x0, y = y0;
    for (int t = 0; t < t_max; ++t) {
      if (x != y) {
        auto key = std::make_pair(x, y);
        const auto& outs = cache.get(x, y);
        auto it = samplers.find(key);
        if (it == samplers.end()) {
          RatVec probs;
          for (const auto& o : outs) probs.push_back(o.p);
          it = samplers.emplace(key, RationalSampler(probs)).first;
        }
        const auto& o = outs[it->second.sample(rng)];
        x = o.x2;
        y = o.y2;
      }
      if (x != y) ++uncoupled[t];
    }
  }
  CoalescenceCurve curve;
  curve.trials = trials;
  for (int t = 0; t < t_max; ++t) {
    double p = static_cast<double>(uncoupled[t]) / trials;
    curve.frac_uncoupled.push_back(p);
    curve.halfwidth.push_back(2.5758293035489004 * std::sqrt(p * (1 - p) / trials));
  }
  return curve;
}

// One-sided upper confidence bound for a binomial proportion (exact
// Clopper-Pearson via bisection. The normal "p + z sigma" degenerates at
// zero counts; this is the same check without the degeneracy.)
inline double binomial_upper_bound(uint64_t count, uint64_t trials, double conf) {
  if (count >= trials) return 1.0;
  double lo = static_cast<double>(count) / trials, hi = 1.0;
  auto tail_log = [&](double p) {
    // log Pr[Bin(trials, p) <= count]
    double logp = std::log(p), log1p = std::log1p(-p);
    double logc = 0;  // log C(trials, i) built incrementally
    double best = -std::numeric_limits<double>::infinity();
    double acc = 0;
    std::vector<double> terms;
    for (uint64_t i = 0; i <= count; ++i) {
      if (i > 0) logc += std::log(static_cast<double>(trials - i + 1)) -
                         std::log(static_cast<double>(i));
      terms.push_back(logc + i * logp + (trials - i) * log1p);
      best = std::max(best, terms.back());
    }
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
  };
  double target = std::log(1.0 - conf);
  for (int it = 0; it < 100; ++it) {
    double mid = (lo + hi) / 2;
    if (tail_log(mid) > target) lo = mid; else hi = mid;
  }
  return hi;
}

// ---------------------------------------------------------------------------
// Builtin couplings for the zoo models.
// ---------------------------------------------------------------------------

namespace coupling_detail {

// Bernoulli-Laplace: shared (i, j) with the order-isomorphism bijection
// between X\Y and Y\X.
inline CouplingStrategy bl_coupling(const ZooModel& model) {
  CouplingStrategy cs;
  cs.chain = &model.chain;
  cs.name = "bernoulli_laplace";
  const ZooModel* mp = &model;
  cs.step = [mp](int xi, int yi) {
    const Chain& c = mp->chain;
    if (xi == yi) return diagonal_law(c, xi);
    int n = mp->spec.n, k = mp->spec.k;
    uint64_t x = mp->codes[xi], y = mp->codes[yi];
    std::vector<int> s_items, t_items;  // X\Y sorted, Y\X sorted
    for (int i = 0; i < n; ++i) {
      if ((x >> i & 1) && !(y >> i & 1)) s_items.push_back(i);
      if ((y >> i & 1) && !(x >> i & 1)) t_items.push_back(i);
    }
    std::vector<int> g(n, -1), ginv(n, -1);
    for (size_t a = 0; a < s_items.size(); ++a) {
      g[s_items[a]] = t_items[a];
      ginv[t_items[a]] = s_items[a];
    }
    std::vector<JointOutcome> out;
    out.push_back({Rat(1, 2), xi, yi});  // r = 0
    Rat move(1, 2l * k * (n - k));
    for (int i = 0; i < n; ++i) {
      if (!(x >> i & 1)) continue;
      for (int j = 0; j < n; ++j) {
        if (x >> j & 1) continue;
        int i2 = (y >> i & 1) ? i : g[i];
        int j2 = !(y >> j & 1) ? j : ginv[j];
        uint64_t x2 = (x & ~(1ull << i)) | (1ull << j);
        uint64_t y2 = (y & ~(1ull << i2)) | (1ull << j2);
        out.push_back({move, mp->state_of(x2), mp->state_of(y2)});
      }
    }
    merge_outcomes(out);
    return out;
  };
  return cs;
}

// Glauber: kappa_{X,v} is the law of the next colour at v. Tokens are
// (v, c0, same/switch, c1) with exact probabilities.
inline RatVec glauber_kappa(const ZooModel& m, uint64_t code, int v) {
  int k = m.spec.k;
  auto adj = m.spec.graph.adjacency();
  std::vector<char> neighbour_colour(k, 0);
  for (int w : adj[v]) neighbour_colour[zoo_detail::coloring_get(code, w, k)] = 1;
  int blocked = 0;
  for (int c = 0; c < k; ++c) blocked += neighbour_colour[c];
  RatVec kappa(k, Rat(0));
  for (int c = 0; c < k; ++c)
    if (!neighbour_colour[c]) kappa[c] += Rat(1, k);
  kappa[zoo_detail::coloring_get(code, v, k)] += rat(blocked, k);
  return kappa;
}

inline PathCouplingSpec glauber_path_coupling(const ZooModel& model) {
  PathCouplingSpec pcs;
  pcs.chain = &model.chain;
  pcs.name = "glauber";
  const ZooModel* mp = &model;
  int n = model.chain.size();
  int nv = model.spec.graph.n, k = model.spec.k;
  pcs.adjacency.assign(n, {});
  for (int xi = 0; xi < n; ++xi) {
    uint64_t code = model.codes[xi];
    for (int v = 0; v < nv; ++v)
      for (int c = 0; c < k; ++c) {
        uint64_t other = zoo_detail::coloring_set(code, v, k, c);
        if (other != code)
          pcs.adjacency[xi].emplace_back(model.state_of(other), 1);
      }
    std::sort(pcs.adjacency[xi].begin(), pcs.adjacency[xi].end());
  }
  pcs.per_edge.chain = &model.chain;
  pcs.per_edge.name = "glauber_edge";
  pcs.per_edge.step = [mp](int xi, int yi) {
    const Chain& c = mp->chain;
    if (xi == yi) return diagonal_law(c, xi);
    int nv = mp->spec.graph.n, k = mp->spec.k;
    uint64_t x = mp->codes[xi], y = mp->codes[yi];
    const RatVec& j_dist = *mp->spec.vertex_dist;
    std::vector<JointOutcome> out;
    for (int v = 0; v < nv; ++v) {
      RatVec kx = glauber_kappa(*mp, x, v);
      RatVec ky = glauber_kappa(*mp, y, v);
      Rat tv = 0;  // ||kappa_Y - kappa_X||
      for (int cc = 0; cc < k; ++cc)
        if (ky[cc] > kx[cc]) tv += ky[cc] - kx[cc];
      for (int c0 = 0; c0 < k; ++c0) {
        if (kx[c0] == 0) continue;
        Rat keep = ky[c0] >= kx[c0] ? kx[c0] : ky[c0];  // kx * min(1, ky/kx)
        int x2 = mp->state_of(zoo_detail::coloring_set(x, v, k, c0));
        if (keep > 0)
          out.push_back({j_dist[v] * keep,
                         x2, mp->state_of(zoo_detail::coloring_set(y, v, k, c0))});
        Rat sw = kx[c0] - keep;
        if (sw > 0) {
          for (int c1 = 0; c1 < k; ++c1) {
            if (ky[c1] <= kx[c1]) continue;
            Rat gamma = (ky[c1] - kx[c1]) / tv;
            out.push_back({j_dist[v] * sw * gamma, x2,
                           mp->state_of(zoo_detail::coloring_set(y, v, k, c1))});
          }
        }
      }
    }
    merge_outcomes(out);
    return out;
  };
  finish_path_coupling(pcs);
  return pcs;
}

// Bounded subsets: delta(X,Y) = |X xor Y| + ||X|-|Y||, coupled on delta = 2
// pairs with the fire-exactly-one trick in the nested case.
inline PathCouplingSpec bounded_subsets_path_coupling(const ZooModel& model) {
  PathCouplingSpec pcs;
  pcs.chain = &model.chain;
  pcs.name = "bounded_subsets";
  const ZooModel* mp = &model;
  int nstates = model.chain.size();
  int n = model.spec.n, k = model.spec.k;
  auto delta_f = [&](uint64_t a, uint64_t b) {
    return __builtin_popcountll(a ^ b) +
           std::abs(__builtin_popcountll(a) - __builtin_popcountll(b));
  };
  pcs.adjacency.assign(nstates, {});
  for (int i = 0; i < nstates; ++i)
    for (int j = 0; j < nstates; ++j)
      if (i != j && delta_f(model.codes[i], model.codes[j]) == 2)
        pcs.adjacency[i].emplace_back(j, 2);
  auto apply = [n, k](uint64_t s, int r, int i) {
    if (r == 0) return s;
    uint64_t next = s ^ (1ull << i);
    if ((s >> i & 1) || __builtin_popcountll(next) <= k) return next;
    return s;
  };
  pcs.per_edge.chain = &model.chain;
  pcs.per_edge.name = "bounded_subsets_edge";
  pcs.per_edge.step = [mp, apply](int xi, int yi) {
    const Chain& c = mp->chain;
    if (xi == yi) return diagonal_law(c, xi);
    int n = mp->spec.n;
    uint64_t x = mp->codes[xi], y = mp->codes[yi];
    std::vector<JointOutcome> out;
    Rat tok(1, 2l * n);
    uint64_t sym = x ^ y;
    if ((sym & x) == sym || (sym & y) == sym) {
      // case (i): one contains the other, |X xor Y| = 1
      int p = __builtin_ctzll(sym);
      for (int r = 0; r < 2; ++r)
        for (int i = 0; i < n; ++i) {
          int ry = (i == p) ? 1 - r : r;
          out.push_back({tok, mp->state_of(apply(x, r, i)),
                         mp->state_of(apply(y, ry, i))});
        }
    } else {
      // case (ii): equal sizes, X = S+p, Y = S+q
      int p = __builtin_ctzll(sym & x);
      int q = __builtin_ctzll(sym & y);
      for (int r = 0; r < 2; ++r)
        for (int i = 0; i < n; ++i) {
          int j = i == p ? q : (i == q ? p : i);
          out.push_back({tok, mp->state_of(apply(x, r, i)),
                         mp->state_of(apply(y, r, j))});
        }
    }
    merge_outcomes(out);
    return out;
  };
  finish_path_coupling(pcs);
  return pcs;
}

// Linear extensions: transposition adjacency weighted j - i; adjacent pairs
// share (p, r) except the anti-synchronized boundary case.
inline PathCouplingSpec linext_path_coupling(const ZooModel& model) {
  PathCouplingSpec pcs;
  pcs.chain = &model.chain;
  pcs.name = "linear_extensions";
  const ZooModel* mp = &model;
  int nstates = model.chain.size();
  int n = model.spec.n;
  pcs.adjacency.assign(nstates, {});
  for (int gi = 0; gi < nstates; ++gi) {
    auto g = zoo_detail::unpack_perm(model.codes[gi], n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        auto h = g;
        std::swap(h[i], h[j]);
        auto it = mp->index.find(zoo_detail::pack_perm(h));
        if (it != mp->index.end())
          pcs.adjacency[gi].emplace_back(it->second, j - i);
      }
    std::sort(pcs.adjacency[gi].begin(), pcs.adjacency[gi].end());
  }
  pcs.per_edge.chain = &model.chain;
  pcs.per_edge.name = "linear_extensions_edge";
  pcs.per_edge.step = [mp](int gi, int hi) {
    const Chain& c = mp->chain;
    if (gi == hi) return diagonal_law(c, gi);
    int n = mp->spec.n;
    auto g = zoo_detail::unpack_perm(mp->codes[gi], n);
    auto h = zoo_detail::unpack_perm(mp->codes[hi], n);
    int i = -1, j = -1;
    for (int p = 0; p < n; ++p)
      if (g[p] != h[p]) {
        if (i < 0) i = p;
        else j = p;
      }
    if (j < 0 || g[i] != h[j] || g[j] != h[i])
      fail(ErrorKind::InvalidArgument, "states are not transposition-adjacent");
    RatVec jd = zoo_detail::linext_position_dist(n);
    auto apply = [mp, n](std::vector<int> w, int r, int p) {
      if (r == 1) {
        std::swap(w[p - 1], w[p]);
        auto it = mp->index.find(zoo_detail::pack_perm(w));
        if (it != mp->index.end()) return it->second;
        std::swap(w[p - 1], w[p]);
      }
      return mp->index.at(zoo_detail::pack_perm(w));
    };
    std::vector<JointOutcome> out;
    // positions here are 0-based; the chain's p runs over 1..n-1 (1-based)
    for (int p = 1; p <= n - 1; ++p) {
      Rat tok = jd[p] / 2;
      if (tok == 0) continue;
      for (int r = 0; r < 2; ++r) {
        int rg = r;
        int rh = (j - i == 1 && p - 1 == i) ? 1 - r : r;
        out.push_back({tok, apply(g, rg, p), apply(h, rh, p)});
      }
    }
    merge_outcomes(out);
    return out;
  };
  finish_path_coupling(pcs);
  return pcs;
}

}  // namespace coupling_detail

struct BuiltinCoupling {
  std::optional<CouplingStrategy> full;     // Bernoulli-Laplace
  std::optional<PathCouplingSpec> path;     // Glauber, bounded subsets, linext
};

inline BuiltinCoupling builtin_coupling(const ZooModel& model) {
  BuiltinCoupling bc;
  switch (model.spec.id) {
    case ModelId::BernoulliLaplace:
      bc.full = coupling_detail::bl_coupling(model);
      return bc;
    case ModelId::GlauberColoring:
      bc.path = coupling_detail::glauber_path_coupling(model);
      return bc;
    case ModelId::BoundedSubsets:
      bc.path = coupling_detail::bounded_subsets_path_coupling(model);
      return bc;
    case ModelId::LinearExtensions:
      bc.path = coupling_detail::linext_path_coupling(model);
      return bc;
    default:
      fail(ErrorKind::NoBuiltinCoupling,
           std::string("no builtin coupling for ") + model_name(model.spec.id));
  }
}

// Synchronous coupling for the JS chain: both sides consume the same (r, e).
inline CouplingStrategy synchronous_js_coupling(const ZooModel& model) {
  if (model.spec.id != ModelId::JsMatchings)
    fail(ErrorKind::NoBuiltinCoupling, "synchronous coupling is JS-specific");
  CouplingStrategy cs;
  cs.chain = &model.chain;
  cs.name = "js_synchronous";
  const ZooModel* mp = &model;
  cs.step = [mp](int xi, int yi) {
    const Graph& g = mp->spec.graph;
    int s = mp->spec.n;
    int m = static_cast<int>(g.edges.size());
    std::vector<JointOutcome> out;
    out.push_back({Rat(1, 2), xi, yi});
    Rat tok(1, 2l * m);
    for (int e = 0; e < m; ++e) {
      uint64_t x2 = zoo_detail::js_move(g, s, mp->codes[xi], 1, e);
      uint64_t y2 = zoo_detail::js_move(g, s, mp->codes[yi], 1, e);
      out.push_back({tok, mp->state_of(x2), mp->state_of(y2)});
    }
    coupling_detail::merge_outcomes(out);
    return out;
  };
  return cs;
}

// ---------------------------------------------------------------------------
// Kumar-Ramesh layer / drift analysis on the JS matchings chain.
// ---------------------------------------------------------------------------

struct LayerRow {
  int layer = 0;         // i = |M xor N|
  bool top = false;      // true: same unmatched vertices; false: bottom class
  long pairs = 0;
  // exact per-class probability mass of one joint step, averaged over pairs
  Rat mass_left, mass_lateral, mass_right;
  Rat exact_drift;       // E[dist' - dist]
  // Monte Carlo frequencies (sampled starts, one step each)
  double emp_left = 0, emp_lateral = 0, emp_right = 0;
  // formula quantities, reported not asserted
  double p_formula = 0, q_formula = 0;
};

struct LayerReport {
  std::vector<LayerRow> rows;
  int max_distance_change = 0;
};

inline LayerReport kr_layer_drift(const ZooModel& model, const CouplingStrategy& cs,
                                  double alpha, uint64_t trials, uint64_t seed) {
  if (model.spec.id != ModelId::JsMatchings)
    fail(ErrorKind::NoBuiltinCoupling, "layer analysis is JS-specific");
  const Graph& g = model.spec.graph;
  int nstates = model.chain.size();
  long m = static_cast<long>(g.edges.size());
  int nhalf = model.spec.n;  // perfect matching size

  auto unmatched = [&](uint64_t mask) {
    uint64_t all = 0;
    for (int v = 0; v < g.n; ++v) all |= 1ull << v;
    return all & ~zoo_detail::matched_vertices(g, mask);
  };

  std::map<std::pair<int, int>, LayerRow> rows;  // (layer, top)
  std::map<std::pair<int, int>, std::vector<std::pair<int, int>>> members;
  LayerReport rep;

  for (int xi = 0; xi < nstates; ++xi)
    for (int yi = 0; yi < nstates; ++yi) {
      int dist = __builtin_popcountll(model.codes[xi] ^ model.codes[yi]);
      bool top = unmatched(model.codes[xi]) == unmatched(model.codes[yi]);
      auto key = std::make_pair(dist, top ? 1 : 0);
      auto& row = rows[key];
      row.layer = dist;
      row.top = top;
      ++row.pairs;
      members[key].emplace_back(xi, yi);
      Rat mass_total = 0;
      for (const auto& o : cs.step(xi, yi)) {
        int d2 = __builtin_popcountll(model.codes[o.x2] ^ model.codes[o.y2]);
        int change = d2 - dist;
        rep.max_distance_change =
            std::max(rep.max_distance_change, std::abs(change));
        if (std::abs(change) > 4)
          fail(ErrorKind::DistanceJumpViolation,
               "|M xor N| jumped by " + std::to_string(change) + " at pair (" +
                   model.chain.states[xi] + "," + model.chain.states[yi] + ")");
        if (change < 0) row.mass_left += o.p;
        else if (change == 0) row.mass_lateral += o.p;
        else row.mass_right += o.p;
        row.exact_drift += o.p * change;
        mass_total += o.p;
      }
      if (mass_total != 1)
        fail(ErrorKind::NotFaithful, "joint step mass " + rat_str(mass_total));
    }

  StepCache cache(cs);
  std::map<std::pair<int, int>, RationalSampler> samplers;
  for (auto& [key, row] : rows) {
    Rat np(row.pairs);
    row.mass_left /= np;
    row.mass_lateral /= np;
    row.mass_right /= np;
    row.exact_drift /= np;
    row.p_formula = (alpha * nhalf / 2.0 - row.layer - 2) / (2.0 * m);
    row.q_formula = 5.0 * (row.layer + 1) / (2.0 * m);
    // empirical one-step tallies
    const auto& mem = members[key];
    uint64_t stream = static_cast<uint64_t>(row.layer) * 2 + (row.top ? 1 : 0);
    CounterRng rng(seed, stream);
    uint64_t l = 0, lat = 0, r = 0;
    for (uint64_t tr = 0; tr < trials; ++tr) {
      auto pr = mem[rng.uniform_below(mem.size())];
      auto [xi, yi] = pr;
      const auto& outs = cache.get(xi, yi);
      auto sit = samplers.find(pr);
      if (sit == samplers.end()) {
        RatVec probs;
        for (const auto& o : outs) probs.push_back(o.p);
        sit = samplers.emplace(pr, RationalSampler(probs)).first;
      }
      const auto& o = outs[sit->second.sample(rng)];
      int before = __builtin_popcountll(model.codes[xi] ^ model.codes[yi]);
      int after = __builtin_popcountll(model.codes[o.x2] ^ model.codes[o.y2]);
      if (after < before) ++l;
      else if (after == before) ++lat;
      else ++r;
    }
    if (trials > 0) {
      row.emp_left = static_cast<double>(l) / trials;
      row.emp_lateral = static_cast<double>(lat) / trials;
      row.emp_right = static_cast<double>(r) / trials;
    }
    rep.rows.push_back(row);
  }
  std::sort(rep.rows.begin(), rep.rows.end(), [](const LayerRow& a, const LayerRow& b) {
    return std::tie(a.layer, a.top) < std::tie(b.layer, b.top);
  });
  return rep;
}

// Pr[T <= t | Z_0] <= exp(-M Z0 / Delta^2) + t exp(-M (R - Delta) / Delta^2).
inline double submartingale_bound(double z0, double delta, double m, double r,
                                  double t) {
  if (!(delta > 0 && m > 0 && r > 0 && t >= 0))
    fail(ErrorKind::InvalidArgument, "submartingale parameters must be positive");
  return std::exp(-m * z0 / (delta * delta)) +
         t * std::exp(-m * (r - delta) / (delta * delta));
}

inline std::string coalescence_csv(const CoalescenceCurve& c) {
  std::ostringstream os;
  os.precision(17);
  os << "t,frac_uncoupled,halfwidth\n";
  for (size_t t = 0; t < c.frac_uncoupled.size(); ++t)
    os << (t + 1) << "," << c.frac_uncoupled[t] << "," << c.halfwidth[t] << "\n";
  return os.str();
}

inline std::string layer_csv(const LayerReport& rep) {
  std::ostringstream os;
  os.precision(17);
  os << "layer,class,pairs,mass_left,mass_lateral,mass_right,exact_drift,"
        "emp_left,emp_lateral,emp_right,p_formula,q_formula\n";
  for (const auto& r : rep.rows)
    os << r.layer << "," << (r.top ? "top" : "bot") << "," << r.pairs << ","
       << to_double(r.mass_left) << "," << to_double(r.mass_lateral) << ","
       << to_double(r.mass_right) << "," << to_double(r.exact_drift) << ","
       << r.emp_left << "," << r.emp_lateral << "," << r.emp_right << ","
       << r.p_formula << "," << r.q_formula << "\n";
  return os.str();
}

}  // namespace mixlab
