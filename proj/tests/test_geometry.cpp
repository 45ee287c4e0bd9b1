#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mixlab/geometry.hpp"
#include "mixlab/simplex.hpp"
#include "mixlab/spectral.hpp"
#include "mixlab/zoo.hpp"

using namespace mixlab;

namespace {

Chain two_state_uniform() {
  return build_chain({"0", "1"}, {{0, 0, Rat(1, 2)},
                                  {0, 1, Rat(1, 2)},
                                  {1, 0, Rat(1, 2)},
                                  {1, 1, Rat(1, 2)}});
}

Chain lazy_k4() {
  std::vector<std::string> labels;
  std::vector<Transition> ts;
  for (int i = 0; i < 4; ++i) {
    labels.push_back(std::to_string(i));
    ts.push_back({i, i, Rat(1, 2)});
    for (int j = 0; j < 4; ++j)
      if (j != i) ts.push_back({i, j, Rat(1, 6)});
  }
  return build_chain(labels, ts);
}

ZooModel dumbbell(int n, bool lazy) {
  ModelSpec s;
  s.id = ModelId::Dumbbell;
  s.n = n;
  s.lazy = lazy;
  return build_model(s);
}

// Hand path set for the dumbbell: hub pairs through the first leaf, leaf
// pairs through hub 0, hub-leaf pairs direct.
CanonicalPathSet dumbbell_hand_paths(int n) {
  CanonicalPathSet gamma;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      if (x == y) continue;
      if (x < 2 && y < 2) gamma.paths[{x, y}] = {x, 2, y};
      else if (x < 2 || y < 2) gamma.paths[{x, y}] = {x, y};
      else gamma.paths[{x, y}] = {x, 0, y};
    }
  return gamma;
}

CanonicalPathSet complete_direct_paths(const Chain& c) {
  CanonicalPathSet gamma;
  for (int x = 0; x < c.size(); ++x)
    for (int y = 0; y < c.size(); ++y)
      if (x != y) gamma.paths[{x, y}] = {x, y};
  return gamma;
}

}  // namespace

TEST_CASE("simplex solves a tiny LP with correct duals") {
  Simplex lp;
  int x1 = lp.add_var(1.0);
  int x2 = lp.add_var(2.0);
  int r1 = lp.add_row(Simplex::Sense::GE, 3.0);
  lp.set_coeff(r1, x1, 1.0);
  lp.set_coeff(r1, x2, 1.0);
  int r2 = lp.add_row(Simplex::Sense::LE, 2.0);
  lp.set_coeff(r2, x1, 1.0);
  auto sol = lp.solve();
  CHECK(sol.objective == doctest::Approx(4.0).epsilon(1e-9));
  CHECK(sol.x[x1] == doctest::Approx(2.0));
  CHECK(sol.x[x2] == doctest::Approx(1.0));
  CHECK(sol.duals[r1] == doctest::Approx(2.0));
  CHECK(sol.duals[r2] == doctest::Approx(-1.0));
}

TEST_CASE("conductance of tiny chains") {
  auto c2 = two_state_uniform();
  auto r = conductance_exact(c2);
  CHECK(r.phi == Rat(1, 2));
  CHECK(r.witness == std::vector<int>{0});

  auto k4 = lazy_k4();
  auto rk = conductance_exact(k4);
  CHECK(rk.phi == Rat(1, 3));
  CHECK(rk.witness.size() == 2);
}

TEST_CASE("conductance of the dumbbell walk") {
  // without holding probability: Phi = 1/2 at even n
  auto nl = dumbbell(10, false);
  auto r = conductance_exact(nl.chain);
  CHECK(r.phi == Rat(1, 2));
  // the lazy variant halves every Q(e), hence exactly half the conductance
  auto lz = dumbbell(10, true);
  auto rl = conductance_exact(lz.chain);
  CHECK(rl.phi == Rat(1, 4));
}

TEST_CASE("cheeger sandwich") {
  auto k4 = lazy_k4();
  auto rep = cheeger_check(k4);
  CHECK(rep.phi == Rat(1, 3));
  CHECK(rep.lambda1 == doctest::Approx(1.0 / 3).epsilon(1e-9));
  CHECK(rep.slack_left == doctest::Approx(0.0).epsilon(1e-9));  // left side tight

  auto nl = dumbbell(10, false);
  auto repd = cheeger_check(nl.chain);
  CHECK(to_double(repd.phi) == doctest::Approx(0.5));
  CHECK(repd.lambda1 <= 7.0 / 8 + 1e-9);

  auto c2 = two_state_uniform();
  auto rep2 = cheeger_check(c2);
  CHECK(rep2.lambda1 == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("path congestion on direct paths") {
  auto c2 = two_state_uniform();
  auto rep = path_congestion(c2, complete_direct_paths(c2));
  CHECK(rep.rho == Rat(1));
  CHECK(rep.ell == 1);

  auto k4 = lazy_k4();
  auto repk = path_congestion(k4, complete_direct_paths(k4));
  CHECK(repk.rho == rat(3, 2));  // (1/16)/(1/24)
  CHECK(repk.ell == 1);
  auto bounds = congestion_gap_bounds(repk);
  CHECK(bounds.lambda_ub_length == doctest::Approx(1.0 / 3).epsilon(1e-12));
  auto s = eigen_spectrum(k4);
  CHECK(s.eigenvalues[1] == doctest::Approx(bounds.lambda_ub_length).epsilon(1e-9));
}

TEST_CASE("dumbbell path congestion is forced above 2") {
  auto nl = dumbbell(10, false);
  auto gamma = dumbbell_hand_paths(10);
  auto rep = path_congestion(nl.chain, gamma);
  CHECK(rep.rho == rat(27, 8));
  CHECK(rep.rho >= 2);
  // the hub pair alone forces rho >= 2 whatever middle vertex is chosen
  for (int mid = 2; mid < 10; ++mid) {
    CanonicalPathSet g2 = gamma;
    g2.paths[{0, 1}] = {0, mid, 1};
    g2.paths[{1, 0}] = {1, mid, 0};
    auto r2 = path_congestion(nl.chain, g2);
    CHECK(r2.rho >= 2);
  }
}

TEST_CASE("path congestion validates the path set") {
  auto c2 = two_state_uniform();
  CanonicalPathSet missing;
  CHECK_THROWS_AS(path_congestion(c2, missing), Error);
  CanonicalPathSet broken = complete_direct_paths(c2);
  broken.paths[{0, 1}] = {0, 0, 1};
  CHECK_THROWS_AS(path_congestion(c2, broken), Error);
}

TEST_CASE("flow congestion agrees with path congestion on unit flows") {
  auto k4 = lazy_k4();
  auto gamma = complete_direct_paths(k4);
  auto rep_p = path_congestion(k4, gamma);
  auto rep_f = flow_congestion(k4, as_flow(gamma));
  CHECK(rep_p.rho == rep_f.rho);
  CHECK(rep_p.rho_bar == rep_f.rho_bar);
  CHECK(rep_p.ell == rep_f.ell);
}

TEST_CASE("spread flow on the dumbbell beats every single-path set") {
  auto nl = dumbbell(10, false);
  FractionalFlow flow;
  int n = 10;
  for (int x = 0; x < n; ++x)
    for (int y = 0; y < n; ++y) {
      if (x == y) continue;
      auto& routes = flow.routes[{x, y}];
      if (x < 2 && y < 2) {
        for (int mid = 2; mid < n; ++mid)
          routes.push_back({{x, mid, y}, Rat(1, 8)});
      } else if (x < 2 || y < 2) {
        routes.push_back({{x, y}, Rat(1)});
      } else {
        routes.push_back({{x, 0, y}, Rat(1)});
      }
    }
  auto rep = flow_congestion(nl.chain, flow);
  CHECK(rep.rho == rat(13, 8));  // golden: spread hub demand over all leaves
  // any canonical path set pays at least 2 on the hub pair's first edge
  CHECK(rep.rho < 2);
}

TEST_CASE("flow congestion rejects bad weights") {
  auto c2 = two_state_uniform();
  FractionalFlow flow;
  flow.routes[{0, 1}].push_back({{0, 1}, Rat(1, 2)});
  flow.routes[{1, 0}].push_back({{1, 0}, Rat(1)});
  CHECK_THROWS_AS(flow_congestion(c2, flow), Error);
}

TEST_CASE("resistance of the two-state chain") {
  auto c2 = two_state_uniform();
  auto res = resistance_min(c2, ResistanceMode::ExactLp);
  CHECK(res.r == doctest::Approx(1.0).epsilon(1e-9));
  REQUIRE(res.flow.routes.count({0, 1}) == 1);
  CHECK(res.flow.routes.at({0, 1}).size() == 1);
}

TEST_CASE("resistance of K_{2,4}: the LP value and its certificates") {
  auto m = dumbbell(6, true);
  auto res = resistance_min(m.chain, ResistanceMode::ExactLp);
  CHECK(res.r == doctest::Approx(2.25).epsilon(1e-7));  // golden 9/4

  // flow invariants hold and R(f) matches the reported optimum
  auto rep = flow_congestion(m.chain, res.flow);
  CHECK(rep.rho_d() == doctest::Approx(res.r).epsilon(1e-6));

  // Phi >= 1/(2R) and the quadratic eigenvalue bound hold
  auto cond = conductance_exact(m.chain);
  CHECK(to_double(cond.phi) >= 1.0 / (2 * res.r) - 1e-9);
  auto s = eigen_spectrum(m.chain);
  CHECK(s.eigenvalues[1] <= 1.0 - 1.0 / (8 * res.r * res.r) + 1e-9);

  // R is below the congestion of the natural single-path sets
  auto rep_hand = path_congestion(m.chain, dumbbell_hand_paths(6));
  CHECK(res.r <= to_double(rep_hand.rho) + 1e-9);
}

TEST_CASE("column generation agrees with the arc LP") {
  auto k4 = lazy_k4();
  auto el = geo_detail::move_edge_list(k4);
  auto arc = geo_detail::resistance_arc_lp(k4, el);
  auto cg = geo_detail::resistance_column_generation(k4, el);
  CHECK(arc.r == doctest::Approx(cg.r).epsilon(1e-7));

  auto m6 = dumbbell(6, true);
  auto el6 = geo_detail::move_edge_list(m6.chain);
  auto arc6 = geo_detail::resistance_arc_lp(m6.chain, el6);
  auto cg6 = geo_detail::resistance_column_generation(m6.chain, el6);
  CHECK(arc6.r == doctest::Approx(cg6.r).epsilon(1e-7));
}

TEST_CASE("approx resistance certifies within one percent") {
  for (bool use_k4 : {true, false}) {
    Chain c = use_k4 ? lazy_k4() : dumbbell(6, true).chain;
    auto exact = resistance_min(c, ResistanceMode::ExactLp);
    auto approx = resistance_min(c, ResistanceMode::Approx);
    CHECK(approx.r >= exact.r - 1e-9);          // certificate side
    CHECK(approx.r <= 1.01 * exact.r + 1e-12);  // 1% relative accuracy
    auto rep = flow_congestion(c, approx.flow);
    CHECK(rep.rho_d() == doctest::Approx(approx.r).epsilon(1e-6));
  }
}

TEST_CASE("trajectory flow on the two-state chain") {
  auto c2 = two_state_uniform();
  auto tf = flow_from_trajectories(c2, 1, true);
  CHECK(tf.t == 2);
  CHECK(tf.kl_min == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(tf.r_congestion <= 16.0 + 1e-9);
  REQUIRE(tf.flow);
  auto rep = flow_congestion(c2, *tf.flow);
  CHECK(rep.ell <= 2);
}

TEST_CASE("trajectory flow satisfies R <= 16 tau on the lazy K4") {
  auto k4 = lazy_k4();
  uint64_t tau = 0;
  for (int x = 0; x < 4; ++x) tau = std::max(tau, exact_mixing_time(k4, x, 0.25));
  auto tf = flow_from_trajectories(k4, tau, true);
  CHECK(tf.kl_min >= 0.125 - 1e-12);
  CHECK(tf.r_congestion <= 16.0 * tau + 1e-9);
  REQUIRE(tf.flow);
  for (const auto& [pair, routes] : tf.flow->routes) {
    Rat sum = 0;
    for (const auto& r : routes) {
      CHECK(static_cast<uint64_t>(r.vertices.size()) - 1 <= tf.t);
      sum += r.weight;
    }
    CHECK(sum == 1);
  }
}

TEST_CASE("trajectory flow materializes on the Bernoulli-Laplace chain") {
  ModelSpec s;
  s.id = ModelId::BernoulliLaplace;
  s.n = 4;
  s.k = 2;
  auto m = build_model(s);
  uint64_t tau = 0;
  for (int x = 0; x < m.chain.size(); ++x)
    tau = std::max(tau, exact_mixing_time(m.chain, x, 0.25));
  REQUIRE(tau == 2);
  auto tf = flow_from_trajectories(m.chain, tau, true);
  CHECK(tf.r_congestion <= 16.0 * tau + 1e-9);
  REQUIRE(tf.flow);
  // raw trajectories have length exactly 2 tau; the stored paths are their
  // loop erasures, valid as a fractional flow
  auto rep = flow_congestion(m.chain, *tf.flow);
  CHECK(rep.ell <= static_cast<int>(tf.t));
}

TEST_CASE("trajectory flow materialization caps") {
  auto c2 = two_state_uniform();
  CHECK_THROWS_AS(flow_from_trajectories(c2, 4, true), Error);  // t = 8 > 6
  auto tf = flow_from_trajectories(c2, 4, false);               // loads only
  CHECK(tf.r_congestion <= 64.0 + 1e-9);
}

TEST_CASE("an undersized tau trips the ratio check") {
  // at t = 2 states three moves apart are unreachable, so P^t(x,y) = 0
  ModelSpec s;
  s.id = ModelId::BoundedSubsets;
  s.n = 6;
  s.k = 3;
  auto m = build_model(s);
  bool threw = false;
  try {
    flow_from_trajectories(m.chain, 1, false);
  } catch (const Error& e) {
    threw = true;
    CHECK(e.kind() == ErrorKind::KLViolation);
  }
  CHECK(threw);
}

TEST_CASE("conductance enumeration cap") {
  std::vector<std::string> labels;
  std::vector<Transition> ts;
  int n = 25;
  for (int i = 0; i < n; ++i) {
    labels.push_back(std::to_string(i));
    ts.push_back({i, i, Rat(1, 2)});
    ts.push_back({i, (i + 1) % n, Rat(1, 4)});
    ts.push_back({i, (i + n - 1) % n, Rat(1, 4)});
  }
  auto big = build_chain(labels, ts);
  CHECK_THROWS_AS(conductance_exact(big), Error);
}

TEST_CASE("round_flow on a single-path flow returns the input paths") {
  auto k4 = lazy_k4();
  auto gamma = complete_direct_paths(k4);
  auto rounded = round_flow(k4, as_flow(gamma), 7);
  CHECK(rounded.gamma.paths == gamma.paths);
  CHECK(rounded.report.rho == rat(3, 2));
}

TEST_CASE("round_flow on the dumbbell never evades the hub obstruction") {
  auto nl = dumbbell(10, false);
  FractionalFlow flow;
  for (int x = 0; x < 10; ++x)
    for (int y = 0; y < 10; ++y) {
      if (x == y) continue;
      auto& routes = flow.routes[{x, y}];
      if (x < 2 && y < 2) {
        for (int mid = 2; mid < 10; ++mid)
          routes.push_back({{x, mid, y}, Rat(1, 8)});
      } else if (x < 2 || y < 2) {
        routes.push_back({{x, y}, Rat(1)});
      } else {
        for (int hub = 0; hub < 2; ++hub)
          routes.push_back({{x, hub, y}, Rat(1, 2)});
      }
    }
  Rat min_rho(1000);
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto rounded = round_flow(nl.chain, flow, seed);
    if (rounded.report.rho < min_rho) min_rho = rounded.report.rho;
  }
  CHECK(min_rho >= 2);
}

TEST_CASE("flow dump round trip") {
  auto k4 = lazy_k4();
  auto res = resistance_min(k4, ResistanceMode::ExactLp);
  std::ostringstream os;
  write_flow(os, res.flow);
  std::istringstream is(os.str());
  auto flow2 = parse_flow_stream(is);
  auto r1 = flow_congestion(k4, res.flow);
  auto r2 = flow_congestion(k4, flow2);
  CHECK(r1.rho == r2.rho);
}

TEST_CASE("congestion gap bounds formulas") {
  CongestionReport rep;
  rep.rho = Rat(1);
  rep.rho_bar = Rat(1);
  rep.ell = 1;
  auto b = congestion_gap_bounds(rep);
  CHECK(b.phi_lb == doctest::Approx(0.5));
  CHECK(b.lambda_ub_quadratic == doctest::Approx(7.0 / 8));
  CHECK(b.lambda_ub_linear == doctest::Approx(0.0));
  CHECK(b.lambda_ub_length == doctest::Approx(0.0));
}

TEST_CASE("max demand and min capacity helpers") {
  auto k4 = lazy_k4();
  CHECK(max_pair_demand(k4) == rat(1, 16));
  CHECK(min_edge_capacity(k4) == rat(1, 24));
}

TEST_CASE("congestion bounds dominate the measured spectrum on zoo chains") {
  std::vector<Chain> chains;
  chains.push_back(lazy_k4());
  chains.push_back(dumbbell(6, true).chain);
  {
    ModelSpec s;
    s.id = ModelId::BoundedSubsets;
    s.n = 4;
    s.k = 2;
    chains.push_back(build_model(s).chain);
  }
  {
    ModelSpec s;
    s.id = ModelId::BernoulliLaplace;
    s.n = 4;
    s.k = 2;
    chains.push_back(build_model(s).chain);
  }
  for (const auto& chain : chains) {
    double lambda1 = eigen_spectrum(chain).eigenvalues[1];
    Rat phi = conductance_exact(chain).phi;
    auto res = resistance_min(chain, ResistanceMode::ExactLp);

    // flow-side bounds: conductance and eigenvalue against R(f) variants
    auto frep = flow_congestion(chain, res.flow);
    CHECK(phi >= 1 / (2 * frep.rho) - rat(1, 1000000000000l));
    CHECK(lambda1 <= 1.0 - 1.0 / frep.rho_bar_d() + 1e-9);
    CHECK(lambda1 <= 1.0 - 1.0 / (frep.rho_d() * frep.ell) + 1e-9);

    // path-side bounds on a rounded canonical path set, exact where stated
    for (uint64_t seed = 0; seed < 5; ++seed) {
      auto rounded = round_flow(chain, res.flow, seed);
      const auto& rep = rounded.report;
      CHECK(phi >= 1 / (2 * rep.rho));  // exact rational comparison
      auto gb = congestion_gap_bounds(rep);
      CHECK(lambda1 <= gb.lambda_ub_quadratic + 1e-9);
      CHECK(lambda1 <= gb.lambda_ub_linear + 1e-9);
      CHECK(lambda1 <= gb.lambda_ub_length + 1e-9);
    }
  }
}
