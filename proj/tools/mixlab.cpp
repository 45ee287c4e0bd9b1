// Command-line front end: parse chains or models, run the analyses, emit
// CSV reports. Exit codes: 0 success, 1 usage error, 2 invariant violation
// or any other analysis failure (details land in error.csv).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mixlab/chain.hpp"
#include "mixlab/coupling.hpp"
#include "mixlab/geometry.hpp"
#include "mixlab/knapsack_flow.hpp"
#include "mixlab/spectral.hpp"
#include "mixlab/zoo.hpp"

using namespace mixlab;

namespace {

struct CommonArgs {
  std::string model;
  std::string chain_file;
  std::string a_list;
  std::string b_value = "1";
  int n = 0;
  int k = 0;
  std::string graph_file;
  std::string poset_file;
  int antichain = 0;
  std::string bipartite;  // "AxB"
  bool no_lazy = false;
  bool uniform_j = false;

  std::string out_dir = ".";
  double eps = 0.25;
  uint64_t seed = 1;
  uint64_t trials = 10000;
  int t_max = 30;
  uint64_t max_states = default_state_cap();
  int subset_cap = 24;
};

void add_model_options(CLI::App* sub, CommonArgs& args) {
  sub->add_option("--model", args.model,
                  "knapsack|bernoulli_laplace|glauber|bounded_subsets|"
                  "linear_extensions|js|dumbbell");
  sub->add_option("--chain", args.chain_file, "chain text file");
  sub->add_option("--a", args.a_list, "knapsack item sizes, e.g. 3/1,2/1,2/1");
  sub->add_option("--b", args.b_value, "knapsack capacity, e.g. 4/1");
  sub->add_option("--n", args.n, "model size parameter");
  sub->add_option("--k", args.k, "model k parameter (subset size, colors)");
  sub->add_option("--graph", args.graph_file, "graph file: lines 'e u v'");
  sub->add_option("--poset", args.poset_file, "poset file: lines 'lt a b'");
  sub->add_option("--antichain", args.antichain, "antichain poset of this size");
  sub->add_option("--bipartite", args.bipartite, "complete bipartite AxB, e.g. 3x3");
  sub->add_flag("--no-lazy", args.no_lazy, "drop the holding probability (dumbbell)");
  sub->add_flag("--uniform-j", args.uniform_j, "uniform vertex distribution (glauber)");
  sub->add_option("--out", args.out_dir, "output directory");
  sub->add_option("--eps", args.eps, "accuracy parameter in (0,1)");
  sub->add_option("--seed", args.seed, "random seed");
  sub->add_option("--trials", args.trials, "Monte Carlo trials");
  sub->add_option("--tmax", args.t_max, "simulation horizon");
  sub->add_option("--max-states", args.max_states,
                  "state cap (env MIXLAB_MAX_STATES)");
  sub->add_option("--subset-cap", args.subset_cap,
                  "largest N for exhaustive conductance");
}

std::pair<int, int> parse_bipartite(const std::string& s) {
  auto xpos = s.find('x');
  if (xpos == std::string::npos)
    fail(ErrorKind::InvalidArgument, "--bipartite wants AxB");
  return {std::stoi(s.substr(0, xpos)), std::stoi(s.substr(xpos + 1))};
}

ModelSpec model_spec_from(const CommonArgs& args) {
  ModelSpec spec;
  if (args.model == "knapsack") {
    spec.id = ModelId::Knapsack;
    std::stringstream ss(args.a_list);
    std::string tok;
    while (std::getline(ss, tok, ',')) spec.a.push_back(parse_rat(tok));
    spec.b = parse_rat(args.b_value);
  } else if (args.model == "bernoulli_laplace") {
    spec.id = ModelId::BernoulliLaplace;
    spec.n = args.n;
    spec.k = args.k;
  } else if (args.model == "glauber" || args.model == "glauber_coloring") {
    spec.id = ModelId::GlauberColoring;
    spec.graph = parse_graph_file(args.graph_file);
    spec.k = args.k;
    if (args.uniform_j) {
      RatVec j(spec.graph.n, rat(1, spec.graph.n));
      spec.vertex_dist = j;
    }
  } else if (args.model == "bounded_subsets") {
    spec.id = ModelId::BoundedSubsets;
    spec.n = args.n;
    spec.k = args.k;
  } else if (args.model == "linear_extensions") {
    spec.id = ModelId::LinearExtensions;
    spec.poset = args.antichain > 0 ? Poset::antichain(args.antichain)
                                    : parse_poset_file(args.poset_file);
  } else if (args.model == "js" || args.model == "js_matchings") {
    spec.id = ModelId::JsMatchings;
    if (!args.bipartite.empty()) {
      auto [l, r] = parse_bipartite(args.bipartite);
      spec.graph = Graph::complete_bipartite(l, r);
    } else {
      spec.graph = parse_graph_file(args.graph_file);
    }
  } else if (args.model == "dumbbell") {
    spec.id = ModelId::Dumbbell;
    spec.n = args.n;
    spec.lazy = !args.no_lazy;
  } else {
    fail(ErrorKind::InvalidArgument, "unknown model '" + args.model + "'");
  }
  return spec;
}

struct LoadedChain {
  Chain chain;
  std::optional<ZooModel> model;
  std::string name;
};

LoadedChain load_chain(const CommonArgs& args) {
  LoadedChain lc;
  if (!args.chain_file.empty()) {
    lc.chain = parse_chain_file(args.chain_file);
    lc.name = args.chain_file;
    return lc;
  }
  if (args.model.empty())
    fail(ErrorKind::InvalidArgument, "need --model or --chain");
  auto spec = model_spec_from(args);
  lc.model = build_model(spec, args.max_states);
  lc.chain = lc.model->chain;
  lc.name = args.model;
  return lc;
}

std::string g_config_line;

std::ofstream open_report(const CommonArgs& args, const std::string& file) {
  std::filesystem::create_directories(args.out_dir);
  std::ofstream out(std::filesystem::path(args.out_dir) / file);
  out.precision(17);
  out << "# " << g_config_line << "\n";
  return out;
}

void write_error(const CommonArgs& args, const Error& e) {
  auto out = open_report(args, "error.csv");
  out << "kind,message\n";
  std::string what = e.what();
  for (char& ch : what)
    if (ch == ',' || ch == '\n') ch = ';';
  out << error_kind_name(e.kind()) << "," << what << "\n";
}

// ---------------------------------------------------------------------------

int cmd_analyze(const CommonArgs& args) {
  auto lc = load_chain(args);
  auto report = open_report(args, "report.csv");
  report << "key,value\n";
  report << "states," << lc.chain.size() << "\n";
  report << "lazy," << (lc.chain.lazy_flag ? 1 : 0) << "\n";
  report << "aperiodic," << (lc.chain.aperiodic ? 1 : 0) << "\n";
  for (int x = 0; x < lc.chain.size(); ++x)
    report << "pi." << lc.chain.states[x] << "," << rat_str(lc.chain.pi[x]) << "\n";
  check_reversibility(lc.chain);
  report << "reversible,1\n";

  bool full_support = true;
  for (const Rat& p : lc.chain.pi)
    if (p == 0) full_support = false;

  std::optional<Spectrum> spec;
  if (full_support) {
    spec = eigen_spectrum(lc.chain);
    auto sout = open_report(args, "spectrum.csv");
    sout << spectrum_csv(*spec);
    report << "lambda1," << spec->eigenvalues[1] << "\n";
    report << "gap," << spec->gap << "\n";
    report << "lambda_max," << spec->lambda_max << "\n";
  }
  if (full_support && lc.chain.size() <= args.subset_cap) {
    auto cond = conductance_exact(lc.chain);
    report << "phi," << rat_str(cond.phi) << "\n";
    report << "phi_float," << to_double(cond.phi) << "\n";
    report << "phi_witness," << subset_to_string(lc.chain, cond.witness) << "\n";
    auto cheeger = cheeger_check(lc.chain, &*spec);
    report << "cheeger_left," << cheeger.left << "\n";
    report << "cheeger_right," << cheeger.right << "\n";
    report << "cheeger_ok,1\n";
  }
  if (spec && lc.chain.aperiodic && lc.chain.irreducible) {
    for (int x = 0; x < lc.chain.size(); ++x) {
      auto gb = gap_mixing_bounds(*spec, lc.chain.pi[x], args.eps);
      report << "tau_upper." << lc.chain.states[x] << "," << gb.upper << "\n";
    }
  }
  return 0;
}

int cmd_congest(const CommonArgs& args, const std::string& gamma_file,
                const std::string& resistance_mode) {
  auto lc = load_chain(args);
  auto report = open_report(args, "congestion.csv");
  if (!gamma_file.empty()) {
    std::ifstream in(gamma_file);
    if (!in) fail(ErrorKind::Parse, "cannot open " + gamma_file);
    auto gamma = parse_paths_stream(in);
    auto rep = path_congestion(lc.chain, gamma);
    report << congestion_csv(rep);
    auto gb = congestion_gap_bounds(rep);
    report << "phi_lb," << gb.phi_lb << "\n";
    report << "lambda_ub_quadratic," << gb.lambda_ub_quadratic << "\n";
    report << "lambda_ub_linear," << gb.lambda_ub_linear << "\n";
    report << "lambda_ub_length," << gb.lambda_ub_length << "\n";
    return 0;
  }
  ResistanceMode mode = resistance_mode == "approx" ? ResistanceMode::Approx
                                                    : ResistanceMode::ExactLp;
  auto res = resistance_min(lc.chain, mode);
  report << "key,value\n";
  report << "resistance," << res.r << "\n";
  report << "lower_bound," << res.lower << "\n";
  auto fout = open_report(args, "flow.txt");
  write_flow(fout, res.flow);
  return 0;
}

int cmd_flow_knapsack(const CommonArgs& args, int h) {
  CommonArgs margs = args;
  margs.model = "knapsack";
  auto spec = model_spec_from(margs);
  auto model = build_model(spec, args.max_states);
  auto flow = build_flow(model, h);
  auto fm = flow_metrics_and_bound(model, flow, args.eps);
  auto report = open_report(args, "metrics.csv");
  report << "key,value\n";
  report << "states," << model.chain.size() << "\n";
  report << "h," << h << "\n";
  report << "c_f," << rat_str(fm.c_f) << "\n";
  report << "l_f," << fm.l_f << "\n";
  report << "tau_bound," << fm.tau_bound << "\n";

  // encoding audit: round trips are checked inside encode_pair; scan for
  // cross-pair tuple collisions as well
  auto inst = knapsack_instance(model);
  long positions = 0;
  std::map<std::tuple<uint64_t, uint64_t, int, int, uint64_t, uint64_t>,
           std::pair<uint64_t, uint64_t>>
      seen;
  long collisions = 0, infeasible_zprime = 0;
  for (const auto& [pair, paths] : flow.paths)
    for (const auto& kp : paths)
      for (uint64_t st : kp.states) {
        ++positions;
        auto enc = encode_pair(inst, h, model.codes[pair.first],
                               model.codes[pair.second], st);
        if (!enc.z_prime_feasible) ++infeasible_zprime;
        auto key = std::make_tuple(st, enc.z_prime, enc.h1, enc.h2, enc.u_mask,
                                   enc.h_prime);
        auto it = seen.find(key);
        auto val =
            std::make_pair(model.codes[pair.first], model.codes[pair.second]);
        if (it == seen.end()) seen.emplace(key, val);
        else if (it->second != val) ++collisions;
      }
  report << "audit_positions," << positions << "\n";
  report << "audit_collisions," << collisions << "\n";
  report << "audit_infeasible_zprime," << infeasible_zprime << "\n";
  auto fout = open_report(args, "flow.txt");
  write_flow(fout, to_fractional_flow(model, flow));
  if (collisions > 0)
    fail(ErrorKind::DecodeMismatch, "encoding collisions detected");
  return 0;
}

int cmd_couple(const CommonArgs& args) {
  auto lc = load_chain(args);
  if (!lc.model) fail(ErrorKind::InvalidArgument, "couple needs --model");
  auto report = open_report(args, "couple.csv");
  report << "key,value\n";
  auto bc = builtin_coupling(*lc.model);
  const Chain& chain = lc.chain;

  int x0 = 0, y0 = 0;
  if (bc.full) {
    verify_faithful(*bc.full);
    report << "faithful,1\n";
    // farthest pair in code-Hamming distance
    int best = -1;
    for (int x = 0; x < chain.size(); ++x)
      for (int y = 0; y < chain.size(); ++y) {
        int d = __builtin_popcountll(lc.model->codes[x] ^ lc.model->codes[y]);
        if (d > best) {
          best = d;
          x0 = x;
          y0 = y;
        }
      }
    auto curve =
        simulate_coalescence(*bc.full, x0, y0, args.t_max, args.trials, args.seed);
    auto cout_ = open_report(args, "coalescence.csv");
    cout_ << coalescence_csv(curve);
  } else {
    verify_faithful(*bc.path);
    report << "faithful,1\n";
    auto contraction = contraction_factor(*bc.path);
    report << "beta," << rat_str(contraction.beta) << "\n";
    report << "beta_float," << to_double(contraction.beta) << "\n";
    report << "diameter," << bc.path->diameter << "\n";
    if (contraction.beta < 1) {
      auto bound = path_coupling_bound(*bc.path, contraction.beta, args.eps);
      report << "tau_bound," << bound << "\n";
    } else {
      report << "tau_bound,NoContraction\n";
    }
    auto ext = extended_coupling(*bc.path);
    long ddiam = 0;
    for (int x = 0; x < chain.size(); ++x)
      for (int y = 0; y < chain.size(); ++y)
        if (bc.path->delta[x][y] > ddiam) {
          ddiam = bc.path->delta[x][y];
          x0 = x;
          y0 = y;
        }
    auto curve =
        simulate_coalescence(ext, x0, y0, args.t_max, args.trials, args.seed);
    auto cout_ = open_report(args, "coalescence.csv");
    cout_ << coalescence_csv(curve);
  }
  report << "sim_start_x," << chain.states[x0] << "\n";
  report << "sim_start_y," << chain.states[y0] << "\n";
  return 0;
}

int cmd_kr(const CommonArgs& args, const std::string& coupling_name, double alpha) {
  CommonArgs margs = args;
  if (margs.model.empty()) margs.model = "js";
  auto spec = model_spec_from(margs);
  auto model = build_model(spec, args.max_states);
  CouplingStrategy cs = coupling_name == "synchronous"
                            ? synchronous_js_coupling(model)
                            : independent_coupling(model.chain);
  auto rep = kr_layer_drift(model, cs, alpha, args.trials, args.seed);
  auto report = open_report(args, "layers.csv");
  report << layer_csv(rep);
  auto summary = open_report(args, "kr.csv");
  summary << "key,value\n";
  summary << "coupling," << cs.name << "\n";
  summary << "max_distance_change," << rep.max_distance_change << "\n";
  return 0;
}

int cmd_compare(const CommonArgs& args) {
  auto lc = load_chain(args);
  auto report = open_report(args, "compare.csv");
  report << "kind,state,value\n";
  std::optional<Spectrum> spec;
  if (lc.chain.irreducible) spec = eigen_spectrum(lc.chain);
  if (lc.chain.aperiodic) {
    for (int x = 0; x < lc.chain.size(); ++x) {
      if (lc.chain.pi[x] == 0) continue;
      uint64_t tau = exact_mixing_time(lc.chain, x, args.eps);
      report << "tau_exact," << lc.chain.states[x] << "," << tau << "\n";
      if (spec) {
        auto gb = gap_mixing_bounds(*spec, lc.chain.pi[x], args.eps);
        report << "tau_spectral_upper," << lc.chain.states[x] << "," << gb.upper
               << "\n";
        report << "tau_spectral_lower," << lc.chain.states[x] << "," << gb.lower
               << "\n";
      }
    }
  }
  if (lc.model) {
    auto tb = theoretical_bounds(lc.model->spec, args.eps);
    for (const auto& b : tb.bounds)
      if (b.applicable) report << "bound_" << b.name << ",*," << b.value << "\n";
    switch (lc.model->spec.id) {
      case ModelId::GlauberColoring:
      case ModelId::BoundedSubsets:
      case ModelId::LinearExtensions: {
        auto bc = builtin_coupling(*lc.model);
        auto contraction = contraction_factor(*bc.path);
        if (contraction.beta < 1)
          report << "bound_path_coupling,*,"
                 << path_coupling_bound(*bc.path, contraction.beta, args.eps)
                 << "\n";
        break;
      }
      case ModelId::Knapsack: {
        auto flow = build_flow(*lc.model, 29);
        auto fm = flow_metrics_and_bound(*lc.model, flow, args.eps);
        report << "bound_flow,*," << fm.tau_bound << "\n";
        break;
      }
      default:
        break;
    }
  }
  if (lc.chain.irreducible && lc.chain.size() <= args.subset_cap &&
      lc.chain.lazy_flag) {
    auto cond = conductance_exact(lc.chain);
    double phi = to_double(cond.phi);
    // tau_x <= 2 Phi^{-2} (ln 1/pi(x) + ln 1/eps) for lazy chains
    for (int x = 0; x < lc.chain.size(); ++x)
      report << "tau_conductance_upper," << lc.chain.states[x] << ","
             << 2.0 / (phi * phi) *
                    (std::log(1.0 / to_double(lc.chain.pi[x])) +
                     std::log(1.0 / args.eps))
             << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mixing-time analysis of exactly represented reversible chains"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string gamma_file, resistance_mode = "exact_lp",
                          coupling_name = "independent";
  double alpha = 0.5;
  int h = 29;

  auto* analyze = app.add_subcommand("analyze", "pi, spectrum, conductance, Cheeger");
  add_model_options(analyze, args);
  auto* congest = app.add_subcommand("congest", "path/flow congestion or resistance");
  add_model_options(congest, args);
  congest->add_option("--gamma", gamma_file, "canonical path dump to score");
  congest->add_option("--resistance", resistance_mode, "exact_lp|approx");
  auto* flowk = app.add_subcommand("flow-knapsack", "knapsack flow + encoding audit");
  add_model_options(flowk, args);
  flowk->add_option("--heavy", h, "heavy-set size h");
  auto* couple = app.add_subcommand("couple", "faithfulness, contraction, coalescence");
  add_model_options(couple, args);
  auto* kr = app.add_subcommand("kr", "layer/drift report on the matchings chain");
  add_model_options(kr, args);
  kr->add_option("--coupling", coupling_name, "independent|synchronous");
  kr->add_option("--alpha", alpha, "degree parameter for the formula columns");
  auto* compare = app.add_subcommand("compare", "upper bounds vs exact tau");
  add_model_options(compare, args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  std::ostringstream cfg;
  cfg << "mixlab";
  for (int i = 1; i < argc; ++i) cfg << " " << argv[i];
  cfg << " seed=" << args.seed;
  g_config_line = cfg.str();

  try {
    if (!(args.eps > 0 && args.eps < 1))
      fail(ErrorKind::InvalidArgument, "eps outside (0,1)");
    if (app.got_subcommand(analyze)) return cmd_analyze(args);
    if (app.got_subcommand(congest))
      return cmd_congest(args, gamma_file, resistance_mode);
    if (app.got_subcommand(flowk)) return cmd_flow_knapsack(args, h);
    if (app.got_subcommand(couple)) return cmd_couple(args);
    if (app.got_subcommand(kr)) return cmd_kr(args, coupling_name, alpha);
    if (app.got_subcommand(compare)) return cmd_compare(args);
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    write_error(args, e);
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    Error wrapped(ErrorKind::InvalidArgument, e.what());
    write_error(args, wrapped);
    return 2;
  }
  return 1;
}
