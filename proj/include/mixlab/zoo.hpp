#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mixlab/chain.hpp"
#include "mixlab/errors.hpp"
#include "mixlab/rational.hpp"

namespace mixlab {

// ---------------------------------------------------------------------------
// Constructors for the concrete chains: knapsack, Bernoulli-Laplace, Glauber
// colorings, bounded-size subsets, linear extensions, the Jerrum-Sinclair
// matchings chain and the K_{2,n-2} dumbbell.
//
// Each state carries a 64-bit structured code (bitmask, packed word or packed
// permutation); chains order states by ascending code, which makes indices
// and tie-breaks reproducible.
// ---------------------------------------------------------------------------

enum class ModelId {
  Knapsack,
  BernoulliLaplace,
  GlauberColoring,
  BoundedSubsets,
  LinearExtensions,
  JsMatchings,
  Dumbbell,
};

inline const char* model_name(ModelId m) {
  switch (m) {
    case ModelId::Knapsack: return "knapsack";
    case ModelId::BernoulliLaplace: return "bernoulli_laplace";
    case ModelId::GlauberColoring: return "glauber_coloring";
    case ModelId::BoundedSubsets: return "bounded_subsets";
    case ModelId::LinearExtensions: return "linear_extensions";
    case ModelId::JsMatchings: return "js_matchings";
    case ModelId::Dumbbell: return "dumbbell";
  }
  return "?";
}

struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;  // undirected, u < v

  std::vector<int> degrees() const {
    std::vector<int> d(n, 0);
    for (auto [u, v] : edges) {
      ++d[u];
      ++d[v];
    }
    return d;
  }
  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> a(n);
    for (auto [u, v] : edges) {
      a[u].push_back(v);
      a[v].push_back(u);
    }
    return a;
  }
  static Graph complete(int n) {
    Graph g;
    g.n = n;
    for (int u = 0; u < n; ++u)
      for (int v = u + 1; v < n; ++v) g.edges.emplace_back(u, v);
    return g;
  }
  // Vertices 0..a-1 on the left, a..a+b-1 on the right.
  static Graph complete_bipartite(int a, int b) {
    Graph g;
    g.n = a + b;
    for (int u = 0; u < a; ++u)
      for (int v = 0; v < b; ++v) g.edges.emplace_back(u, a + v);
    return g;
  }
};

// Graph file: lines `e <u> <v>`, '#' comments.
inline Graph parse_graph_stream(std::istream& in) {
  Graph g;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    int u, v;
    if (tok != "e" || !(ls >> u >> v) || u < 0 || v < 0 || u == v)
      fail(ErrorKind::Parse, "graph line " + std::to_string(lineno));
    g.edges.emplace_back(std::min(u, v), std::max(u, v));
    g.n = std::max(g.n, std::max(u, v) + 1);
  }
  std::sort(g.edges.begin(), g.edges.end());
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end()), g.edges.end());
  return g;
}

inline Graph parse_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Parse, "cannot open " + path);
  return parse_graph_stream(in);
}

struct Poset {
  int n = 0;
  // lt[a][b] = a strictly below b, transitively closed.
  std::vector<std::vector<char>> lt;

  static Poset antichain(int n) {
    Poset p;
    p.n = n;
    p.lt.assign(n, std::vector<char>(n, 0));
    return p;
  }
  static Poset total_order(int n) {
    Poset p = antichain(n);
    for (int a = 0; a < n; ++a)
      for (int b = a + 1; b < n; ++b) p.lt[a][b] = 1;
    return p;
  }
  static Poset from_relations(int n, const std::vector<std::pair<int, int>>& rels) {
    Poset p = antichain(n);
    for (auto [a, b] : rels) {
      if (a < 0 || b < 0 || a >= n || b >= n || a == b)
        fail(ErrorKind::InvalidArgument, "bad poset relation");
      p.lt[a][b] = 1;
    }
    // Warshall closure, then acyclicity.
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        if (p.lt[i][k])
          for (int j = 0; j < n; ++j)
            if (p.lt[k][j]) p.lt[i][j] = 1;
    for (int i = 0; i < n; ++i)
      if (p.lt[i][i]) fail(ErrorKind::InvalidArgument, "poset has a cycle");
    return p;
  }
};

// Poset file: lines `lt <a> <b>`, '#' comments; element count = max index + 1.
inline Poset parse_poset_stream(std::istream& in) {
  std::string line;
  int lineno = 0, n = 0;
  std::vector<std::pair<int, int>> rels;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    int a, b;
    if (tok != "lt" || !(ls >> a >> b))
      fail(ErrorKind::Parse, "poset line " + std::to_string(lineno));
    rels.emplace_back(a, b);
    n = std::max(n, std::max(a, b) + 1);
  }
  return Poset::from_relations(n, rels);
}

inline Poset parse_poset_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Parse, "cannot open " + path);
  return parse_poset_stream(in);
}

struct ModelSpec {
  ModelId id = ModelId::Knapsack;
  // knapsack
  RatVec a;
  Rat b;
  // bernoulli_laplace / bounded_subsets / dumbbell
  int n = 0;
  int k = 0;
  bool lazy = true;  // dumbbell only; the bare walk without holding is periodic
  // glauber / js
  Graph graph;
  std::optional<RatVec> vertex_dist;  // glauber J; default degree-proportional
  // linear extensions
  Poset poset;
};

inline uint64_t default_state_cap() {
  if (const char* env = std::getenv("MIXLAB_MAX_STATES")) {
    char* end = nullptr;
    unsigned long long v = std::strtoull(env, &end, 10);
    if (end && *end == '\0' && v > 0) return v;
  }
  return 200000;
}

struct ZooModel {
  ModelSpec spec;
  Chain chain;
  std::vector<uint64_t> codes;  // structured state per index
  std::unordered_map<uint64_t, int> index;

  int n_items() const { return spec.n; }
  int state_of(uint64_t code) const {
    auto it = index.find(code);
    if (it == index.end())
      fail(ErrorKind::InvalidArgument, "unknown state code");
    return it->second;
  }
  std::string describe(int i) const { return chain.states[i]; }
};

namespace zoo_detail {

inline std::string subset_label(uint64_t mask, int n) {
  std::string s = "{";
  bool first = true;
  for (int i = 0; i < n; ++i)
    if (mask >> i & 1) {
      if (!first) s += ",";
      s += std::to_string(i + 1);
      first = false;
    }
  return s + "}";
}

inline void check_cap(size_t count, uint64_t cap) {
  if (count > cap)
    fail(ErrorKind::StateSpaceTooLarge,
         std::to_string(count) + " states exceeds cap " + std::to_string(cap));
}

// --- knapsack -------------------------------------------------------------

inline ZooModel build_knapsack(const ModelSpec& spec, uint64_t cap) {
  int n = static_cast<int>(spec.a.size());
  if (n <= 0 || n > 62) fail(ErrorKind::InvalidArgument, "knapsack needs 1..62 items");
  for (const Rat& ai : spec.a)
    if (ai <= 0) fail(ErrorKind::InvalidArgument, "item sizes must be positive");
  ZooModel m;
  m.spec = spec;
  m.spec.n = n;
  auto weight = [&](uint64_t mask) {
    Rat w = 0;
    for (int i = 0; i < n; ++i)
      if (mask >> i & 1) w += spec.a[i];
    return w;
  };
  // Enumerate feasible subsets in ascending bitmask order. DFS over items
  // would be faster; plain scan is fine at desk scale for n <= 24, otherwise
  // grow incrementally.
  std::vector<uint64_t> codes;
  if (n <= 24) {
    for (uint64_t mask = 0; mask < (1ull << n); ++mask)
      if (weight(mask) <= spec.b) {
        codes.push_back(mask);
        check_cap(codes.size(), cap);
      }
  } else {
    fail(ErrorKind::StateSpaceTooLarge, "knapsack enumeration capped at n = 24");
  }
  if (codes.empty()) fail(ErrorKind::EmptyStateSpace, "no feasible knapsack set");
  m.codes = codes;
  std::vector<std::string> labels;
  for (size_t i = 0; i < codes.size(); ++i) {
    m.index[codes[i]] = static_cast<int>(i);
    labels.push_back(subset_label(codes[i], n));
  }
  std::vector<Transition> ts;
  Rat half(1, 2), move(1, 2 * n);
  for (size_t i = 0; i < codes.size(); ++i) {
    Rat hold = half;
    for (int item = 0; item < n; ++item) {
      uint64_t next = codes[i] ^ (1ull << item);
      bool ok = (codes[i] >> item & 1) ? true : weight(next) <= spec.b;
      if (ok && next != codes[i]) {
        ts.push_back({static_cast<int>(i), m.index.at(next), move});
      } else {
        hold += move;
      }
    }
    ts.push_back({static_cast<int>(i), static_cast<int>(i), hold});
  }
  RatVec pi(codes.size(), Rat(1, static_cast<long>(codes.size())));
  m.chain = build_chain(labels, ts, pi);
  return m;
}

// --- Bernoulli-Laplace ------------------------------------------------------

inline ZooModel build_bernoulli_laplace(const ModelSpec& spec, uint64_t cap) {
  int n = spec.n, k = spec.k;
  if (n < 2 || k < 1 || 2 * k > n)
    fail(ErrorKind::InvalidArgument, "bernoulli_laplace needs 1 <= k <= n/2");
  if (n > 24) fail(ErrorKind::StateSpaceTooLarge, "subset enumeration capped at n = 24");
  ZooModel m;
  m.spec = spec;
  std::vector<uint64_t> codes;
  for (uint64_t mask = 0; mask < (1ull << n); ++mask)
    if (__builtin_popcountll(mask) == k) {
      codes.push_back(mask);
      check_cap(codes.size(), cap);
    }
  m.codes = codes;
  std::vector<std::string> labels;
  for (size_t i = 0; i < codes.size(); ++i) {
    m.index[codes[i]] = static_cast<int>(i);
    labels.push_back(subset_label(codes[i], n));
  }
  std::vector<Transition> ts;
  Rat move(1, 2l * k * (n - k));
  for (size_t s = 0; s < codes.size(); ++s) {
    ts.push_back({static_cast<int>(s), static_cast<int>(s), Rat(1, 2)});
    for (int i = 0; i < n; ++i) {
      if (!(codes[s] >> i & 1)) continue;
      for (int j = 0; j < n; ++j) {
        if (codes[s] >> j & 1) continue;
        uint64_t next = (codes[s] & ~(1ull << i)) | (1ull << j);
        ts.push_back({static_cast<int>(s), m.index.at(next), move});
      }
    }
  }
  RatVec pi(codes.size(), Rat(1, static_cast<long>(codes.size())));
  m.chain = build_chain(labels, ts, pi);
  return m;
}

// --- Glauber colorings ------------------------------------------------------

// Packed coloring word: colour of vertex v sits at digit v, base k.
inline int coloring_get(uint64_t code, int v, int k) {
  for (int i = 0; i < v; ++i) code /= k;
  return static_cast<int>(code % k);
}
inline uint64_t coloring_set(uint64_t code, int v, int k, int c) {
  uint64_t p = 1;
  for (int i = 0; i < v; ++i) p *= k;
  int old = coloring_get(code, v, k);
  return code + (static_cast<uint64_t>(c) - old) * p;
}

inline bool proper_at(const std::vector<std::vector<int>>& adj, uint64_t code,
                      int v, int k) {
  int cv = coloring_get(code, v, k);
  for (int w : adj[v])
    if (coloring_get(code, w, k) == cv) return false;
  return true;
}

inline bool proper_everywhere(const Graph& g, uint64_t code, int k) {
  for (auto [u, v] : g.edges)
    if (coloring_get(code, u, k) == coloring_get(code, v, k)) return false;
  return true;
}

inline ZooModel build_glauber(const ModelSpec& spec, uint64_t cap) {
  const Graph& g = spec.graph;
  int k = spec.k;
  if (g.n < 1 || k < 2) fail(ErrorKind::InvalidArgument, "glauber needs a graph and k >= 2");
  double states = std::pow(static_cast<double>(k), g.n);
  if (states > static_cast<double>(cap))
    fail(ErrorKind::StateSpaceTooLarge, "k^|V| exceeds cap");
  size_t count = 1;
  for (int v = 0; v < g.n; ++v) count *= k;

  auto degrees = g.degrees();
  RatVec j_dist;
  if (spec.vertex_dist) {
    j_dist = *spec.vertex_dist;
    if (static_cast<int>(j_dist.size()) != g.n)
      fail(ErrorKind::LengthMismatch, "vertex distribution length");
  } else {
    long m2 = 2l * static_cast<long>(g.edges.size());
    if (m2 == 0) fail(ErrorKind::InvalidArgument, "degree-weighted J needs edges");
    for (int v = 0; v < g.n; ++v) j_dist.push_back(rat(degrees[v], m2));
  }
  Rat jsum = 0;
  for (const Rat& jv : j_dist) jsum += jv;
  if (jsum != 1) fail(ErrorKind::InvalidArgument, "vertex distribution sums to " + rat_str(jsum));
  for (int v = 0; v < g.n; ++v)
    if (j_dist[v] <= 0)
      fail(ErrorKind::InvalidArgument,
           "vertex " + std::to_string(v) + " never selected (isolated?)");

  ZooModel m;
  m.spec = spec;
  m.spec.n = g.n;
  m.spec.vertex_dist = j_dist;
  auto adj = g.adjacency();
  std::vector<std::string> labels;
  std::vector<uint64_t> proper_codes;
  for (uint64_t code = 0; code < count; ++code) {
    m.codes.push_back(code);
    m.index[code] = static_cast<int>(code);
    std::string lab;
    for (int v = 0; v < g.n; ++v) lab += std::to_string(coloring_get(code, v, k));
    labels.push_back(lab);
    if (proper_everywhere(g, code, k)) proper_codes.push_back(code);
  }
  if (proper_codes.empty())
    fail(ErrorKind::EmptyStateSpace, "no proper coloring with k colors");

  std::vector<Transition> ts;
  for (uint64_t code = 0; code < count; ++code) {
    std::map<int, Rat> row;
    for (int v = 0; v < g.n; ++v) {
      for (int c = 0; c < k; ++c) {
        uint64_t next = coloring_set(code, v, k, c);
        int target = proper_at(adj, next, v, k) ? static_cast<int>(next)
                                                   : static_cast<int>(code);
        row[target] += j_dist[v] / k;
      }
    }
    for (auto& [y, p] : row)
      ts.push_back({static_cast<int>(code), y, p});
  }
  RatVec pi(count, Rat(0));
  Rat mass(1, static_cast<long>(proper_codes.size()));
  for (uint64_t code : proper_codes) pi[code] = mass;
  m.chain = build_chain_with_classes(labels, ts, pi, true);
  return m;
}

// --- bounded-size subsets ----------------------------------------------------

inline ZooModel build_bounded_subsets(const ModelSpec& spec, uint64_t cap) {
  int n = spec.n, k = spec.k;
  if (n < 1 || k < 1 || k > n)
    fail(ErrorKind::InvalidArgument, "bounded_subsets needs 1 <= k <= n");
  if (n > 24) fail(ErrorKind::StateSpaceTooLarge, "subset enumeration capped at n = 24");
  ZooModel m;
  m.spec = spec;
  std::vector<uint64_t> codes;
  for (uint64_t mask = 0; mask < (1ull << n); ++mask)
    if (__builtin_popcountll(mask) <= k) {
      codes.push_back(mask);
      check_cap(codes.size(), cap);
    }
  m.codes = codes;
  std::vector<std::string> labels;
  for (size_t i = 0; i < codes.size(); ++i) {
    m.index[codes[i]] = static_cast<int>(i);
    labels.push_back(subset_label(codes[i], n));
  }
  std::vector<Transition> ts;
  Rat move(1, 2l * n);
  for (size_t s = 0; s < codes.size(); ++s) {
    Rat hold(1, 2);
    for (int i = 0; i < n; ++i) {
      uint64_t next = codes[s] ^ (1ull << i);
      bool ok = (codes[s] >> i & 1) || __builtin_popcountll(next) <= k;
      if (ok) {
        ts.push_back({static_cast<int>(s), m.index.at(next), move});
      } else {
        hold += move;
      }
    }
    ts.push_back({static_cast<int>(s), static_cast<int>(s), hold});
  }
  RatVec pi(codes.size(), Rat(1, static_cast<long>(codes.size())));
  m.chain = build_chain(labels, ts, pi);
  return m;
}

// --- linear extensions --------------------------------------------------------

// Permutation word a_1..a_n packed 4 bits per position, a_1 most significant,
// so ascending code = lexicographic order on words.
inline uint64_t pack_perm(const std::vector<int>& word) {
  uint64_t code = 0;
  for (int v : word) code = (code << 4) | static_cast<uint64_t>(v);
  return code;
}
inline std::vector<int> unpack_perm(uint64_t code, int n) {
  std::vector<int> word(n);
  for (int i = n - 1; i >= 0; --i) {
    word[i] = static_cast<int>(code & 0xf);
    code >>= 4;
  }
  return word;
}

inline bool extends(const Poset& p, const std::vector<int>& word) {
  for (int i = 0; i < p.n; ++i)
    for (int j = 0; j < i; ++j)
      if (p.lt[word[i]][word[j]]) return false;
  return true;
}

// J(p) = zeta p (n-p) for p in 1..n-1, zeta = 6/(n^3-n); normalizes exactly.
inline RatVec linext_position_dist(int n) {
  Rat zeta = rat(6, static_cast<long>(n) * n * n - n);
  RatVec j(n, Rat(0));  // index p, entries 1..n-1 used
  for (int p = 1; p <= n - 1; ++p) j[p] = zeta * p * (n - p);
  return j;
}

inline ZooModel build_linear_extensions(const ModelSpec& spec, uint64_t cap) {
  const Poset& poset = spec.poset;
  int n = poset.n;
  if (n < 2 || n > 15) fail(ErrorKind::InvalidArgument, "linear_extensions needs 2..15 elements");
  ZooModel m;
  m.spec = spec;
  m.spec.n = n;
  std::vector<int> word(n);
  std::iota(word.begin(), word.end(), 0);
  std::vector<std::vector<int>> exts;
  do {
    if (extends(poset, word)) {
      exts.push_back(word);
      check_cap(exts.size(), cap);
    }
  } while (std::next_permutation(word.begin(), word.end()));
  if (exts.empty()) fail(ErrorKind::EmptyStateSpace, "poset has no linear extension");

  std::vector<std::string> labels;
  for (size_t i = 0; i < exts.size(); ++i) {
    uint64_t code = pack_perm(exts[i]);
    m.codes.push_back(code);
    m.index[code] = static_cast<int>(i);
    std::string lab;
    for (int v : exts[i]) lab += std::to_string(v);
    labels.push_back(lab);
  }

  RatVec j = linext_position_dist(n);
  std::vector<Transition> ts;
  for (size_t s = 0; s < exts.size(); ++s) {
    Rat hold(1, 2);
    for (int p = 1; p <= n - 1; ++p) {
      std::vector<int> next = exts[s];
      std::swap(next[p - 1], next[p]);
      Rat pr = j[p] / 2;
      if (extends(poset, next)) {
        ts.push_back({static_cast<int>(s), m.index.at(pack_perm(next)), pr});
      } else {
        hold += pr;
      }
    }
    ts.push_back({static_cast<int>(s), static_cast<int>(s), hold});
  }
  RatVec pi(exts.size(), Rat(1, static_cast<long>(exts.size())));
  m.chain = build_chain(labels, ts, pi);
  return m;
}

// --- Jerrum-Sinclair matchings --------------------------------------------------

// Bipartiteness check + side classification.
inline std::vector<int> bipartite_sides(const Graph& g) {
  std::vector<int> side(g.n, -1);
  auto adj = g.adjacency();
  for (int s = 0; s < g.n; ++s) {
    if (side[s] >= 0) continue;
    side[s] = 0;
    std::vector<int> stack{s};
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int v : adj[u]) {
        if (side[v] < 0) {
          side[v] = 1 - side[u];
          stack.push_back(v);
        } else if (side[v] == side[u]) {
          fail(ErrorKind::InvalidArgument, "graph is not bipartite");
        }
      }
    }
  }
  return side;
}

// Matchings as edge-index bitmasks. States: matchings of size s (perfect,
// s = smaller part) and s-1 (near-perfect).
struct JsStructure {
  int perfect_size = 0;
  std::vector<uint64_t> vertex_cover_mask;  // per edge: endpoints' vertex bits
};

inline void enumerate_matchings(const Graph& g, int target, uint64_t edge_mask,
                                uint64_t used_vertices, int next_edge, int size,
                                std::vector<uint64_t>& out, uint64_t cap) {
  if (size == target) {
    out.push_back(edge_mask);
    check_cap(out.size(), cap);
    return;
  }
  int m = static_cast<int>(g.edges.size());
  // prune: not enough edges left
  if (m - next_edge < target - size) return;
  for (int e = next_edge; e < m; ++e) {
    auto [u, v] = g.edges[e];
    uint64_t vb = (1ull << u) | (1ull << v);
    if (used_vertices & vb) continue;
    enumerate_matchings(g, target, edge_mask | (1ull << e), used_vertices | vb,
                        e + 1, size + 1, out, cap);
  }
}

inline uint64_t matched_vertices(const Graph& g, uint64_t edge_mask) {
  uint64_t vs = 0;
  for (size_t e = 0; e < g.edges.size(); ++e)
    if (edge_mask >> e & 1)
      vs |= (1ull << g.edges[e].first) | (1ull << g.edges[e].second);
  return vs;
}

// One JS move: (r, e) applied to matching M per the add/swap/remove rules.
inline uint64_t js_move(const Graph& g, int perfect_size, uint64_t mask, int r,
                        int e) {
  if (r == 0) return mask;
  int size = __builtin_popcountll(mask);
  auto [u, v] = g.edges[e];
  if (size == perfect_size) {  // perfect: remove e if present
    if (mask >> e & 1) return mask & ~(1ull << e);
    return mask;
  }
  // near-perfect
  uint64_t mv = matched_vertices(g, mask);
  bool um = mv >> u & 1, vm = mv >> v & 1;
  if (!um && !vm) return mask | (1ull << e);  // add move
  if (um != vm) {                             // swap move
    int matched = um ? u : v;
    for (size_t f = 0; f < g.edges.size(); ++f)
      if (mask >> f & 1) {
        auto [a, b] = g.edges[f];
        if (a == matched || b == matched)
          return (mask & ~(1ull << f)) | (1ull << e);
      }
  }
  return mask;
}

inline ZooModel build_js_matchings(const ModelSpec& spec, uint64_t cap) {
  const Graph& g = spec.graph;
  if (g.n < 2 || g.edges.empty())
    fail(ErrorKind::InvalidArgument, "js_matchings needs a bipartite graph with edges");
  if (g.edges.size() > 62) fail(ErrorKind::StateSpaceTooLarge, "too many edges");
  auto side = bipartite_sides(g);
  int left = static_cast<int>(std::count(side.begin(), side.end(), 0));
  int s = std::min(left, g.n - left);
  if (s < 1) fail(ErrorKind::EmptyStateSpace, "one side of the bipartition is empty");

  std::vector<uint64_t> codes;
  enumerate_matchings(g, s, 0, 0, 0, 0, codes, cap);
  if (codes.empty())
    fail(ErrorKind::EmptyStateSpace, "graph has no maximum-size matching of size " +
                                         std::to_string(s));
  if (s >= 1) enumerate_matchings(g, s - 1, 0, 0, 0, 0, codes, cap);
  std::sort(codes.begin(), codes.end());

  ZooModel m;
  m.spec = spec;
  m.spec.n = s;
  m.codes = codes;
  std::vector<std::string> labels;
  for (size_t i = 0; i < codes.size(); ++i) {
    m.index[codes[i]] = static_cast<int>(i);
    std::string lab = "[";
    bool first = true;
    for (size_t e = 0; e < g.edges.size(); ++e)
      if (codes[i] >> e & 1) {
        if (!first) lab += ",";
        lab += std::to_string(g.edges[e].first) + "-" +
               std::to_string(g.edges[e].second);
        first = false;
      }
    labels.push_back(lab + "]");
  }

  int medges = static_cast<int>(g.edges.size());
  Rat move(1, 2l * medges);
  std::vector<Transition> ts;
  for (size_t i = 0; i < codes.size(); ++i) {
    std::map<int, Rat> row;
    row[static_cast<int>(i)] += Rat(1, 2);  // r = 0
    for (int e = 0; e < medges; ++e) {
      uint64_t next = js_move(g, s, codes[i], 1, e);
      auto it = m.index.find(next);
      if (it == m.index.end())
        fail(ErrorKind::InvalidArgument, "JS move left the state space");
      row[it->second] += move;
    }
    for (auto& [y, p] : row) ts.push_back({static_cast<int>(i), y, p});
  }
  RatVec pi(codes.size(), Rat(1, static_cast<long>(codes.size())));
  m.chain = build_chain(labels, ts, pi);
  return m;
}

// --- dumbbellized K_{2,n-2} -----------------------------------------------------

inline ZooModel build_dumbbell(const ModelSpec& spec, uint64_t cap) {
  int n = spec.n;
  if (n < 4 || n % 2 != 0)
    fail(ErrorKind::InvalidArgument, "dumbbell needs even n >= 4");
  check_cap(n, cap);
  ZooModel m;
  m.spec = spec;
  std::vector<std::string> labels;
  for (int i = 1; i <= n; ++i) labels.push_back(std::to_string(i));
  for (int i = 0; i < n; ++i) {
    m.codes.push_back(i);
    m.index[i] = i;
  }
  // vertices 0,1 are the hubs; 2..n-1 the leaves
  int leaves = n - 2;
  std::vector<Transition> ts;
  if (spec.lazy) {
    Rat hub_move(1, 2l * leaves);
    for (int hub = 0; hub < 2; ++hub) {
      ts.push_back({hub, hub, Rat(1, 2)});
      for (int leaf = 2; leaf < n; ++leaf) ts.push_back({hub, leaf, hub_move});
    }
    for (int leaf = 2; leaf < n; ++leaf) {
      ts.push_back({leaf, leaf, Rat(1, 2)});
      ts.push_back({leaf, 0, Rat(1, 4)});
      ts.push_back({leaf, 1, Rat(1, 4)});
    }
  } else {
    Rat hub_move(1, leaves);
    for (int hub = 0; hub < 2; ++hub)
      for (int leaf = 2; leaf < n; ++leaf) ts.push_back({hub, leaf, hub_move});
    for (int leaf = 2; leaf < n; ++leaf) {
      ts.push_back({leaf, 0, Rat(1, 2)});
      ts.push_back({leaf, 1, Rat(1, 2)});
    }
  }
  RatVec pi(n);
  pi[0] = pi[1] = Rat(1, 4);
  for (int leaf = 2; leaf < n; ++leaf) pi[leaf] = Rat(1, 2l * leaves);
  if (spec.lazy) {
    m.chain = build_chain(labels, ts, pi);
  } else {
    // the pure walk on K_{2,n-2} is periodic; keep it constructible for the
    // conductance/congestion analysis that never powers the kernel
    m.chain = build_chain_with_classes(labels, ts, pi, false);
  }
  return m;
}

}  // namespace zoo_detail

inline ZooModel build_model(const ModelSpec& spec,
                            uint64_t cap = default_state_cap()) {
  switch (spec.id) {
    case ModelId::Knapsack: return zoo_detail::build_knapsack(spec, cap);
    case ModelId::BernoulliLaplace: return zoo_detail::build_bernoulli_laplace(spec, cap);
    case ModelId::GlauberColoring: return zoo_detail::build_glauber(spec, cap);
    case ModelId::BoundedSubsets: return zoo_detail::build_bounded_subsets(spec, cap);
    case ModelId::LinearExtensions: return zoo_detail::build_linear_extensions(spec, cap);
    case ModelId::JsMatchings: return zoo_detail::build_js_matchings(spec, cap);
    case ModelId::Dumbbell: return zoo_detail::build_dumbbell(spec, cap);
  }
  fail(ErrorKind::InvalidArgument, "unknown model");
}

// ---------------------------------------------------------------------------
// Closed-form mixing bounds per model, evaluated as data.
// ---------------------------------------------------------------------------

struct NamedBound {
  std::string name;
  bool applicable = false;
  double value = 0.0;
  std::string note;
};

struct TheoreticalBounds {
  ModelId model;
  std::vector<NamedBound> bounds;

  const NamedBound* find(const std::string& name) const {
    for (const auto& b : bounds)
      if (b.name == name) return &b;
    return nullptr;
  }
};

// Contraction factor of the degree-weighted Glauber coupling:
//   beta <= max_i [ 1 - (d(i)/2m)(1 - d(i)/k) + sum_{j~i} d(j)/(2mk) ].
inline Rat glauber_beta_formula(const Graph& g, int k) {
  auto deg = g.degrees();
  auto adj = g.adjacency();
  long m = static_cast<long>(g.edges.size());
  Rat best(-1);
  for (int i = 0; i < g.n; ++i) {
    Rat beta = 1;
    beta -= rat(deg[i], 2 * m) * (Rat(1) - rat(deg[i], k));
    for (int j : adj[i]) beta += rat(deg[j], 2 * m * k);
    if (beta > best) best = beta;
  }
  return best;
}

inline TheoreticalBounds theoretical_bounds(const ModelSpec& spec, double eps,
                                            std::optional<double> knapsack_c = std::nullopt,
                                            std::optional<double> knapsack_l = std::nullopt,
                                            std::optional<double> knapsack_omega = std::nullopt) {
  if (!(eps > 0 && eps < 1)) fail(ErrorKind::InvalidArgument, "eps outside (0,1)");
  TheoreticalBounds tb;
  tb.model = spec.id;
  auto add = [&](const std::string& name, bool ok, double v, const std::string& note) {
    tb.bounds.push_back({name, ok, v, note});
  };
  switch (spec.id) {
    case ModelId::BernoulliLaplace: {
      int k = spec.k;
      add("contraction_beta", true, 1.0 - 1.0 / k, "E|D'| <= (1-1/k)|D|");
      add("tau_coupling", true, k * std::log(2.0 * k / eps),
          "tau(eps) <= k ln(2k/eps)");
      break;
    }
    case ModelId::GlauberColoring: {
      int k = spec.k;
      auto deg = spec.graph.degrees();
      int delta = deg.empty() ? 0 : *std::max_element(deg.begin(), deg.end());
      Rat beta = glauber_beta_formula(spec.graph, k);
      add("contraction_beta", beta < 1, to_double(beta), "Glauber path-coupling factor");
      if (k > 2 * delta && beta < 1) {
        add("tau_coupling", true,
            std::log(spec.graph.n / eps) / (1.0 - to_double(beta)),
            "tau(eps) <= ln(n/eps)/(1-beta)");
      } else {
        add("tau_coupling", false, 0.0, "needs k > 2*Delta and beta < 1");
      }
      break;
    }
    case ModelId::BoundedSubsets: {
      int n = spec.n, k = spec.k;
      add("contraction_beta", true, 1.0 - 1.0 / (2.0 * n), "beta <= 1 - 1/(2n)");
      add("diameter", true, 2.0 * k, "D = 2k");
      add("tau_coupling", true, 2.0 * n * std::log(2.0 * k / eps),
          "tau(eps) <= 2n ln(2k/eps)");
      break;
    }
    case ModelId::LinearExtensions: {
      int n = spec.poset.n;
      double zeta = 6.0 / (std::pow(n, 3) - n);
      add("zeta", true, zeta, "zeta = 6/(n^3-n)");
      add("contraction_beta", true, 1.0 - zeta, "beta <= 1 - zeta");
      double dmax = n * (n - 1) / 2.0;
      add("tau_coupling", true, std::log(dmax / eps) / zeta,
          "tau(eps) <= ln(D/eps)/zeta, D <= n(n-1)/2");
      break;
    }
    case ModelId::Dumbbell: {
      add("lambda1_upper", true, 7.0 / 8.0, "lambda_1 <= 7/8 via Phi = 1/2");
      break;
    }
    case ModelId::Knapsack: {
      if (knapsack_c && knapsack_l && knapsack_omega) {
        double n = static_cast<double>(spec.a.size());
        double v = 2.0 * n * (*knapsack_c / *knapsack_omega) * (*knapsack_l) *
                   (n + std::log(1.0 / eps));
        add("tau_flow", true, v, "tau <= 2n (C/|Omega|) L (n + ln 1/eps)");
      } else {
        add("tau_flow", false, 0.0, "needs measured C(f), L(f)");
      }
      break;
    }
    case ModelId::JsMatchings: {
      add("tau", false, 0.0, "no positive bound stated for the JS chain");
      break;
    }
  }
  return tb;
}

}  // namespace mixlab
