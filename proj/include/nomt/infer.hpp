#pragma once

// Exact MAP inference for the per-window association CRF.
//
// Nodes are targets and states are hypothesis indices. The graph is split
// into connected components; singletons are solved by argmin, larger
// components by min-sum message passing on a junction tree obtained from a
// min-fill elimination order.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nomt/core.hpp"
#include "nomt/parallel.hpp"

namespace nomt {

class ResourceError : public Error {
 public:
  using Error::Error;
};

struct AssociationGraph {
  struct Edge {
    int a = 0;
    int b = 0;
    std::vector<double> table;  // row-major: table[ka * states(b) + kb]
  };

  std::vector<std::vector<double>> node_costs;
  std::vector<Edge> edges;

  int node_count() const { return static_cast<int>(node_costs.size()); }
  int states(int m) const { return static_cast<int>(node_costs[m].size()); }

  /// Adds a pairwise table; stored with a < b, summed into an existing edge.
  void add_edge(int a, int b, std::vector<double> table) {
    if (a == b) throw InputError("self edges are not allowed");
    if (static_cast<int>(table.size()) != states(a) * states(b)) throw InputError("edge table has wrong size");
    if (a > b) {
      std::vector<double> t(table.size());
      for (int ka = 0; ka < states(a); ++ka)
        for (int kb = 0; kb < states(b); ++kb) t[kb * states(a) + ka] = table[ka * states(b) + kb];
      table = std::move(t);
      std::swap(a, b);
    }
    for (auto& e : edges)
      if (e.a == a && e.b == b) {
        for (std::size_t k = 0; k < table.size(); ++k) e.table[k] += table[k];
        return;
      }
    edges.push_back({a, b, std::move(table)});
  }
};

struct Solution {
  std::vector<int> states;
  double energy = 0.0;
  bool exact = true;
};

/// Builds the graph from per-node costs; an edge is kept only when some entry
/// of its table is non-zero. `pair_cost(m, k, l, kk)` gives the pairwise cost.
template <class PairCost>
AssociationGraph build_graph(std::vector<std::vector<double>> node_costs,
                             std::span<const std::pair<int, int>> candidate_pairs, PairCost&& pair_cost) {
  AssociationGraph g;
  g.node_costs = std::move(node_costs);
  for (auto [m, l] : candidate_pairs) {
    std::vector<double> table(static_cast<std::size_t>(g.states(m)) * g.states(l));
    bool nonzero = false;
    for (int k = 0; k < g.states(m); ++k)
      for (int kk = 0; kk < g.states(l); ++kk) {
        const double v = pair_cost(m, k, l, kk);
        table[k * g.states(l) + kk] = v;
        nonzero = nonzero || v != 0.0;
      }
    if (nonzero) g.add_edge(m, l, std::move(table));
  }
  return g;
}

inline double evaluate(const AssociationGraph& g, std::span<const int> states) {
  double e = 0.0;
  for (int m = 0; m < g.node_count(); ++m) e += g.node_costs[m][states[m]];
  for (const auto& edge : g.edges) e += edge.table[states[edge.a] * g.states(edge.b) + states[edge.b]];
  return e;
}

/// Connected components (union-find); each component's nodes are ascending
/// and components are ordered by their smallest node.
inline std::vector<std::vector<int>> connected_components(const AssociationGraph& g) {
  const int n = g.node_count();
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges) {
    int ra = find(e.a), rb = find(e.b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::vector<int> slot(n, -1);
  std::vector<std::vector<int>> out;
  for (int v = 0; v < n; ++v) {
    const int r = find(v);
    if (slot[r] < 0) {
      slot[r] = static_cast<int>(out.size());
      out.emplace_back();
    }
    out[slot[r]].push_back(v);
  }
  return out;
}

namespace detail {

inline int argmin_index(std::span<const double> v) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(v.size()); ++k)
    if (v[k] < v[best]) best = k;
  return best;
}

// Table over an ordered list of local variables; the first variable varies
// slowest.
struct Factor {
  std::vector<int> vars;
  std::vector<double> values;
};

// Local copy of a component with dense indexing.
struct LocalProblem {
  std::vector<int> states;
  std::vector<const std::vector<double>*> unary;
  struct Edge {
    int a, b;
    const std::vector<double>* table;  // indexed [ka * states[b] + kb]
  };
  std::vector<Edge> edges;
};

inline LocalProblem localize(const AssociationGraph& g, std::span<const int> nodes) {
  LocalProblem p;
  std::vector<int> local(g.node_count(), -1);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    local[nodes[k]] = static_cast<int>(k);
    p.states.push_back(g.states(nodes[k]));
    p.unary.push_back(&g.node_costs[nodes[k]]);
  }
  for (const auto& e : g.edges)
    if (local[e.a] >= 0 && local[e.b] >= 0) p.edges.push_back({local[e.a], local[e.b], &e.table});
  return p;
}

// Min-fill elimination order; ties prefer the smaller clique table, then the
// lower index.
inline std::vector<int> min_fill_order(const LocalProblem& p) {
  const int n = static_cast<int>(p.states.size());
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (const auto& e : p.edges) adj[e.a][e.b] = adj[e.b][e.a] = 1;
  std::vector<char> gone(n, 0);
  std::vector<int> order;
  for (int step = 0; step < n; ++step) {
    int best = -1;
    long fill_best = 0;
    double size_best = 0.0;
    for (int v = 0; v < n; ++v) {
      if (gone[v]) continue;
      std::vector<int> nb;
      for (int u = 0; u < n; ++u)
        if (!gone[u] && adj[v][u]) nb.push_back(u);
      long fill = 0;
      double size = p.states[v];
      for (std::size_t i = 0; i < nb.size(); ++i) {
        size *= p.states[nb[i]];
        for (std::size_t j = i + 1; j < nb.size(); ++j) fill += !adj[nb[i]][nb[j]];
      }
      if (best < 0 || fill < fill_best || (fill == fill_best && size < size_best)) {
        best = v;
        fill_best = fill;
        size_best = size;
      }
    }
    std::vector<int> nb;
    for (int u = 0; u < n; ++u)
      if (!gone[u] && adj[best][u]) nb.push_back(u);
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j) adj[nb[i]][nb[j]] = adj[nb[j]][nb[i]] = 1;
    gone[best] = 1;
    order.push_back(best);
  }
  return order;
}

}  // namespace detail

/// Exact MAP of a connected subgraph. States are returned in the order of
/// `nodes`. Throws ResourceError when a clique table would exceed `budget`
/// entries.
inline Solution solve_subgraph(const AssociationGraph& g, std::span<const int> nodes, double budget = 1e7) {
  using detail::Factor;
  Solution sol;
  if (nodes.empty()) return sol;
  if (nodes.size() == 1) {
    sol.states = {detail::argmin_index(g.node_costs[nodes[0]])};
    sol.energy = g.node_costs[nodes[0]][sol.states[0]];
    return sol;
  }

  const auto p = detail::localize(g, nodes);
  const int n = static_cast<int>(p.states.size());
  const auto order = detail::min_fill_order(p);
  std::vector<int> rank(n);
  for (int k = 0; k < n; ++k) rank[order[k]] = k;

  // Cliques of the elimination: C_v = {v} u (neighbours of v eliminated later),
  // taken from the triangulated graph.
  std::vector<std::vector<char>> adj(n, std::vector<char>(n, 0));
  for (const auto& e : p.edges) adj[e.a][e.b] = adj[e.b][e.a] = 1;
  std::vector<std::vector<int>> separator(n);  // C_v \ {v}, ordered by elimination rank
  for (int v : order) {
    for (int u = 0; u < n; ++u)
      if (adj[v][u] && rank[u] > rank[v]) separator[v].push_back(u);
    std::sort(separator[v].begin(), separator[v].end(), [&](int a, int b) { return rank[a] < rank[b]; });
    for (std::size_t i = 0; i < separator[v].size(); ++i)
      for (std::size_t j = i + 1; j < separator[v].size(); ++j)
        adj[separator[v][i]][separator[v][j]] = adj[separator[v][j]][separator[v][i]] = 1;
    double size = p.states[v];
    for (int u : separator[v]) size *= p.states[u];
    if (size > budget)
      throw ResourceError("junction tree clique of " + std::to_string(separator[v].size() + 1) + " nodes needs " +
                          std::to_string(size) + " entries, budget " + std::to_string(budget));
  }

  // Each edge is attached to the clique of its earlier-eliminated endpoint.
  std::vector<std::vector<const detail::LocalProblem::Edge*>> edges_of(n);
  for (const auto& e : p.edges) edges_of[rank[e.a] < rank[e.b] ? e.a : e.b].push_back(&e);

  // Clique tree: C_v's parent is the clique of the first-eliminated separator
  // variable. Messages flow in elimination order (leaves first).
  std::vector<std::vector<Factor>> inbox(n);
  std::vector<std::vector<int>> argmin(n);  // per separator configuration
  double root_energy = 0.0;

  for (int v : order) {
    const auto& sep = separator[v];
    // Clique variables: separator first, v last (fastest varying).
    std::vector<int> vars = sep;
    vars.push_back(v);
    std::vector<int> pos(n, -1);
    for (std::size_t k = 0; k < vars.size(); ++k) pos[vars[k]] = static_cast<int>(k);

    std::size_t sep_size = 1;
    for (int u : sep) sep_size *= static_cast<std::size_t>(p.states[u]);
    const int sv = p.states[v];

    // Terms over the clique, expressed as (strides per clique position, table).
    struct Term {
      std::vector<std::pair<int, std::size_t>> strides;  // (clique position, stride)
      const double* values;
    };
    std::vector<Term> terms;
    terms.push_back({{{pos[v], 1}}, p.unary[v]->data()});
    for (const auto* e : edges_of[v])
      terms.push_back({{{pos[e->a], static_cast<std::size_t>(p.states[e->b])}, {pos[e->b], 1}}, e->table->data()});
    for (const auto& f : inbox[v]) {
      Term t{{}, f.values.data()};
      std::size_t stride = 1;
      for (auto it = f.vars.rbegin(); it != f.vars.rend(); ++it) {
        t.strides.emplace_back(pos[*it], stride);
        stride *= static_cast<std::size_t>(p.states[*it]);
      }
      terms.push_back(std::move(t));
    }

    Factor message{sep, std::vector<double>(sep_size)};
    argmin[v].assign(sep_size, 0);
    std::vector<int> value(vars.size(), 0);
    for (std::size_t s = 0; s < sep_size; ++s) {
      // Decode separator configuration s (first separator var slowest).
      std::size_t rem = s;
      for (int k = static_cast<int>(sep.size()) - 1; k >= 0; --k) {
        value[k] = static_cast<int>(rem % p.states[sep[k]]);
        rem /= p.states[sep[k]];
      }
      double best = std::numeric_limits<double>::infinity();
      int best_x = 0;
      for (int x = 0; x < sv; ++x) {
        value[vars.size() - 1] = x;
        double c = 0.0;
        for (const auto& t : terms) {
          std::size_t idx = 0;
          for (auto [q, stride] : t.strides) idx += static_cast<std::size_t>(value[q]) * stride;
          c += t.values[idx];
        }
        if (c < best) {
          best = c;
          best_x = x;
        }
      }
      message.values[s] = best;
      argmin[v][s] = best_x;
    }
    if (sep.empty()) {
      root_energy += message.values[0];
    } else {
      inbox[sep.front()].push_back(std::move(message));
    }
  }

  // Decode in reverse elimination order.
  std::vector<int> x(n, 0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const int v = *it;
    std::size_t s = 0;
    for (int u : separator[v]) s = s * p.states[u] + x[u];
    x[v] = argmin[v][s];
  }
  sol.states = std::move(x);
  sol.energy = root_energy;
  return sol;
}

/// Iterated conditional modes from the all-zero state; approximate.
inline Solution icm(const AssociationGraph& g, std::span<const int> nodes, int max_sweeps = 100) {
  const auto p = detail::localize(g, nodes);
  const int n = static_cast<int>(p.states.size());
  std::vector<std::vector<const detail::LocalProblem::Edge*>> incident(n);
  for (const auto& e : p.edges) {
    incident[e.a].push_back(&e);
    incident[e.b].push_back(&e);
  }
  std::vector<int> x(n, 0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (int v = 0; v < n; ++v) {
      std::vector<double> c(*p.unary[v]);
      for (const auto* e : incident[v])
        for (int k = 0; k < p.states[v]; ++k)
          c[k] += e->a == v ? (*e->table)[k * p.states[e->b] + x[e->b]] : (*e->table)[x[e->a] * p.states[v] + k];
      const int best = detail::argmin_index(c);
      if (c[best] < c[x[v]]) {
        x[v] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  Solution sol;
  sol.states = std::move(x);
  sol.exact = false;
  double e = 0.0;
  for (int v = 0; v < n; ++v) e += (*p.unary[v])[sol.states[v]];
  for (const auto& edge : p.edges) e += (*edge.table)[sol.states[edge.a] * p.states[edge.b] + sol.states[edge.b]];
  sol.energy = e;
  return sol;
}

struct SolveStats {
  int components = 0;
  int largest_component = 0;
  int fallbacks = 0;
};

/// Solves every component (concurrently when workers > 1) and merges the
/// results. Components over the clique budget fall back to ICM with a warning.
inline Solution solve(const AssociationGraph& g, int workers = 1, double budget = 1e7, SolveStats* stats = nullptr) {
  const auto comps = connected_components(g);
  std::vector<Solution> parts(comps.size());
  parallel_for(comps.size(), workers, [&](std::size_t c) {
    try {
      parts[c] = solve_subgraph(g, comps[c], budget);
    } catch (const ResourceError& e) {
      parts[c] = icm(g, comps[c]);
    }
  });
  Solution sol;
  sol.states.assign(g.node_count(), 0);
  int fallbacks = 0, largest = 0;
  for (std::size_t c = 0; c < comps.size(); ++c) {
    largest = std::max(largest, static_cast<int>(comps[c].size()));
    if (!parts[c].exact) {
      ++fallbacks;
      sol.exact = false;
      warn("component of " + std::to_string(comps[c].size()) + " targets exceeded the inference budget; used ICM");
    }
    for (std::size_t k = 0; k < comps[c].size(); ++k) sol.states[comps[c][k]] = parts[c].states[k];
  }
  sol.energy = evaluate(g, sol.states);
  if (stats != nullptr) *stats = {static_cast<int>(comps.size()), largest, fallbacks};
  return sol;
}

/// Plain-text dump: "nodes N", one "node i k c_0 ... c_{k-1}" line per node,
/// then "edges E" and one "edge a b ka kb v..." line per edge (row-major).
inline void dump_graph(std::ostream& out, const AssociationGraph& g) {
  out.precision(17);
  out << "nodes " << g.node_count() << '\n';
  for (int m = 0; m < g.node_count(); ++m) {
    out << "node " << m << ' ' << g.states(m);
    for (double c : g.node_costs[m]) out << ' ' << c;
    out << '\n';
  }
  out << "edges " << g.edges.size() << '\n';
  for (const auto& e : g.edges) {
    out << "edge " << e.a << ' ' << e.b << ' ' << g.states(e.a) << ' ' << g.states(e.b);
    for (double v : e.table) out << ' ' << v;
    out << '\n';
  }
}

}  // namespace nomt
