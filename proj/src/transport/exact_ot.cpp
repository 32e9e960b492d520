#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pgada/error.hpp"
#include "pgada/transport.hpp"

namespace pgada {

namespace {

constexpr double kResidualEps = 1e-14;

struct Edge {
  std::size_t to;
  std::size_t rev;
  double cap;
  double cost;
};

class FlowNetwork {
 public:
  explicit FlowNetwork(std::size_t nodes) : adj_(nodes) {}

  std::size_t add_edge(std::size_t from, std::size_t to, double cap, double cost) {
    adj_[from].push_back({to, adj_[to].size(), cap, cost});
    adj_[to].push_back({from, adj_[from].size() - 1, 0.0, -cost});
    return adj_[from].size() - 1;
  }

  // Successive shortest paths with Bellman-Ford; pushes up to `demand` units.
  double min_cost_flow(std::size_t s, std::size_t t, double demand) {
    const std::size_t nodes = adj_.size();
    double pushed = 0.0;
    std::size_t guard = 0;
    const std::size_t guard_limit = 16 * nodes * nodes + 64;
    while (demand - pushed > 1e-15) {
      if (++guard > guard_limit) throw NumericError("exact_ot_small: augmentation did not terminate");
      std::vector<double> dist(nodes, std::numeric_limits<double>::infinity());
      std::vector<std::size_t> prev_node(nodes, nodes);
      std::vector<std::size_t> prev_edge(nodes, 0);
      dist[s] = 0.0;
      for (std::size_t round = 0; round + 1 < nodes; ++round) {
        bool changed = false;
        for (std::size_t u = 0; u < nodes; ++u) {
          if (dist[u] == std::numeric_limits<double>::infinity()) continue;
          for (std::size_t e = 0; e < adj_[u].size(); ++e) {
            const Edge& ed = adj_[u][e];
            if (ed.cap <= kResidualEps) continue;
            const double nd = dist[u] + ed.cost;
            if (nd < dist[ed.to] - 1e-15) {
              dist[ed.to] = nd;
              prev_node[ed.to] = u;
              prev_edge[ed.to] = e;
              changed = true;
            }
          }
        }
        if (!changed) break;
      }
      if (prev_node[t] == nodes) {
        if (demand - pushed < 1e-12) break;
        throw DomainError("exact_ot_small: marginals are infeasible");
      }
      double bottleneck = demand - pushed;
      for (std::size_t v = t; v != s; v = prev_node[v])
        bottleneck = std::min(bottleneck, adj_[prev_node[v]][prev_edge[v]].cap);
      for (std::size_t v = t; v != s; v = prev_node[v]) {
        Edge& ed = adj_[prev_node[v]][prev_edge[v]];
        ed.cap -= bottleneck;
        adj_[v][ed.rev].cap += bottleneck;
      }
      pushed += bottleneck;
    }
    return pushed;
  }

  double flow_on(std::size_t from, std::size_t edge_index) const {
    const Edge& ed = adj_[from][edge_index];
    return adj_[ed.to][ed.rev].cap;
  }

 private:
  std::vector<std::vector<Edge>> adj_;
};

}  // namespace

ExactTransport exact_ot_small(const Matrix& c, std::span<const double> a, std::span<const double> b) {
  const std::size_t n = c.rows();
  const std::size_t m = c.cols();
  if (n * m > 64) throw UsageError("exact_ot_small: instance has " + std::to_string(n * m) + " cells, limit is 64");
  if (n == 0 || m == 0) throw ShapeError("exact_ot_small: empty cost matrix");
  if (a.size() != n || b.size() != m) throw ShapeError("exact_ot_small: cost/marginal shape mismatch");
  require_finite(c, "exact_ot_small cost");
  for (auto w : {a, b}) {
    double total = 0.0;
    for (double v : w) {
      if (!(v >= 0.0)) throw DomainError("exact_ot_small: negative marginal entry");
      total += v;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("exact_ot_small: marginal does not sum to 1");
  }

  const std::size_t source = 0;
  const std::size_t sink = n + m + 1;
  FlowNetwork net(n + m + 2);
  for (std::size_t i = 0; i < n; ++i) net.add_edge(source, 1 + i, a[i], 0.0);
  for (std::size_t j = 0; j < m; ++j) net.add_edge(1 + n + j, sink, b[j], 0.0);
  std::vector<std::size_t> cell_edge(n * m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) cell_edge[i * m + j] = net.add_edge(1 + i, 1 + n + j, 2.0, c(i, j));

  const double total = std::min(std::accumulate(a.begin(), a.end(), 0.0),
                                std::accumulate(b.begin(), b.end(), 0.0));
  net.min_cost_flow(source, sink, total);

  ExactTransport out;
  out.plan = Matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double x = std::max(0.0, net.flow_on(1 + i, cell_edge[i * m + j]));
      out.plan(i, j) = x;
      out.cost += x * c(i, j);
    }
  }
  return out;
}

}  // namespace pgada
