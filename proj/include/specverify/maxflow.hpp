#pragma once

// Dinic max-flow on small dense-ish graphs with real-valued capacities.
// Used by the transport feasibility checker; capacities are probability
// masses, so everything lives in [0, 1] and a fixed epsilon is enough.

#include <queue>
#include <vector>

#include "specverify/errors.hpp"

namespace specverify::flow {

inline constexpr double kFlowEps = 1e-12;

class MaxFlow {
 public:
  explicit MaxFlow(int num_vertices) : adj_(static_cast<std::size_t>(num_vertices)) {
    internal_check(num_vertices > 0, "MaxFlow: empty graph");
  }

  void add_edge(int from, int to, double cap) {
    internal_check(valid(from) && valid(to) && cap >= 0.0, "MaxFlow: bad edge");
    adj_[from].push_back({to, cap, static_cast<int>(adj_[to].size())});
    adj_[to].push_back({from, 0.0, static_cast<int>(adj_[from].size()) - 1});
  }

  double run(int source, int sink) {
    internal_check(valid(source) && valid(sink) && source != sink, "MaxFlow: bad terminals");
    source_ = source;
    double total = 0.0;
    while (bfs(source, sink)) {
      iter_.assign(adj_.size(), 0);
      while (true) {
        double pushed = dfs(source, sink, kInf);
        if (pushed <= kFlowEps) break;
        total += pushed;
      }
    }
    return total;
  }

  // vertices reachable from the source in the residual graph; call after run()
  std::vector<bool> reachable() const {
    std::vector<bool> seen(adj_.size(), false);
    std::queue<int> bq;
    seen[source_] = true;
    bq.push(source_);
    while (!bq.empty()) {
      int v = bq.front();
      bq.pop();
      for (const Edge& e : adj_[v]) {
        if (e.cap > kFlowEps && !seen[e.to]) {
          seen[e.to] = true;
          bq.push(e.to);
        }
      }
    }
    return seen;
  }

 private:
  struct Edge {
    int to;
    double cap;
    int rev;
  };

  static constexpr double kInf = 1e18;

  bool valid(int v) const { return v >= 0 && v < static_cast<int>(adj_.size()); }

  bool bfs(int source, int sink) {
    level_.assign(adj_.size(), -1);
    std::queue<int> bq;
    level_[source] = 0;
    bq.push(source);
    while (!bq.empty()) {
      int v = bq.front();
      bq.pop();
      for (const Edge& e : adj_[v]) {
        if (e.cap > kFlowEps && level_[e.to] < 0) {
          level_[e.to] = level_[v] + 1;
          bq.push(e.to);
        }
      }
    }
    return level_[sink] >= 0;
  }

  double dfs(int v, int sink, double limit) {
    if (v == sink) return limit;
    for (int& i = iter_[v]; i < static_cast<int>(adj_[v].size()); ++i) {
      Edge& e = adj_[v][i];
      if (e.cap <= kFlowEps || level_[e.to] != level_[v] + 1) continue;
      double pushed = dfs(e.to, sink, limit < e.cap ? limit : e.cap);
      if (pushed > kFlowEps) {
        e.cap -= pushed;
        adj_[e.to][e.rev].cap += pushed;
        return pushed;
      }
    }
    return 0.0;
  }

  std::vector<std::vector<Edge>> adj_;
  std::vector<int> level_;
  std::vector<int> iter_;
  int source_ = 0;
};

}  // namespace specverify::flow
