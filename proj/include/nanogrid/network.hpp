#pragma once

// Resistive two-wire DC network: buses, branches, conductor data and the
// nodal conductance matrix.

#include <Eigen/Dense>

#include <algorithm>
#include <map>
#include <queue>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "nanogrid/error.hpp"

namespace nanogrid::network {

struct Conductor {
  double r_per_km = 0.8037;  // ohm/km, one conductor
  double alpha_r = 0.00403;  // 1/degC
  double ref_temp = 20.0;    // degC
};

/// Loop (go and return) resistance of a branch. The temperature term is
/// added per conductor, independent of length.
inline double branch_resistance(double length_m, const Conductor& c, double temp) {
  if (!(length_m > 0.0)) throw InvalidInput("network: branch length must be positive");
  return 2.0 * (length_m / 1000.0 * c.r_per_km + c.alpha_r * (temp - c.ref_temp));
}

enum class BusKind { source, load, junction };

constexpr std::string_view to_string(BusKind k) {
  switch (k) {
    case BusKind::source: return "source";
    case BusKind::load: return "load";
    case BusKind::junction: return "junction";
  }
  return "?";
}

struct Bus {
  std::string id;
  BusKind kind = BusKind::junction;
};

struct Branch {
  std::string a;
  std::string b;
  double length_m = 0.0;
};

class Network {
 public:
  Network() = default;

  void add_bus(std::string id, BusKind kind) {
    if (index_.count(id)) throw InvalidInput("network: duplicate bus '" + id + "'");
    index_.emplace(id, buses_.size());
    buses_.push_back({std::move(id), kind});
  }

  void add_branch(const std::string& a, const std::string& b, double length_m) {
    if (a == b) throw InvalidInput("network: self-loop on bus '" + a + "'");
    index_of(a);
    index_of(b);
    if (!(length_m > 0.0)) throw InvalidInput("network: branch " + a + "-" + b + " needs a positive length");
    branches_.push_back({a, b, length_m});
  }

  void attach(const std::string& device, const std::string& bus) {
    index_of(bus);
    attachment_[device] = bus;
  }

  void remove_branch(std::size_t k) { branches_.erase(branches_.begin() + static_cast<std::ptrdiff_t>(k)); }

  std::size_t index_of(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw InvalidInput("network: unknown bus '" + id + "'");
    return it->second;
  }
  bool has_bus(const std::string& id) const { return index_.count(id) > 0; }

  const std::vector<Bus>& buses() const { return buses_; }
  const std::vector<Branch>& branches() const { return branches_; }
  const std::map<std::string, std::string>& attachment() const { return attachment_; }
  std::size_t size() const { return buses_.size(); }

  Conductor conductor;

  /// Buses not reachable from the first bus; empty when connected.
  std::vector<std::string> unreachable_buses() const {
    if (buses_.empty()) return {};
    std::vector<std::vector<std::size_t>> adj(buses_.size());
    for (const auto& br : branches_) {
      adj[index_of(br.a)].push_back(index_of(br.b));
      adj[index_of(br.b)].push_back(index_of(br.a));
    }
    std::vector<bool> seen(buses_.size(), false);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = true;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v : adj[u])
        if (!seen[v]) { seen[v] = true; q.push(v); }
    }
    std::vector<std::string> out;
    for (std::size_t i = 0; i < buses_.size(); ++i)
      if (!seen[i]) out.push_back(buses_[i].id);
    return out;
  }

  void validate() const {
    if (buses_.empty()) throw InvalidInput("network: no buses");
    const auto lost = unreachable_buses();
    if (!lost.empty()) throw InvalidInput("network: bus '" + lost.front() + "' is disconnected");
  }

 private:
  std::vector<Bus> buses_;
  std::vector<Branch> branches_;
  std::unordered_map<std::string, std::size_t> index_;
  std::map<std::string, std::string> attachment_;
};

inline std::vector<double> branch_resistances(const Network& net, double temp) {
  std::vector<double> r;
  r.reserve(net.branches().size());
  for (const auto& br : net.branches()) r.push_back(branch_resistance(br.length_m, net.conductor, temp));
  return r;
}

/// Standard nodal conductance matrix: G_ij = -1/R_ij, G_ii = sum of 1/R_ij.
inline Eigen::MatrixXd conductance_matrix(const Network& net, double temp) {
  net.validate();
  const auto n = static_cast<Eigen::Index>(net.size());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
  const auto r = branch_resistances(net, temp);
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!(r[k] > 0.0)) throw InvalidInput("network: non-positive branch resistance");
    const auto i = static_cast<Eigen::Index>(net.index_of(net.branches()[k].a));
    const auto j = static_cast<Eigen::Index>(net.index_of(net.branches()[k].b));
    const double y = 1.0 / r[k];
    g(i, i) += y;
    g(j, j) += y;
    g(i, j) -= y;
    g(j, i) -= y;
  }
  return g;
}

/// The 12-bus reference nanogrid: a six-bus ring with six radial spurs.
/// Generation at N1, N6, N7; load banks at N2, N3, N11.
inline Network dcdn_12bus() {
  Network n;
  for (const char* id : {"N1", "N6", "N7"}) n.add_bus(id, BusKind::source);
  for (const char* id : {"N2", "N3", "N11"}) n.add_bus(id, BusKind::load);
  for (const char* id : {"N4", "N5", "N8", "N9", "N10", "N12"}) n.add_bus(id, BusKind::junction);
  n.add_branch("N1", "N5", 6.00);
  n.add_branch("N5", "N12", 11.35);
  n.add_branch("N5", "N8", 11.25);
  n.add_branch("N12", "N4", 11.35);
  n.add_branch("N12", "N6", 17.35);
  n.add_branch("N4", "N2", 28.70);
  n.add_branch("N4", "N10", 9.65);
  n.add_branch("N8", "N7", 17.25);
  n.add_branch("N8", "N9", 11.25);
  n.add_branch("N10", "N11", 38.35);
  n.add_branch("N9", "N3", 28.50);
  n.add_branch("N9", "N10", 9.65);
  n.attach("GSS1", "N1");
  n.attach("GSS2", "N6");
  n.attach("GSS3", "N7");
  n.attach("LB1", "N2");
  n.attach("LB2", "N3");
  n.attach("LB3", "N11");
  return n;
}

}  // namespace nanogrid::network
