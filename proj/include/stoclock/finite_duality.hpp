// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The stoclock Authors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "stoclock/special_fn.hpp"
#include "stoclock/utility.hpp"

namespace stoclock {

class nflvr_violation : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class infeasible_budget : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Scenario trees

struct TreeNode {
    int parent = -1;
    int time = 0;
    double branch_prob = 1.0;
    std::vector<double> price;
    std::vector<int> children;
};

struct NodeSpec {
    int parent = -1;
    double prob = 1.0;
    std::vector<double> price;
};

class ScenarioTree {
public:
    static constexpr int max_depth = 4;
    static constexpr int max_branching = 4;

    /// Nodes must be listed parents-first; node 0 is the root.
    static ScenarioTree from_nodes(const std::vector<NodeSpec>& specs) {
        if (specs.empty()) throw std::domain_error("ScenarioTree: no nodes");
        if (specs[0].parent != -1) throw std::domain_error("ScenarioTree: node 0 must be the root");
        ScenarioTree tree;
        const std::size_t dim = specs[0].price.size();
        if (dim == 0) throw std::domain_error("ScenarioTree: prices need at least one asset");
        for (std::size_t i = 0; i < specs.size(); ++i) {
            const auto& s = specs[i];
            TreeNode node;
            node.parent = s.parent;
            node.branch_prob = s.prob;
            node.price = s.price;
            if (s.price.size() != dim) throw std::domain_error("ScenarioTree: inconsistent price dimension");
            for (double v : s.price)
                if (!(v > 0.0)) throw std::domain_error("ScenarioTree: prices must be positive");
            if (i > 0) {
                if (s.parent < 0 || static_cast<std::size_t>(s.parent) >= i)
                    throw std::domain_error("ScenarioTree: parent must precede child");
                if (!(s.prob > 0.0)) throw std::domain_error("ScenarioTree: branch probabilities must be positive");
                node.time = tree.nodes_[static_cast<std::size_t>(s.parent)].time + 1;
                tree.nodes_[static_cast<std::size_t>(s.parent)].children.push_back(static_cast<int>(i));
            }
            tree.nodes_.push_back(std::move(node));
        }
        tree.finalize();
        return tree;
    }

    /// Non-recombining single-asset lattice with the same factors and probabilities at every node.
    static ScenarioTree lattice(int depth, double s0, const std::vector<double>& factors, const std::vector<double>& probs) {
        if (factors.size() != probs.size() || factors.empty())
            throw std::domain_error("ScenarioTree::lattice: factors and probabilities must match");
        std::vector<NodeSpec> specs;
        specs.push_back({-1, 1.0, {s0}});
        std::vector<int> frontier = {0};
        for (int t = 0; t < depth; ++t) {
            std::vector<int> next;
            for (int parent : frontier) {
                for (std::size_t k = 0; k < factors.size(); ++k) {
                    specs.push_back({parent, probs[k], {specs[static_cast<std::size_t>(parent)].price[0] * factors[k]}});
                    next.push_back(static_cast<int>(specs.size() - 1));
                }
            }
            frontier = std::move(next);
        }
        return from_nodes(specs);
    }

    std::size_t size() const { return nodes_.size(); }
    int depth() const { return depth_; }
    std::size_t assets() const { return nodes_[0].price.size(); }
    const TreeNode& node(std::size_t i) const { return nodes_[i]; }
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    double prob(std::size_t i) const { return path_prob_[i]; }
    const std::vector<int>& leaves() const { return leaves_; }
    const std::vector<int>& internal_nodes() const { return internal_; }
    bool is_leaf(std::size_t i) const { return nodes_[i].children.empty(); }

    /// Leaves below node i, in index order.
    std::vector<int> leaves_below(std::size_t i) const {
        std::vector<int> out;
        for (int leaf : leaves_) {
            int v = leaf;
            while (v != -1 && v != static_cast<int>(i)) v = nodes_[static_cast<std::size_t>(v)].parent;
            if (v == static_cast<int>(i)) out.push_back(leaf);
        }
        return out;
    }

private:
    void finalize() {
        path_prob_.assign(nodes_.size(), 1.0);
        depth_ = 0;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            const auto& n = nodes_[i];
            if (n.parent >= 0) path_prob_[i] = path_prob_[static_cast<std::size_t>(n.parent)] * n.branch_prob;
            depth_ = std::max(depth_, n.time);
            if (n.children.empty())
                leaves_.push_back(static_cast<int>(i));
            else
                internal_.push_back(static_cast<int>(i));
            if (n.children.size() == 1) throw std::domain_error("ScenarioTree: a node needs zero or at least two children");
            if (static_cast<int>(n.children.size()) > max_branching)
                throw std::domain_error("ScenarioTree: branching above 4 is outside the supported scale");
            if (!n.children.empty()) {
                double sum = 0.0;
                for (int c : n.children) sum += nodes_[static_cast<std::size_t>(c)].branch_prob;
                if (std::abs(sum - 1.0) > 1e-12) throw std::domain_error("ScenarioTree: branch probabilities must sum to 1");
            }
        }
        if (depth_ < 1) throw std::domain_error("ScenarioTree: depth must be positive");
        if (depth_ > max_depth) throw std::domain_error("ScenarioTree: depth above 4 is outside the supported scale");
        for (int leaf : leaves_)
            if (nodes_[static_cast<std::size_t>(leaf)].time != depth_)
                throw std::domain_error("ScenarioTree: all leaves must sit at the final time");
    }

    std::vector<TreeNode> nodes_;
    std::vector<double> path_prob_;
    std::vector<int> leaves_;
    std::vector<int> internal_;
    int depth_ = 0;
};

// ---------------------------------------------------------------------------
// Clocks and endowments

struct ClockWeights {
    std::vector<double> weight;  // per node; the root carries none

    void validate(const ScenarioTree& tree) const {
        if (weight.size() != tree.size()) throw std::domain_error("ClockWeights: one weight per node required");
        if (weight[0] != 0.0) throw std::domain_error("ClockWeights: the root carries no clock increment");
        for (double w : weight)
            if (!(w >= 0.0)) throw std::domain_error("ClockWeights: weights must be nonnegative");
        for (int leaf : tree.leaves()) {
            double sum = 0.0;
            for (int v = leaf; v != -1; v = tree.node(static_cast<std::size_t>(v)).parent) sum += weight[static_cast<std::size_t>(v)];
            if (std::abs(sum - 1.0) > 1e-12) throw std::domain_error("ClockWeights: weights along each path must sum to 1");
        }
    }
};

enum class ClockKind { uniform, terminal, mixed, stopping_times };

inline std::string to_string(ClockKind k) {
    switch (k) {
        case ClockKind::uniform: return "uniform";
        case ClockKind::terminal: return "terminal";
        case ClockKind::mixed: return "mixed";
        case ClockKind::stopping_times: return "stopping_times";
    }
    return "?";
}

/// A stopping time given by its value on every leaf (in tree.leaves() order).
using LeafStoppingTime = std::vector<int>;

inline void validate_stopping_time(const ScenarioTree& tree, const LeafStoppingTime& tau) {
    const auto& leaves = tree.leaves();
    if (tau.size() != leaves.size()) throw std::domain_error("stopping time: one value per leaf required");
    for (int v : tau)
        if (v < 1 || v > tree.depth()) throw std::domain_error("stopping time: values must lie in 1..depth");
    std::map<int, std::size_t> leaf_pos;
    for (std::size_t k = 0; k < leaves.size(); ++k) leaf_pos[leaves[k]] = k;
    // {tau <= t} must be decided at every node of time t.
    for (std::size_t i = 0; i < tree.size(); ++i) {
        const int t = tree.node(i).time;
        const auto below = tree.leaves_below(i);
        int stopped = 0;
        for (int leaf : below)
            if (tau[leaf_pos[leaf]] <= t) ++stopped;
        if (stopped != 0 && stopped != static_cast<int>(below.size())) {
            std::ostringstream msg;
            msg << "stopping time is not adapted: node " << i << " at time " << t << " does not decide {tau <= " << t << "}";
            throw std::domain_error(msg.str());
        }
    }
}

inline ClockWeights make_clock(const ScenarioTree& tree, ClockKind kind, const std::vector<LeafStoppingTime>& taus = {}) {
    ClockWeights c;
    c.weight.assign(tree.size(), 0.0);
    const double horizon = tree.depth();
    switch (kind) {
        case ClockKind::uniform:
            for (std::size_t i = 1; i < tree.size(); ++i) c.weight[i] = 1.0 / horizon;
            break;
        case ClockKind::terminal:
            for (int leaf : tree.leaves()) c.weight[static_cast<std::size_t>(leaf)] = 1.0;
            break;
        case ClockKind::mixed:
            for (std::size_t i = 1; i < tree.size(); ++i) c.weight[i] = 0.5 / horizon;
            for (int leaf : tree.leaves()) c.weight[static_cast<std::size_t>(leaf)] += 0.5;
            break;
        case ClockKind::stopping_times: {
            if (taus.empty()) throw std::domain_error("make_clock: stopping_times needs at least one stopping time");
            for (const auto& tau : taus) validate_stopping_time(tree, tau);
            const auto& leaves = tree.leaves();
            const double share = 1.0 / static_cast<double>(taus.size());
            for (const auto& tau : taus) {
                for (std::size_t k = 0; k < leaves.size(); ++k) {
                    int v = leaves[k];
                    while (tree.node(static_cast<std::size_t>(v)).time > tau[k]) v = tree.node(static_cast<std::size_t>(v)).parent;
                    // Each node is charged once per stopping time, whichever leaf reaches it first.
                    bool first = true;
                    for (std::size_t m = 0; m < k; ++m) {
                        int w = leaves[m];
                        while (tree.node(static_cast<std::size_t>(w)).time > tau[m]) w = tree.node(static_cast<std::size_t>(w)).parent;
                        if (w == v) {
                            first = false;
                            break;
                        }
                    }
                    if (first) c.weight[static_cast<std::size_t>(v)] += share;
                }
            }
            break;
        }
    }
    c.validate(tree);
    return c;
}

using Endowment = std::vector<double>;

inline void validate_endowment(const ScenarioTree& tree, const Endowment& e) {
    if (e.size() != tree.size()) throw std::domain_error("endowment: one value per node required");
    for (double v : e)
        if (!(v >= 0.0)) throw std::domain_error("endowment: values must be nonnegative");
}

// ---------------------------------------------------------------------------
// Martingale measures

/// A measure on the tree given by conditional branch probabilities at each internal node.
struct TreeMeasure {
    std::vector<std::vector<double>> branch;  // per node; empty on leaves
};

inline std::vector<double> node_masses(const ScenarioTree& tree, const TreeMeasure& q) {
    std::vector<double> mass(tree.size(), 0.0);
    mass[0] = 1.0;
    for (std::size_t i = 0; i < tree.size(); ++i) {
        const auto& ch = tree.node(i).children;
        for (std::size_t k = 0; k < ch.size(); ++k) mass[static_cast<std::size_t>(ch[k])] = mass[i] * q.branch[i][k];
    }
    return mass;
}

/// Y^Q at each node: Q(node) / P(node).
inline std::vector<double> build_density_process(const ScenarioTree& tree, const TreeMeasure& q) {
    auto mass = node_masses(tree, q);
    for (std::size_t i = 0; i < tree.size(); ++i) mass[i] /= tree.prob(i);
    return mass;
}

/// Y^Q from leaf probabilities (in tree.leaves() order).
inline std::vector<double> build_density_process(const ScenarioTree& tree, const std::vector<double>& leaf_q) {
    const auto& leaves = tree.leaves();
    if (leaf_q.size() != leaves.size()) throw std::domain_error("build_density_process: one mass per leaf required");
    std::vector<double> mass(tree.size(), 0.0);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (leaf_q[k] > 0.0 && !(tree.prob(static_cast<std::size_t>(leaves[k])) > 0.0))
            throw std::domain_error("build_density_process: Q must be absolutely continuous w.r.t. P");
        for (int v = leaves[k]; v != -1; v = tree.node(static_cast<std::size_t>(v)).parent) mass[static_cast<std::size_t>(v)] += leaf_q[k];
    }
    for (std::size_t i = 0; i < tree.size(); ++i) mass[i] /= tree.prob(i);
    return mass;
}

struct MartingalePolytope {
    // Vertices of each internal node's conditional polytope; empty for leaves.
    std::vector<std::vector<std::vector<double>>> node_vertices;

    std::size_t global_vertex_count(const ScenarioTree& tree) const {
        std::size_t n = 1;
        for (int i : tree.internal_nodes()) {
            n *= node_vertices[static_cast<std::size_t>(i)].size();
            if (n > (std::size_t{1} << 40)) break;
        }
        return n;
    }

    TreeMeasure measure(const ScenarioTree& tree, const std::vector<int>& choice) const {
        TreeMeasure q;
        q.branch.resize(tree.size());
        for (int i : tree.internal_nodes())
            q.branch[static_cast<std::size_t>(i)] =
                node_vertices[static_cast<std::size_t>(i)][static_cast<std::size_t>(choice[static_cast<std::size_t>(i)])];
        return q;
    }

    /// Node-wise vertex barycentre: strictly positive on every branch when an equivalent measure exists.
    TreeMeasure central(const ScenarioTree& tree) const {
        TreeMeasure q;
        q.branch.resize(tree.size());
        for (int i : tree.internal_nodes()) {
            const auto& verts = node_vertices[static_cast<std::size_t>(i)];
            std::vector<double> avg(verts.front().size(), 0.0);
            for (const auto& v : verts)
                for (std::size_t k = 0; k < v.size(); ++k) avg[k] += v[k] / static_cast<double>(verts.size());
            q.branch[static_cast<std::size_t>(i)] = avg;
        }
        return q;
    }

    /// All vertices of the product polytope, as per-node vertex indices.
    std::vector<std::vector<int>> global_vertices(const ScenarioTree& tree, std::size_t cap = 4096) const {
        if (global_vertex_count(tree) > cap) throw std::domain_error("global vertex enumeration exceeds the cap");
        std::vector<std::vector<int>> out;
        std::vector<int> choice(tree.size(), -1);
        const auto& internal = tree.internal_nodes();
        std::function<void(std::size_t)> rec = [&](std::size_t k) {
            if (k == internal.size()) {
                out.push_back(choice);
                return;
            }
            const auto node = static_cast<std::size_t>(internal[k]);
            for (std::size_t v = 0; v < node_vertices[node].size(); ++v) {
                choice[node] = static_cast<int>(v);
                rec(k + 1);
            }
        };
        rec(0);
        return out;
    }
};

namespace detail {

/// Vertices of {q >= 0, sum q = 1, sum q_k dS_k = 0} for one branching node.
inline std::vector<std::vector<double>> node_polytope_vertices(const std::vector<std::vector<double>>& moves) {
    const std::size_t m = moves.size();
    const std::size_t d = moves.front().size();
    const std::size_t rows = d + 1;
    std::vector<std::vector<double>> verts;
    auto scale = 0.0;
    for (const auto& mv : moves)
        for (double v : mv) scale = std::max(scale, std::abs(v));
    const double tol = 1e-12 * std::max(1.0, scale);
    for (std::size_t mask = 1; mask < (std::size_t{1} << m); ++mask) {
        std::vector<std::size_t> support;
        for (std::size_t k = 0; k < m; ++k)
            if (mask & (std::size_t{1} << k)) support.push_back(k);
        if (support.size() > rows) continue;
        std::vector<double> q(m, 0.0);
        if (d == 1 && support.size() == 2) {
            // Closed form keeps the one-asset case correctly rounded.
            const double a = moves[support[0]][0];
            const double b = moves[support[1]][0];
            if (a == b) continue;
            q[support[0]] = b / (b - a);
            q[support[1]] = -a / (b - a);
        } else {
            Eigen::MatrixXd A(rows, support.size());
            Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(rows));
            rhs(0) = 1.0;
            for (std::size_t c = 0; c < support.size(); ++c) {
                A(0, static_cast<Eigen::Index>(c)) = 1.0;
                for (std::size_t r = 0; r < d; ++r) A(static_cast<Eigen::Index>(r + 1), static_cast<Eigen::Index>(c)) = moves[support[c]][r];
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
            if (static_cast<std::size_t>(lu.rank()) != support.size()) continue;
            Eigen::VectorXd sol = A.colPivHouseholderQr().solve(rhs);
            if ((A * sol - rhs).lpNorm<Eigen::Infinity>() > tol) continue;
            for (std::size_t c = 0; c < support.size(); ++c) q[support[c]] = sol(static_cast<Eigen::Index>(c));
        }
        bool ok = true;
        for (double v : q)
            if (v < -1e-14) ok = false;
        if (!ok) continue;
        for (double& v : q) v = std::max(v, 0.0);
        // Sub-supports of a basic solution reproduce it; keep one copy.
        bool seen = false;
        for (const auto& w : verts) {
            double diff = 0.0;
            for (std::size_t k = 0; k < m; ++k) diff = std::max(diff, std::abs(w[k] - q[k]));
            if (diff < 1e-12) seen = true;
        }
        if (!seen) verts.push_back(q);
    }
    return verts;
}

}  // namespace detail

inline MartingalePolytope martingale_vertices(const ScenarioTree& tree) {
    MartingalePolytope poly;
    poly.node_vertices.resize(tree.size());
    for (int i : tree.internal_nodes()) {
        const auto& node = tree.node(static_cast<std::size_t>(i));
        std::vector<std::vector<double>> moves;
        for (int c : node.children) {
            std::vector<double> mv(tree.assets());
            for (std::size_t a = 0; a < tree.assets(); ++a) mv[a] = tree.node(static_cast<std::size_t>(c)).price[a] - node.price[a];
            moves.push_back(mv);
        }
        auto verts = detail::node_polytope_vertices(moves);
        if (verts.empty()) {
            std::ostringstream msg;
            msg << "NFLVR violated: no martingale measure at node " << i;
            throw nflvr_violation(msg.str());
        }
        std::vector<double> avg(node.children.size(), 0.0);
        for (const auto& v : verts)
            for (std::size_t k = 0; k < v.size(); ++k) avg[k] += v[k];
        for (double a : avg)
            if (!(a > 0.0)) {
                std::ostringstream msg;
                msg << "NFLVR violated: no equivalent martingale measure at node " << i;
                throw nflvr_violation(msg.str());
            }
        poly.node_vertices[static_cast<std::size_t>(i)] = std::move(verts);
    }
    return poly;
}

// ---------------------------------------------------------------------------
// Linear functionals over the martingale polytope

struct ExtremeValue {
    double value = 0.0;
    std::vector<int> choice;  // per-node vertex index attaining it
};

/// sup (or inf) over M of sum_node Q(node) w(node) f(node), by backward induction.
inline ExtremeValue extreme_pairing(const ScenarioTree& tree, const MartingalePolytope& poly, const std::vector<double>& w,
                                    const std::vector<double>& f, bool maximize) {
    std::vector<double> val(tree.size(), 0.0);
    ExtremeValue out;
    out.choice.assign(tree.size(), -1);
    for (std::size_t ii = tree.size(); ii-- > 0;) {
        double own = w[ii] * f[ii];
        const auto& node = tree.node(ii);
        if (node.children.empty()) {
            val[ii] = own;
            continue;
        }
        const auto& verts = poly.node_vertices[ii];
        double best = maximize ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        int arg = -1;
        for (std::size_t v = 0; v < verts.size(); ++v) {
            double cont = 0.0;
            for (std::size_t k = 0; k < node.children.size(); ++k) cont += verts[v][k] * val[static_cast<std::size_t>(node.children[k])];
            if (maximize ? cont > best : cont < best) {
                best = cont;
                arg = static_cast<int>(v);
            }
        }
        out.choice[ii] = arg;
        val[ii] = own + best;
    }
    out.value = val[0];
    return out;
}

inline double pairing(const ScenarioTree& tree, const TreeMeasure& q, const std::vector<double>& w, const std::vector<double>& f) {
    const auto mass = node_masses(tree, q);
    double s = 0.0;
    for (std::size_t i = 0; i < tree.size(); ++i) s += mass[i] * w[i] * f[i];
    return s;
}

struct HedgingPrices {
    double lower = 0.0;
    double upper = 0.0;
};

/// Lower and upper hedging prices of a terminal claim (one value per leaf, tree.leaves() order).
inline HedgingPrices hedging_prices(const ScenarioTree& tree, const MartingalePolytope& poly, const std::vector<double>& claim) {
    const auto& leaves = tree.leaves();
    if (claim.size() != leaves.size()) throw std::domain_error("hedging_prices: one claim value per leaf required");
    std::vector<double> w(tree.size(), 0.0), f(tree.size(), 0.0);
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        if (!(claim[k] >= 0.0)) throw std::domain_error("hedging_prices: claim must be nonnegative");
        w[static_cast<std::size_t>(leaves[k])] = 1.0;
        f[static_cast<std::size_t>(leaves[k])] = claim[k];
    }
    return {extreme_pairing(tree, poly, w, f, false).value, extreme_pairing(tree, poly, w, f, true).value};
}

/// L(E) = inf_Q E^Q[sum e dkappa].
inline double lower_endowment_price(const ScenarioTree& tree, const MartingalePolytope& poly, const ClockWeights& clock,
                                    const Endowment& e) {
    return extreme_pairing(tree, poly, clock.weight, e, false).value;
}

inline bool is_financeable(const ScenarioTree& tree, const MartingalePolytope& poly, const ClockWeights& clock,
                           const std::vector<double>& c, double x, const Endowment& e, double tol = 1e-10) {
    std::vector<double> net(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) {
        if (!(c[i] >= 0.0)) throw std::domain_error("is_financeable: consumption must be nonnegative");
        net[i] = c[i] - e[i];
    }
    const double need = extreme_pairing(tree, poly, clock.weight, net, true).value;
    return need <= x + tol * std::max(1.0, std::abs(x));
}

/// Same test by explicit enumeration of the product polytope's vertices.
inline bool is_financeable_by_vertices(const ScenarioTree& tree, const MartingalePolytope& poly, const ClockWeights& clock,
                                       const std::vector<double>& c, double x, const Endowment& e, double tol = 1e-10) {
    std::vector<double> net(tree.size());
    for (std::size_t i = 0; i < tree.size(); ++i) net[i] = c[i] - e[i];
    for (const auto& choice : poly.global_vertices(tree)) {
        if (pairing(tree, poly.measure(tree, choice), clock.weight, net) > x + tol * std::max(1.0, std::abs(x))) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// Primal and dual problems

struct PrimalSolution {
    std::vector<double> c;       // per node; zero where the clock carries no weight
    double u_value = 0.0;
    double x = 0.0;
    double y = 0.0;              // u'(x) = total multiplier mass
    double dual_value = 0.0;     // restricted Lagrangian value
    double duality_gap = 0.0;
    std::vector<double> lambda;  // multiplier per active vertex
    std::vector<std::vector<int>> vertices;  // per-node vertex choice per multiplier; empty = central measure
    double budget_violation = 0.0;
    double complementarity = 0.0;
    int columns = 0;
    int iterations = 0;
};

struct DualSolution {
    double y = 0.0;
    std::vector<double> Y;          // per node
    std::vector<double> weights;    // mixture weights, summing to y
    std::vector<std::vector<int>> vertices;
    std::vector<double> F;          // solid factor per node
    double v_value = 0.0;
    double v_prime = 0.0;           // -<I(Y) - e, Y> / y
    double x = 0.0;                 // matched primal wealth, -v'(y)
    int solid_pressure_nodes = 0;   // weighted nodes where d/dF > 0 (e > I(Y))
    int solid_settled_nodes = 0;    // weighted nodes where d/dF < 0
};

struct SolverOptions {
    double projected_gradient_tol = 1e-13;
    double pricing_tol = 1e-12;
    int max_columns = 400;
    int max_newton = 200;
    std::uint64_t init_seed = 0;    // nonzero: start from random vertex multipliers
    int random_init_columns = 3;
};

class DualitySolver {
public:
    DualitySolver(ScenarioTree tree, ClockWeights clock, UtilityField f, Endowment e, SolverOptions opt = {})
        : tree_(std::move(tree)), clock_(std::move(clock)), f_(f), e_(std::move(e)), opt_(opt) {
        clock_.validate(tree_);
        validate_endowment(tree_, e_);
        f_.validate();
        poly_ = martingale_vertices(tree_);
        for (std::size_t i = 0; i < tree_.size(); ++i) {
            if (clock_.weight[i] > 0.0) {
                weighted_.push_back(i);
                pk_.push_back(tree_.prob(i) * clock_.weight[i]);
                tn_.push_back(static_cast<double>(tree_.node(i).time));
                en_.push_back(e_[i]);
            }
        }
        lower_ = lower_endowment_price(tree_, poly_, clock_, e_);
        add_column({});
    }

    const ScenarioTree& tree() const { return tree_; }
    const MartingalePolytope& polytope() const { return poly_; }
    const ClockWeights& clock() const { return clock_; }
    const Endowment& endowment() const { return e_; }
    const UtilityField& utility() const { return f_; }
    /// L(E): x > -L is the feasible region.
    double lower_price() const { return lower_; }
    std::size_t weighted_nodes() const { return weighted_.size(); }
    std::size_t column_count() const { return cols_.size(); }

    PrimalSolution solve_primal(double x) {
        if (!(x > -lower_)) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "solve_primal: x = " << x << " is not above -L(E) = " << 0.0 - lower_ << " (below -L(E): no financeable consumption)";
            throw infeasible_budget(msg.str());
        }
        std::vector<double> lambda(cols_.size(), 0.0);
        if (opt_.init_seed != 0) {
            std::mt19937_64 gen(opt_.init_seed);
            std::uniform_real_distribution<double> unif(0.1, 1.0);
            for (int k = 0; k < opt_.random_init_columns; ++k) {
                std::vector<int> choice(tree_.size(), -1);
                for (int i : tree_.internal_nodes())
                    choice[static_cast<std::size_t>(i)] = static_cast<int>(gen() % poly_.node_vertices[static_cast<std::size_t>(i)].size());
                add_column(choice);
            }
            lambda.assign(cols_.size(), 0.0);
            for (auto& l : lambda) l = unif(gen);
            lambda[0] = std::max(lambda[0], 0.5);
        } else {
            lambda = warm_;
            lambda.resize(cols_.size(), 0.0);
            if (std::all_of(lambda.begin(), lambda.end(), [](double v) { return v <= 0.0; })) lambda[0] = 1.0;
            // The central measure keeps every weighted node strictly positive.
            lambda[0] = std::max(lambda[0], 1e-3 * std::accumulate(lambda.begin(), lambda.end(), 0.0));
        }

        PrimalSolution sol;
        sol.x = x;
        int it = 0;
        std::vector<double> c;
        for (; it < opt_.max_columns; ++it) {
            sol.iterations += restricted_newton(lambda, x);
            const auto Y = density(lambda);
            c = consumption(Y);
            std::vector<double> net(tree_.size(), 0.0);
            for (std::size_t k = 0; k < weighted_.size(); ++k) net[weighted_[k]] = c[k] - en_[k];
            auto best = extreme_pairing(tree_, poly_, clock_.weight, net, true);
            const double violation = best.value - x;
            sol.budget_violation = std::max(0.0, violation);
            if (violation <= opt_.pricing_tol * std::max(1.0, std::abs(x))) break;
            if (!add_column(best.choice)) break;
            lambda.resize(cols_.size(), 0.0);
        }
        warm_ = lambda;
        const auto Y = density(lambda);
        sol.c.assign(tree_.size(), 0.0);
        double u = 0.0;
        for (std::size_t k = 0; k < weighted_.size(); ++k) {
            sol.c[weighted_[k]] = c[k];
            u += pk_[k] * u_eval(f_, tn_[k], c[k]);
        }
        sol.u_value = u;
        sol.dual_value = objective(lambda, x);
        sol.duality_gap = sol.dual_value - u;
        sol.y = std::accumulate(lambda.begin(), lambda.end(), 0.0);
        sol.columns = static_cast<int>(cols_.size());
        double comp = 0.0;
        for (std::size_t j = 0; j < cols_.size(); ++j) {
            if (lambda[j] <= 0.0) continue;
            double pay = 0.0;
            for (std::size_t k = 0; k < weighted_.size(); ++k) pay += pk_[k] * cols_[j][k] * (c[k] - en_[k]);
            comp = std::max(comp, lambda[j] * std::abs(x - pay));
            sol.lambda.push_back(lambda[j]);
            sol.vertices.push_back(choices_[j]);
        }
        sol.complementarity = comp;
        if (!std::isfinite(u)) throw numeric_error("solve_primal: non-finite value (unbounded problem)");
        (void)Y;
        return sol;
    }

    /// u'(x) = y(x), the multiplier mass at the optimum.
    double marginal(double x) { return solve_primal(x).y; }

    DualSolution solve_dual(double y) {
        if (!(y > 0.0)) throw std::domain_error("solve_dual: y must be positive (v = +inf for y < 0)");
        namespace bt = boost::math::tools;
        auto mass = [&](double x) { return solve_primal(x).y; };
        // Bracket x with y(x_lo) >= y >= y(x_hi); y(x) decreases from +inf at -L to 0.
        double x_hi = std::max(1.0, -lower_ + 1.0);
        int guard = 0;
        while (mass(x_hi) >= y && guard++ < 200) x_hi = -lower_ + 2.0 * (x_hi + lower_);
        double gap = x_hi + lower_;
        double x_lo = -lower_ + 0.5 * gap;
        guard = 0;
        while (mass(x_lo) <= y && guard++ < 400) {
            gap *= 0.5;
            x_lo = -lower_ + gap;
        }
        if (guard >= 400) throw numeric_error("solve_dual: could not bracket the matching wealth");
        auto fn = [&](double x) { return std::log(mass(x)) - std::log(y); };
        // Endpoint values come from the bracketing pass; warm-started re-solves may differ in the last bit.
        const double f_lo = fn(x_lo);
        const double f_hi = fn(x_hi);
        std::pair<double, double> root{x_lo, x_lo};
        if (f_hi == 0.0 || f_lo * f_hi > 0.0) {
            root = std::abs(f_hi) < std::abs(f_lo) ? std::pair{x_hi, x_hi} : std::pair{x_lo, x_lo};
        } else if (f_lo != 0.0) {
            std::uintmax_t iters = 200;
            root = bt::toms748_solve(fn, x_lo, x_hi, f_lo, f_hi, bt::eps_tolerance<double>(52), iters);
        }
        const double x_star = 0.5 * (root.first + root.second);
        auto primal = solve_primal(x_star);
        return dual_from_multipliers(primal, y);
    }

    /// Dual objective at an arbitrary point of y conv(M) given by mixture weights over vertex choices.
    double dual_objective_at(const std::vector<double>& Ynode) const {
        double v = 0.0;
        for (std::size_t k = 0; k < weighted_.size(); ++k) {
            const double yy = Ynode[weighted_[k]];
            if (!(yy > 0.0)) return std::numeric_limits<double>::infinity();
            v += pk_[k] * (conjugate_v(f_, tn_[k], yy) + en_[k] * yy);
        }
        return v;
    }

    double value_u(double x) { return solve_primal(x).u_value; }
    double value_v(double y) { return solve_dual(y).v_value; }

    /// <f, Q_kappa> for a per-node f and a density process Y.
    double pairing_with_density(const std::vector<double>& f, const std::vector<double>& Ynode) const {
        double s = 0.0;
        for (std::size_t k = 0; k < weighted_.size(); ++k) s += pk_[k] * f[weighted_[k]] * Ynode[weighted_[k]];
        return s;
    }

private:
    bool add_column(const std::vector<int>& choice) {
        for (const auto& existing : choices_)
            if (existing == choice) return false;
        const TreeMeasure q = choice.empty() ? poly_.central(tree_) : poly_.measure(tree_, choice);
        const auto Y = build_density_process(tree_, q);
        std::vector<double> col(weighted_.size());
        for (std::size_t k = 0; k < weighted_.size(); ++k) col[k] = Y[weighted_[k]];
        cols_.push_back(std::move(col));
        choices_.push_back(choice);
        return true;
    }

    std::vector<double> density(const std::vector<double>& lambda) const {
        std::vector<double> Y(weighted_.size(), 0.0);
        for (std::size_t j = 0; j < cols_.size(); ++j) {
            if (lambda[j] == 0.0) continue;
            for (std::size_t k = 0; k < weighted_.size(); ++k) Y[k] += lambda[j] * cols_[j][k];
        }
        return Y;
    }

    std::vector<double> consumption(const std::vector<double>& Y) const {
        std::vector<double> c(Y.size());
        for (std::size_t k = 0; k < Y.size(); ++k) c[k] = inverse_marginal(f_, tn_[k], Y[k]);
        return c;
    }

    double objective(const std::vector<double>& lambda, double x) const {
        const auto Y = density(lambda);
        double g = 0.0;
        for (std::size_t k = 0; k < Y.size(); ++k) {
            if (!(Y[k] > 0.0)) return std::numeric_limits<double>::infinity();
            g += pk_[k] * (conjugate_v(f_, tn_[k], Y[k]) + en_[k] * Y[k]);
        }
        return g + x * std::accumulate(lambda.begin(), lambda.end(), 0.0);
    }

    double v_second(std::size_t k, double y) const {
        const double i = inverse_marginal(f_, tn_[k], y);
        if (f_.kind == UtilityKind::log) return i / y;
        return i / ((1.0 - f_.gamma) * y);
    }

    /// Projected Newton (two-metric) for min over lambda >= 0 of the restricted Lagrangian.
    int restricted_newton(std::vector<double>& lambda, double x) const {
        const std::size_t m = cols_.size();
        const std::size_t n = weighted_.size();
        int iter = 0;
        double g_val = objective(lambda, x);
        for (; iter < opt_.max_newton; ++iter) {
            const auto Y = density(lambda);
            Eigen::VectorXd grad(static_cast<Eigen::Index>(m));
            std::vector<double> slope(n), curv(n);
            for (std::size_t k = 0; k < n; ++k) {
                slope[k] = pk_[k] * (en_[k] - inverse_marginal(f_, tn_[k], Y[k]));
                curv[k] = pk_[k] * v_second(k, Y[k]);
            }
            for (std::size_t j = 0; j < m; ++j) {
                double s = x;
                for (std::size_t k = 0; k < n; ++k) s += slope[k] * cols_[j][k];
                grad(static_cast<Eigen::Index>(j)) = s;
            }
            double pg = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                const double proj = std::max(0.0, lambda[j] - grad(static_cast<Eigen::Index>(j)));
                pg = std::max(pg, std::abs(lambda[j] - proj));
            }
            const double scale = std::max(1.0, std::accumulate(lambda.begin(), lambda.end(), 0.0));
            if (pg <= opt_.projected_gradient_tol * scale) break;

            const double eps_active = std::min(1e-8, pg);
            std::vector<std::size_t> free_idx;
            std::vector<bool> bound(m, false);
            for (std::size_t j = 0; j < m; ++j) {
                if (lambda[j] <= eps_active && grad(static_cast<Eigen::Index>(j)) > 0.0)
                    bound[j] = true;
                else
                    free_idx.push_back(j);
            }
            std::vector<double> dir(m, 0.0);
            if (!free_idx.empty()) {
                const auto nf = static_cast<Eigen::Index>(free_idx.size());
                Eigen::MatrixXd H = Eigen::MatrixXd::Zero(nf, nf);
                Eigen::VectorXd gf(nf);
                for (Eigen::Index a = 0; a < nf; ++a) {
                    gf(a) = grad(static_cast<Eigen::Index>(free_idx[static_cast<std::size_t>(a)]));
                    for (Eigen::Index b = a; b < nf; ++b) {
                        double h = 0.0;
                        const auto& ca = cols_[free_idx[static_cast<std::size_t>(a)]];
                        const auto& cb = cols_[free_idx[static_cast<std::size_t>(b)]];
                        for (std::size_t k = 0; k < n; ++k) h += curv[k] * ca[k] * cb[k];
                        H(a, b) = h;
                        H(b, a) = h;
                    }
                }
                Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(H);
                cod.setThreshold(1e-13);
                Eigen::VectorXd d = -cod.solve(gf);
                if (!(d.dot(gf) < 0.0) || !d.allFinite()) d = -gf;
                for (Eigen::Index a = 0; a < nf; ++a) dir[free_idx[static_cast<std::size_t>(a)]] = d(a);
            }
            for (std::size_t j = 0; j < m; ++j) {
                if (!bound[j]) continue;
                double h = 0.0;
                for (std::size_t k = 0; k < n; ++k) h += curv[k] * cols_[j][k] * cols_[j][k];
                dir[j] = -grad(static_cast<Eigen::Index>(j)) / std::max(h, 1e-300);
            }
            double t = 1.0;
            bool accepted = false;
            std::vector<double> trial(m);
            for (int ls = 0; ls < 80; ++ls) {
                double decrease = 0.0;
                for (std::size_t j = 0; j < m; ++j) {
                    trial[j] = std::max(0.0, lambda[j] + t * dir[j]);
                    decrease += grad(static_cast<Eigen::Index>(j)) * (trial[j] - lambda[j]);
                }
                const double g_trial = objective(trial, x);
                if (std::isfinite(g_trial) && g_trial <= g_val + 1e-4 * decrease) {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if (!accepted) break;
            lambda = trial;
            g_val = objective(lambda, x);
        }
        return iter;
    }

    DualSolution dual_from_multipliers(const PrimalSolution& primal, double y) const {
        DualSolution d;
        d.y = y;
        const double ratio = y / primal.y;
        d.Y.assign(tree_.size(), 0.0);
        for (std::size_t j = 0; j < primal.lambda.size(); ++j) {
            const TreeMeasure q = primal.vertices[j].empty() ? poly_.central(tree_) : poly_.measure(tree_, primal.vertices[j]);
            const auto Yq = build_density_process(tree_, q);
            const double wgt = primal.lambda[j] * ratio;
            d.weights.push_back(wgt);
            d.vertices.push_back(primal.vertices[j]);
            for (std::size_t i = 0; i < tree_.size(); ++i) d.Y[i] += wgt * Yq[i];
        }
        d.F.assign(tree_.size(), 1.0);
        d.v_value = dual_objective_at(d.Y);
        double pay = 0.0;
        for (std::size_t k = 0; k < weighted_.size(); ++k) {
            const std::size_t i = weighted_[k];
            const double c = inverse_marginal(f_, tn_[k], d.Y[i]);
            pay += pk_[k] * (c - en_[k]) * d.Y[i];
            const double dF = pk_[k] * d.Y[i] * (en_[k] - c);
            if (dF > 0.0) ++d.solid_pressure_nodes;
            if (dF < 0.0) ++d.solid_settled_nodes;
        }
        d.v_prime = -pay / y;
        d.x = -d.v_prime;
        return d;
    }

    ScenarioTree tree_;
    ClockWeights clock_;
    UtilityField f_;
    Endowment e_;
    SolverOptions opt_;
    MartingalePolytope poly_;
    std::vector<std::size_t> weighted_;
    std::vector<double> pk_, tn_, en_;
    double lower_ = 0.0;
    std::vector<std::vector<double>> cols_;
    std::vector<std::vector<int>> choices_;
    std::vector<double> warm_;
};

inline PrimalSolution recover_primal_from_dual(const DualitySolver& solver, const DualSolution& dual) {
    PrimalSolution p;
    p.c.assign(solver.tree().size(), 0.0);
    double u = 0.0;
    for (std::size_t i = 0; i < solver.tree().size(); ++i) {
        const double w = solver.clock().weight[i];
        if (w <= 0.0) continue;
        const double t = solver.tree().node(i).time;
        p.c[i] = inverse_marginal(solver.utility(), t, dual.Y[i]);
        u += solver.tree().prob(i) * w * u_eval(solver.utility(), t, p.c[i]);
    }
    p.u_value = u;
    p.x = dual.x;
    p.y = dual.y;
    p.lambda = dual.weights;
    p.vertices = dual.vertices;
    return p;
}

// ---------------------------------------------------------------------------
// Verification reports

struct ConjugacyReport {
    std::vector<double> x_grid, y_grid;
    std::vector<double> u, v;                // values on the grids
    std::vector<double> u_from_v, v_from_u;  // min_y (v + x y) and max_x (u - x y)
    double max_gap_u = 0.0;
    double max_gap_v = 0.0;
    double min_fenchel_slack = 0.0;          // min over pairs of v(y) + x y - u(x); must be >= 0
    bool u_concave_nondecreasing = true;
    bool v_convex_decreasing = true;
};

inline ConjugacyReport conjugacy_check(DualitySolver& solver, const std::vector<double>& x_grid, const std::vector<double>& y_grid) {
    namespace bt = boost::math::tools;
    ConjugacyReport r;
    r.x_grid = x_grid;
    r.y_grid = y_grid;
    const double L = solver.lower_price();
    for (double x : x_grid) {
        auto sol = solver.solve_primal(x);
        r.u.push_back(sol.u_value);
        const double y0 = sol.y;
        auto obj = [&](double ly) { const double y = std::exp(ly); return solver.value_v(y) + x * y; };
        std::uintmax_t it = 200;
        auto best = bt::brent_find_minima(obj, std::log(y0) - 2.0, std::log(y0) + 2.0, 52, it);
        r.u_from_v.push_back(best.second);
        r.max_gap_u = std::max(r.max_gap_u, std::abs(sol.u_value - best.second));
    }
    for (double y : y_grid) {
        auto d = solver.solve_dual(y);
        r.v.push_back(d.v_value);
        const double span = d.x + L;
        auto obj = [&](double x) { return -(solver.value_u(x) - x * y); };
        std::uintmax_t it = 200;
        auto best = bt::brent_find_minima(obj, -L + 0.05 * span, d.x + 2.0 * span + 1e-3, 52, it);
        r.v_from_u.push_back(-best.second);
        r.max_gap_v = std::max(r.max_gap_v, std::abs(d.v_value + best.second));
    }
    r.min_fenchel_slack = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < x_grid.size(); ++a)
        for (std::size_t b = 0; b < y_grid.size(); ++b)
            r.min_fenchel_slack = std::min(r.min_fenchel_slack, r.v[b] + x_grid[a] * y_grid[b] - r.u[a]);
    for (std::size_t a = 1; a < r.u.size(); ++a)
        if (r.u[a] < r.u[a - 1] - 1e-12) r.u_concave_nondecreasing = false;
    for (std::size_t a = 2; a < r.u.size(); ++a) {
        const double s1 = (r.u[a - 1] - r.u[a - 2]) / (x_grid[a - 1] - x_grid[a - 2]);
        const double s2 = (r.u[a] - r.u[a - 1]) / (x_grid[a] - x_grid[a - 1]);
        if (s2 > s1 + 1e-9) r.u_concave_nondecreasing = false;
    }
    for (std::size_t b = 1; b < r.v.size(); ++b)
        if (r.v[b] > r.v[b - 1] + 1e-12) r.v_convex_decreasing = false;
    for (std::size_t b = 2; b < r.v.size(); ++b) {
        const double s1 = (r.v[b - 1] - r.v[b - 2]) / (y_grid[b - 1] - y_grid[b - 2]);
        const double s2 = (r.v[b] - r.v[b - 1]) / (y_grid[b] - y_grid[b - 1]);
        if (s2 < s1 - 1e-9) r.v_convex_decreasing = false;
    }
    return r;
}

struct BoundaryReport {
    double lower_price = 0.0;
    std::vector<double> x_approach, u_prime;   // x = -L + 10^-k
    bool u_prime_increasing = true;
    std::vector<double> y_large, minus_v_prime;
    bool approaching = true;
    double final_distance = 0.0;               // |-v'(y_max) - (-L)|
};

inline BoundaryReport boundary_behavior_check(DualitySolver& solver, const std::vector<double>& offsets = {1e-1, 1e-2, 1e-3, 1e-4},
                                              const std::vector<double>& ys = {1e2, 1e3, 1e4}) {
    BoundaryReport r;
    r.lower_price = solver.lower_price();
    const double edge = -r.lower_price;
    for (double off : offsets) {
        r.x_approach.push_back(edge + off);
        r.u_prime.push_back(solver.marginal(edge + off));
    }
    for (std::size_t k = 1; k < r.u_prime.size(); ++k)
        if (!(r.u_prime[k] > r.u_prime[k - 1])) r.u_prime_increasing = false;
    for (double y : ys) {
        r.y_large.push_back(y);
        r.minus_v_prime.push_back(-solver.solve_dual(y).v_prime);
    }
    for (std::size_t k = 1; k < r.minus_v_prime.size(); ++k)
        if (std::abs(r.minus_v_prime[k] - edge) > std::abs(r.minus_v_prime[k - 1] - edge) + 1e-9) r.approaching = false;
    r.final_distance = std::abs(r.minus_v_prime.back() - edge);
    return r;
}

struct OracleResult {
    bool feasible = false;
    double value = -std::numeric_limits<double>::infinity();
    std::vector<double> c;
    std::vector<double> level_values;  // best value after each refinement level
};

struct OracleSpec {
    int points = 13;        // odd, so the incumbent stays on every zoomed grid
    int refinements = 2;
    int bisection_steps = 60;
};

/// Grid search over consumption on the weighted nodes; the last node is pushed to the budget boundary.
inline OracleResult brute_force_oracle(const DualitySolver& solver, double x, const OracleSpec& spec = {}) {
    const auto& tree = solver.tree();
    const auto& clock = solver.clock();
    const auto& e = solver.endowment();
    const auto& f = solver.utility();
    std::vector<std::size_t> nodes;
    for (std::size_t i = 0; i < tree.size(); ++i)
        if (clock.weight[i] > 0.0) nodes.push_back(i);
    if (nodes.size() > 6) throw std::domain_error("brute_force_oracle: at most 6 consumption nodes");
    OracleResult res;
    std::vector<double> c(tree.size(), 0.0);
    if (!is_financeable(tree, solver.polytope(), clock, c, x, e, 0.0) || !(x > -solver.lower_price())) return res;

    auto feasible = [&](const std::vector<double>& cc) { return is_financeable(tree, solver.polytope(), clock, cc, x, e, 0.0); };
    // Largest amount a single node can consume alone.
    auto node_cap = [&](std::size_t node, std::vector<double> base) {
        double hi = 1.0;
        base[node] = hi;
        while (feasible(base) && hi < 1e12) {
            hi *= 2.0;
            base[node] = hi;
        }
        double lo = 0.0;
        for (int k = 0; k < spec.bisection_steps; ++k) {
            const double mid = 0.5 * (lo + hi);
            base[node] = mid;
            (feasible(base) ? lo : hi) = mid;
        }
        return lo;
    };
    auto value_of = [&](const std::vector<double>& cc) {
        double u = 0.0;
        for (std::size_t i : nodes) {
            if (!(cc[i] > 0.0)) return -std::numeric_limits<double>::infinity();
            u += tree.prob(i) * clock.weight[i] * u_eval(f, tree.node(i).time, cc[i]);
        }
        return u;
    };
    const std::size_t free_dims = nodes.size() - 1;
    const std::size_t last = nodes.back();
    std::vector<double> centre(free_dims), step(free_dims);
    for (std::size_t d = 0; d < free_dims; ++d) {
        const double cap = node_cap(nodes[d], std::vector<double>(tree.size(), 0.0));
        step[d] = cap / spec.points;
        centre[d] = -1.0;  // first level spans (0, cap]
    }
    std::vector<double> best_c;
    double best = -std::numeric_limits<double>::infinity();
    for (int level = 0; level <= spec.refinements; ++level) {
        std::vector<std::vector<double>> axes(free_dims);
        for (std::size_t d = 0; d < free_dims; ++d) {
            if (centre[d] < 0.0) {
                for (int k = 1; k <= spec.points; ++k) axes[d].push_back(step[d] * k);
            } else {
                const int half = spec.points / 2;
                for (int k = -half; k <= half; ++k) {
                    const double v = centre[d] + step[d] * k;
                    if (v > 0.0) axes[d].push_back(v);
                }
            }
        }
        std::vector<std::size_t> idx(free_dims, 0);
        while (true) {
            std::vector<double> cc(tree.size(), 0.0);
            for (std::size_t d = 0; d < free_dims; ++d) cc[nodes[d]] = axes[d][idx[d]];
            cc[last] = 0.0;
            if (feasible(cc)) {
                const double cap = node_cap(last, cc);
                cc[last] = cap;
                const double val = value_of(cc);
                if (val > best) {
                    best = val;
                    best_c = cc;
                }
            }
            std::size_t d = 0;
            while (d < free_dims && ++idx[d] == axes[d].size()) idx[d++] = 0;
            if (d == free_dims) break;
        }
        res.level_values.push_back(best);
        if (best_c.empty()) break;
        for (std::size_t d = 0; d < free_dims; ++d) {
            centre[d] = best_c[nodes[d]];
            step[d] = 2.0 * step[d] / (spec.points - 1);
        }
    }
    res.feasible = !best_c.empty();
    res.value = best;
    res.c = best_c;
    return res;
}

}  // namespace stoclock
