#pragma once

// Fixtures and brute-force oracles shared by the unit and acceptance tests.
// The oracles work from dense matrices and owner sets, not from the index
// structures used by the library.

#include "hsnpl/hsnpl.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace hsnpl::testing {

using Eigen::Index;
using datasets::NodeType;

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("hsnpl_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Small random dataset; node count stays well under 50 for users <= 6.
inline datasets::Dataset small_dataset(std::uint64_t seed, std::size_t users = 5, std::size_t d_post = 6) {
    datasets::SynthConfig c;
    c.n_users = users;
    c.d_post = d_post;
    c.n_topics = 4;
    c.n_entities = 6;
    c.entity_clusters = 2;
    c.max_topics_per_user = 2;
    c.max_entities_per_user = 2;
    c.signal = 0.8;
    c.n_folds = users / 2;
    return datasets::generate_synthetic(c, seed);
}

inline ParameterStore random_hetgat_params(std::size_t d_post, std::size_t q, std::size_t layers, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    ParameterStore s;
    hetgat::add_parameters(s, d_post, q, layers, rng);
    ParameterStore scaled;
    for (std::size_t i = 0; i < s.size(); ++i) scaled.add(s.names()[i], scale * s.at(i));
    return scaled;
}

inline double leaky(double x) { return x > 0 ? x : 0.2 * x; }
inline double elu(double x) { return x > 0 ? x : std::expm1(x); }
inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Eigen::RowVectorXd softmax(const Eigen::RowVectorXd& s) {
    const double m = s.maxCoeff();
    Eigen::RowVectorXd e = (s.array() - m).exp();
    return e / e.sum();
}

/// Dense, loop-based layer: literal transcription of the propagation rule.
struct DenseLayerOut {
    Matrix out;
    std::vector<std::vector<double>> alpha; // per node, per type (0 when absent)
    std::vector<std::vector<double>> beta;  // per node, over all nodes (0 for non-neighbors)
};

inline DenseLayerOut dense_layer(const datasets::HeteroGraph& g, const Matrix& x, const ParameterStore& p, std::size_t layer,
                                 bool dual_attention = true) {
    const auto n = static_cast<Index>(g.node_count());
    const Matrix adj = g.adjacency(); // unweighted incl. self loops
    const auto q = x.cols();
    DenseLayerOut r;
    r.out = Matrix::Zero(n, q);
    r.alpha.assign(static_cast<std::size_t>(n), std::vector<double>(datasets::kNodeTypeCount, 0.0));
    r.beta.assign(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (Index v = 0; v < n; ++v) {
        std::vector<std::size_t> present;
        std::vector<double> type_scores;
        for (std::size_t t = 0; t < datasets::kNodeTypeCount; ++t) {
            double cnt = 0;
            for (Index u = 0; u < n; ++u)
                if (adj(v, u) != 0 && datasets::type_index(g.type_of(static_cast<std::size_t>(u))) == t) cnt += 1;
            if (cnt == 0) continue;
            Eigen::RowVectorXd xt = Eigen::RowVectorXd::Zero(q);
            for (Index u = 0; u < n; ++u)
                if (adj(v, u) != 0 && datasets::type_index(g.type_of(static_cast<std::size_t>(u))) == t) xt += x.row(u) / cnt;
            const Matrix& mu = p.at(hetgat::type_attention_name(datasets::kAllNodeTypes[t]));
            double s = 0;
            for (Index k = 0; k < q; ++k) s += mu(k, 0) * x(v, k) + mu(q + k, 0) * xt(k);
            present.push_back(t);
            type_scores.push_back(leaky(s));
        }
        Eigen::RowVectorXd ts = Eigen::Map<Eigen::RowVectorXd>(type_scores.data(), static_cast<Index>(type_scores.size()));
        Eigen::RowVectorXd a = dual_attention ? softmax(ts) : Eigen::RowVectorXd::Constant(ts.size(), 1.0 / static_cast<double>(ts.size()));
        for (std::size_t k = 0; k < present.size(); ++k) r.alpha[static_cast<std::size_t>(v)][present[k]] = a(static_cast<Index>(k));

        std::vector<Index> nb;
        std::vector<double> node_scores;
        const Matrix& mut = p.at(hetgat::node_attention_name());
        for (Index u = 0; u < n; ++u) {
            if (adj(v, u) == 0) continue;
            double h = 0;
            for (Index k = 0; k < q; ++k) h += mut(k, 0) * x(v, k) * x(u, k);
            const auto tu = datasets::type_index(g.type_of(static_cast<std::size_t>(u)));
            nb.push_back(u);
            node_scores.push_back(leaky(r.alpha[static_cast<std::size_t>(v)][tu] * h));
        }
        Eigen::RowVectorXd ns = Eigen::Map<Eigen::RowVectorXd>(node_scores.data(), static_cast<Index>(node_scores.size()));
        Eigen::RowVectorXd b = dual_attention ? softmax(ns) : Eigen::RowVectorXd::Constant(ns.size(), 1.0 / static_cast<double>(ns.size()));
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(q);
        for (std::size_t k = 0; k < nb.size(); ++k) {
            const auto u = nb[k];
            r.beta[static_cast<std::size_t>(v)][static_cast<std::size_t>(u)] = b(static_cast<Index>(k));
            const auto tu = g.type_of(static_cast<std::size_t>(u));
            acc += b(static_cast<Index>(k)) * (x.row(u) * p.at(hetgat::layer_weight_name(layer, tu)));
        }
        for (Index k = 0; k < q; ++k) r.out(v, k) = elu(acc(k));
    }
    return r;
}

inline Matrix dense_project(const datasets::HeteroGraph& g, const ParameterStore& p) {
    const auto n = static_cast<Index>(g.node_count());
    const auto q = p.at(hetgat::node_attention_name()).rows();
    Matrix x(n, q);
    for (Index v = 0; v < n; ++v) {
        const auto t = g.type_of(static_cast<std::size_t>(v));
        x.row(v) = g.raw_feature(static_cast<std::size_t>(v)) * p.at(hetgat::projection_name(t));
    }
    return x;
}

inline Matrix dense_propagate(const datasets::HeteroGraph& g, const ParameterStore& p, std::size_t layers) {
    Matrix x = dense_project(g, p);
    for (std::size_t l = 0; l < layers; ++l) x = dense_layer(g, x, p, l).out;
    return x;
}

/// Users i, j adjacent iff some Topic/Entity node is owned by both.
inline Matrix owner_intersection_adjacency(const datasets::HeteroGraph& g) {
    const auto u = static_cast<Index>(g.user_count());
    Matrix a = Matrix::Zero(u, u);
    for (Index i = 0; i < u; ++i)
        for (Index j = 0; j < u; ++j) {
            if (i == j) {
                a(i, j) = 1;
                continue;
            }
            for (const auto& node : g.nodes) {
                if (node.type != NodeType::Topic && node.type != NodeType::Entity) continue;
                std::set<std::size_t> own(node.owners.begin(), node.owners.end());
                if (own.count(static_cast<std::size_t>(i)) && own.count(static_cast<std::size_t>(j))) {
                    a(i, j) = 1;
                    break;
                }
            }
        }
    return a;
}

/// Nodes whose owner set contains user i.
inline std::vector<std::size_t> owned_nodes(const datasets::HeteroGraph& g, std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < g.node_count(); ++v)
        for (auto o : g.nodes[v].owners)
            if (o == i) out.push_back(v);
    return out;
}

inline Matrix dense_intra(const datasets::HeteroGraph& g, const Matrix& x, const Matrix& w, const Matrix& alpha) {
    const auto users = g.user_count();
    Matrix out = Matrix::Zero(static_cast<Index>(users), x.cols());
    for (std::size_t i = 0; i < users; ++i)
        for (auto v : owned_nodes(g, i)) {
            const Eigen::RowVectorXd xv = x.row(static_cast<Index>(v));
            double s = 0;
            const Eigen::RowVectorXd xw = xv * w;
            for (Index k = 0; k < xw.size(); ++k) s += xw(k) * alpha(k, 0);
            out.row(static_cast<Index>(i)) += logistic(s) * xv;
        }
    return out;
}

struct DenseInterOut {
    Matrix sg;
    std::vector<Matrix> beta; // per head, U x U
};

inline DenseInterOut dense_inter(const Matrix& adj, const Matrix& g, const std::vector<Matrix>& w, const std::vector<Matrix>& a) {
    const auto users = g.rows();
    const auto q = g.cols();
    DenseInterOut r;
    r.sg = Matrix::Zero(users, q);
    for (std::size_t m = 0; m < w.size(); ++m) {
        const Matrix h = g * w[m];
        Matrix beta = Matrix::Zero(users, users);
        for (Index i = 0; i < users; ++i) {
            std::vector<Index> nb;
            std::vector<double> sc;
            for (Index j = 0; j < users; ++j) {
                if (adj(i, j) == 0) continue;
                double s = 0;
                for (Index k = 0; k < q; ++k) s += a[m](k, 0) * h(i, k) + a[m](q + k, 0) * h(j, k);
                nb.push_back(j);
                sc.push_back(leaky(s));
            }
            Eigen::RowVectorXd b = softmax(Eigen::Map<Eigen::RowVectorXd>(sc.data(), static_cast<Index>(sc.size())));
            for (std::size_t k = 0; k < nb.size(); ++k) {
                beta(i, nb[k]) = b(static_cast<Index>(k));
                r.sg.row(i) += b(static_cast<Index>(k)) * h.row(nb[k]) / static_cast<double>(w.size());
            }
        }
        r.beta.push_back(beta);
    }
    return r;
}

/// Relative error |a - n| / max(|a|, |n|, 1e-8) between two scalars.
inline double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8}); }

/// Central-difference check of every tape input against a scalar function.
inline double check_op_gradient(const std::vector<Matrix>& inputs, const std::function<ad::Var(ad::Tape&, std::vector<ad::Var>&)>& f,
                                double eps = 1e-6) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.variable(m));
    const auto out = f(tape, vars);
    tape.backward(out);
    double worst = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const Matrix g = tape.gradient(vars[i]);
        for (Index k = 0; k < inputs[i].size(); ++k) {
            auto eval = [&](double delta) {
                auto perturbed = inputs;
                perturbed[i](k) += delta;
                ad::Tape t;
                std::vector<ad::Var> vs;
                for (const auto& m : perturbed) vs.push_back(t.variable(m));
                return f(t, vs).scalar();
            };
            const double num = (eval(eps) - eval(-eps)) / (2 * eps);
            const double ana = g(k);
            if (std::abs(ana) < 1e-7 && std::abs(num) < 1e-7) continue;
            worst = std::max(worst, rel_err(ana, num));
        }
    }
    return worst;
}

inline Matrix random_matrix(Rng& rng, Index r, Index c, double scale = 1.0) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
        for (Index i = 0; i < r; ++i) m(i, j) = scale * rng.normal();
    return m;
}

} // namespace hsnpl::testing
