#pragma once

// Test-only oracles and fixtures, independent of the solver paths they
// check.

#include "dampmap/harness.hpp"
#include "dampmap/milp.hpp"
#include "dampmap/net.hpp"
#include "dampmap/oracle.hpp"
#include "dampmap/rng.hpp"
#include "dampmap/sampling.hpp"

#include <cmath>
#include <optional>
#include <vector>

namespace dampmap::testing {

/// Brute-force LP minimizer for dense low-dimensional programs: enumerate
/// all basic points (intersections of n active constraints, counting the
/// variable bounds), keep the feasible ones, take the best objective.
/// Returns nullopt when no feasible vertex exists.
inline std::optional<double> vertex_enumeration_min(const LinearProgram& lp) {
    const int n = lp.num_vars;
    struct Plane {
        Eigen::VectorXd a;
        double b;
    };
    std::vector<Plane> planes;
    for (std::size_t i = 0; i < lp.rows.size(); ++i)
        planes.push_back({lp.rows[i], lp.rhs[i]});
    for (int j = 0; j < n; ++j) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
        e[j] = 1.0;
        if (std::isfinite(lp.lower[j])) planes.push_back({e, lp.lower[j]});
        if (std::isfinite(lp.upper[j])) planes.push_back({e, lp.upper[j]});
    }

    const auto feasible = [&](const Eigen::VectorXd& x) {
        for (int j = 0; j < n; ++j) {
            if (x[j] < lp.lower[j] - 1e-7 || x[j] > lp.upper[j] + 1e-7) return false;
        }
        for (std::size_t i = 0; i < lp.rows.size(); ++i) {
            const double lhs = lp.rows[i].dot(x);
            switch (lp.sense[i]) {
                case RowSense::le:
                    if (lhs > lp.rhs[i] + 1e-7) return false;
                    break;
                case RowSense::ge:
                    if (lhs < lp.rhs[i] - 1e-7) return false;
                    break;
                case RowSense::eq:
                    if (std::abs(lhs - lp.rhs[i]) > 1e-7) return false;
                    break;
            }
        }
        return true;
    };

    std::optional<double> best;
    const int m = static_cast<int>(planes.size());
    std::vector<int> pick(static_cast<std::size_t>(n));
    const std::function<void(int, int)> recurse = [&](int start, int depth) {
        if (depth == n) {
            Eigen::MatrixXd a(n, n);
            Eigen::VectorXd b(n);
            for (int k = 0; k < n; ++k) {
                a.row(k) = planes[static_cast<std::size_t>(pick[static_cast<std::size_t>(k)])].a;
                b[k] = planes[static_cast<std::size_t>(pick[static_cast<std::size_t>(k)])].b;
            }
            const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
            if (!lu.isInvertible()) return;
            const Eigen::VectorXd x = lu.solve(b);
            if (!feasible(x)) return;
            const double obj = lp.objective.dot(x);
            if (!best || obj < *best) best = obj;
            return;
        }
        for (int i = start; i < m; ++i) {
            pick[static_cast<std::size_t>(depth)] = i;
            recurse(i + 1, depth + 1);
        }
    };
    recurse(0, 0);
    return best;
}

/// Exhaustive ReLU-pattern minimizer for the corner-verification problem:
/// every activation pattern induces an affine function and a polyhedral
/// region; the true optimum is the best over all pattern subproblems.
inline std::optional<double> pattern_enumeration_min(const UnitBoxNet& net,
                                                     const VerificationSpec& spec) {
    int total_hidden = 0;
    for (int k = 0; k + 1 < net.depth(); ++k)
        total_hidden += static_cast<int>(net.biases[k].size());
    if (total_hidden > 20)
        throw std::invalid_argument("pattern enumeration limited to 20 neurons");

    std::array<bool, 4> frozen{false, false, false, false};
    for (int d : spec.frozen_dims) frozen[static_cast<std::size_t>(d)] = true;

    std::optional<double> best;
    const long n_patterns = 1L << total_hidden;
    for (long pattern = 0; pattern < n_patterns; ++pattern) {
        // Affine map of the inputs under this fixed pattern.
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(4, 4);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(4);

        LinearProgram lp(5);  // u0..u3, eps
        for (int i = 0; i < 4; ++i) {
            if (frozen[static_cast<std::size_t>(i)]) {
                lp.lower[i] = spec.anchor[i];
                lp.upper[i] = spec.anchor[i];
            } else {
                lp.lower[i] = spec.box_lo[i];
                lp.upper[i] = spec.box_hi[i];
            }
        }
        lp.lower[4] = 0.0;
        lp.upper[4] = 1.0;
        lp.objective[4] = 1.0;

        int bit = 0;
        for (int k = 0; k + 1 < net.depth(); ++k) {
            const Eigen::MatrixXd pre_a = net.weights[static_cast<std::size_t>(k)] * a;
            const Eigen::VectorXd pre_c =
                net.weights[static_cast<std::size_t>(k)] * c +
                net.biases[static_cast<std::size_t>(k)];
            const auto rows = static_cast<int>(pre_c.size());
            Eigen::MatrixXd post_a = pre_a;
            Eigen::VectorXd post_c = pre_c;
            for (int i = 0; i < rows; ++i, ++bit) {
                const bool on = (pattern >> bit) & 1;
                Eigen::VectorXd row = Eigen::VectorXd::Zero(5);
                row.head<4>() = pre_a.row(i).transpose();
                // Region constraint: pre >= 0 when on, pre <= 0 when off.
                lp.add_row(row, on ? RowSense::ge : RowSense::le, -pre_c[i]);
                if (!on) {
                    post_a.row(i).setZero();
                    post_c[i] = 0.0;
                }
            }
            a = post_a;
            c = post_c;
        }
        const Eigen::MatrixXd out_a = net.weights.back() * a;
        const Eigen::VectorXd out_c = net.weights.back() * c + net.biases.back();

        Eigen::VectorXd thr = Eigen::VectorXd::Zero(5);
        thr.head<4>() = out_a.row(0).transpose();
        lp.add_row(thr, spec.crossing_below ? RowSense::le : RowSense::ge,
                   spec.threshold - out_c[0]);

        for (int i = 0; i < 4; ++i) {
            if (frozen[static_cast<std::size_t>(i)]) continue;
            Eigen::VectorXd r1 = Eigen::VectorXd::Zero(5);
            r1[i] = 1.0;
            r1[4] = -1.0;
            lp.add_row(r1, RowSense::le, spec.anchor[i]);
            Eigen::VectorXd r2 = Eigen::VectorXd::Zero(5);
            r2[i] = -1.0;
            r2[4] = -1.0;
            lp.add_row(r2, RowSense::le, -spec.anchor[i]);
        }

        const LpSolution sol = solve_lp(lp);
        if (sol.status != LpStatus::optimal) continue;
        if (!best || sol.objective < *best) best = sol.objective;
    }
    return best;
}

/// Constant-output network in unit-box form.
inline UnitBoxNet constant_net(double value) {
    UnitBoxNet net;
    net.weights = {Eigen::MatrixXd::Zero(1, 4)};
    net.biases = {Eigen::VectorXd::Constant(1, value)};
    return net;
}

/// Affine network value = bias + coeffs . u in unit-box form.
inline UnitBoxNet affine_net(const Vec4& coeffs, double bias) {
    UnitBoxNet net;
    net.weights = {Eigen::MatrixXd::Zero(1, 4)};
    net.weights[0].row(0) = coeffs.transpose();
    net.biases = {Eigen::VectorXd::Constant(1, bias)};
    return net;
}

/// Small trained model on a coarse grid dataset; deterministic.
inline Mlp trained_net(int layers, int width, int epochs = 800,
                       std::uint64_t seed = 1, double l0 = 0.02) {
    static const SplitDataset ds =
        make_dataset(label(sample_grid(default_hypercube(), 5), Origin::grid), 7);
    Mlp net;
    std::vector<int> widths{4};
    for (int i = 0; i < layers; ++i) widths.push_back(width);
    widths.push_back(1);
    net = init_params(widths, seed);
    TrainConfig cfg;
    cfg.l0 = l0;
    cfg.epochs = epochs;
    cfg.seed = seed;
    train(net, ds.view(), cfg);
    return net;
}

}  // namespace dampmap::testing
