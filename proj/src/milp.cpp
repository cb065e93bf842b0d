#include "dampmap/milp.hpp"

#include "dampmap/dataset.hpp"

#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <queue>

namespace dampmap {

using json = nlohmann::json;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kFeasTol = 1e-7;
constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;
}  // namespace

// --- LinearProgram -----------------------------------------------------------

LinearProgram::LinearProgram(int n)
    : num_vars(n),
      objective(Eigen::VectorXd::Zero(n)),
      lower(Eigen::VectorXd::Constant(n, -kInf)),
      upper(Eigen::VectorXd::Constant(n, kInf)) {}

int LinearProgram::add_row(const Eigen::VectorXd& coeffs, RowSense s, double rhs_value) {
    if (coeffs.size() != num_vars) throw std::invalid_argument("row size mismatch");
    rows.push_back(coeffs);
    sense.push_back(s);
    rhs.push_back(rhs_value);
    return static_cast<int>(rows.size()) - 1;
}

// --- simplex -----------------------------------------------------------------

namespace {

enum class VarState : std::uint8_t { at_lower, at_upper, basic };

/// Canonical problem: minimize c.w subject to A w = b, 0 <= w <= U.
/// Solved with a dense tableau, Bland's rule, and explicit bound flips.
class Simplex {
public:
    Simplex(Eigen::MatrixXd a, Eigen::VectorXd b, Eigen::VectorXd c, Eigen::VectorXd u)
        : a_(std::move(a)), b_(std::move(b)), cost_(std::move(c)), up_(std::move(u)) {}

    LpStatus run(Eigen::VectorXd& out_values, double& out_obj) {
        const auto m = a_.rows();
        const auto n = a_.cols();

        // Phase 1: append one artificial per row, sign-normalized so the
        // artificial starts feasible at value |b_i|.
        Eigen::MatrixXd t(m, n + m);
        t.leftCols(n) = a_;
        t.rightCols(m).setZero();
        Eigen::VectorXd beta(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const double s = b_[i] < 0.0 ? -1.0 : 1.0;
            t.row(i) *= s;
            t(i, n + i) = 1.0;
            beta[i] = s * b_[i];
        }
        tab_ = std::move(t);
        beta_ = std::move(beta);
        state_.assign(static_cast<std::size_t>(n + m), VarState::at_lower);
        basis_.resize(m);
        upper_full_.resize(n + m);
        upper_full_.head(n) = up_;
        upper_full_.tail(m).setConstant(kInf);
        for (Eigen::Index i = 0; i < m; ++i) {
            basis_[i] = static_cast<int>(n + i);
            state_[static_cast<std::size_t>(n + i)] = VarState::basic;
        }
        n_total_ = n + m;
        n_struct_ = n;

        Eigen::VectorXd phase1_cost = Eigen::VectorXd::Zero(n_total_);
        phase1_cost.tail(m).setOnes();
        entering_limit_ = n_total_;
        if (!iterate(phase1_cost)) return LpStatus::unbounded;  // cannot happen
        if (current_objective(phase1_cost) > kFeasTol) return LpStatus::infeasible;

        // Lock artificials at zero so phase 2 cannot reuse them.
        for (Eigen::Index j = n; j < n_total_; ++j) upper_full_[j] = 0.0;
        drive_out_artificials();

        Eigen::VectorXd phase2_cost = Eigen::VectorXd::Zero(n_total_);
        phase2_cost.head(n) = cost_;
        entering_limit_ = n_struct_;
        if (!iterate(phase2_cost)) return LpStatus::unbounded;

        out_values = values().head(n);
        out_obj = current_objective(phase2_cost);
        return LpStatus::optimal;
    }

private:
    [[nodiscard]] Eigen::VectorXd values() const {
        Eigen::VectorXd v = Eigen::VectorXd::Zero(n_total_);
        for (Eigen::Index j = 0; j < n_total_; ++j)
            if (state_[static_cast<std::size_t>(j)] == VarState::at_upper)
                v[j] = std::min(upper_full_[j], kInf);
        for (Eigen::Index i = 0; i < tab_.rows(); ++i) v[basis_[i]] = beta_[i];
        return v;
    }

    [[nodiscard]] double current_objective(const Eigen::VectorXd& c) const {
        return c.dot(values());
    }

    /// Reduced costs for the given objective under the current basis.
    [[nodiscard]] Eigen::VectorXd reduced_costs(const Eigen::VectorXd& c) const {
        Eigen::VectorXd d = c;
        for (Eigen::Index i = 0; i < tab_.rows(); ++i) {
            const double cb = c[basis_[i]];
            if (cb != 0.0) d -= cb * tab_.row(i).transpose();
        }
        return d;
    }

    /// Primal simplex loop. Returns false on unboundedness. Reduced costs
    /// are updated incrementally and refreshed periodically against drift.
    bool iterate(const Eigen::VectorXd& c) {
        const long iter_cap = 2000 + 200 * static_cast<long>(n_total_);
        Eigen::VectorXd d = reduced_costs(c);
        for (long iter = 0; iter < iter_cap; ++iter) {
            if (iter > 0 && iter % 64 == 0) d = reduced_costs(c);

            // Bland: smallest-index improving nonbasic variable.
            Eigen::Index enter = -1;
            double dir = 0.0;
            for (Eigen::Index j = 0; j < entering_limit_; ++j) {
                const auto st = state_[static_cast<std::size_t>(j)];
                if (st == VarState::basic) continue;
                if (st == VarState::at_lower && d[j] < -kCostTol) {
                    enter = j;
                    dir = 1.0;
                    break;
                }
                if (st == VarState::at_upper && d[j] > kCostTol) {
                    enter = j;
                    dir = -1.0;
                    break;
                }
            }
            if (enter < 0) return true;  // optimal

            // Ratio test: first blocking basic variable or own bound flip.
            double t_best = upper_full_[enter];  // bound-flip distance (may be inf)
            int leave_row = -1;
            bool leave_at_upper = false;
            for (Eigen::Index i = 0; i < tab_.rows(); ++i) {
                const double coef = dir * tab_(i, enter);
                if (coef > kPivotTol) {
                    const double t = beta_[i] / coef;
                    if (t < t_best - 1e-12 ||
                        (t < t_best + 1e-12 && leave_row >= 0 &&
                         basis_[i] < basis_[leave_row])) {
                        t_best = std::max(t, 0.0);
                        leave_row = static_cast<int>(i);
                        leave_at_upper = false;
                    }
                } else if (coef < -kPivotTol && std::isfinite(upper_full_[basis_[i]])) {
                    const double t = (upper_full_[basis_[i]] - beta_[i]) / (-coef);
                    if (t < t_best - 1e-12 ||
                        (t < t_best + 1e-12 && leave_row >= 0 &&
                         basis_[i] < basis_[leave_row])) {
                        t_best = std::max(t, 0.0);
                        leave_row = static_cast<int>(i);
                        leave_at_upper = true;
                    }
                }
            }
            if (!std::isfinite(t_best)) return false;  // unbounded ray

            // Move the current point.
            beta_ -= (dir * t_best) * tab_.col(enter);

            if (leave_row < 0) {
                // Entering variable flipped to its other bound.
                state_[static_cast<std::size_t>(enter)] =
                    dir > 0 ? VarState::at_upper : VarState::at_lower;
                continue;
            }

            const int leaving = basis_[leave_row];
            state_[static_cast<std::size_t>(leaving)] =
                leave_at_upper ? VarState::at_upper : VarState::at_lower;
            state_[static_cast<std::size_t>(enter)] = VarState::basic;
            basis_[leave_row] = static_cast<int>(enter);

            const double entering_value =
                (dir > 0 ? 0.0 : upper_full_[enter]) + dir * t_best;

            // Row reduction on the tableau and the reduced-cost row.
            const double pivot = tab_(leave_row, enter);
            tab_.row(leave_row) /= pivot;
            for (Eigen::Index i = 0; i < tab_.rows(); ++i) {
                if (i == leave_row) continue;
                const double f = tab_(i, enter);
                if (f != 0.0) tab_.row(i) -= f * tab_.row(leave_row);
            }
            const double dj = d[enter];
            if (dj != 0.0) d -= dj * tab_.row(leave_row).transpose();
            beta_[leave_row] = entering_value;
        }
        throw std::runtime_error("simplex iteration cap exceeded");
    }

    /// Pivot zero-valued artificials out of the basis where possible.
    void drive_out_artificials() {
        for (Eigen::Index i = 0; i < tab_.rows(); ++i) {
            if (basis_[i] < n_struct_) continue;
            Eigen::Index enter = -1;
            for (Eigen::Index j = 0; j < n_struct_; ++j) {
                // Only zero-valued candidates keep the point unchanged.
                if (state_[static_cast<std::size_t>(j)] != VarState::at_lower) continue;
                if (std::abs(tab_(i, j)) > 1e-8) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) continue;  // redundant row; artificial stays at 0
            const int leaving = basis_[i];
            const double pivot = tab_(i, enter);
            tab_.row(i) /= pivot;
            for (Eigen::Index r = 0; r < tab_.rows(); ++r) {
                if (r == i) continue;
                const double f = tab_(r, enter);
                if (f != 0.0) tab_.row(r) -= f * tab_.row(i);
            }
            // The artificial held value 0, so beta is unchanged.
            state_[static_cast<std::size_t>(leaving)] = VarState::at_lower;
            state_[static_cast<std::size_t>(enter)] = VarState::basic;
            basis_[i] = static_cast<int>(enter);
            beta_[i] = std::max(beta_[i], 0.0);
        }
    }

    Eigen::MatrixXd a_;
    Eigen::VectorXd b_, cost_, up_;
    Eigen::MatrixXd tab_;
    Eigen::VectorXd beta_;
    Eigen::VectorXd upper_full_;
    std::vector<int> basis_;
    std::vector<VarState> state_;
    Eigen::Index n_total_ = 0, n_struct_ = 0, entering_limit_ = 0;
};

struct CanonicalMap {
    // w = scale * (v - shift) for plain columns; free variables get a
    // second negative part.
    std::vector<int> column_of;       // original var -> canonical column
    std::vector<int> negative_part;   // -1 unless the variable was split
    std::vector<double> shift;
    std::vector<double> scale;        // +1 or -1
};

LpSolution solve_lp_bounds(const LinearProgram& lp, const Eigen::VectorXd& lower,
                           const Eigen::VectorXd& upper) {
    const int n = lp.num_vars;
    for (int j = 0; j < n; ++j)
        if (lower[j] > upper[j] + 1e-12) return LpSolution{LpStatus::infeasible, 0.0, {}};

    CanonicalMap map;
    map.column_of.resize(n);
    map.negative_part.assign(n, -1);
    map.shift.resize(n);
    map.scale.resize(n);

    int cols = 0;
    for (int j = 0; j < n; ++j) {
        map.column_of[j] = cols;
        if (std::isfinite(lower[j])) {
            map.shift[j] = lower[j];
            map.scale[j] = 1.0;
            cols += 1;
        } else if (std::isfinite(upper[j])) {
            map.shift[j] = upper[j];
            map.scale[j] = -1.0;  // w = upper - v
            cols += 1;
        } else {
            map.shift[j] = 0.0;
            map.scale[j] = 1.0;
            map.negative_part[j] = cols + 1;
            cols += 2;
        }
    }
    const int n_rows = static_cast<int>(lp.rows.size());
    int n_slack = 0;
    for (RowSense s : lp.sense)
        if (s != RowSense::eq) n_slack += 1;

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_rows, cols + n_slack);
    Eigen::VectorXd b(n_rows);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(cols + n_slack);
    Eigen::VectorXd u = Eigen::VectorXd::Constant(cols + n_slack, kInf);

    for (int j = 0; j < n; ++j) {
        const int col = map.column_of[j];
        c[col] = lp.objective[j] * map.scale[j];
        if (map.negative_part[j] >= 0) c[map.negative_part[j]] = -lp.objective[j];
        if (map.scale[j] > 0 && std::isfinite(upper[j]))
            u[col] = upper[j] - lower[j];
    }

    int slack = cols;
    for (int i = 0; i < n_rows; ++i) {
        // Rewrite the row over the shifted variables
        // v_j = shift_j + scale_j * w_j, with >= rows negated to <=.
        const Eigen::VectorXd& row = lp.rows[i];
        const double flip = lp.sense[i] == RowSense::ge ? -1.0 : 1.0;
        double rhs_i = lp.rhs[i] * flip;
        for (int j = 0; j < n; ++j) {
            const double aij = row[j] * flip;
            if (aij == 0.0) continue;
            a(i, map.column_of[j]) += aij * map.scale[j];
            if (map.negative_part[j] >= 0) a(i, map.negative_part[j]) -= aij;
            rhs_i -= aij * map.shift[j];
        }
        b[i] = rhs_i;
        if (lp.sense[i] != RowSense::eq) {
            a(i, slack) = 1.0;
            slack += 1;
        }
    }

    Simplex solver(a, b, c, u);
    Eigen::VectorXd w;
    double obj = 0.0;
    const LpStatus status = solver.run(w, obj);

    LpSolution out;
    out.status = status;
    if (status != LpStatus::optimal) return out;

    out.x.resize(n);
    double true_obj = 0.0;
    for (int j = 0; j < n; ++j) {
        double v = map.shift[j] + map.scale[j] * w[map.column_of[j]];
        if (map.negative_part[j] >= 0) v -= w[map.negative_part[j]];
        out.x[j] = v;
        true_obj += lp.objective[j] * v;
    }
    out.objective = true_obj;
    return out;
}

}  // namespace

LpSolution solve_lp(const LinearProgram& lp) {
    return solve_lp_bounds(lp, lp.lower, lp.upper);
}

// --- unit-box network --------------------------------------------------------

double UnitBoxNet::eval(const Vec4& u) const {
    Eigen::VectorXd z = u;
    for (int k = 0; k < depth(); ++k) {
        Eigen::VectorXd pre = weights[k] * z + biases[k];
        z = (k + 1 < depth()) ? pre.cwiseMax(0.0).eval() : pre;
    }
    return z[0];
}

Eigen::RowVectorXd UnitBoxNet::eval_batch(const Eigen::MatrixXd& u) const {
    Eigen::MatrixXd z = u;
    for (int k = 0; k < depth(); ++k) {
        Eigen::MatrixXd pre = (weights[k] * z).colwise() + biases[k];
        z = (k + 1 < depth()) ? pre.cwiseMax(0.0).eval() : pre;
    }
    return z.row(0);
}

UnitBoxNet fold_to_unit_box(const Mlp& net, const Hypercube& h) {
    net.check_shapes();
    const Standardizer& s = net.standardizer;
    UnitBoxNet out;
    out.weights = net.weights;
    out.biases = net.biases;

    // Input side: u -> standardized coordinates is affine.
    const Vec4 d = h.range().cwiseQuotient(s.sigma_x);
    const Vec4 c0 = (h.lower - s.mu_x).cwiseQuotient(s.sigma_x);
    out.biases[0] += out.weights[0] * c0;
    out.weights[0] = out.weights[0] * d.asDiagonal();

    // Output side: denormalize to percent.
    const int last = out.depth() - 1;
    out.weights[last] *= s.sigma_y;
    out.biases[last] = out.biases[last] * s.sigma_y +
                       Eigen::VectorXd::Constant(1, s.mu_y);
    return out;
}

NeuronBounds propagate_bounds(const UnitBoxNet& net, const Vec4& lo, const Vec4& hi) {
    NeuronBounds nb;
    Eigen::VectorXd prev_lo = lo;
    Eigen::VectorXd prev_hi = hi;
    for (int k = 0; k + 1 < net.depth(); ++k) {
        const Eigen::MatrixXd& w = net.weights[k];
        const Eigen::MatrixXd wp = w.cwiseMax(0.0);
        const Eigen::MatrixXd wn = w.cwiseMin(0.0);
        Eigen::VectorXd zmin = wp * prev_lo + wn * prev_hi + net.biases[k];
        Eigen::VectorXd zmax = wp * prev_hi + wn * prev_lo + net.biases[k];
        nb.zhat_min.push_back(zmin);
        nb.zhat_max.push_back(zmax);
        prev_lo = zmin.cwiseMax(0.0);
        prev_hi = zmax.cwiseMax(0.0);
    }
    return nb;
}

// --- model construction -------------------------------------------------------

namespace {

struct Layout {
    int n_hidden = 0;
    int var_eps = -1;
    int first_zhat = 0, first_z = 0, first_b = 0;
    int var_yhat = -1;
    int total = 0;
};

Layout make_layout(const UnitBoxNet& net, bool with_eps) {
    Layout l;
    for (int k = 0; k + 1 < net.depth(); ++k)
        l.n_hidden += static_cast<int>(net.biases[k].size());
    int at = 4;
    if (with_eps) {
        l.var_eps = at;
        at += 1;
    }
    l.first_zhat = at;
    at += l.n_hidden;
    l.first_z = at;
    at += l.n_hidden;
    l.first_b = at;
    at += l.n_hidden;
    l.var_yhat = at;
    at += 1;
    l.total = at;
    return l;
}

/// Shared encoding of the network equalities and ReLU constraints.
MilpModel encode_network(const UnitBoxNet& net, const NeuronBounds& bounds,
                         bool with_eps) {
    const Layout lay = make_layout(net, with_eps);
    MilpModel m;
    m.lp = LinearProgram(lay.total);
    m.var_eps = lay.var_eps;
    m.var_yhat = lay.var_yhat;
    m.var_u = {0, 1, 2, 3};
    m.first_zhat = lay.first_zhat;
    m.first_z = lay.first_z;
    m.first_b = lay.first_b;

    LinearProgram& lp = m.lp;
    for (int i = 0; i < 4; ++i) {
        lp.lower[i] = 0.0;
        lp.upper[i] = 1.0;
    }
    if (with_eps) {
        lp.lower[lay.var_eps] = 0.0;
        lp.upper[lay.var_eps] = 1.0;
    }

    const int depth = net.depth();
    int neuron = 0;
    int prev_first = -1;  // z-column of the previous layer's first neuron
    int prev_count = 4;

    for (int k = 0; k + 1 < depth; ++k) {
        const auto rows = static_cast<int>(net.biases[k].size());
        for (int i = 0; i < rows; ++i, ++neuron) {
            const int vz_hat = lay.first_zhat + neuron;
            const int vz = lay.first_z + neuron;
            const int vb = lay.first_b + neuron;
            const double zmin = bounds.zhat_min[k][i];
            const double zmax = bounds.zhat_max[k][i];

            lp.lower[vz_hat] = zmin;
            lp.upper[vz_hat] = zmax;
            lp.lower[vz] = 0.0;
            lp.upper[vz] = std::max(zmax, 0.0);
            m.neuron_layer.push_back(k);

            // Affine definition zhat = W z_prev + bias.
            Eigen::VectorXd row = Eigen::VectorXd::Zero(lay.total);
            row[vz_hat] = 1.0;
            for (int j = 0; j < prev_count; ++j) {
                const int col = (k == 0) ? j : prev_first + j;
                row[col] = -net.weights[k](i, j);
            }
            lp.add_row(row, RowSense::eq, net.biases[k][i]);

            if (zmax <= 0.0) {
                // Always off.
                lp.lower[vb] = 0.0;
                lp.upper[vb] = 0.0;
                lp.upper[vz] = 0.0;
                m.fixed_binaries.push_back(neuron);
            } else if (zmin >= 0.0) {
                // Always on: z == zhat.
                lp.lower[vb] = 1.0;
                lp.upper[vb] = 1.0;
                Eigen::VectorXd eq = Eigen::VectorXd::Zero(lay.total);
                eq[vz] = 1.0;
                eq[vz_hat] = -1.0;
                lp.add_row(eq, RowSense::eq, 0.0);
                m.fixed_binaries.push_back(neuron);
            } else {
                lp.lower[vb] = 0.0;
                lp.upper[vb] = 1.0;
                m.binaries.push_back(vb);

                Eigen::VectorXd r1 = Eigen::VectorXd::Zero(lay.total);
                r1[vz] = 1.0;
                r1[vz_hat] = -1.0;
                r1[vb] = -zmin;
                lp.add_row(r1, RowSense::le, -zmin);

                Eigen::VectorXd r2 = Eigen::VectorXd::Zero(lay.total);
                r2[vz_hat] = 1.0;
                r2[vz] = -1.0;
                lp.add_row(r2, RowSense::le, 0.0);

                Eigen::VectorXd r3 = Eigen::VectorXd::Zero(lay.total);
                r3[vz] = 1.0;
                r3[vb] = -zmax;
                lp.add_row(r3, RowSense::le, 0.0);
            }
        }
        prev_first = lay.first_z + neuron - rows;
        prev_count = rows;
    }

    // Output row.
    {
        Eigen::VectorXd row = Eigen::VectorXd::Zero(lay.total);
        row[lay.var_yhat] = 1.0;
        const int last = depth - 1;
        for (int j = 0; j < prev_count; ++j)
            row[prev_first + j] = -net.weights[last](0, j);
        lp.add_row(row, RowSense::eq, net.biases[last][0]);

        // Valid output interval from the last hidden layer's boxes.
        const Eigen::VectorXd plo =
            bounds.zhat_min.back().cwiseMax(0.0);
        const Eigen::VectorXd phi =
            bounds.zhat_max.back().cwiseMax(0.0);
        const Eigen::MatrixXd wp = net.weights[last].cwiseMax(0.0);
        const Eigen::MatrixXd wn = net.weights[last].cwiseMin(0.0);
        lp.lower[lay.var_yhat] = (wp * plo + wn * phi)(0) + net.biases[last][0];
        lp.upper[lay.var_yhat] = (wp * phi + wn * plo)(0) + net.biases[last][0];
    }
    return m;
}

}  // namespace

MilpModel build_verification_model(const UnitBoxNet& net, const NeuronBounds& bounds,
                                   const VerificationSpec& spec) {
    MilpModel m = encode_network(net, bounds, /*with_eps=*/true);
    LinearProgram& lp = m.lp;

    std::array<bool, 4> frozen{false, false, false, false};
    for (int d : spec.frozen_dims) frozen[static_cast<std::size_t>(d)] = true;

    for (int i = 0; i < 4; ++i) {
        if (frozen[static_cast<std::size_t>(i)]) {
            lp.lower[i] = spec.anchor[i];
            lp.upper[i] = spec.anchor[i];
            continue;
        }
        lp.lower[i] = spec.box_lo[i];
        lp.upper[i] = spec.box_hi[i];

        // |u_i - anchor_i| <= eps, split into two rows.
        Eigen::VectorXd r1 = Eigen::VectorXd::Zero(lp.num_vars);
        r1[i] = 1.0;
        r1[m.var_eps] = -1.0;
        lp.add_row(r1, RowSense::le, spec.anchor[i]);
        Eigen::VectorXd r2 = Eigen::VectorXd::Zero(lp.num_vars);
        r2[i] = -1.0;
        r2[m.var_eps] = -1.0;
        lp.add_row(r2, RowSense::le, -spec.anchor[i]);
    }

    Eigen::VectorXd thr = Eigen::VectorXd::Zero(lp.num_vars);
    thr[m.var_yhat] = 1.0;
    lp.add_row(thr, spec.crossing_below ? RowSense::le : RowSense::ge, spec.threshold);

    lp.objective[m.var_eps] = 1.0;
    return m;
}

MilpModel build_pinned_model(const UnitBoxNet& net, const NeuronBounds& bounds,
                             const Vec4& u) {
    MilpModel m = encode_network(net, bounds, /*with_eps=*/false);
    for (int i = 0; i < 4; ++i) {
        m.lp.lower[i] = u[i];
        m.lp.upper[i] = u[i];
    }
    return m;
}

// --- branch and bound -----------------------------------------------------------

namespace {

struct Node {
    double bound = 0.0;
    long seq = 0;
    std::vector<std::pair<int, int>> fixes;  // (binary column, value)

    bool operator>(const Node& other) const {
        if (bound != other.bound) return bound > other.bound;
        return seq > other.seq;
    }
};

void apply_fixes(const MilpModel& model, const std::vector<std::pair<int, int>>& fixes,
                 Eigen::VectorXd& lower, Eigen::VectorXd& upper) {
    lower = model.lp.lower;
    upper = model.lp.upper;
    for (auto [col, val] : fixes) {
        lower[col] = static_cast<double>(val);
        upper[col] = static_cast<double>(val);
    }
}

}  // namespace

BnbResult branch_and_bound(const MilpModel& model, const BnbOptions& opts) {
    BnbResult result;
    std::priority_queue<Node, std::vector<Node>, std::greater<Node>> open;
    long seq = 0;

    double incumbent = kInf;
    Eigen::VectorXd incumbent_point;

    Eigen::VectorXd lower, upper;

    auto try_pattern = [&](const Eigen::VectorXd& relaxed,
                           const std::vector<std::pair<int, int>>& fixes) {
        // Round every undetermined binary and re-solve the restriction.
        std::vector<std::pair<int, int>> full = fixes;
        for (int col : model.binaries) {
            bool already = false;
            for (auto [c, v] : fixes)
                if (c == col) already = true;
            if (!already)
                full.emplace_back(col, relaxed[col] >= 0.5 ? 1 : 0);
        }
        apply_fixes(model, full, lower, upper);
        const LpSolution sol = solve_lp_bounds(model.lp, lower, upper);
        if (sol.status == LpStatus::optimal && sol.objective < incumbent - 1e-12) {
            incumbent = sol.objective;
            incumbent_point = sol.x;
        }
    };

    open.push(Node{-kInf, seq++, {}});
    double best_open_bound = -kInf;

    while (!open.empty()) {
        if (result.nodes >= opts.node_limit) {
            result.status = BnbStatus::node_limit;
            result.lower_bound = std::min(best_open_bound, incumbent);
            result.objective = incumbent;
            result.point = incumbent_point;
            return result;
        }
        Node node = open.top();
        open.pop();
        best_open_bound = node.bound;
        if (node.bound >= incumbent - opts.gap) break;  // proven within gap

        result.nodes += 1;
        apply_fixes(model, node.fixes, lower, upper);
        const LpSolution sol = solve_lp_bounds(model.lp, lower, upper);
        if (sol.status != LpStatus::optimal) continue;       // pruned: infeasible
        if (sol.objective >= incumbent - 1e-6) continue;     // pruned: dominated

        // Most fractional undetermined binary, lowest index on ties.
        int branch_col = -1;
        double best_frac = -1.0;
        for (int col : model.binaries) {
            bool fixed = false;
            for (auto [c, v] : node.fixes)
                if (c == col) fixed = true;
            if (fixed) continue;
            const double val = sol.x[col];
            if (val < 1e-6 || val > 1.0 - 1e-6) continue;
            const double frac = 0.5 - std::abs(val - 0.5);
            if (frac > best_frac + 1e-12) {
                best_frac = frac;
                branch_col = col;
            }
        }

        if (branch_col < 0) {
            // All binaries integral: the relaxation is a genuine solution.
            if (sol.objective < incumbent - 1e-12) {
                incumbent = sol.objective;
                incumbent_point = sol.x;
            }
            continue;
        }

        try_pattern(sol.x, node.fixes);

        for (int v : {0, 1}) {
            Node child;
            child.bound = sol.objective;
            child.seq = seq++;
            child.fixes = node.fixes;
            child.fixes.emplace_back(branch_col, v);
            open.push(child);
        }
    }

    result.lower_bound = open.empty() ? incumbent : std::min(best_open_bound, incumbent);
    if (std::isfinite(incumbent)) {
        result.status = BnbStatus::optimal;
        result.objective = incumbent;
        result.point = incumbent_point;
    } else {
        result.status = BnbStatus::infeasible;
    }
    return result;
}

// --- verification ------------------------------------------------------------------

const char* cert_status_name(CertStatus s) {
    switch (s) {
        case CertStatus::certified: return "certified";
        case CertStatus::skipped_marginal: return "skipped_marginal";
        case CertStatus::infeasible_in_box: return "infeasible_in_box";
        case CertStatus::solver_limit: return "solver_limit";
        case CertStatus::infeasible_anchor: return "infeasible_anchor";
    }
    return "?";
}

Certificate verify_corner(const UnitBoxNet& net, const NeuronBounds& bounds,
                          const Vec4& corner, StabilityClass corner_class,
                          double delta, const BnbOptions& opts) {
    Certificate cert;
    cert.anchor = corner;
    cert.delta = delta;

    if (corner_class != StabilityClass::Stable &&
        corner_class != StabilityClass::Unstable) {
        cert.status = CertStatus::skipped_marginal;
        return cert;
    }
    const bool stable = corner_class == StabilityClass::Stable;
    cert.crossing_below = stable;
    cert.threshold = stable ? 3.0 + delta : 3.0 - delta;

    VerificationSpec spec;
    spec.anchor = corner;
    spec.threshold = cert.threshold;
    spec.crossing_below = stable;

    const auto t0 = std::chrono::steady_clock::now();
    const MilpModel model = build_verification_model(net, bounds, spec);
    const BnbResult r = branch_and_bound(model, opts);
    cert.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    cert.nodes = r.nodes;

    switch (r.status) {
        case BnbStatus::optimal:
            cert.status = CertStatus::certified;
            // The proven lower bound: equal to the incumbent when the search
            // ran to completion, and a sound (never optimistic) radius when
            // it stopped on the gap.
            cert.epsilon_star = std::clamp(r.lower_bound, 0.0, r.objective);
            cert.witness = r.point.head<4>();
            break;
        case BnbStatus::infeasible:
            cert.status = CertStatus::infeasible_in_box;
            cert.epsilon_star = 1.0;  // no crossing anywhere: whole box holds
            cert.witness = corner;
            break;
        case BnbStatus::node_limit:
            cert.status = CertStatus::solver_limit;
            // The proven lower bound is still a sound exclusion radius.
            cert.epsilon_star = std::max(0.0, r.lower_bound);
            cert.witness = std::isfinite(r.objective) && r.point.size() >= 4
                               ? Vec4(r.point.head<4>())
                               : corner;
            break;
    }
    return cert;
}

double check_forward_consistency(const UnitBoxNet& net, const NeuronBounds& bounds,
                                 const Vec4& u) {
    const MilpModel model = build_pinned_model(net, bounds, u);
    const LpSolution sol = solve_lp(model.lp);
    if (sol.status != LpStatus::optimal)
        throw EncodingError("pinned network system infeasible: encoding bug");
    return std::abs(sol.x[model.var_yhat] - net.eval(u));
}

void dump_model(const MilpModel& model, std::ostream& os) {
    const LinearProgram& lp = model.lp;
    auto var_name = [&](int j) {
        if (j < 4) return "u" + std::to_string(j);
        if (j == model.var_eps) return std::string("eps");
        if (j == model.var_yhat) return std::string("yhat");
        if (j >= model.first_b) return "b" + std::to_string(j - model.first_b);
        if (j >= model.first_z) return "z" + std::to_string(j - model.first_z);
        return "zhat" + std::to_string(j - model.first_zhat);
    };
    os << "minimize:";
    for (int j = 0; j < lp.num_vars; ++j)
        if (lp.objective[j] != 0.0)
            os << ' ' << lp.objective[j] << '*' << var_name(j);
    os << "\nbounds:\n";
    for (int j = 0; j < lp.num_vars; ++j)
        os << "  " << lp.lower[j] << " <= " << var_name(j) << " <= " << lp.upper[j]
           << '\n';
    os << "rows:\n";
    for (std::size_t i = 0; i < lp.rows.size(); ++i) {
        os << " ";
        for (int j = 0; j < lp.num_vars; ++j)
            if (lp.rows[i][j] != 0.0)
                os << ' ' << (lp.rows[i][j] >= 0 ? "+" : "") << lp.rows[i][j] << '*'
                   << var_name(j);
        const char* rel = lp.sense[i] == RowSense::le   ? "<="
                          : lp.sense[i] == RowSense::ge ? ">="
                                                        : "=";
        os << ' ' << rel << ' ' << lp.rhs[i] << '\n';
    }
    os << "binaries:";
    for (int col : model.binaries) os << ' ' << var_name(col);
    os << '\n';
}

void save_certificate_json(const std::filesystem::path& path, const Certificate& cert,
                           bool include_wall_time) {
    json j;
    j["anchor"] = {cert.anchor[0], cert.anchor[1], cert.anchor[2], cert.anchor[3]};
    j["delta"] = cert.delta;
    j["epsilon_star"] = cert.epsilon_star;
    j["witness"] = {cert.witness[0], cert.witness[1], cert.witness[2], cert.witness[3]};
    j["status"] = cert_status_name(cert.status);
    j["threshold"] = cert.threshold;
    j["crossing_below"] = cert.crossing_below;
    j["nodes"] = cert.nodes;
    if (include_wall_time) j["wall_ms"] = cert.wall_ms;
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write certificate: " + path.string());
    f << j.dump(2) << '\n';
}

}  // namespace dampmap
