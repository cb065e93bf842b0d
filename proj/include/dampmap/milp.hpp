#pragma once

#include "dampmap/net.hpp"
#include "dampmap/types.hpp"

#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace dampmap {

// --- linear programming core ----------------------------------------------

enum class RowSense : std::uint8_t { le, ge, eq };

struct LinearProgram {
    int num_vars = 0;
    Eigen::VectorXd objective;           // minimize objective . v
    Eigen::VectorXd lower, upper;        // variable boxes, +-inf allowed
    std::vector<Eigen::VectorXd> rows;   // dense coefficient rows
    std::vector<double> rhs;
    std::vector<RowSense> sense;

    explicit LinearProgram(int n);
    int add_row(const Eigen::VectorXd& coeffs, RowSense s, double rhs_value);
};

enum class LpStatus : std::uint8_t { optimal, infeasible, unbounded };

struct LpSolution {
    LpStatus status = LpStatus::infeasible;
    double objective = 0.0;
    Eigen::VectorXd x;
};

/// Dense two-phase primal simplex with bounded variables and Bland's
/// anti-cycling pivot rule. Feasibility tolerance 1e-7.
LpSolution solve_lp(const LinearProgram& lp);

// --- ReLU network encoding -------------------------------------------------

/// Network over the unit input box: the hypercube map and the standardizer
/// are folded into the first layer, the output is denormalized to percent.
struct UnitBoxNet {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    [[nodiscard]] int depth() const { return static_cast<int>(weights.size()); }
    [[nodiscard]] double eval(const Vec4& u) const;
    [[nodiscard]] Eigen::RowVectorXd eval_batch(const Eigen::MatrixXd& u) const;
};

UnitBoxNet fold_to_unit_box(const Mlp& net, const Hypercube& h);

/// Valid pre-activation intervals per hidden neuron over an input box.
struct NeuronBounds {
    std::vector<Eigen::VectorXd> zhat_min;
    std::vector<Eigen::VectorXd> zhat_max;
};

/// Layer-by-layer interval arithmetic over box [lo, hi] in the unit cube.
NeuronBounds propagate_bounds(const UnitBoxNet& net, const Vec4& lo, const Vec4& hi);

/// Big-M encoding of the network plus optional distance objective.
/// Variable layout: u(4) | eps | zhat per hidden neuron | z per hidden
/// neuron | b per hidden neuron | yhat.
struct MilpModel {
    LinearProgram lp;
    std::vector<int> binaries;   // LP columns that must be integral
    int var_eps = -1;
    int var_yhat = -1;
    std::vector<int> var_u;      // input columns (4)
    int first_zhat = 0, first_z = 0, first_b = 0;
    std::vector<int> neuron_layer;   // per hidden neuron, for dumps
    std::vector<int> fixed_binaries; // eliminated by stable-neuron analysis

    MilpModel() : lp(0) {}
};

struct VerificationSpec {
    Vec4 anchor = Vec4::Zero();      // reference point in the unit box
    double threshold = 3.25;         // percent
    bool crossing_below = true;      // true: look for yhat <= threshold
    Vec4 box_lo = Vec4::Zero();      // admissible input sub-box
    Vec4 box_hi = Vec4::Ones();
    std::vector<int> frozen_dims;    // inputs pinned to the anchor value
};

/// Encode min eps s.t. the prediction crosses the threshold inside the
/// eps-ball around the anchor (infinity norm over the non-frozen inputs).
MilpModel build_verification_model(const UnitBoxNet& net, const NeuronBounds& bounds,
                                   const VerificationSpec& spec);

/// Encode the plain network feasibility system with the input pinned at u.
MilpModel build_pinned_model(const UnitBoxNet& net, const NeuronBounds& bounds,
                             const Vec4& u);

// --- branch and bound -------------------------------------------------------

struct BnbOptions {
    double gap = 1e-4;             // absolute optimality gap on the objective
    long node_limit = 1'000'000;
};

enum class BnbStatus : std::uint8_t { optimal, infeasible, node_limit };

struct BnbResult {
    BnbStatus status = BnbStatus::infeasible;
    double objective = std::numeric_limits<double>::infinity();
    double lower_bound = std::numeric_limits<double>::infinity();
    Eigen::VectorXd point;
    long nodes = 0;
};

/// Best-first search on LP relaxation bounds; branches on the most
/// fractional binary (lowest index on ties); incumbents come from rounding
/// the relaxation to a full activation pattern and re-solving.
BnbResult branch_and_bound(const MilpModel& model, const BnbOptions& opts = {});

// --- verification ------------------------------------------------------------

enum class CertStatus : std::uint8_t {
    certified,
    skipped_marginal,
    infeasible_in_box,
    solver_limit,
    infeasible_anchor,
};

const char* cert_status_name(CertStatus s);

struct Certificate {
    double epsilon_star = 0.0;       // normalized distance in [0, 1]
    Vec4 witness = Vec4::Zero();     // unit-box coordinates
    CertStatus status = CertStatus::skipped_marginal;
    Vec4 anchor = Vec4::Zero();
    double delta = 0.25;
    double threshold = 0.0;
    bool crossing_below = true;
    long nodes = 0;
    double wall_ms = 0.0;
};

/// Distance-to-misclassification certificate for one unit-box corner.
/// Marginal-band corners are skipped; an impossible crossing certifies the
/// whole box (eps = 1).
Certificate verify_corner(const UnitBoxNet& net, const NeuronBounds& bounds,
                          const Vec4& corner, StabilityClass corner_class,
                          double delta, const BnbOptions& opts = {});

/// Max |MILP output - forward output| with the input pinned at u.
/// Throws EncodingError if the pinned system is infeasible.
double check_forward_consistency(const UnitBoxNet& net, const NeuronBounds& bounds,
                                 const Vec4& u);

/// Human-readable constraint listing for debugging.
void dump_model(const MilpModel& model, std::ostream& os);

void save_certificate_json(const std::filesystem::path& path, const Certificate& cert,
                           bool include_wall_time = true);

}  // namespace dampmap
