#pragma once

#include "dampmap/types.hpp"

#include <complex>

namespace dampmap {

// Analytic small-signal model. Each contingency yields a 4x4 state matrix
// made of two independent second-order blocks ("mode A": power-loading
// driven, "mode B": droop driven). The security margin is the minimum
// damping ratio over the five contingencies and both modes.

/// Damping and stiffness of one companion block, with analytic partials
/// with respect to (p_ref, q_ref, k_pf, k_v).
struct BlockCoeffs {
    double d = 0.0;
    double k = 0.0;
    Vec4 d_grad = Vec4::Zero();
    Vec4 k_grad = Vec4::Zero();
};

BlockCoeffs block_coeffs(const OperatingPoint& x, Contingency c, Mode mode);

/// Block-diagonal state matrix diag(B_A, B_B), B_m = [[0,1],[-k_m,-d_m]].
/// Throws std::domain_error for out-of-bounds x.
Eigen::Matrix4d state_matrix(const OperatingPoint& x, Contingency c);

/// Analytic d(state matrix)/dx_i for input index i in 0..3.
Eigen::Matrix4d state_matrix_derivative(const OperatingPoint& x, Contingency c,
                                        int input_index);

/// Damping ratio in percent, zeta = -100*sigma/sqrt(sigma^2+omega^2).
/// Throws std::domain_error for the zero eigenvalue.
double damping_ratio(const EigenPair& lambda);

/// Canonical eigenvalue of a companion block. Underdamped blocks return the
/// upper-half-plane member of the pair; overdamped blocks return the most
/// positive real root with omega = 0.
EigenPair block_eigenpair(double d, double k);

/// True iff the block has no oscillatory pair (|d| >= 2 sqrt(k)).
bool block_overdamped(double d, double k);

/// Damping ratio of one (contingency, mode) block in percent.
/// Underdamped: 50*d/sqrt(k). Overdamped: +-100 by root sign.
double mode_damping(const OperatingPoint& x, Contingency c, Mode mode);

/// d(lambda)/dx_i via left/right eigenvectors of the block, normalized so
/// psi^T phi = 1. Throws DegenerateModeError near a repeated root.
std::complex<double> eig_sensitivity(const OperatingPoint& x, Contingency c,
                                     Mode mode, int input_index);

struct DampingGradient {
    Vec4 grad = Vec4::Zero();
    bool degenerate = false;  // omega == 0: gradient reported as zero
};

/// Gradient of mode_damping in percent per input unit.
DampingGradient damping_sensitivity(const OperatingPoint& x, Contingency c,
                                    Mode mode);

/// Minimum damping across all contingencies and modes. Ties resolve to the
/// lowest contingency index, then mode A.
DampingResult min_damping(const OperatingPoint& x);

/// The admissible operating box shared by the whole pipeline.
const Hypercube& default_hypercube();

}  // namespace dampmap
