#include "dampmap/oracle.hpp"

#include <cmath>

namespace dampmap {

namespace {

constexpr double kRepeatedRootTol = 1e-9;

void check_inputs(const OperatingPoint& x, Contingency c) {
    if (c.index < 1 || c.index > Contingency::count)
        throw std::invalid_argument("contingency index must be in 1..5");
    if (!default_hypercube().contains(x))
        throw std::domain_error("operating point outside the admissible box");
}

}  // namespace

const Hypercube& default_hypercube() {
    static const Hypercube h{};
    return h;
}

BlockCoeffs block_coeffs(const OperatingPoint& x, Contingency c, Mode mode) {
    const double rho = c.severity();
    const double p = rho * x.p_ref;
    const double q = x.q_ref;

    BlockCoeffs out;
    if (mode == Mode::A) {
        out.d = 0.20 + 0.012 * x.k_pf - 0.12 * p * p - 0.08 * p * q - 0.03 * q;
        out.k = 1.0 + 0.02 * x.k_v + 0.05 * q - 0.002 * p * x.k_v;
        out.d_grad = Vec4{(-0.24 * p - 0.08 * q) * rho, -0.08 * p - 0.03, 0.012, 0.0};
        out.k_grad = Vec4{-0.002 * x.k_v * rho, 0.05, 0.0, 0.02 - 0.002 * p};
    } else {
        out.d = 0.5 + 0.03 * x.k_v - 0.02 * p * q;
        out.k = 25.0 + 0.1 * x.k_pf;
        out.d_grad = Vec4{-0.02 * q * rho, -0.02 * p, 0.0, 0.03};
        out.k_grad = Vec4{0.0, 0.0, 0.1, 0.0};
    }
    return out;
}

Eigen::Matrix4d state_matrix(const OperatingPoint& x, Contingency c) {
    check_inputs(x, c);
    const BlockCoeffs a = block_coeffs(x, c, Mode::A);
    const BlockCoeffs b = block_coeffs(x, c, Mode::B);
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    m(0, 1) = 1.0;
    m(1, 0) = -a.k;
    m(1, 1) = -a.d;
    m(2, 3) = 1.0;
    m(3, 2) = -b.k;
    m(3, 3) = -b.d;
    return m;
}

Eigen::Matrix4d state_matrix_derivative(const OperatingPoint& x, Contingency c,
                                        int input_index) {
    check_inputs(x, c);
    if (input_index < 0 || input_index > 3)
        throw std::invalid_argument("input index must be in 0..3");
    const BlockCoeffs a = block_coeffs(x, c, Mode::A);
    const BlockCoeffs b = block_coeffs(x, c, Mode::B);
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    m(1, 0) = -a.k_grad[input_index];
    m(1, 1) = -a.d_grad[input_index];
    m(3, 2) = -b.k_grad[input_index];
    m(3, 3) = -b.d_grad[input_index];
    return m;
}

double damping_ratio(const EigenPair& lambda) {
    const double mag2 = lambda.sigma * lambda.sigma + lambda.omega * lambda.omega;
    if (mag2 == 0.0)
        throw std::domain_error("damping ratio undefined for the zero eigenvalue");
    return -100.0 * lambda.sigma / std::sqrt(mag2);
}

bool block_overdamped(double d, double k) { return d * d >= 4.0 * k; }

EigenPair block_eigenpair(double d, double k) {
    const double disc = d * d - 4.0 * k;
    if (disc < 0.0) return EigenPair{-0.5 * d, 0.5 * std::sqrt(-disc)};
    return EigenPair{0.5 * (-d + std::sqrt(disc)), 0.0};
}

double mode_damping(const OperatingPoint& x, Contingency c, Mode mode) {
    check_inputs(x, c);
    const BlockCoeffs bc = block_coeffs(x, c, mode);
    if (block_overdamped(bc.d, bc.k)) return bc.d > 0.0 ? 100.0 : -100.0;
    // For a companion block sigma^2 + omega^2 = k exactly, so the damping
    // ratio collapses to 50*d/sqrt(k).
    return 50.0 * bc.d / std::sqrt(bc.k);
}

std::complex<double> eig_sensitivity(const OperatingPoint& x, Contingency c,
                                     Mode mode, int input_index) {
    check_inputs(x, c);
    if (input_index < 0 || input_index > 3)
        throw std::invalid_argument("input index must be in 0..3");
    const BlockCoeffs bc = block_coeffs(x, c, mode);
    if (std::abs(bc.d * bc.d - 4.0 * bc.k) < kRepeatedRootTol)
        throw DegenerateModeError("repeated eigenvalue: sensitivity undefined");

    using cplx = std::complex<double>;
    const EigenPair ep = block_eigenpair(bc.d, bc.k);
    const cplx lambda{ep.sigma, ep.omega};

    // Right eigenvector (1, lambda); left eigenvector (lambda + d, 1).
    Eigen::Vector2cd phi{cplx{1.0, 0.0}, lambda};
    Eigen::Vector2cd psi{lambda + bc.d, cplx{1.0, 0.0}};
    const cplx dot = psi.transpose() * phi;
    psi /= dot;  // psi^T phi = 1

    Eigen::Matrix2d dblock = Eigen::Matrix2d::Zero();
    dblock(1, 0) = -bc.k_grad[input_index];
    dblock(1, 1) = -bc.d_grad[input_index];

    return (psi.transpose() * (dblock * phi))(0, 0);
}

DampingGradient damping_sensitivity(const OperatingPoint& x, Contingency c,
                                    Mode mode) {
    check_inputs(x, c);
    const BlockCoeffs bc = block_coeffs(x, c, mode);
    if (block_overdamped(bc.d, bc.k)) return DampingGradient{Vec4::Zero(), true};

    const EigenPair ep = block_eigenpair(bc.d, bc.k);
    const double mag = ep.sigma * ep.sigma + ep.omega * ep.omega;
    const double denom = std::pow(mag, 1.5);

    DampingGradient out;
    for (int i = 0; i < 4; ++i) {
        const std::complex<double> dl = eig_sensitivity(x, c, mode, i);
        // Percent scaling carried over from the damping-ratio definition.
        out.grad[i] = 100.0 * ep.omega *
                      (ep.sigma * dl.imag() - ep.omega * dl.real()) / denom;
    }
    return out;
}

DampingResult min_damping(const OperatingPoint& x) {
    DampingResult best;
    bool first = true;
    for (int ci = 1; ci <= Contingency::count; ++ci) {
        const Contingency c{ci};
        for (Mode mode : {Mode::A, Mode::B}) {
            const double zeta = mode_damping(x, c, mode);
            if (first || zeta < best.zeta_c) {
                first = false;
                best.zeta_c = zeta;
                best.binding_contingency = ci;
                best.binding_mode = mode;
            }
        }
    }
    const DampingGradient g =
        damping_sensitivity(x, Contingency{best.binding_contingency}, best.binding_mode);
    best.gradient = g.grad;
    best.degenerate = g.degenerate;
    return best;
}

}  // namespace dampmap
