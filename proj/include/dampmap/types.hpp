#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dampmap {

using Vec4 = Eigen::Vector4d;

/// Dispatch decision vector: turbine power set points and droop gains.
struct OperatingPoint {
    double p_ref = 0.0;  // active power set point (p.u.)
    double q_ref = 0.0;  // reactive power set point (p.u.)
    double k_pf = 0.0;   // frequency droop gain
    double k_v = 0.0;    // voltage droop gain

    [[nodiscard]] Vec4 vec() const { return Vec4{p_ref, q_ref, k_pf, k_v}; }

    static OperatingPoint from_vec(const Vec4& v) { return {v[0], v[1], v[2], v[3]}; }
};

/// Axis-aligned box of admissible operating points.
struct Hypercube {
    Vec4 lower{0.0, -0.5, 0.0, 0.0};
    Vec4 upper{2.0, 0.5, 75.0, 50.0};

    [[nodiscard]] Vec4 range() const { return upper - lower; }

    // Inclusive membership with one-ulp slack for points produced by clipping.
    [[nodiscard]] bool contains(const Vec4& x, double tol = 1e-9) const {
        for (int i = 0; i < 4; ++i) {
            const double slack = tol * std::max(1.0, upper[i] - lower[i]);
            if (x[i] < lower[i] - slack || x[i] > upper[i] + slack) return false;
        }
        return true;
    }
    [[nodiscard]] bool contains(const OperatingPoint& x, double tol = 1e-9) const {
        return contains(x.vec(), tol);
    }

    [[nodiscard]] Vec4 to_unit(const Vec4& x) const {
        return (x - lower).cwiseQuotient(range());
    }
    [[nodiscard]] Vec4 from_unit(const Vec4& u) const {
        return lower + u.cwiseProduct(range());
    }
    [[nodiscard]] Vec4 clip(const Vec4& x) const {
        return x.cwiseMax(lower).cwiseMin(upper);
    }
};

/// One lost turbine; severity scales the surviving turbines' loading.
struct Contingency {
    int index = 1;  // 1..5

    [[nodiscard]] double severity() const { return 1.0 + 0.05 * index; }

    static Contingency checked(int index) {
        if (index < 1 || index > 5)
            throw std::invalid_argument("contingency index must be in 1..5");
        return Contingency{index};
    }
    static constexpr int count = 5;
};

/// Canonical representative of a conjugate eigenvalue pair (omega >= 0).
struct EigenPair {
    double sigma = 0.0;  // real part
    double omega = 0.0;  // imaginary part
};

enum class Mode : std::uint8_t { A = 0, B = 1 };

inline const char* mode_name(Mode m) { return m == Mode::A ? "A" : "B"; }

/// Minimum damping ratio across contingencies and modes, with the
/// sensitivity of the binding mode.
struct DampingResult {
    double zeta_c = 0.0;            // percent
    int binding_contingency = 1;
    Mode binding_mode = Mode::A;
    Vec4 gradient = Vec4::Zero();   // d zeta_c / dx, percent per input unit
    bool degenerate = false;        // binding mode has no oscillatory pair
};

enum class StabilityClass : std::uint8_t {
    Stable = 0,
    MStable = 1,
    Marginal = 2,
    MUnstable = 3,
    Unstable = 4,
};

constexpr int kNumClasses = 5;

inline const char* class_name(StabilityClass c) {
    switch (c) {
        case StabilityClass::Stable: return "stable";
        case StabilityClass::MStable: return "mstable";
        case StabilityClass::Marginal: return "marginal";
        case StabilityClass::MUnstable: return "munstable";
        case StabilityClass::Unstable: return "unstable";
    }
    return "?";
}

StabilityClass class_from_name(const std::string& name);

enum class Origin : std::uint8_t { grid, uniform, lhc, dw, ni, vi, test };

inline const char* origin_name(Origin o) {
    switch (o) {
        case Origin::grid: return "grid";
        case Origin::uniform: return "uniform";
        case Origin::lhc: return "lhc";
        case Origin::dw: return "dw";
        case Origin::ni: return "ni";
        case Origin::vi: return "vi";
        case Origin::test: return "test";
    }
    return "?";
}

Origin origin_from_name(const std::string& name);

/// Ground-truth labelled operating point.
struct LabeledSample {
    OperatingPoint x;
    double zeta = 0.0;             // percent
    Vec4 grad = Vec4::Zero();      // oracle gradient at x
    StabilityClass cls = StabilityClass::Stable;
    Origin origin = Origin::grid;
};

struct DegenerateModeError : std::domain_error {
    using std::domain_error::domain_error;
};

struct TrainingError : std::runtime_error {
    int epoch;
    TrainingError(const std::string& what, int epoch_)
        : std::runtime_error(what), epoch(epoch_) {}
};

struct EncodingError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dampmap
