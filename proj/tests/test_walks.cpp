#include <catch2/catch_amalgamated.hpp>

#include "dampmap/oracle.hpp"
#include "dampmap/sampling.hpp"
#include "dampmap/walks.hpp"

#include <cmath>

using namespace dampmap;
using Catch::Approx;

namespace {

LabeledSample labeled_at(const OperatingPoint& x, Origin origin = Origin::grid) {
    const DampingResult r = min_damping(x);
    return LabeledSample{x, r.zeta_c, r.gradient, classify(r.zeta_c), origin};
}

}  // namespace

TEST_CASE("walk step is zero exactly at the margin", "[walks]") {
    const WalkConfig cfg{};
    const Hypercube& h = default_hypercube();
    const OperatingPoint x{1.0, 0.1, 30.0, 20.0};
    const Vec4 grad{1.0, 0.5, 0.1, 0.1};

    const auto step = walk_step(x, grad, 3.0, WalkPhase::power, cfg, h);
    REQUIRE(step.has_value());
    CHECK(step->x.vec() == x.vec());
}

TEST_CASE("walk step length follows the shrinking law", "[walks]") {
    const WalkConfig cfg{};
    const Hypercube& h = default_hypercube();
    const OperatingPoint x{1.0, 0.0, 30.0, 20.0};
    const Vec4 grad{0.8, -0.3, 0.0, 0.0};

    // At the trigger-band edge the step saturates at alpha0.
    const auto at_edge = walk_step(x, grad, 9.0, WalkPhase::power, cfg, h);
    REQUIRE(at_edge.has_value());
    const Vec4 moved = h.to_unit(at_edge->x.vec()) - h.to_unit(x.vec());
    CHECK(moved.norm() == Approx(cfg.alpha0).epsilon(1e-9));

    // Halfway in, the step halves.
    const auto halfway = walk_step(x, grad, 4.5, WalkPhase::power, cfg, h);
    const Vec4 moved_half = h.to_unit(halfway->x.vec()) - h.to_unit(x.vec());
    CHECK(moved_half.norm() == Approx(0.5 * cfg.alpha0).epsilon(1e-9));
}

TEST_CASE("walk step respects the phase mask", "[walks]") {
    const WalkConfig cfg{};
    const Hypercube& h = default_hypercube();
    const OperatingPoint x{1.0, 0.0, 30.0, 20.0};
    const Vec4 grad{0.5, 0.5, 0.5, 0.5};

    const auto power = walk_step(x, grad, 5.0, WalkPhase::power, cfg, h);
    REQUIRE(power.has_value());
    CHECK(power->x.k_pf == x.k_pf);
    CHECK(power->x.k_v == x.k_v);
    CHECK(power->x.p_ref != x.p_ref);

    const auto control = walk_step(x, grad, 5.0, WalkPhase::control, cfg, h);
    REQUIRE(control.has_value());
    CHECK(control->x.p_ref == x.p_ref);
    CHECK(control->x.q_ref == x.q_ref);
    CHECK(control->x.k_pf != x.k_pf);
}

TEST_CASE("walk step stalls below the gradient floor", "[walks]") {
    const WalkConfig cfg{};
    const Hypercube& h = default_hypercube();
    const auto step = walk_step({1, 0, 30, 20}, Vec4::Zero(), 5.0, WalkPhase::power,
                                cfg, h);
    CHECK_FALSE(step.has_value());

    // Gradient entirely in the masked dimensions also stalls.
    const auto masked = walk_step({1, 0, 30, 20}, Vec4{0, 0, 1, 1}, 5.0,
                                  WalkPhase::power, cfg, h);
    CHECK_FALSE(masked.has_value());
}

TEST_CASE("walk direction moves the margin toward the target", "[walks]") {
    const WalkConfig cfg{};
    const Hypercube& h = default_hypercube();
    // A stable seed inside the trigger band.
    const LabeledSample seed = labeled_at({0.9, 0.25, 10.0, 5.0});
    REQUIRE(cfg.in_trigger_band(seed.zeta));
    REQUIRE(seed.zeta > 3.25);

    const auto step =
        walk_step(seed.x, seed.grad, seed.zeta, WalkPhase::power, cfg, h);
    REQUIRE(step.has_value());
    const double zeta_next = min_damping(step->x).zeta_c;
    CHECK(zeta_next < seed.zeta);
}

TEST_CASE("directed walk ignores out-of-band seeds", "[walks]") {
    const WalkConfig cfg{};
    const LabeledSample far = labeled_at({0.0, 0.0, 75.0, 50.0});  // ~17.5 percent
    REQUIRE_FALSE(cfg.in_trigger_band(far.zeta));

    const DirectedWalkOutcome o = directed_walk(far, cfg, default_hypercube());
    CHECK(o.power.status == WalkStatus::not_triggered);
    CHECK(o.control.status == WalkStatus::not_triggered);
    CHECK(o.emitted.empty());
    CHECK(o.power.path.empty());
}

TEST_CASE("directed walk converges in zero steps inside the target band", "[walks]") {
    const WalkConfig cfg{};
    // Find a grid point already within 3 +- 0.25 by scanning a fine slice.
    LabeledSample seed;
    bool found = false;
    for (double p = 1.0; p < 1.6 && !found; p += 0.002) {
        seed = labeled_at({p, 0.0, 10.0, 5.0});
        if (cfg.in_target_band(seed.zeta)) found = true;
    }
    REQUIRE(found);
    const DirectedWalkOutcome o = directed_walk(seed, cfg, default_hypercube());
    CHECK(o.power.status == WalkStatus::converged);
    CHECK(o.power.path.size() == 1);
    CHECK(o.control.status == WalkStatus::converged);
    REQUIRE(o.emitted.size() == 2);  // both phases emit the same terminus
    CHECK(o.emitted[0].origin == Origin::dw);
}

TEST_CASE("walks from the spec anchor terminate with a consistent status",
          "[walks]") {
    const WalkConfig cfg{};
    const LabeledSample origin_seed = labeled_at({0, 0, 0, 0});
    REQUIRE(origin_seed.zeta == Approx(5.0));

    const DirectedWalkOutcome o = directed_walk(origin_seed, cfg, default_hypercube());
    for (const WalkResult* w : {&o.power, &o.control}) {
        if (w->status == WalkStatus::converged) {
            const double final_zeta = w->path.back().second;
            CHECK(cfg.in_target_band(final_zeta));
        } else {
            CHECK((w->status == WalkStatus::stalled ||
                   w->status == WalkStatus::iter_cap ||
                   w->status == WalkStatus::left_box));
        }
    }
}

TEST_CASE("emitted walk points lie in the marginal band", "[walks]") {
    const WalkConfig cfg{};
    const auto seeds = label(sample_grid(default_hypercube(), 4), Origin::grid);
    const auto emitted = enrich_with_walks(seeds, cfg, default_hypercube());
    REQUIRE(emitted.size() > 10);
    for (const auto& s : emitted) {
        REQUIRE(s.zeta >= 2.75);
        REQUIRE(s.zeta <= 3.25);
        REQUIRE(s.cls == StabilityClass::Marginal);
        REQUIRE(s.origin == Origin::dw);
        REQUIRE(default_hypercube().contains(s.x));
    }
}

TEST_CASE("converged walks never end farther from the margin than they started",
          "[walks]") {
    const WalkConfig cfg{};
    const auto seeds = label(sample_grid(default_hypercube(), 4), Origin::grid);
    int converged = 0;
    for (const auto& seed : seeds) {
        if (!cfg.in_trigger_band(seed.zeta)) continue;
        const DirectedWalkOutcome o = directed_walk(seed, cfg, default_hypercube());
        for (const WalkResult* w : {&o.power, &o.control}) {
            if (w->status != WalkStatus::converged) continue;
            converged += 1;
            const double end_dist = std::abs(w->path.back().second - 3.0);
            const double start_dist = std::abs(seed.zeta - 3.0);
            REQUIRE(end_dist <= start_dist + 1e-12);
            // Paths never leave the box.
            for (const auto& [x, zeta] : w->path)
                REQUIRE(default_hypercube().contains(x));
        }
    }
    REQUIRE(converged > 0);
}

TEST_CASE("walks are deterministic", "[walks]") {
    const WalkConfig cfg{};
    const LabeledSample seed = labeled_at({1.1, -0.3, 20.0, 10.0});
    const DirectedWalkOutcome a = directed_walk(seed, cfg, default_hypercube());
    const DirectedWalkOutcome b = directed_walk(seed, cfg, default_hypercube());
    REQUIRE(a.power.status == b.power.status);
    REQUIRE(a.power.path.size() == b.power.path.size());
    for (std::size_t i = 0; i < a.power.path.size(); ++i) {
        REQUIRE(a.power.path[i].first.vec() == b.power.path[i].first.vec());
        REQUIRE(a.power.path[i].second == b.power.path[i].second);
    }
}
