// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Tolerances are fixed here, not tuned at runtime.

#include "dampmap/harness.hpp"
#include "dampmap/oracle.hpp"
#include "dampmap/parallel.hpp"
#include "dampmap/rng.hpp"
#include "dampmap/sampling.hpp"

#include "support.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

using namespace dampmap;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Check {
    std::string name;
    std::function<Outcome()> run;
};

OperatingPoint random_in_box(Rng& rng) {
    const Hypercube& h = default_hypercube();
    Vec4 v;
    for (int i = 0; i < 4; ++i) v[i] = rng.uniform(h.lower[i], h.upper[i]);
    return OperatingPoint::from_vec(v);
}

OperatingPoint pull_inside(const OperatingPoint& x, double frac = 1e-3) {
    const Hypercube& h = default_hypercube();
    Vec4 v = x.vec();
    for (int i = 0; i < 4; ++i) {
        const double m = frac * (h.upper[i] - h.lower[i]);
        v[i] = std::clamp(v[i], h.lower[i] + m, h.upper[i] - m);
    }
    return OperatingPoint::from_vec(v);
}

// --- 1: oracle exactness ----------------------------------------------------

Outcome criterion_oracle() {
    Rng rng(101);
    double worst_identity = 0.0;
    double worst_sens = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const OperatingPoint x = pull_inside(random_in_box(rng));
        const Contingency c{1 + static_cast<int>(rng.below(5))};
        for (Mode m : {Mode::A, Mode::B}) {
            const BlockCoeffs bc = block_coeffs(x, c, m);
            if (block_overdamped(bc.d, bc.k)) continue;
            const EigenPair ep = block_eigenpair(bc.d, bc.k);
            const double direct = damping_ratio(ep);
            const double closed = 50.0 * bc.d / std::sqrt(bc.k);
            worst_identity = std::max(worst_identity, std::abs(direct - closed));
        }
        // Sensitivities against central differences at one (c, mode, dim).
        const Mode m = rng.below(2) ? Mode::B : Mode::A;
        const BlockCoeffs bc = block_coeffs(x, c, m);
        if (std::abs(bc.d * bc.d - 4.0 * bc.k) < 1e-6) continue;
        const int dim = static_cast<int>(rng.below(4));
        const double h_step = 1e-5;
        Vec4 vp = x.vec(), vm = x.vec();
        vp[dim] += h_step;
        vm[dim] -= h_step;
        const double fd = (mode_damping(OperatingPoint::from_vec(vp), c, m) -
                           mode_damping(OperatingPoint::from_vec(vm), c, m)) /
                          (2 * h_step);
        const double analytic = damping_sensitivity(x, c, m).grad[dim];
        const double rel =
            std::abs(fd - analytic) / std::max(1e-8, std::abs(fd) + std::abs(analytic));
        worst_sens = std::max(worst_sens, rel);

        const std::complex<double> dl = eig_sensitivity(x, c, m, dim);
        const BlockCoeffs bp = block_coeffs(OperatingPoint::from_vec(vp), c, m);
        const BlockCoeffs bm = block_coeffs(OperatingPoint::from_vec(vm), c, m);
        const EigenPair pp = block_eigenpair(bp.d, bp.k);
        const EigenPair pm = block_eigenpair(bm.d, bm.k);
        const std::complex<double> fd_l{(pp.sigma - pm.sigma) / (2 * h_step),
                                        (pp.omega - pm.omega) / (2 * h_step)};
        const double rel_l =
            std::abs(dl - fd_l) / std::max(1e-8, std::abs(dl) + std::abs(fd_l));
        worst_sens = std::max(worst_sens, rel_l);
    }
    std::ostringstream os;
    os << "identity gap " << worst_identity << ", worst sensitivity rel err "
       << worst_sens;
    return {worst_identity < 1e-12 && worst_sens < 1e-4, os.str()};
}

// --- 2: autodiff correctness -------------------------------------------------

Outcome criterion_autodiff() {
    const Mlp net = testing::trained_net(3, 32, 300, 2);
    const SplitDataset ds =
        make_dataset(label(sample_grid(default_hypercube(), 4), Origin::grid), 3);
    const Batch batch = make_batch(ds.train, ds.standardizer);

    Rng rng(202);
    double worst_jac = 0.0;
    int checked = 0;
    while (checked < 100) {
        Vec4 x;
        for (int i = 0; i < 4; ++i) x[i] = rng.uniform(-2.0, 2.0);
        const Vec4 jac = input_jacobian(net, x);
        Vec4 fd;
        bool kink = false;
        for (int i = 0; i < 4; ++i) {
            Vec4 xp = x, xm = x;
            xp[i] += 1e-5;
            xm[i] -= 1e-5;
            fd[i] = (forward(net, xp) - forward(net, xm)) / 2e-5;
            if (std::abs(fd[i] - jac[i]) / std::max(1.0, std::abs(fd[i])) > 1e-3)
                kink = true;  // stepped across a ReLU boundary
        }
        if (kink) continue;
        for (int i = 0; i < 4; ++i)
            worst_jac = std::max(worst_jac, std::abs(fd[i] - jac[i]) /
                                                std::max(1e-6, std::abs(fd[i]) +
                                                                   std::abs(jac[i])));
        checked += 1;
    }

    std::vector<Eigen::MatrixXd> gw;
    std::vector<Eigen::VectorXd> gb;
    objective_with_gradients(net, batch, 0.1, gw, gb);
    double worst_par = 0.0;
    for (int probe = 0; probe < 100; ++probe) {
        const auto layer = static_cast<std::size_t>(rng.below(net.weights.size()));
        const auto r = static_cast<Eigen::Index>(
            rng.below(static_cast<std::uint64_t>(net.weights[layer].rows())));
        const auto c = static_cast<Eigen::Index>(
            rng.below(static_cast<std::uint64_t>(net.weights[layer].cols())));
        Mlp plus = net, minus = net;
        const double h = 1e-6;
        plus.weights[layer](r, c) += h;
        minus.weights[layer](r, c) -= h;
        const double fd =
            (loss(plus, batch).objective(0.1) - loss(minus, batch).objective(0.1)) /
            (2 * h);
        const double analytic = gw[layer](r, c);
        worst_par = std::max(worst_par, std::abs(fd - analytic) /
                                            std::max(1e-6, std::abs(fd) +
                                                               std::abs(analytic)));
    }
    std::ostringstream os;
    os << "input jacobian rel err " << worst_jac << ", parameter grad rel err "
       << worst_par;
    return {worst_jac < 1e-5 && worst_par < 1e-4, os.str()};
}

// --- 3: MILP encoding fidelity ------------------------------------------------

Outcome criterion_milp() {
    const Mlp big = testing::trained_net(3, 32, 1000, 4);
    const UnitBoxNet ub = fold_to_unit_box(big, default_hypercube());
    const NeuronBounds nb = propagate_bounds(ub, Vec4::Zero(), Vec4::Ones());
    Rng rng(303);
    double worst_dev = 0.0;
    for (int s = 0; s < 100; ++s) {
        Vec4 u;
        for (int i = 0; i < 4; ++i) u[i] = rng.uniform();
        worst_dev = std::max(worst_dev, check_forward_consistency(ub, nb, u));
    }

    const Mlp small = testing::trained_net(2, 8, 800, 5);
    const UnitBoxNet ub_small = fold_to_unit_box(small, default_hypercube());
    const NeuronBounds nb_small =
        propagate_bounds(ub_small, Vec4::Zero(), Vec4::Ones());
    double worst_gap = 0.0;
    int compared = 0;
    for (const Vec4& corner : unit_corners()) {
        const StabilityClass cls = classify(ub_small.eval(corner));
        if (cls != StabilityClass::Stable && cls != StabilityClass::Unstable) continue;
        VerificationSpec spec;
        spec.anchor = corner;
        spec.crossing_below = cls == StabilityClass::Stable;
        spec.threshold = spec.crossing_below ? 3.25 : 2.75;
        const MilpModel model = build_verification_model(ub_small, nb_small, spec);
        const BnbResult r = branch_and_bound(model);
        const auto expect = testing::pattern_enumeration_min(ub_small, spec);
        if (expect) {
            if (r.status != BnbStatus::optimal)
                return {false, "solver failed where enumeration found an optimum"};
            worst_gap = std::max(worst_gap, std::abs(r.objective - *expect));
        } else if (r.status != BnbStatus::infeasible) {
            return {false, "solver found a solution where enumeration proves none"};
        }
        compared += 1;
    }
    std::ostringstream os;
    os << "consistency dev " << worst_dev << ", bnb-vs-enumeration gap " << worst_gap
       << " over " << compared << " corners";
    return {worst_dev < 1e-6 && worst_gap < 1e-4 && compared >= 4, os.str()};
}

// --- 4: verification soundness --------------------------------------------------

Outcome criterion_verification() {
    const Mlp net = testing::trained_net(3, 32, 1000, 4);  // same settings as #3
    const UnitBoxNet ub = fold_to_unit_box(net, default_hypercube());
    const NeuronBounds nb = propagate_bounds(ub, Vec4::Zero(), Vec4::Ones());

    const std::vector<Vec4> corners = unit_corners();
    std::vector<Certificate> certs(corners.size());
    parallel_for(corners.size(), [&](std::size_t i) {
        certs[i] =
            verify_corner(ub, nb, corners[i], classify(ub.eval(corners[i])), 0.25);
    });

    // Ball-interior searches: no crossing strictly inside epsilon*.
    long violations = 0;
    int certified = 0;
    Rng rng(404);
    for (const auto& cert : certs) {
        if (cert.status != CertStatus::certified &&
            cert.status != CertStatus::infeasible_in_box)
            continue;
        if (cert.epsilon_star <= 1e-6) continue;
        certified += 1;
        const double radius = cert.epsilon_star - 1e-6;
        for (int s = 0; s < 100000; ++s) {
            Vec4 u;
            for (int i = 0; i < 4; ++i) {
                const double lo = std::max(0.0, cert.anchor[i] - radius);
                const double hi = std::min(1.0, cert.anchor[i] + radius);
                u[i] = rng.uniform(lo, hi);
            }
            const double pred = ub.eval(u);
            const bool crossed =
                cert.crossing_below ? pred <= cert.threshold : pred >= cert.threshold;
            if (crossed) violations += 1;
        }
    }

    // Statistical estimates against the verified distances.
    const auto schedule = default_epsilon_schedule(1000000);
    const auto table = compare_stat_vs_verified(ub, certs, schedule, 100, 505);
    bool sound = true, monotone = true, converged = true;
    double worst_final_median = 0.0;
    for (const auto& row : table) {
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t t = 0; t < row.schedule.size(); ++t) {
            if (row.ratio_percentiles[0][t] < 1.0 - 1e-9) sound = false;
            const double median = row.ratio_percentiles[3][t];
            if (median > prev + 1e-12) monotone = false;
            prev = median;
        }
        const double final_median = row.ratio_percentiles[3].back();
        worst_final_median = std::max(worst_final_median, final_median);
        if (final_median > 1.10) converged = false;
    }

    std::ostringstream os;
    os << certified << " certified corners, " << violations
       << " in-ball violations, ratios sound=" << sound << " monotone=" << monotone
       << ", worst final median " << worst_final_median;
    return {certified > 0 && violations == 0 && sound && monotone && converged,
            os.str()};
}

// --- 5: class imbalance ----------------------------------------------------------

Outcome criterion_imbalance() {
    const auto test_set = build_test_set(11);
    const ClassHistogram h = class_histogram(test_set);
    const double stable = h.shares[static_cast<int>(StabilityClass::Stable)];
    const double marginal = h.shares[static_cast<int>(StabilityClass::Marginal)];
    std::ostringstream os;
    os << "stable " << 100 * stable << "%, marginal " << 100 * marginal << "%";
    return {stable > 0.60 && marginal < 0.05, os.str()};
}

// --- 6: enrichment targeting -------------------------------------------------------

Outcome criterion_enrichment() {
    // Uniform baseline share of the marginal class.
    const auto baseline =
        label(sample_uniform(default_hypercube(), 200000, 606), Origin::uniform);
    const double base_share =
        class_histogram(baseline).shares[static_cast<int>(StabilityClass::Marginal)];

    // Network trained to the interruption point.
    const Mlp net = testing::trained_net(3, 32, 1000, 4);
    EnrichConfig cfg;
    cfg.pool_size = 1000000;
    cfg.n_samples = 200;
    cfg.delta = 3.0;
    cfg.seed = 707;
    const EnrichResult ni = ni_enrich(net, default_hypercube(), cfg);
    const double ni_share =
        class_histogram(ni.batch).shares[static_cast<int>(StabilityClass::Marginal)];

    // Directed walks: every emitted point in the true marginal band.
    const auto seeds = label(sample_grid(default_hypercube(), 5), Origin::grid);
    const auto dw = enrich_with_walks(seeds, WalkConfig{}, default_hypercube());
    bool dw_in_band = !dw.empty();
    for (const auto& s : dw)
        if (s.zeta < 2.75 || s.zeta > 3.25) dw_in_band = false;

    // Verification-guided exclusion volume.
    EnrichConfig vi_cfg = cfg;
    vi_cfg.delta = 0.25;
    vi_cfg.seed = 708;
    const EnrichResult vi = vi_enrich(net, default_hypercube(), vi_cfg);

    std::ostringstream os;
    os << "NI marginal " << 100 * ni_share << "% vs uniform " << 100 * base_share
       << "% (x" << (base_share > 0 ? ni_share / base_share : 0.0) << "), DW "
       << dw.size() << " pts in-band=" << dw_in_band << ", VI excluded "
       << 100 * vi.excluded_volume_fraction << "%";
    const bool ni_ok = base_share > 0 && ni_share >= 5.0 * base_share;
    const bool vi_ok = vi.excluded_volume_fraction >= 0.2 &&
                       vi.excluded_volume_fraction <= 0.7;
    return {ni_ok && dw_in_band && vi_ok, os.str()};
}

// --- 7: directional training gains ---------------------------------------------------

double median_metric(const AssessmentReport& rep,
                     const std::function<double(const AssessmentRun&)>& get) {
    std::vector<double> v;
    for (const auto& r : rep.runs)
        if (!r.diverged) v.push_back(get(r));
    std::sort(v.begin(), v.end());
    return percentile(v, 50);
}

Outcome criterion_gains() {
    const auto test_set = build_test_set(11);
    const auto marginal_mse = [](const AssessmentRun& r) {
        return r.mse_class[static_cast<int>(StabilityClass::Marginal)];
    };
    const auto total_mse = [](const AssessmentRun& r) { return r.mse_total; };

    ExperimentConfig cfg;
    cfg.master_seed = 2025;
    cfg.sampler = "grid";
    cfg.size_per_dim = 5;
    cfg.assessment_seeds = 10;
    cfg.epochs = 3000;
    cfg.train = HyperCell{3, 32, 0.05, 1.0, 0.0, 3.0};

    const SplitDataset base = build_base_dataset(cfg);

    cfg.variant = Variant::base;
    const AssessmentReport rep_base = assess(cfg, cfg.train, base, test_set);

    cfg.variant = Variant::dw;
    SplitDataset with_dw = base;
    {
        std::vector<LabeledSample> seeds = with_dw.train;
        seeds.insert(seeds.end(), with_dw.val.begin(), with_dw.val.end());
        enrich(with_dw, enrich_with_walks(seeds, cfg.walk, default_hypercube()));
    }
    const AssessmentReport rep_dw = assess(cfg, cfg.train, with_dw, test_set);

    cfg.variant = Variant::ni;
    const AssessmentReport rep_ni = assess(cfg, cfg.train, base, test_set);

    // Jacobian regularization on the LHC dataset.
    ExperimentConfig lhc_cfg = cfg;
    lhc_cfg.sampler = "lhc";
    lhc_cfg.variant = Variant::base;
    lhc_cfg.train.l0 = 0.05;
    const SplitDataset lhc = build_base_dataset(lhc_cfg);
    const AssessmentReport rep_lhc = assess(lhc_cfg, lhc_cfg.train, lhc, test_set);

    lhc_cfg.variant = Variant::pr;
    lhc_cfg.train.alpha_j = 0.1;
    lhc_cfg.train.l0 = 0.01;
    const AssessmentReport rep_pr = assess(lhc_cfg, lhc_cfg.train, lhc, test_set);

    const double m_base = median_metric(rep_base, marginal_mse);
    const double m_dw = median_metric(rep_dw, marginal_mse);
    const double m_ni = median_metric(rep_ni, marginal_mse);
    const double t_lhc = median_metric(rep_lhc, total_mse);
    const double t_pr = median_metric(rep_pr, total_mse);

    std::ostringstream os;
    os << "marginal MSE medians: base " << m_base << ", +DW " << m_dw << ", +NI "
       << m_ni << "; LHC total: plain " << t_lhc << ", +PR " << t_pr;
    return {m_dw < m_base && m_ni < m_base && t_pr <= t_lhc, os.str()};
}

// --- 8: determinism and runtime -------------------------------------------------------

std::uint64_t hash_tree(const fs::path& root) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root))
        if (entry.is_regular_file()) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& p : files) {
        const std::string rel = fs::relative(p, root).string();
        h ^= fnv1a(rel);
        h *= 1099511628211ULL;
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        h ^= fnv1a(ss.str());
        h *= 1099511628211ULL;
    }
    return h;
}

Outcome criterion_determinism() {
    ExperimentConfig cfg;
    cfg.master_seed = 99;
    cfg.sampler = "grid";
    cfg.size_per_dim = 5;
    cfg.test_grid_per_dim = 11;
    cfg.assessment_seeds = 10;
    cfg.epochs = 3000;
    cfg.interrupt_epoch = 1000;
    cfg.variant = Variant::ni;
    cfg.train = HyperCell{3, 32, 0.05, 1.0, 0.0, 3.0};

    const fs::path out = fs::temp_directory_path() / "dampmap_acceptance_pipeline";
    fs::remove_all(out);

    const auto t0 = std::chrono::steady_clock::now();
    const fs::path run1 = run_pipeline(cfg, out);
    const double first_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::uint64_t h1 = hash_tree(run1);
    fs::remove_all(run1);
    const fs::path run2 = run_pipeline(cfg, out);
    const std::uint64_t h2 = hash_tree(run2);
    fs::remove_all(out);

    std::ostringstream os;
    os << "first run " << first_seconds << " s, tree hashes "
       << (h1 == h2 ? "match" : "differ");
    return {h1 == h2 && first_seconds < 600.0, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
    std::map<int, Check> checks{
        {1, {"oracle-exactness", criterion_oracle}},
        {2, {"autodiff-correctness", criterion_autodiff}},
        {3, {"milp-encoding-fidelity", criterion_milp}},
        {4, {"verification-soundness", criterion_verification}},
        {5, {"class-imbalance", criterion_imbalance}},
        {6, {"enrichment-targeting", criterion_enrichment}},
        {7, {"directional-training-gains", criterion_gains}},
        {8, {"determinism-and-runtime", criterion_determinism}},
    };

    // Optional single-criterion selection for debugging.
    int only = 0;
    if (argc > 1) only = std::atoi(argv[1]);

    int failures = 0;
    for (const auto& [num, check] : checks) {
        if (only != 0 && num != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = check.run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        std::printf("%s  %d. %s (%s) [%.1fs]\n", outcome.pass ? "PASS" : "FAIL", num,
                    check.name.c_str(), outcome.detail.c_str(), secs);
        std::fflush(stdout);
        if (!outcome.pass) failures += 1;
    }
    return failures;
}
