#include "dampmap/embedding.hpp"

#include "dampmap/dataset.hpp"

#include "json.hpp"

#include <chrono>
#include <fstream>

namespace dampmap {

using json = nlohmann::json;

std::pair<std::array<int, 2>, std::array<int, 2>> query_dims(const EmbeddingQuery& q) {
    if (q.fixed == EmbeddingQuery::FixedPair::power)
        return {{0, 1}, {2, 3}};  // power fixed, droops free
    return {{2, 3}, {0, 1}};
}

namespace {

Certificate solve_region(const Mlp& net, const Hypercube& h, const EmbeddingQuery& q,
                         const BnbOptions& opts) {
    const auto [fixed_dims, free_dims] = query_dims(q);

    Vec4 anchor_phys;
    anchor_phys[fixed_dims[0]] = q.fixed_values[0];
    anchor_phys[fixed_dims[1]] = q.fixed_values[1];
    anchor_phys[free_dims[0]] = q.anchor[0];
    anchor_phys[free_dims[1]] = q.anchor[1];
    if (!h.contains(anchor_phys))
        throw std::domain_error("embedding query outside the admissible box");
    const Vec4 anchor = h.to_unit(anchor_phys);

    Certificate cert;
    cert.anchor = anchor;
    cert.delta = q.delta;
    cert.threshold = 3.0 + q.delta;
    cert.crossing_below = true;

    const UnitBoxNet ub = fold_to_unit_box(net, h);
    const double anchor_pred = ub.eval(anchor);
    if (anchor_pred < cert.threshold) {
        // Nothing acceptable to certify around this anchor.
        cert.status = CertStatus::infeasible_anchor;
        cert.witness = anchor;
        return cert;
    }

    Vec4 box_lo = Vec4::Zero();
    Vec4 box_hi = Vec4::Ones();
    for (int d : fixed_dims) {
        box_lo[d] = anchor[d];
        box_hi[d] = anchor[d];
    }
    const NeuronBounds bounds = propagate_bounds(ub, box_lo, box_hi);

    VerificationSpec spec;
    spec.anchor = anchor;
    spec.threshold = cert.threshold;
    spec.crossing_below = true;
    spec.box_lo = box_lo;
    spec.box_hi = box_hi;
    spec.frozen_dims = {fixed_dims[0], fixed_dims[1]};

    const auto t0 = std::chrono::steady_clock::now();
    const MilpModel model = build_verification_model(ub, bounds, spec);
    const BnbResult r = branch_and_bound(model, opts);
    cert.wall_ms = std::chrono::duration<double, std::milli>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
    cert.nodes = r.nodes;

    switch (r.status) {
        case BnbStatus::optimal:
            cert.status = CertStatus::certified;
            cert.epsilon_star = std::clamp(r.lower_bound, 0.0, r.objective);
            cert.witness = r.point.head<4>();
            break;
        case BnbStatus::infeasible:
            cert.status = CertStatus::infeasible_in_box;
            cert.epsilon_star = 1.0;
            cert.witness = anchor;
            break;
        case BnbStatus::node_limit:
            cert.status = CertStatus::solver_limit;
            cert.epsilon_star = std::max(0.0, r.lower_bound);
            cert.witness = anchor;
            break;
    }
    return cert;
}

}  // namespace

Certificate verify_droop_region(const Mlp& net, const Hypercube& h,
                                const EmbeddingQuery& q, const BnbOptions& opts) {
    if (q.fixed != EmbeddingQuery::FixedPair::power)
        throw std::invalid_argument("droop-region query must fix the power pair");
    return solve_region(net, h, q, opts);
}

Certificate verify_power_region(const Mlp& net, const Hypercube& h,
                                const EmbeddingQuery& q, const BnbOptions& opts) {
    if (q.fixed != EmbeddingQuery::FixedPair::droop)
        throw std::invalid_argument("power-region query must fix the droop pair");
    return solve_region(net, h, q, opts);
}

void export_contour_grid(const Mlp& net, const Hypercube& h, const EmbeddingQuery& q,
                         int resolution, const std::filesystem::path& csv_path,
                         const Certificate* witness) {
    if (resolution < 2) throw std::invalid_argument("grid resolution must be >= 2");
    const auto [fixed_dims, free_dims] = query_dims(q);
    const double threshold = 3.0 + q.delta;

    std::ofstream f(csv_path);
    if (!f) throw std::runtime_error("cannot open for write: " + csv_path.string());
    f << "u,v,zeta_hat,acceptable\n";

    Vec4 x;
    x[fixed_dims[0]] = q.fixed_values[0];
    x[fixed_dims[1]] = q.fixed_values[1];
    for (int i = 0; i < resolution; ++i) {
        const double ti = static_cast<double>(i) / (resolution - 1);
        const int du = free_dims[0];
        x[du] = h.lower[du] + ti * (h.upper[du] - h.lower[du]);
        for (int j = 0; j < resolution; ++j) {
            const double tj = static_cast<double>(j) / (resolution - 1);
            const int dv = free_dims[1];
            x[dv] = h.lower[dv] + tj * (h.upper[dv] - h.lower[dv]);
            const double pred = predict_percent(net, OperatingPoint::from_vec(x));
            f << format_double(x[du]) << ',' << format_double(x[dv]) << ','
              << format_double(pred) << ',' << (pred >= threshold ? 1 : 0) << '\n';
        }
    }

    // Sidecar with the query and, when available, the certificate witness
    // (the nearest predicted classification change).
    json meta;
    meta["fixed_dims"] = {fixed_dims[0], fixed_dims[1]};
    meta["free_dims"] = {free_dims[0], free_dims[1]};
    meta["fixed_values"] = {q.fixed_values[0], q.fixed_values[1]};
    meta["anchor"] = {q.anchor[0], q.anchor[1]};
    meta["delta"] = q.delta;
    meta["resolution"] = resolution;
    if (witness != nullptr) {
        const Vec4 w_phys = h.from_unit(witness->witness);
        meta["witness"] = {w_phys[free_dims[0]], w_phys[free_dims[1]]};
        meta["epsilon_star"] = witness->epsilon_star;
        meta["status"] = cert_status_name(witness->status);
    }
    std::ofstream mf(csv_path.string() + ".json");
    mf << meta.dump(2) << '\n';
}

}  // namespace dampmap
