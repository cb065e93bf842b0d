#include "dampmap/loops.hpp"

#include "dampmap/dataset.hpp"
#include "dampmap/oracle.hpp"
#include "dampmap/parallel.hpp"
#include "dampmap/rng.hpp"
#include "dampmap/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace dampmap {

namespace {

constexpr std::size_t kChunk = 16384;

/// Pool of uniform unit-box points evaluated through the folded net,
/// visited in chunks to keep memory flat.
template <typename Visitor>
void scan_uniform_pool(const UnitBoxNet& net, std::size_t pool_size,
                       std::uint64_t seed, Visitor&& visit) {
    Rng rng(seed);
    Eigen::MatrixXd u(4, static_cast<Eigen::Index>(std::min(pool_size, kChunk)));
    std::size_t done = 0;
    while (done < pool_size) {
        const std::size_t m = std::min(kChunk, pool_size - done);
        for (std::size_t j = 0; j < m; ++j)
            for (int d = 0; d < 4; ++d)
                u(d, static_cast<Eigen::Index>(j)) = rng.uniform();
        const Eigen::RowVectorXd pred =
            net.eval_batch(u.leftCols(static_cast<Eigen::Index>(m)));
        visit(u, pred, m, done);
        done += m;
    }
}

std::vector<LabeledSample> label_units(const std::vector<Vec4>& units,
                                       const Hypercube& h, Origin origin) {
    std::vector<OperatingPoint> pts;
    pts.reserve(units.size());
    for (const Vec4& u : units)
        pts.push_back(OperatingPoint::from_vec(h.from_unit(u)));
    return label(pts, origin);
}

}  // namespace

std::vector<Vec4> unit_corners() {
    std::vector<Vec4> corners;
    corners.reserve(16);
    for (int bits = 0; bits < 16; ++bits) {
        Vec4 c;
        for (int d = 0; d < 4; ++d) c[d] = (bits >> d) & 1 ? 1.0 : 0.0;
        corners.push_back(c);
    }
    return corners;
}

EnrichResult ni_enrich(const Mlp& net, const Hypercube& h, const EnrichConfig& cfg) {
    const UnitBoxNet ub = fold_to_unit_box(net, h);
    EnrichResult out;

    std::vector<Vec4> candidates;
    scan_uniform_pool(ub, cfg.pool_size, derive_seed(cfg.seed, "ni-pool"),
                      [&](const Eigen::MatrixXd& u, const Eigen::RowVectorXd& pred,
                          std::size_t m, std::size_t) {
                          for (std::size_t j = 0; j < m; ++j) {
                              const auto jj = static_cast<Eigen::Index>(j);
                              if (std::abs(pred[jj] - 3.0) <= cfg.delta)
                                  candidates.push_back(u.col(jj));
                          }
                      });

    if (candidates.empty()) {
        out.empty_warning = true;
        return out;
    }

    Rng pick(derive_seed(cfg.seed, "ni-pick"));
    std::vector<Vec4> chosen;
    if (candidates.size() <= cfg.n_samples) {
        chosen = candidates;
    } else {
        for (std::size_t i : pick.sample_without_replacement(candidates.size(),
                                                             cfg.n_samples))
            chosen.push_back(candidates[i]);
    }
    out.batch = label_units(chosen, h, Origin::ni);
    return out;
}

EnrichResult vi_enrich(const Mlp& net, const Hypercube& h, const EnrichConfig& cfg,
                       const BnbOptions& bnb) {
    const UnitBoxNet ub = fold_to_unit_box(net, h);
    const NeuronBounds bounds = propagate_bounds(ub, Vec4::Zero(), Vec4::Ones());
    EnrichResult out;

    const std::vector<Vec4> corners = unit_corners();
    out.certificates.resize(corners.size());
    parallel_for(corners.size(), [&](std::size_t i) {
        const double pred = ub.eval(corners[i]);
        out.certificates[i] =
            verify_corner(ub, bounds, corners[i], classify(pred), cfg.delta, bnb);
    });

    std::size_t attempted = 0;
    std::size_t hit_limit = 0;
    for (const auto& cert : out.certificates) {
        if (cert.status == CertStatus::skipped_marginal) continue;
        attempted += 1;
        if (cert.status == CertStatus::solver_limit) hit_limit += 1;
    }
    const bool all_failed = attempted > 0 && hit_limit == attempted;
    out.fallback_unfiltered = all_failed;

    auto inside_some_region = [&](const Eigen::MatrixXd& u, Eigen::Index j) {
        for (const auto& cert : out.certificates) {
            if (cert.status == CertStatus::skipped_marginal) continue;
            if (cert.epsilon_star <= 0.0) continue;
            const double dist = (u.col(j) - cert.anchor).cwiseAbs().maxCoeff();
            if (dist <= cert.epsilon_star) return true;
        }
        return false;
    };

    std::vector<Vec4> candidates;
    std::size_t excluded = 0;
    scan_uniform_pool(ub, cfg.pool_size, derive_seed(cfg.seed, "vi-pool"),
                      [&](const Eigen::MatrixXd& u, const Eigen::RowVectorXd&,
                          std::size_t m, std::size_t) {
                          for (std::size_t j = 0; j < m; ++j) {
                              const auto jj = static_cast<Eigen::Index>(j);
                              if (!all_failed && inside_some_region(u, jj))
                                  excluded += 1;
                              else
                                  candidates.push_back(u.col(jj));
                          }
                      });
    out.excluded_volume_fraction =
        static_cast<double>(excluded) / static_cast<double>(cfg.pool_size);

    if (candidates.empty()) {
        out.empty_warning = true;
        return out;
    }
    Rng pick(derive_seed(cfg.seed, "vi-pick"));
    std::vector<Vec4> chosen;
    if (candidates.size() <= cfg.n_samples) {
        chosen = candidates;
    } else {
        for (std::size_t i : pick.sample_without_replacement(candidates.size(),
                                                             cfg.n_samples))
            chosen.push_back(candidates[i]);
    }
    out.batch = label_units(chosen, h, Origin::vi);
    return out;
}

double epsilon_statistical(const UnitBoxNet& net, const Vec4& anchor,
                           double threshold, bool crossing_below, std::size_t n,
                           std::uint64_t seed) {
    double best = std::numeric_limits<double>::infinity();
    scan_uniform_pool(net, n, seed,
                      [&](const Eigen::MatrixXd& u, const Eigen::RowVectorXd& pred,
                          std::size_t m, std::size_t) {
                          for (std::size_t j = 0; j < m; ++j) {
                              const auto jj = static_cast<Eigen::Index>(j);
                              const bool crossed = crossing_below
                                                       ? pred[jj] <= threshold
                                                       : pred[jj] >= threshold;
                              if (!crossed) continue;
                              const double dist =
                                  (u.col(jj) - anchor).cwiseAbs().maxCoeff();
                              best = std::min(best, dist);
                          }
                      });
    return best;
}

std::vector<std::size_t> default_epsilon_schedule(std::size_t max_n) {
    std::vector<std::size_t> out;
    std::size_t v = 10;
    while (v < max_n) {
        out.push_back(v);
        const auto next = static_cast<std::size_t>(std::llround(v * 3.1622776601683795));
        v = std::max(next, v + 1);
    }
    out.push_back(max_n);
    return out;
}

std::vector<EpsilonComparison> compare_stat_vs_verified(
    const UnitBoxNet& net, const std::vector<Certificate>& certificates,
    const std::vector<std::size_t>& schedule, std::size_t n_seeds,
    std::uint64_t master_seed) {
    std::vector<const Certificate*> usable;
    for (const auto& c : certificates)
        if (c.status == CertStatus::certified && c.epsilon_star > 0.0)
            usable.push_back(&c);

    const std::size_t max_n = schedule.empty() ? 0 : schedule.back();
    const std::size_t n_corners = usable.size();

    // minima[seed][corner][schedule point]
    std::vector<std::vector<std::vector<double>>> minima(
        n_seeds, std::vector<std::vector<double>>(
                     n_corners, std::vector<double>(schedule.size(), 0.0)));

    parallel_for(n_seeds, [&](std::size_t s) {
        std::vector<double> running(n_corners,
                                    std::numeric_limits<double>::infinity());
        std::size_t next_checkpoint = 0;
        scan_uniform_pool(
            net, max_n, derive_seed(master_seed, "eps-stat", s),
            [&](const Eigen::MatrixXd& u, const Eigen::RowVectorXd& pred,
                std::size_t m, std::size_t done) {
                for (std::size_t j = 0; j < m; ++j) {
                    const auto jj = static_cast<Eigen::Index>(j);
                    for (std::size_t k = 0; k < n_corners; ++k) {
                        const Certificate& cert = *usable[k];
                        const bool crossed = cert.crossing_below
                                                 ? pred[jj] <= cert.threshold
                                                 : pred[jj] >= cert.threshold;
                        if (!crossed) continue;
                        const double dist =
                            (u.col(jj) - cert.anchor).cwiseAbs().maxCoeff();
                        running[k] = std::min(running[k], dist);
                    }
                    const std::size_t seen = done + j + 1;
                    while (next_checkpoint < schedule.size() &&
                           schedule[next_checkpoint] == seen) {
                        for (std::size_t k = 0; k < n_corners; ++k)
                            minima[s][k][next_checkpoint] = running[k];
                        next_checkpoint += 1;
                    }
                }
            });
    });

    std::vector<EpsilonComparison> table(n_corners);
    const auto& levels = epsilon_percentile_levels();
    for (std::size_t k = 0; k < n_corners; ++k) {
        EpsilonComparison& row = table[k];
        row.anchor = usable[k]->anchor;
        row.epsilon_verified = usable[k]->epsilon_star;
        row.schedule = schedule;
        int corner_index = 0;
        for (int d = 0; d < 4; ++d)
            if (usable[k]->anchor[d] > 0.5) corner_index |= 1 << d;
        row.corner_index = corner_index;
        row.ratio_percentiles.assign(levels.size(),
                                     std::vector<double>(schedule.size(), 0.0));
        for (std::size_t t = 0; t < schedule.size(); ++t) {
            std::vector<double> ratios(n_seeds);
            for (std::size_t s = 0; s < n_seeds; ++s)
                ratios[s] = minima[s][k][t] / row.epsilon_verified;
            std::sort(ratios.begin(), ratios.end());
            for (std::size_t p = 0; p < levels.size(); ++p) {
                const double pos = levels[p] / 100.0 * static_cast<double>(n_seeds - 1);
                const auto i0 = static_cast<std::size_t>(std::floor(pos));
                const auto i1 = std::min(i0 + 1, n_seeds - 1);
                const double frac = pos - static_cast<double>(i0);
                row.ratio_percentiles[p][t] =
                    ratios[i0] * (1.0 - frac) + ratios[i1] * frac;
            }
        }
    }
    return table;
}

void save_epsilon_comparison_csv(const std::filesystem::path& path,
                                 const std::vector<EpsilonComparison>& table) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    const auto& levels = epsilon_percentile_levels();
    f << "corner,n,eps_verified";
    for (int p : levels) f << ",ratio_p" << p;
    f << '\n';
    for (const auto& row : table) {
        for (std::size_t t = 0; t < row.schedule.size(); ++t) {
            f << row.corner_index << ',' << row.schedule[t] << ','
              << format_double(row.epsilon_verified);
            for (std::size_t p = 0; p < levels.size(); ++p)
                f << ',' << format_double(row.ratio_percentiles[p][t]);
            f << '\n';
        }
    }
}

}  // namespace dampmap
