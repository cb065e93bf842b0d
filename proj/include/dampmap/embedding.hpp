#pragma once

#include "dampmap/milp.hpp"
#include "dampmap/net.hpp"

#include <filesystem>

namespace dampmap {

/// Region certification query: one coordinate pair held fixed, the other
/// free around an anchor.
struct EmbeddingQuery {
    enum class FixedPair : std::uint8_t { power, droop };

    FixedPair fixed = FixedPair::power;
    Eigen::Vector2d fixed_values{0.0, 0.0};  // (p*, q*) or (k_pf*, k_v*)
    Eigen::Vector2d anchor{0.0, 0.0};        // center of the free pair
    double delta = 0.25;                     // percent margin width
};

/// Indices of the fixed and free dimensions of a query.
std::pair<std::array<int, 2>, std::array<int, 2>> query_dims(const EmbeddingQuery& q);

/// Largest certified droop ball around the anchor at fixed power injection.
Certificate verify_droop_region(const Mlp& net, const Hypercube& h,
                                const EmbeddingQuery& q, const BnbOptions& opts = {});

/// Largest certified power-injection ball at fixed droop settings.
Certificate verify_power_region(const Mlp& net, const Hypercube& h,
                                const EmbeddingQuery& q, const BnbOptions& opts = {});

/// Dense prediction grid over the free plane: CSV columns
/// u,v,zeta_hat,acceptable. Returns the output path.
void export_contour_grid(const Mlp& net, const Hypercube& h, const EmbeddingQuery& q,
                         int resolution, const std::filesystem::path& csv_path,
                         const Certificate* witness = nullptr);

}  // namespace dampmap
