#pragma once

#include "dampmap/dataset.hpp"
#include "dampmap/types.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

namespace dampmap {

/// Feed-forward ReLU network mapping standardized inputs to a standardized
/// scalar margin prediction. Layer k maps widths[k] -> widths[k+1]; the
/// output layer is affine.
struct Mlp {
    std::vector<int> widths;                  // {4, n, ..., n, 1}
    std::vector<Eigen::MatrixXd> weights;     // weights[k]: widths[k+1] x widths[k]
    std::vector<Eigen::VectorXd> biases;
    Standardizer standardizer;

    [[nodiscard]] int depth() const { return static_cast<int>(weights.size()); }
    [[nodiscard]] int hidden_layers() const { return depth() - 1; }
    [[nodiscard]] std::size_t parameter_count() const;
    void check_shapes() const;
};

/// Glorot-uniform weights, zero biases, from a seeded stream.
Mlp init_params(const std::vector<int>& widths, std::uint64_t seed);

double forward(const Mlp& net, const Vec4& x_std);
/// Batched forward: inputs as columns.
Eigen::RowVectorXd forward_batch(const Mlp& net, const Eigen::MatrixXd& x_std);

/// Exact reverse-mode input gradient, ReLU subgradient 0 at 0.
Vec4 input_jacobian(const Mlp& net, const Vec4& x_std);
Eigen::MatrixXd input_jacobian_batch(const Mlp& net, const Eigen::MatrixXd& x_std);

/// Prediction in physical percent for a physical-coordinates point.
double predict_percent(const Mlp& net, const OperatingPoint& x);

struct LossTerms {
    double data = 0.0;  // mean squared prediction error
    double jac = 0.0;   // mean squared input-gradient error
    [[nodiscard]] double objective(double alpha_j) const { return data + alpha_j * jac; }
};

/// Standardized training batch held as column-major matrices.
struct Batch {
    Eigen::MatrixXd x;  // 4 x N
    Eigen::RowVectorXd y;
    Eigen::MatrixXd g;  // 4 x N, standardized gradients

    [[nodiscard]] Eigen::Index size() const { return x.cols(); }
};

/// Standardize a sample list into matrix form (gradients chain-ruled).
Batch make_batch(std::span<const LabeledSample> samples, const Standardizer& std);

/// Loss terms of the network on a batch. Throws on an empty batch.
LossTerms loss(const Mlp& net, const Batch& batch);

/// Loss terms plus reverse-mode parameter gradients of the objective
/// L_data + alpha_j * L_jac. The Jacobian-term gradient holds the ReLU
/// activation pattern fixed.
LossTerms objective_with_gradients(const Mlp& net, const Batch& batch, double alpha_j,
                                   std::vector<Eigen::MatrixXd>& grad_w,
                                   std::vector<Eigen::VectorXd>& grad_b);

struct TrainConfig {
    double l0 = 0.02;       // initial learning rate
    double gamma = 1.0;     // per-epoch decay
    int epochs = 3000;
    double alpha_j = 0.0;   // Jacobian regularization weight
    std::uint64_t seed = 0; // parameter initialization
    int interrupt_epoch = 0;  // 0 = never
};

struct TrainReport {
    std::vector<LossTerms> train_curve;
    std::vector<LossTerms> val_curve;
    int best_epoch = -1;           // epoch of the checkpointed parameters
    double best_val_objective = 0.0;
    LossTerms final_train;
    LossTerms final_val;
};

/// Called when training pauses at interrupt_epoch; may enrich the dataset.
/// Returning a view of the (possibly reallocated, re-standardized) splits
/// makes training rebuild its batches and restart the optimizer state.
using InterruptHook = std::function<std::optional<TrainValView>(Mlp& net)>;

/// Full-batch Adam for cfg.epochs epochs with learning rate l0*gamma^n.
/// Keeps the parameters that scored the best validation objective.
/// Throws TrainingError if the loss turns non-finite.
TrainReport train(Mlp& net, TrainValView data, const TrainConfig& cfg,
                  const InterruptHook& on_interrupt = nullptr);

void save_model(const std::filesystem::path& path, const Mlp& net,
                const TrainConfig& cfg, const TrainReport& report);
Mlp load_model(const std::filesystem::path& path);

}  // namespace dampmap
