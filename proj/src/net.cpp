#include "dampmap/net.hpp"

#include "dampmap/rng.hpp"

#include "json.hpp"

#include <cmath>
#include <fstream>

namespace dampmap {

using json = nlohmann::json;

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (int k = 0; k < depth(); ++k)
        n += static_cast<std::size_t>(weights[k].size() + biases[k].size());
    return n;
}

void Mlp::check_shapes() const {
    if (widths.size() < 2 || widths.front() != 4 || widths.back() != 1)
        throw std::invalid_argument("widths must run from 4 inputs to 1 output");
    if (weights.size() + 1 != widths.size() || biases.size() != weights.size())
        throw std::invalid_argument("layer count mismatch");
    for (std::size_t k = 0; k < weights.size(); ++k) {
        if (weights[k].rows() != widths[k + 1] || weights[k].cols() != widths[k] ||
            biases[k].size() != widths[k + 1])
            throw std::invalid_argument("layer shape mismatch");
        if (!weights[k].allFinite() || !biases[k].allFinite())
            throw std::invalid_argument("non-finite parameters");
    }
}

Mlp init_params(const std::vector<int>& widths, std::uint64_t seed) {
    if (widths.size() < 2) throw std::invalid_argument("need at least one layer");
    Mlp net;
    net.widths = widths;
    Rng rng(seed);
    for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
        const int fan_in = widths[k];
        const int fan_out = widths[k + 1];
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j) w(i, j) = rng.uniform(-bound, bound);
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return net;
}

namespace {

/// Forward activations: z[0] is the input, z[k] the post-ReLU activation of
/// hidden layer k, z[depth] the affine output.
struct ForwardPass {
    std::vector<Eigen::MatrixXd> z;      // post-activation per layer
    std::vector<Eigen::MatrixXd> mask;   // ReLU on/off per hidden layer
};

ForwardPass run_forward(const Mlp& net, const Eigen::MatrixXd& x) {
    const int depth = net.depth();
    ForwardPass fp;
    fp.z.resize(depth + 1);
    fp.mask.resize(depth - 1);
    fp.z[0] = x;
    for (int k = 0; k < depth; ++k) {
        Eigen::MatrixXd pre =
            (net.weights[k] * fp.z[k]).colwise() + net.biases[k];
        if (k + 1 < depth) {
            fp.mask[k] = (pre.array() > 0.0).cast<double>();
            fp.z[k + 1] = pre.cwiseMax(0.0);
        } else {
            fp.z[k + 1] = std::move(pre);
        }
    }
    return fp;
}

/// Input gradients for every column: backward sweep through the masks.
/// a[k] holds the sensitivity of the output to hidden activation k.
std::vector<Eigen::MatrixXd> input_grad_sweep(const Mlp& net, const ForwardPass& fp) {
    const int depth = net.depth();
    std::vector<Eigen::MatrixXd> a(depth);  // a[k]: widths[k] x N, k >= 1
    const Eigen::Index n = fp.z[0].cols();
    // Seed with the output row replicated across the batch, masked.
    Eigen::MatrixXd seed = net.weights[depth - 1].transpose() * Eigen::MatrixXd::Ones(1, n);
    for (int k = depth - 1; k >= 1; --k) {
        a[k] = fp.mask[k - 1].cwiseProduct(seed);
        if (k > 1) seed = net.weights[k - 1].transpose() * a[k];
    }
    return a;
}

}  // namespace

double forward(const Mlp& net, const Vec4& x_std) {
    Eigen::MatrixXd x(4, 1);
    x.col(0) = x_std;
    return run_forward(net, x).z.back()(0, 0);
}

Eigen::RowVectorXd forward_batch(const Mlp& net, const Eigen::MatrixXd& x_std) {
    if (!x_std.allFinite()) throw std::invalid_argument("non-finite network input");
    return run_forward(net, x_std).z.back().row(0);
}

Vec4 input_jacobian(const Mlp& net, const Vec4& x_std) {
    Eigen::MatrixXd x(4, 1);
    x.col(0) = x_std;
    return input_jacobian_batch(net, x).col(0);
}

Eigen::MatrixXd input_jacobian_batch(const Mlp& net, const Eigen::MatrixXd& x_std) {
    const ForwardPass fp = run_forward(net, x_std);
    if (net.depth() == 1) {
        // Affine net: constant Jacobian.
        return net.weights[0].transpose() * Eigen::MatrixXd::Ones(1, x_std.cols());
    }
    const auto a = input_grad_sweep(net, fp);
    return net.weights[0].transpose() * a[1];
}

double predict_percent(const Mlp& net, const OperatingPoint& x) {
    const Vec4 xs = net.standardizer.transform_x(x.vec());
    return net.standardizer.inverse_y(forward(net, xs));
}

Batch make_batch(std::span<const LabeledSample> samples, const Standardizer& std_) {
    Batch b;
    const Eigen::Index n = static_cast<Eigen::Index>(samples.size());
    b.x.resize(4, n);
    b.y.resize(n);
    b.g.resize(4, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const auto& s = samples[static_cast<std::size_t>(j)];
        b.x.col(j) = std_.transform_x(s.x.vec());
        b.y[j] = std_.transform_y(s.zeta);
        b.g.col(j) = transform_gradient(s.grad, std_);
    }
    return b;
}

LossTerms loss(const Mlp& net, const Batch& batch) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    const double n = static_cast<double>(batch.size());
    const ForwardPass fp = run_forward(net, batch.x);
    const Eigen::RowVectorXd err = fp.z.back().row(0) - batch.y;

    Eigen::MatrixXd jac;
    if (net.depth() == 1) {
        jac = net.weights[0].transpose() * Eigen::MatrixXd::Ones(1, batch.size());
    } else {
        jac = net.weights[0].transpose() * input_grad_sweep(net, fp)[1];
    }
    const Eigen::MatrixXd jerr = jac - batch.g;

    LossTerms t;
    t.data = err.squaredNorm() / n;
    t.jac = jerr.squaredNorm() / n;
    return t;
}

namespace {

struct Gradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
};

/// Loss terms and parameter gradients of the full objective
/// L_data + alpha_j * L_jac on one batch. The Jacobian-term gradient
/// treats the ReLU masks as locally constant.
LossTerms objective_gradients(const Mlp& net, const Batch& batch, double alpha_j,
                              Gradients& out) {
    const int depth = net.depth();
    const Eigen::Index n = batch.size();
    const double inv_n = 1.0 / static_cast<double>(n);

    const ForwardPass fp = run_forward(net, batch.x);
    const Eigen::RowVectorXd err = fp.z.back().row(0) - batch.y;

    out.w.resize(depth);
    out.b.resize(depth);

    // Data term: plain backprop of the mean squared error.
    Eigen::MatrixXd delta = (2.0 * inv_n) * err;  // 1 x N
    for (int k = depth - 1; k >= 0; --k) {
        out.w[k].noalias() = delta * fp.z[k].transpose();
        out.b[k] = delta.rowwise().sum();
        if (k > 0)
            delta = fp.mask[k - 1].cwiseProduct(net.weights[k].transpose() * delta);
    }

    LossTerms terms;
    terms.data = err.squaredNorm() * inv_n;

    if (depth == 1) {
        // Affine net: Jacobian equals the single weight row everywhere.
        Eigen::MatrixXd jac =
            net.weights[0].transpose() * Eigen::MatrixXd::Ones(1, n);
        const Eigen::MatrixXd jerr = jac - batch.g;
        terms.jac = jerr.squaredNorm() * inv_n;
        if (alpha_j != 0.0)
            out.w[0] += (2.0 * alpha_j * inv_n) * jerr.rowwise().sum().transpose();
        return terms;
    }

    // Jacobian term. Input gradient per column: g = W_0^T a_1 with
    // a_k = mask_k .* (W_k^T a_{k+1}) and a_depth the output seed.
    const auto a = input_grad_sweep(net, fp);
    const Eigen::MatrixXd jac = net.weights[0].transpose() * a[1];
    const Eigen::MatrixXd jerr = jac - batch.g;
    terms.jac = jerr.squaredNorm() * inv_n;

    if (alpha_j != 0.0) {
        const Eigen::MatrixXd r = (2.0 * alpha_j * inv_n) * jerr;  // 4 x N
        // Direct dependence of g on W_0.
        out.w[0].noalias() += a[1] * r.transpose();
        // Sensitivity flowing back up the a-chain.
        Eigen::MatrixXd s = net.weights[0] * r;  // widths[1] x N
        for (int k = 1; k < depth; ++k) {
            const Eigen::MatrixXd t = fp.mask[k - 1].cwiseProduct(s);
            if (k < depth - 1) {
                out.w[k].noalias() += a[k + 1] * t.transpose();
                s = net.weights[k] * t;
            } else {
                out.w[k].noalias() += t.rowwise().sum().transpose();
            }
        }
    }
    return terms;
}

struct AdamState {
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;
    long step = 0;

    explicit AdamState(const Mlp& net) { reset(net); }

    void reset(const Mlp& net) {
        const int depth = net.depth();
        mw.assign(depth, {});
        vw.assign(depth, {});
        mb.assign(depth, {});
        vb.assign(depth, {});
        for (int k = 0; k < depth; ++k) {
            mw[k] = Eigen::MatrixXd::Zero(net.weights[k].rows(), net.weights[k].cols());
            vw[k] = mw[k];
            mb[k] = Eigen::VectorXd::Zero(net.biases[k].size());
            vb[k] = mb[k];
        }
        step = 0;
    }

    void update(Mlp& net, const Gradients& g, double lr) {
        constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
        step += 1;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (int k = 0; k < net.depth(); ++k) {
            mw[k] = beta1 * mw[k] + (1.0 - beta1) * g.w[k];
            vw[k] = beta2 * vw[k] + (1.0 - beta2) * g.w[k].cwiseProduct(g.w[k]);
            net.weights[k] -= lr * (mw[k] / c1).cwiseQuotient(
                                  ((vw[k] / c2).cwiseSqrt().array() + eps).matrix());
            mb[k] = beta1 * mb[k] + (1.0 - beta1) * g.b[k];
            vb[k] = beta2 * vb[k] + (1.0 - beta2) * g.b[k].cwiseProduct(g.b[k]);
            net.biases[k] -= lr * (mb[k] / c1).cwiseQuotient(
                                 ((vb[k] / c2).cwiseSqrt().array() + eps).matrix());
        }
    }
};

}  // namespace

LossTerms objective_with_gradients(const Mlp& net, const Batch& batch, double alpha_j,
                                   std::vector<Eigen::MatrixXd>& grad_w,
                                   std::vector<Eigen::VectorXd>& grad_b) {
    if (batch.size() == 0) throw std::invalid_argument("empty batch");
    Gradients g;
    const LossTerms t = objective_gradients(net, batch, alpha_j, g);
    grad_w = std::move(g.w);
    grad_b = std::move(g.b);
    return t;
}

TrainReport train(Mlp& net, TrainValView data, const TrainConfig& cfg,
                  const InterruptHook& on_interrupt) {
    net.check_shapes();
    if (data.train.empty() || data.val.empty())
        throw std::invalid_argument("training needs non-empty train and val splits");
    if (cfg.l0 <= 0.0 || cfg.gamma <= 0.0 || cfg.gamma > 1.0 || cfg.alpha_j < 0.0)
        throw std::invalid_argument("invalid training configuration");

    net.standardizer = *data.standardizer;
    Batch train_b = make_batch(data.train, net.standardizer);
    Batch val_b = make_batch(data.val, net.standardizer);

    TrainReport report;
    report.train_curve.reserve(cfg.epochs);
    report.val_curve.reserve(cfg.epochs);

    AdamState adam(net);
    Gradients grads;

    std::vector<Eigen::MatrixXd> best_w = net.weights;
    std::vector<Eigen::VectorXd> best_b = net.biases;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = -1;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cfg.l0 * std::pow(cfg.gamma, static_cast<double>(epoch));
        const LossTerms tr = objective_gradients(net, train_b, cfg.alpha_j, grads);
        if (!std::isfinite(tr.objective(cfg.alpha_j)))
            throw TrainingError("training diverged", epoch);
        adam.update(net, grads, lr);

        const LossTerms va = loss(net, val_b);
        report.train_curve.push_back(tr);
        report.val_curve.push_back(va);

        const double val_obj = va.objective(cfg.alpha_j);
        if (val_obj < best_val) {
            best_val = val_obj;
            best_epoch = epoch;
            best_w = net.weights;
            best_b = net.biases;
        }

        if (on_interrupt && epoch + 1 == cfg.interrupt_epoch) {
            if (auto fresh = on_interrupt(net)) {
                // Dataset may have grown and the standardizer moved;
                // rebuild batches and restart the optimizer state.
                data = *fresh;
                net.standardizer = *data.standardizer;
                train_b = make_batch(data.train, net.standardizer);
                val_b = make_batch(data.val, net.standardizer);
                adam.reset(net);
                // The checkpoint objective is not comparable across the
                // re-standardization; restart the selection too.
                best_val = std::numeric_limits<double>::infinity();
                best_epoch = -1;
                best_w = net.weights;
                best_b = net.biases;
            }
        }
    }

    report.final_train = report.train_curve.back();
    report.final_val = report.val_curve.back();
    report.best_epoch = best_epoch;
    report.best_val_objective = best_val;
    net.weights = std::move(best_w);
    net.biases = std::move(best_b);
    return report;
}

void save_model(const std::filesystem::path& path, const Mlp& net,
                const TrainConfig& cfg, const TrainReport& report) {
    json j;
    j["widths"] = net.widths;
    for (int k = 0; k < net.depth(); ++k) {
        json wk = json::array();
        for (Eigen::Index r = 0; r < net.weights[k].rows(); ++r)
            for (Eigen::Index c = 0; c < net.weights[k].cols(); ++c)
                wk.push_back(net.weights[k](r, c));  // row-major
        j["weights"].push_back(wk);
        json bk = json::array();
        for (Eigen::Index r = 0; r < net.biases[k].size(); ++r)
            bk.push_back(net.biases[k][r]);
        j["biases"].push_back(bk);
    }
    j["standardizer"]["mu_x"] = {net.standardizer.mu_x[0], net.standardizer.mu_x[1],
                                 net.standardizer.mu_x[2], net.standardizer.mu_x[3]};
    j["standardizer"]["sigma_x"] = {net.standardizer.sigma_x[0], net.standardizer.sigma_x[1],
                                    net.standardizer.sigma_x[2], net.standardizer.sigma_x[3]};
    j["standardizer"]["mu_y"] = net.standardizer.mu_y;
    j["standardizer"]["sigma_y"] = net.standardizer.sigma_y;
    j["train"]["seed"] = cfg.seed;
    j["train"]["l0"] = cfg.l0;
    j["train"]["gamma"] = cfg.gamma;
    j["train"]["epochs"] = cfg.epochs;
    j["train"]["alpha_j"] = cfg.alpha_j;
    j["train"]["interrupt_epoch"] = cfg.interrupt_epoch;
    j["train"]["best_epoch"] = report.best_epoch;
    j["train"]["best_val_objective"] = report.best_val_objective;

    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write model file: " + path.string());
    f << j.dump(2) << '\n';
}

Mlp load_model(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read model file: " + path.string());
    json j = json::parse(f);

    Mlp net;
    net.widths = j.at("widths").get<std::vector<int>>();
    const int depth = static_cast<int>(net.widths.size()) - 1;
    for (int k = 0; k < depth; ++k) {
        const int rows = net.widths[k + 1];
        const int cols = net.widths[k];
        Eigen::MatrixXd w(rows, cols);
        const auto& wk = j.at("weights").at(k);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
                w(r, c) = wk.at(static_cast<std::size_t>(r) * cols + c).get<double>();
        net.weights.push_back(std::move(w));
        Eigen::VectorXd b(rows);
        for (int r = 0; r < rows; ++r)
            b[r] = j.at("biases").at(k).at(r).get<double>();
        net.biases.push_back(std::move(b));
    }
    const auto& s = j.at("standardizer");
    for (int i = 0; i < 4; ++i) {
        net.standardizer.mu_x[i] = s.at("mu_x").at(i).get<double>();
        net.standardizer.sigma_x[i] = s.at("sigma_x").at(i).get<double>();
    }
    net.standardizer.mu_y = s.at("mu_y").get<double>();
    net.standardizer.sigma_y = s.at("sigma_y").get<double>();
    net.check_shapes();
    return net;
}

}  // namespace dampmap
