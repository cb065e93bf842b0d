#include "dampmap/harness.hpp"
#include "dampmap/oracle.hpp"
#include "dampmap/parallel.hpp"
#include "dampmap/rng.hpp"
#include "dampmap/sampling.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>

namespace fs = std::filesystem;
using namespace dampmap;

namespace {

ExperimentConfig make_config(const std::string& config_path, std::uint64_t seed_override,
                             bool has_seed, bool full_scale) {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    if (has_seed) cfg.master_seed = seed_override;
    if (full_scale) cfg.apply_full_scale();
    return cfg;
}

SplitDataset dataset_with_variant(const ExperimentConfig& cfg) {
    SplitDataset ds = build_base_dataset(cfg);
    if (cfg.variant == Variant::dw) {
        std::vector<LabeledSample> seeds = ds.train;
        seeds.insert(seeds.end(), ds.val.begin(), ds.val.end());
        enrich(ds, enrich_with_walks(seeds, cfg.walk, default_hypercube()));
    }
    return ds;
}

void cmd_sample(const ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    const SplitDataset ds = build_base_dataset(cfg);
    save_dataset(out, ds, cfg.sampler);
    std::vector<LabeledSample> all = ds.train;
    all.insert(all.end(), ds.val.begin(), ds.val.end());
    save_histogram_csv(out / "histogram.csv", class_histogram(all));
    std::cout << "sampled " << all.size() << " points (" << cfg.sampler << ")\n";
}

void cmd_walk(const ExperimentConfig& cfg, const fs::path& out, int n_paths) {
    fs::create_directories(out);
    SplitDataset ds = build_base_dataset(cfg);
    std::vector<LabeledSample> seeds = ds.train;
    seeds.insert(seeds.end(), ds.val.begin(), ds.val.end());

    const std::vector<LabeledSample> dw =
        enrich_with_walks(seeds, cfg.walk, default_hypercube());
    save_samples_csv(out / "dw.csv", dw);

    int exported = 0;
    for (const auto& seed : seeds) {
        if (exported >= n_paths) break;
        const DirectedWalkOutcome o = directed_walk(seed, cfg.walk, default_hypercube());
        if (o.power.status != WalkStatus::converged) continue;
        save_walk_path_csv(out / ("path_" + std::to_string(exported) + ".csv"), o.power);
        exported += 1;
    }
    std::cout << "walks emitted " << dw.size() << " boundary points\n";
}

void cmd_train(const ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    const SplitDataset ds = dataset_with_variant(cfg);
    const RunOutput run =
        run_training(ds, cfg, cfg.train, derive_seed(cfg.master_seed, "train-init", 0),
                     derive_seed(cfg.master_seed, "train-enrich", 0));
    if (run.diverged)
        throw TrainingError("training diverged", run.diverged_epoch);

    TrainConfig tc;
    tc.l0 = cfg.train.l0;
    tc.gamma = cfg.train.gamma;
    tc.epochs = cfg.epochs;
    tc.alpha_j = cfg.variant == Variant::pr ? cfg.train.alpha_j : 0.0;
    tc.seed = derive_seed(cfg.master_seed, "train-init", 0);
    save_model(out / "model.json", run.net, tc, run.report);
    if (!run.enrichment.batch.empty())
        save_samples_csv(out / (std::string(variant_name(cfg.variant)) + ".csv"),
                         run.enrichment.batch);
    std::cout << "trained; best val objective "
              << run.report.best_val_objective << " at epoch "
              << run.report.best_epoch << "\n";
}

void cmd_enrich(const ExperimentConfig& cfg, const fs::path& model_path,
                const fs::path& out, bool vi) {
    fs::create_directories(out);
    const Mlp net = load_model(model_path);
    EnrichConfig ec;
    ec.pool_size = cfg.pool_size;
    ec.n_samples = cfg.n_samples;
    ec.delta = cfg.train.delta;
    ec.interrupt_epoch = cfg.interrupt_epoch;
    ec.seed = derive_seed(cfg.master_seed, "cli-enrich");
    BnbOptions bnb;
    bnb.node_limit = cfg.bnb_node_limit;

    const EnrichResult r = vi ? vi_enrich(net, default_hypercube(), ec, bnb)
                              : ni_enrich(net, default_hypercube(), ec);
    save_samples_csv(out / (vi ? "vi.csv" : "ni.csv"), r.batch);
    if (vi) {
        for (std::size_t i = 0; i < r.certificates.size(); ++i)
            save_certificate_json(out / ("corner_" + std::to_string(i) + ".json"),
                                  r.certificates[i]);
        std::cout << "excluded volume fraction " << r.excluded_volume_fraction << "\n";
    }
    if (r.empty_warning) std::cout << "warning: candidate set empty\n";
    std::cout << "enriched " << r.batch.size() << " points\n";
}

void cmd_tune(const ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    const SplitDataset ds = dataset_with_variant(cfg);
    const TuneResult result = tune(cfg, ds);
    save_tune_csv(out / "tune.csv", result);
    std::cout << "selected: layers=" << result.selected.layers
              << " width=" << result.selected.width << " l0=" << result.selected.l0
              << " gamma=" << result.selected.gamma
              << " alpha_j=" << result.selected.alpha_j
              << " delta=" << result.selected.delta << "\n";
}

void cmd_assess(const ExperimentConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    const SplitDataset ds = dataset_with_variant(cfg);
    const std::vector<LabeledSample> test_set = build_test_set(cfg.test_grid_per_dim);
    const AssessmentReport rep = assess(cfg, cfg.train, ds, test_set);
    save_assessment_csv(out / "runs.csv", out / "summary.csv", rep);
    std::cout << "assessed " << rep.runs.size() << " runs, " << rep.failures
              << " failures\n";
}

void cmd_verify(const ExperimentConfig& cfg, const fs::path& model_path,
                const fs::path& out) {
    fs::create_directories(out);
    const Mlp net = load_model(model_path);
    const UnitBoxNet ub = fold_to_unit_box(net, default_hypercube());
    const NeuronBounds bounds = propagate_bounds(ub, Vec4::Zero(), Vec4::Ones());
    const std::vector<Vec4> corners = unit_corners();
    std::vector<Certificate> certs(corners.size());
    BnbOptions bnb;
    bnb.node_limit = cfg.bnb_node_limit;
    parallel_for(corners.size(), [&](std::size_t i) {
        certs[i] = verify_corner(ub, bounds, corners[i], classify(ub.eval(corners[i])),
                                 cfg.verify_delta, bnb);
    });
    for (std::size_t i = 0; i < certs.size(); ++i) {
        save_certificate_json(out / ("corner_" + std::to_string(i) + ".json"), certs[i]);
        std::cout << "corner " << i << ": " << cert_status_name(certs[i].status)
                  << " eps=" << certs[i].epsilon_star << " nodes=" << certs[i].nodes
                  << "\n";
    }
}

void cmd_embed(const ExperimentConfig& cfg, const fs::path& model_path,
               const fs::path& out) {
    fs::create_directories(out);
    const Mlp net = load_model(model_path);
    auto queries = cfg.embed_queries;
    if (queries.empty()) queries = default_embed_queries();
    BnbOptions bnb;
    bnb.node_limit = cfg.bnb_node_limit;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        const auto& q = queries[i];
        const Certificate cert =
            q.fixed == EmbeddingQuery::FixedPair::power
                ? verify_droop_region(net, default_hypercube(), q, bnb)
                : verify_power_region(net, default_hypercube(), q, bnb);
        const std::string stem = "query" + std::to_string(i);
        save_certificate_json(out / (stem + ".cert.json"), cert);
        export_contour_grid(net, default_hypercube(), q, cfg.embed_resolution,
                            out / (stem + ".csv"), &cert);
        std::cout << stem << ": " << cert_status_name(cert.status)
                  << " eps=" << cert.epsilon_star << "\n";
    }
}

void cmd_compare_eps(const ExperimentConfig& cfg, const fs::path& model_path,
                     const fs::path& out, std::size_t max_n, std::size_t n_seeds) {
    fs::create_directories(out);
    const Mlp net = load_model(model_path);
    const UnitBoxNet ub = fold_to_unit_box(net, default_hypercube());
    const NeuronBounds bounds = propagate_bounds(ub, Vec4::Zero(), Vec4::Ones());
    const std::vector<Vec4> corners = unit_corners();
    std::vector<Certificate> certs(corners.size());
    BnbOptions bnb;
    bnb.node_limit = cfg.bnb_node_limit;
    parallel_for(corners.size(), [&](std::size_t i) {
        certs[i] = verify_corner(ub, bounds, corners[i], classify(ub.eval(corners[i])),
                                 cfg.verify_delta, bnb);
    });
    const auto table = compare_stat_vs_verified(
        ub, certs, default_epsilon_schedule(max_n), n_seeds,
        derive_seed(cfg.master_seed, "eps-study"));
    save_epsilon_comparison_csv(out / "eps_comparison.csv", table);
    std::cout << "compared " << table.size() << " corners over "
              << n_seeds << " seeds\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Damping-margin surrogate pipeline: sampling, walks, training, "
                 "verification, and embedding exports"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool full_scale = false;
    app.add_option("--config", config_path, "configuration file");
    app.add_option("--out", out_dir, "output directory");
    auto* seed_opt = app.add_option("--seed", seed, "master seed override");
    app.add_flag("--full", full_scale, "paper-scale settings");

    std::string model_path = "model.json";
    int n_paths = 3;
    std::size_t max_n = 1'000'000;
    std::size_t n_seeds = 100;

    auto* c_sample = app.add_subcommand("sample", "draw and label a base dataset");
    auto* c_walk = app.add_subcommand("walk", "directed-walk enrichment of the base dataset");
    c_walk->add_option("--paths", n_paths, "example walk paths to export");
    auto* c_train = app.add_subcommand("train", "train one model under the configured variant");
    auto* c_ni = app.add_subcommand("enrich-ni", "prediction-guided resampling for a model");
    c_ni->add_option("--model", model_path, "model JSON")->required();
    auto* c_vi = app.add_subcommand("enrich-vi", "certificate-guided resampling for a model");
    c_vi->add_option("--model", model_path, "model JSON")->required();
    auto* c_tune = app.add_subcommand("tune", "hyper-parameter grid search");
    auto* c_assess = app.add_subcommand("assess", "multi-seed test assessment");
    auto* c_verify = app.add_subcommand("verify", "corner certificates for a model");
    c_verify->add_option("--model", model_path, "model JSON")->required();
    auto* c_embed = app.add_subcommand("embed", "region certificates and contour grids");
    c_embed->add_option("--model", model_path, "model JSON")->required();
    auto* c_eps = app.add_subcommand("compare-eps",
                                     "statistical vs verified distance study");
    c_eps->add_option("--model", model_path, "model JSON")->required();
    c_eps->add_option("--max-n", max_n, "largest sample count");
    c_eps->add_option("--seeds", n_seeds, "sampling replications");
    auto* c_pipe = app.add_subcommand("pipeline", "full run: data to embedding exports");

    CLI11_PARSE(app, argc, argv);

    try {
        const ExperimentConfig cfg =
            make_config(config_path, seed, seed_opt->count() > 0, full_scale);
        const fs::path out(out_dir);

        if (c_sample->parsed()) cmd_sample(cfg, out);
        else if (c_walk->parsed()) cmd_walk(cfg, out, n_paths);
        else if (c_train->parsed()) cmd_train(cfg, out);
        else if (c_ni->parsed()) cmd_enrich(cfg, model_path, out, false);
        else if (c_vi->parsed()) cmd_enrich(cfg, model_path, out, true);
        else if (c_tune->parsed()) cmd_tune(cfg, out);
        else if (c_assess->parsed()) cmd_assess(cfg, out);
        else if (c_verify->parsed()) cmd_verify(cfg, model_path, out);
        else if (c_embed->parsed()) cmd_embed(cfg, model_path, out);
        else if (c_eps->parsed()) cmd_compare_eps(cfg, model_path, out, max_n, n_seeds);
        else if (c_pipe->parsed()) {
            const fs::path run_dir = run_pipeline(cfg, out);
            std::cout << "pipeline artifacts in " << run_dir.string() << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
