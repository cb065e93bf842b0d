#include "dampmap/harness.hpp"

#include "dampmap/oracle.hpp"
#include "dampmap/parallel.hpp"
#include "dampmap/rng.hpp"
#include "dampmap/sampling.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace dampmap {

using json = nlohmann::json;

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::base: return "base";
        case Variant::dw: return "dw";
        case Variant::ni: return "ni";
        case Variant::vi: return "vi";
        case Variant::pr: return "pr";
    }
    return "?";
}

Variant variant_from_name(const std::string& name) {
    for (Variant v : {Variant::base, Variant::dw, Variant::ni, Variant::vi, Variant::pr})
        if (name == variant_name(v)) return v;
    throw std::invalid_argument("unknown variant: " + name);
}

std::vector<int> HyperCell::widths() const {
    std::vector<int> w{4};
    for (int i = 0; i < layers; ++i) w.push_back(width);
    w.push_back(1);
    return w;
}

void ExperimentConfig::apply_full_scale() {
    test_grid_per_dim = 21;
    selection_seeds = 10;
    assessment_seeds = 100;
    grid_layers = {2, 3, 4};
    grid_widths = {16, 32, 64};
    grid_l0 = {0.005, 0.01, 0.02, 0.05};
    grid_gamma = {0.99, 0.995, 0.999, 1.0};
    grid_alpha_j = {0.0, 0.001, 0.01, 0.1, 1.0};
    grid_delta = {0.25, 3.0};
}

// --- config file ------------------------------------------------------------

namespace {

std::vector<double> parse_double_list(const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    for (double v : parse_double_list(s)) out.push_back(static_cast<int>(v));
    return out;
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace

ExperimentConfig parse_config(std::istream& in) {
    ExperimentConfig cfg;
    std::map<std::string, std::map<std::string, std::string>> sections;
    std::string line, section = "experiment";
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("bad config line: " + line);
        sections[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }

    std::vector<EmbeddingQuery> queries;
    for (const auto& [section_name, kv] : sections) {
        for (const auto& [key, value] : kv) {
            const std::string where = section_name + "." + key;
            if (section_name == "experiment") {
                if (key == "master_seed") cfg.master_seed = std::stoull(value);
                else if (key == "variant") cfg.variant = variant_from_name(value);
                else if (key == "sampler") cfg.sampler = value;
                else if (key == "size_per_dim") cfg.size_per_dim = std::stoi(value);
                else if (key == "test_grid_per_dim") cfg.test_grid_per_dim = std::stoi(value);
                else if (key == "selection_seeds") cfg.selection_seeds = std::stoi(value);
                else if (key == "assessment_seeds") cfg.assessment_seeds = std::stoi(value);
                else if (key == "full_scale") { if (value == "true") cfg.apply_full_scale(); }
                else throw std::runtime_error("unknown config key: " + where);
            } else if (section_name == "train") {
                if (key == "layers") cfg.train.layers = std::stoi(value);
                else if (key == "width") cfg.train.width = std::stoi(value);
                else if (key == "l0") cfg.train.l0 = std::stod(value);
                else if (key == "gamma") cfg.train.gamma = std::stod(value);
                else if (key == "alpha_j") cfg.train.alpha_j = std::stod(value);
                else if (key == "delta") cfg.train.delta = std::stod(value);
                else if (key == "epochs") cfg.epochs = std::stoi(value);
                else if (key == "interrupt_epoch") cfg.interrupt_epoch = std::stoi(value);
                else throw std::runtime_error("unknown config key: " + where);
            } else if (section_name == "grid") {
                if (key == "layers") cfg.grid_layers = parse_int_list(value);
                else if (key == "widths") cfg.grid_widths = parse_int_list(value);
                else if (key == "l0") cfg.grid_l0 = parse_double_list(value);
                else if (key == "gamma") cfg.grid_gamma = parse_double_list(value);
                else if (key == "alpha_j") cfg.grid_alpha_j = parse_double_list(value);
                else if (key == "delta") cfg.grid_delta = parse_double_list(value);
                else throw std::runtime_error("unknown config key: " + where);
            } else if (section_name == "enrich") {
                if (key == "pool_size") cfg.pool_size = std::stoull(value);
                else if (key == "n_samples") cfg.n_samples = std::stoull(value);
                else throw std::runtime_error("unknown config key: " + where);
            } else if (section_name == "walk") {
                if (key == "alpha0") cfg.walk.alpha0 = std::stod(value);
                else if (key == "max_iters") cfg.walk.max_iters = std::stoi(value);
                else if (key == "min_grad_norm") cfg.walk.min_grad_norm = std::stod(value);
                else throw std::runtime_error("unknown config key: " + where);
            } else if (section_name == "verify") {
                if (key == "delta") cfg.verify_delta = std::stod(value);
                else if (key == "node_limit") cfg.bnb_node_limit = std::stol(value);
                else throw std::runtime_error("unknown config key: " + where);
            } else if (section_name == "embed") {
                if (key == "resolution") cfg.embed_resolution = std::stoi(value);
                else if (key.rfind("query", 0) == 0) {
                    // queryN = power|droop fixed1 fixed2 anchor1 anchor2 [delta]
                    std::stringstream ss(value);
                    std::string kind;
                    EmbeddingQuery q;
                    ss >> kind >> q.fixed_values[0] >> q.fixed_values[1] >>
                        q.anchor[0] >> q.anchor[1];
                    if (!(ss >> q.delta)) q.delta = 0.25;
                    q.fixed = kind == "power" ? EmbeddingQuery::FixedPair::power
                                              : EmbeddingQuery::FixedPair::droop;
                    queries.push_back(q);
                } else throw std::runtime_error("unknown config key: " + where);
            } else {
                throw std::runtime_error("unknown config section: " + section_name);
            }
        }
    }
    if (!queries.empty()) cfg.embed_queries = queries;
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config: " + path.string());
    return parse_config(f);
}

std::vector<EmbeddingQuery> default_embed_queries() {
    std::vector<EmbeddingQuery> q(2);
    q[0].fixed = EmbeddingQuery::FixedPair::power;
    q[0].fixed_values = {1.2, -0.5};
    q[0].anchor = {37.5, 25.0};
    q[1].fixed = EmbeddingQuery::FixedPair::droop;
    q[1].fixed_values = {60.0, 40.0};
    q[1].anchor = {1.0, 0.0};
    return q;
}

std::string config_canonical_string(const ExperimentConfig& cfg) {
    std::ostringstream os;
    os << "master_seed=" << cfg.master_seed << '\n'
       << "variant=" << variant_name(cfg.variant) << '\n'
       << "sampler=" << cfg.sampler << '\n'
       << "size_per_dim=" << cfg.size_per_dim << '\n'
       << "test_grid_per_dim=" << cfg.test_grid_per_dim << '\n'
       << "selection_seeds=" << cfg.selection_seeds << '\n'
       << "assessment_seeds=" << cfg.assessment_seeds << '\n'
       << "epochs=" << cfg.epochs << '\n'
       << "interrupt_epoch=" << cfg.interrupt_epoch << '\n'
       << "train=" << cfg.train.layers << 'x' << cfg.train.width << ','
       << format_double(cfg.train.l0) << ',' << format_double(cfg.train.gamma) << ','
       << format_double(cfg.train.alpha_j) << ',' << format_double(cfg.train.delta)
       << '\n';
    auto list = [&os](const char* name, const auto& values) {
        os << name << '=';
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) os << ',';
            os << values[i];
        }
        os << '\n';
    };
    list("grid_layers", cfg.grid_layers);
    list("grid_widths", cfg.grid_widths);
    list("grid_l0", cfg.grid_l0);
    list("grid_gamma", cfg.grid_gamma);
    list("grid_alpha_j", cfg.grid_alpha_j);
    list("grid_delta", cfg.grid_delta);
    os << "pool_size=" << cfg.pool_size << '\n'
       << "n_samples=" << cfg.n_samples << '\n'
       << "walk=" << format_double(cfg.walk.alpha0) << ',' << cfg.walk.max_iters
       << ',' << format_double(cfg.walk.min_grad_norm) << '\n'
       << "verify_delta=" << format_double(cfg.verify_delta) << '\n'
       << "node_limit=" << cfg.bnb_node_limit << '\n'
       << "embed_resolution=" << cfg.embed_resolution << '\n';
    const auto queries =
        cfg.embed_queries.empty() ? default_embed_queries() : cfg.embed_queries;
    for (const auto& q : queries) {
        os << "query="
           << (q.fixed == EmbeddingQuery::FixedPair::power ? "power" : "droop") << ' '
           << format_double(q.fixed_values[0]) << ' '
           << format_double(q.fixed_values[1]) << ' ' << format_double(q.anchor[0])
           << ' ' << format_double(q.anchor[1]) << ' ' << format_double(q.delta)
           << '\n';
    }
    return os.str();
}

std::string config_hash(const ExperimentConfig& cfg) {
    const std::uint64_t h = fnv1a(config_canonical_string(cfg));
    std::ostringstream os;
    os << std::hex << (h & 0xffffffffULL);
    return os.str();
}

// --- dataset construction -------------------------------------------------------

std::vector<LabeledSample> build_test_set(int per_dim) {
    return label(sample_grid(default_hypercube(), per_dim), Origin::test);
}

SplitDataset build_base_dataset(const ExperimentConfig& cfg) {
    const Hypercube& h = default_hypercube();
    const std::size_t n = static_cast<std::size_t>(std::pow(cfg.size_per_dim, 4));
    std::vector<OperatingPoint> points;
    Origin origin = Origin::grid;
    if (cfg.sampler == "grid") {
        points = sample_grid(h, cfg.size_per_dim);
    } else if (cfg.sampler == "uniform") {
        points = sample_uniform(h, n, derive_seed(cfg.master_seed, "sample"));
        origin = Origin::uniform;
    } else if (cfg.sampler == "lhc") {
        points = sample_lhc(h, n, derive_seed(cfg.master_seed, "sample"));
        origin = Origin::lhc;
    } else {
        throw std::invalid_argument("unknown sampler: " + cfg.sampler);
    }
    return make_dataset(label(points, origin), derive_seed(cfg.master_seed, "dataset"));
}

// --- training runs ------------------------------------------------------------

RunOutput run_training(SplitDataset dataset, const ExperimentConfig& cfg,
                       const HyperCell& cell, std::uint64_t init_seed,
                       std::uint64_t enrich_seed) {
    RunOutput out;
    out.dataset = std::move(dataset);

    TrainConfig tc;
    tc.l0 = cell.l0;
    tc.gamma = cell.gamma;
    tc.epochs = cfg.epochs;
    tc.seed = init_seed;
    // Only the physics-regularized variant trains with the Jacobian term.
    tc.alpha_j = cfg.variant == Variant::pr ? cell.alpha_j : 0.0;

    const bool enriching = cfg.variant == Variant::ni || cfg.variant == Variant::vi;
    tc.interrupt_epoch = enriching ? cfg.interrupt_epoch : 0;

    InterruptHook hook;
    if (enriching) {
        hook = [&](Mlp& net) -> std::optional<TrainValView> {
            EnrichConfig ec;
            ec.pool_size = cfg.pool_size;
            ec.n_samples = cfg.n_samples;
            ec.delta = cell.delta;
            ec.interrupt_epoch = cfg.interrupt_epoch;
            ec.seed = enrich_seed;
            BnbOptions bnb;
            bnb.node_limit = cfg.bnb_node_limit;
            out.enrichment = cfg.variant == Variant::ni
                                 ? ni_enrich(net, default_hypercube(), ec)
                                 : vi_enrich(net, default_hypercube(), ec, bnb);
            if (out.enrichment.batch.empty()) return std::nullopt;
            enrich(out.dataset, out.enrichment.batch);
            return out.dataset.view();
        };
    }

    out.net = init_params(cell.widths(), init_seed);
    try {
        out.report = train(out.net, out.dataset.view(), tc, hook);
    } catch (const TrainingError& e) {
        out.diverged = true;
        out.diverged_epoch = e.epoch;
    }
    return out;
}

// --- tuning ----------------------------------------------------------------------

namespace {

std::vector<HyperCell> expand_grid(const ExperimentConfig& cfg) {
    std::vector<HyperCell> cells;
    for (int layers : cfg.grid_layers)
        for (int width : cfg.grid_widths)
            for (double l0 : cfg.grid_l0)
                for (double gamma : cfg.grid_gamma)
                    for (double alpha_j : cfg.grid_alpha_j)
                        for (double delta : cfg.grid_delta)
                            cells.push_back({layers, width, l0, gamma, alpha_j, delta});
    return cells;
}

/// Tie-break: fewer parameters first, then the earlier grid cell.
bool cell_preferred(const HyperCell& a, const HyperCell& b) {
    if (a.layers != b.layers) return a.layers < b.layers;
    if (a.width != b.width) return a.width < b.width;
    if (a.l0 != b.l0) return a.l0 < b.l0;
    if (a.gamma != b.gamma) return a.gamma < b.gamma;
    if (a.alpha_j != b.alpha_j) return a.alpha_j < b.alpha_j;
    return a.delta < b.delta;
}

}  // namespace

TuneResult tune(const ExperimentConfig& cfg, const SplitDataset& base) {
    const std::vector<HyperCell> cells = expand_grid(cfg);
    if (cells.empty()) throw std::invalid_argument("empty hyper-parameter grid");

    const std::size_t n_runs = cells.size() * static_cast<std::size_t>(cfg.selection_seeds);
    std::vector<double> objectives(n_runs, std::numeric_limits<double>::infinity());

    parallel_for(n_runs, [&](std::size_t i) {
        const std::size_t cell_idx = i / cfg.selection_seeds;
        const std::size_t seed_idx = i % cfg.selection_seeds;
        const std::uint64_t cell_seed =
            derive_seed(cfg.master_seed, "tune-cell", cell_idx);
        const RunOutput run =
            run_training(base, cfg, cells[cell_idx],
                         derive_seed(cell_seed, "init", seed_idx),
                         derive_seed(cell_seed, "enrich", seed_idx));
        if (!run.diverged) objectives[i] = run.report.best_val_objective;
    });

    TuneResult result;
    result.table.resize(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
        TuneCellResult& row = result.table[c];
        row.cell = cells[c];
        double sum = 0.0;
        for (int s = 0; s < cfg.selection_seeds; ++s) {
            const double v = objectives[c * cfg.selection_seeds + s];
            if (!std::isfinite(v)) row.diverged_runs += 1;
            sum += v;  // +inf propagates into the mean, as intended
        }
        row.mean_val_objective = sum / cfg.selection_seeds;
    }

    std::size_t best = 0;
    for (std::size_t c = 1; c < cells.size(); ++c) {
        const double a = result.table[c].mean_val_objective;
        const double b = result.table[best].mean_val_objective;
        if (a < b || (a == b && cell_preferred(cells[c], cells[best]))) best = c;
    }
    result.selected = cells[best];
    return result;
}

void save_tune_csv(const std::filesystem::path& path, const TuneResult& result) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f << "layers,width,l0,gamma,alpha_j,delta,mean_val_objective,diverged_runs,selected\n";
    for (const auto& row : result.table) {
        const auto& c = row.cell;
        const bool selected =
            c.layers == result.selected.layers && c.width == result.selected.width &&
            c.l0 == result.selected.l0 && c.gamma == result.selected.gamma &&
            c.alpha_j == result.selected.alpha_j && c.delta == result.selected.delta;
        f << c.layers << ',' << c.width << ',' << format_double(c.l0) << ','
          << format_double(c.gamma) << ',' << format_double(c.alpha_j) << ','
          << format_double(c.delta) << ',' << format_double(row.mean_val_objective)
          << ',' << row.diverged_runs << ',' << (selected ? 1 : 0) << '\n';
    }
}

// --- assessment --------------------------------------------------------------------

double percentile(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw std::invalid_argument("percentile of empty range");
    const double pos = p / 100.0 * static_cast<double>(sorted.size() - 1);
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const auto i1 = std::min(i0 + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(i0);
    return sorted[i0] * (1.0 - frac) + sorted[i1] * frac;
}

AssessmentReport assess(const ExperimentConfig& cfg, const HyperCell& cell,
                        const SplitDataset& base,
                        const std::vector<LabeledSample>& test_set) {
    AssessmentReport report;
    report.runs.resize(static_cast<std::size_t>(cfg.assessment_seeds));

    parallel_for(report.runs.size(), [&](std::size_t i) {
        AssessmentRun& row = report.runs[i];
        row.run = static_cast<int>(i);
        row.seed = derive_seed(cfg.master_seed, "assess-init", i);
        const RunOutput run = run_training(
            base, cfg, cell, row.seed, derive_seed(cfg.master_seed, "assess-enrich", i));
        if (run.diverged) {
            row.diverged = true;
            return;
        }
        row.best_epoch = run.report.best_epoch;

        // Test error in standardized output units, per true class.
        const Standardizer& st = run.net.standardizer;
        Eigen::MatrixXd x(4, static_cast<Eigen::Index>(test_set.size()));
        for (std::size_t j = 0; j < test_set.size(); ++j)
            x.col(static_cast<Eigen::Index>(j)) = st.transform_x(test_set[j].x.vec());
        const Eigen::RowVectorXd pred = forward_batch(run.net, x);

        double total = 0.0;
        std::array<double, kNumClasses> cls_sum{};
        for (std::size_t j = 0; j < test_set.size(); ++j) {
            const double err =
                pred[static_cast<Eigen::Index>(j)] - st.transform_y(test_set[j].zeta);
            const double sq = err * err;
            total += sq;
            cls_sum[static_cast<int>(test_set[j].cls)] += sq;
            row.n_class[static_cast<int>(test_set[j].cls)] += 1;
        }
        row.mse_total = total / static_cast<double>(test_set.size());
        for (int c = 0; c < kNumClasses; ++c)
            row.mse_class[c] =
                row.n_class[c] ? cls_sum[c] / static_cast<double>(row.n_class[c]) : 0.0;
    });

    for (const auto& r : report.runs)
        if (r.diverged) report.failures += 1;
    return report;
}

void save_assessment_csv(const std::filesystem::path& runs_path,
                         const std::filesystem::path& summary_path,
                         const AssessmentReport& report) {
    {
        std::ofstream f(runs_path);
        if (!f) throw std::runtime_error("cannot open for write: " + runs_path.string());
        f << "run,seed,status,mse_total,mse_stable,mse_mstable,mse_marginal,"
             "mse_munstable,mse_unstable,best_epoch\n";
        for (const auto& r : report.runs) {
            f << r.run << ',' << r.seed << ',' << (r.diverged ? "diverged" : "ok");
            if (r.diverged) {
                f << ",,,,,,,-1\n";
                continue;
            }
            f << ',' << format_double(r.mse_total);
            for (int c = 0; c < kNumClasses; ++c)
                f << ',' << format_double(r.mse_class[c]);
            f << ',' << r.best_epoch << '\n';
        }
    }
    {
        std::ofstream f(summary_path);
        if (!f)
            throw std::runtime_error("cannot open for write: " + summary_path.string());
        f << "metric,valid_runs,failures,min,q25,median,q75,max\n";
        auto emit = [&](const std::string& name, auto getter) {
            std::vector<double> values;
            for (const auto& r : report.runs)
                if (!r.diverged) values.push_back(getter(r));
            std::sort(values.begin(), values.end());
            f << name << ',' << values.size() << ',' << report.failures;
            if (values.empty()) {
                f << ",,,,,\n";
                return;
            }
            for (double p : {0.0, 25.0, 50.0, 75.0, 100.0})
                f << ',' << format_double(percentile(values, p));
            f << '\n';
        };
        emit("mse_total", [](const AssessmentRun& r) { return r.mse_total; });
        static const char* names[kNumClasses] = {"mse_stable", "mse_mstable",
                                                 "mse_marginal", "mse_munstable",
                                                 "mse_unstable"};
        for (int c = 0; c < kNumClasses; ++c)
            emit(names[c], [c](const AssessmentRun& r) { return r.mse_class[c]; });
    }
}

void save_histogram_csv(const std::filesystem::path& path, const ClassHistogram& h) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f << "class,count,share\n";
    for (int c = 0; c < kNumClasses; ++c)
        f << class_name(static_cast<StabilityClass>(c)) << ',' << h.counts[c] << ','
          << format_double(h.shares[c]) << '\n';
}

// --- pipeline -------------------------------------------------------------------------

std::filesystem::path run_pipeline(const ExperimentConfig& cfg,
                                   const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    const fs::path run_dir = out_dir / ("run-" + config_hash(cfg));
    fs::create_directories(run_dir);

    json manifest;
    manifest["config"] = config_canonical_string(cfg);
    manifest["config_hash"] = config_hash(cfg);
    json stages = json::array();

    // Stage 1: dataset creation (base samples plus the sealed test grid).
    SplitDataset ds = build_base_dataset(cfg);
    ds.test = build_test_set(cfg.test_grid_per_dim);
    const std::vector<LabeledSample> test_set = ds.test;
    fs::create_directories(run_dir / "dataset");
    save_dataset(run_dir / "dataset", ds, cfg.sampler);
    save_histogram_csv(run_dir / "dataset" / "histogram_test.csv",
                       class_histogram(test_set));
    {
        std::vector<LabeledSample> base_all = ds.train;
        base_all.insert(base_all.end(), ds.val.begin(), ds.val.end());
        save_histogram_csv(run_dir / "dataset" / "histogram_base.csv",
                           class_histogram(base_all));
    }
    stages.push_back("dataset");

    // Stage 2: walk enrichment happens before training; NI/VI run inside it.
    if (cfg.variant == Variant::dw) {
        std::vector<LabeledSample> seeds = ds.train;
        seeds.insert(seeds.end(), ds.val.begin(), ds.val.end());
        const std::vector<LabeledSample> dw_points =
            enrich_with_walks(seeds, cfg.walk, default_hypercube());
        fs::create_directories(run_dir / "enrichment");
        save_samples_csv(run_dir / "enrichment" / "dw.csv", dw_points);
        enrich(ds, dw_points);
        stages.push_back("enrichment-dw");
    }

    // Stage 3: the exported model.
    const RunOutput main_run =
        run_training(ds, cfg, cfg.train, derive_seed(cfg.master_seed, "train-init", 0),
                     derive_seed(cfg.master_seed, "train-enrich", 0));
    if (main_run.diverged)
        throw TrainingError("pipeline training run diverged", main_run.diverged_epoch);
    fs::create_directories(run_dir / "model");
    {
        TrainConfig tc;
        tc.l0 = cfg.train.l0;
        tc.gamma = cfg.train.gamma;
        tc.epochs = cfg.epochs;
        tc.alpha_j = cfg.variant == Variant::pr ? cfg.train.alpha_j : 0.0;
        tc.seed = derive_seed(cfg.master_seed, "train-init", 0);
        tc.interrupt_epoch =
            (cfg.variant == Variant::ni || cfg.variant == Variant::vi)
                ? cfg.interrupt_epoch
                : 0;
        save_model(run_dir / "model" / "model.json", main_run.net, tc, main_run.report);
        std::ofstream curves(run_dir / "model" / "curves.csv");
        curves << "epoch,train_data,train_jac,val_data,val_jac\n";
        for (std::size_t e = 0; e < main_run.report.train_curve.size(); ++e)
            curves << e << ',' << format_double(main_run.report.train_curve[e].data)
                   << ',' << format_double(main_run.report.train_curve[e].jac) << ','
                   << format_double(main_run.report.val_curve[e].data) << ','
                   << format_double(main_run.report.val_curve[e].jac) << '\n';
    }
    if (cfg.variant == Variant::ni || cfg.variant == Variant::vi) {
        fs::create_directories(run_dir / "enrichment");
        save_samples_csv(run_dir / "enrichment" /
                             (std::string(variant_name(cfg.variant)) + ".csv"),
                         main_run.enrichment.batch);
        if (cfg.variant == Variant::vi) {
            json vi;
            vi["excluded_volume_fraction"] = main_run.enrichment.excluded_volume_fraction;
            vi["fallback_unfiltered"] = main_run.enrichment.fallback_unfiltered;
            std::ofstream f(run_dir / "enrichment" / "vi_stats.json");
            f << vi.dump(2) << '\n';
        }
        stages.push_back(std::string("enrichment-") + variant_name(cfg.variant));
    }
    stages.push_back("training");

    // Stage 4: statistical assessment.
    const AssessmentReport rep = assess(cfg, cfg.train, ds, test_set);
    fs::create_directories(run_dir / "assessment");
    save_assessment_csv(run_dir / "assessment" / "runs.csv",
                        run_dir / "assessment" / "summary.csv", rep);
    stages.push_back("assessment");

    // Stage 5: corner verification of the exported model.
    {
        fs::create_directories(run_dir / "verification");
        const UnitBoxNet ub = fold_to_unit_box(main_run.net, default_hypercube());
        const NeuronBounds bounds = propagate_bounds(ub, Vec4::Zero(), Vec4::Ones());
        const std::vector<Vec4> corners = unit_corners();
        std::vector<Certificate> certs(corners.size());
        BnbOptions bnb;
        bnb.node_limit = cfg.bnb_node_limit;
        parallel_for(corners.size(), [&](std::size_t i) {
            const double pred = ub.eval(corners[i]);
            certs[i] = verify_corner(ub, bounds, corners[i], classify(pred),
                                     cfg.verify_delta, bnb);
        });
        std::ofstream f(run_dir / "verification" / "corners.csv");
        f << "corner,status,epsilon_star,nodes\n";
        for (std::size_t i = 0; i < certs.size(); ++i) {
            // Timing stays out of the persisted artifacts so reruns are
            // byte-identical.
            save_certificate_json(run_dir / "verification" /
                                      ("corner_" + std::to_string(i) + ".json"),
                                  certs[i], /*include_wall_time=*/false);
            f << i << ',' << cert_status_name(certs[i].status) << ','
              << format_double(certs[i].epsilon_star) << ',' << certs[i].nodes << '\n';
        }
        stages.push_back("verification");
    }

    // Stage 6: embedding exports.
    {
        fs::create_directories(run_dir / "embedding");
        const auto queries =
            cfg.embed_queries.empty() ? default_embed_queries() : cfg.embed_queries;
        BnbOptions bnb;
        bnb.node_limit = cfg.bnb_node_limit;
        for (std::size_t i = 0; i < queries.size(); ++i) {
            const auto& q = queries[i];
            const Certificate cert =
                q.fixed == EmbeddingQuery::FixedPair::power
                    ? verify_droop_region(main_run.net, default_hypercube(), q, bnb)
                    : verify_power_region(main_run.net, default_hypercube(), q, bnb);
            const std::string stem = "query" + std::to_string(i);
            save_certificate_json(run_dir / "embedding" / (stem + ".cert.json"), cert,
                                  /*include_wall_time=*/false);
            export_contour_grid(main_run.net, default_hypercube(), q,
                                cfg.embed_resolution,
                                run_dir / "embedding" / (stem + ".csv"), &cert);
        }
        stages.push_back("embedding");
    }

    manifest["stages"] = stages;
    std::ofstream mf(run_dir / "manifest.json");
    mf << manifest.dump(2) << '\n';
    return run_dir;
}

}  // namespace dampmap
