#include "dampmap/dataset.hpp"

#include "dampmap/rng.hpp"

#include "json.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dampmap {

using json = nlohmann::json;

StabilityClass class_from_name(const std::string& name) {
    for (int i = 0; i < kNumClasses; ++i) {
        const auto c = static_cast<StabilityClass>(i);
        if (name == class_name(c)) return c;
    }
    throw std::invalid_argument("unknown stability class: " + name);
}

Origin origin_from_name(const std::string& name) {
    static constexpr Origin all[] = {Origin::grid, Origin::uniform, Origin::lhc,
                                     Origin::dw,   Origin::ni,      Origin::vi,
                                     Origin::test};
    for (Origin o : all)
        if (name == origin_name(o)) return o;
    throw std::invalid_argument("unknown origin tag: " + name);
}

Standardizer fit_standardizer(std::span<const LabeledSample> train) {
    if (train.empty()) throw std::runtime_error("cannot fit standardizer on empty split");
    const double n = static_cast<double>(train.size());

    Standardizer s;
    s.mu_x = Vec4::Zero();
    double mu_y = 0.0;
    for (const auto& smp : train) {
        s.mu_x += smp.x.vec();
        mu_y += smp.zeta;
    }
    s.mu_x /= n;
    s.mu_y = mu_y / n;

    Vec4 var_x = Vec4::Zero();
    double var_y = 0.0;
    for (const auto& smp : train) {
        const Vec4 d = smp.x.vec() - s.mu_x;
        var_x += d.cwiseProduct(d);
        var_y += (smp.zeta - s.mu_y) * (smp.zeta - s.mu_y);
    }
    var_x /= n;  // population variance
    var_y /= n;

    for (int i = 0; i < 4; ++i) {
        if (var_x[i] <= 0.0)
            throw std::runtime_error("degenerate training data: constant input coordinate");
        s.sigma_x[i] = std::sqrt(var_x[i]);
    }
    if (var_y <= 0.0)
        throw std::runtime_error("degenerate training data: constant output");
    s.sigma_y = std::sqrt(var_y);
    return s;
}

Vec4 transform_gradient(const Vec4& grad_raw, const Standardizer& std_) {
    return grad_raw.cwiseProduct(std_.sigma_x) / std_.sigma_y;
}

std::pair<std::vector<LabeledSample>, std::vector<LabeledSample>> split(
    std::vector<LabeledSample> samples, std::uint64_t seed) {
    if (samples.size() < 5)
        throw std::invalid_argument("need at least 5 samples to split 80/20");
    Rng rng(seed);
    rng.shuffle(samples);
    const std::size_t n_train = samples.size() * 4 / 5;
    std::vector<LabeledSample> train(samples.begin(),
                                     samples.begin() + static_cast<long>(n_train));
    std::vector<LabeledSample> val(samples.begin() + static_cast<long>(n_train),
                                   samples.end());
    return {std::move(train), std::move(val)};
}

SplitDataset make_dataset(std::vector<LabeledSample> samples, std::uint64_t seed) {
    SplitDataset ds;
    ds.split_seed = seed;
    auto [train, val] = split(std::move(samples), derive_seed(seed, "split", 0));
    ds.train = std::move(train);
    ds.val = std::move(val);
    ds.standardizer = fit_standardizer(ds.train);
    return ds;
}

void enrich(SplitDataset& ds, std::vector<LabeledSample> new_samples) {
    if (!new_samples.empty()) {
        ds.enrich_count += 1;
        if (new_samples.size() >= 5) {
            auto [tr, va] =
                split(std::move(new_samples), derive_seed(ds.split_seed, "split", ds.enrich_count));
            ds.train.insert(ds.train.end(), tr.begin(), tr.end());
            ds.val.insert(ds.val.end(), va.begin(), va.end());
        } else {
            // Too few points for a meaningful split: all go to train.
            ds.train.insert(ds.train.end(), new_samples.begin(), new_samples.end());
        }
    }
    ds.standardizer = fit_standardizer(ds.train);
}

ClassHistogram class_histogram(std::span<const LabeledSample> samples) {
    ClassHistogram h;
    h.total = samples.size();
    for (const auto& s : samples) h.counts[static_cast<int>(s.cls)] += 1;
    if (h.total > 0)
        for (int i = 0; i < kNumClasses; ++i)
            h.shares[i] = static_cast<double>(h.counts[i]) / static_cast<double>(h.total);
    return h;
}

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("double formatting failed");
    return std::string(buf, ptr);
}

namespace {

double parse_double(const std::string& tok) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw std::runtime_error("bad numeric field: " + tok);
    return v;
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(tok);
    return out;
}

constexpr const char* kSampleHeader = "x1,x2,x3,x4,zeta,g1,g2,g3,g4,class,origin";

}  // namespace

void save_samples_csv(const std::filesystem::path& path,
                      std::span<const LabeledSample> samples) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open for write: " + path.string());
    f << kSampleHeader << '\n';
    for (const auto& s : samples) {
        const Vec4 x = s.x.vec();
        for (int i = 0; i < 4; ++i) f << format_double(x[i]) << ',';
        f << format_double(s.zeta) << ',';
        for (int i = 0; i < 4; ++i) f << format_double(s.grad[i]) << ',';
        f << class_name(s.cls) << ',' << origin_name(s.origin) << '\n';
    }
}

std::vector<LabeledSample> load_samples_csv(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open for read: " + path.string());
    std::string line;
    if (!std::getline(f, line) || line != kSampleHeader)
        throw std::runtime_error("unexpected sample CSV header in " + path.string());
    std::vector<LabeledSample> out;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        const auto tok = split_fields(line);
        if (tok.size() != 11)
            throw std::runtime_error("malformed sample row: " + line);
        LabeledSample s;
        Vec4 x;
        for (int i = 0; i < 4; ++i) x[i] = parse_double(tok[i]);
        s.x = OperatingPoint::from_vec(x);
        s.zeta = parse_double(tok[4]);
        for (int i = 0; i < 4; ++i) s.grad[i] = parse_double(tok[5 + i]);
        s.cls = class_from_name(tok[9]);
        s.origin = origin_from_name(tok[10]);
        out.push_back(s);
    }
    return out;
}

namespace {

json standardizer_to_json(const Standardizer& s) {
    json j;
    j["mu_x"] = {s.mu_x[0], s.mu_x[1], s.mu_x[2], s.mu_x[3]};
    j["sigma_x"] = {s.sigma_x[0], s.sigma_x[1], s.sigma_x[2], s.sigma_x[3]};
    j["mu_y"] = s.mu_y;
    j["sigma_y"] = s.sigma_y;
    return j;
}

Standardizer standardizer_from_json(const json& j) {
    Standardizer s;
    for (int i = 0; i < 4; ++i) {
        s.mu_x[i] = j.at("mu_x").at(i).get<double>();
        s.sigma_x[i] = j.at("sigma_x").at(i).get<double>();
    }
    s.mu_y = j.at("mu_y").get<double>();
    s.sigma_y = j.at("sigma_y").get<double>();
    return s;
}

}  // namespace

void save_dataset(const std::filesystem::path& dir, const SplitDataset& ds,
                  const std::string& sampler_tag) {
    std::filesystem::create_directories(dir);
    save_samples_csv(dir / "train.csv", ds.train);
    save_samples_csv(dir / "val.csv", ds.val);
    save_samples_csv(dir / "test.csv", ds.test);

    json meta;
    meta["split_seed"] = ds.split_seed;
    meta["enrich_count"] = ds.enrich_count;
    meta["sampler"] = sampler_tag;
    const Hypercube h{};
    meta["bounds"]["lower"] = {h.lower[0], h.lower[1], h.lower[2], h.lower[3]};
    meta["bounds"]["upper"] = {h.upper[0], h.upper[1], h.upper[2], h.upper[3]};
    meta["sizes"] = {{"train", ds.train.size()},
                     {"val", ds.val.size()},
                     {"test", ds.test.size()}};
    meta["standardizer"] = standardizer_to_json(ds.standardizer);

    std::ofstream f(dir / "dataset.json");
    if (!f) throw std::runtime_error("cannot write dataset sidecar");
    f << meta.dump(2) << '\n';
}

SplitDataset load_dataset(const std::filesystem::path& dir) {
    SplitDataset ds;
    ds.train = load_samples_csv(dir / "train.csv");
    ds.val = load_samples_csv(dir / "val.csv");
    ds.test = load_samples_csv(dir / "test.csv");

    std::ifstream f(dir / "dataset.json");
    if (!f) throw std::runtime_error("missing dataset sidecar in " + dir.string());
    json meta = json::parse(f);
    ds.split_seed = meta.at("split_seed").get<std::uint64_t>();
    ds.enrich_count = meta.at("enrich_count").get<std::uint32_t>();
    ds.standardizer = standardizer_from_json(meta.at("standardizer"));
    return ds;
}

}  // namespace dampmap
