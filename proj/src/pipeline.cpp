#include "svct/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "svct/error.hpp"
#include "svct/io.hpp"
#include "svct/metrics.hpp"
#include "svct/nn/checkpoint.hpp"
#include "svct/phantom.hpp"
#include "svct/random.hpp"
#include "svct/tomo.hpp"

namespace svct::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string num(double v) { return io::format_number(v); }

std::string fixed(double v, int digits) {
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(digits);
    ss << v;
    return ss.str();
}

// Reads known keys from one JSON object and rejects the rest.
class Reader {
public:
    Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        require(j.is_object(), ErrorKind::config, where_ + " must be a JSON object");
    }

    template <class T>
    void get(const char* key, T& dst) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            dst = j_.at(key).get<T>();
        } catch (const json::exception& e) {
            fail(ErrorKind::config, where_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        return j_.contains(key) ? &j_.at(key) : nullptr;
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            require(seen_.count(it.key()) == 1, ErrorKind::config,
                    "unknown config key " + where_ + "." + it.key());
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

const char* split_dir(Split s) { return to_string(s); }

fs::path entry_dir(const fs::path& root, const PhantomSpec& p) {
    return root / split_dir(p.split) / p.id;
}

std::string view_tag(std::size_t views) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "v%03zu", views);
    return buf;
}

fs::path models_dir(const ExperimentConfig& cfg) { return cfg.out / "models"; }
fs::path eval_dir(const ExperimentConfig& cfg) { return cfg.out / "eval"; }

Sinogram full_sinogram(const ExperimentConfig& cfg, const Image& truth) {
    return project(truth, Geometry::standard(cfg.image_size, cfg.full_views));
}

Image phantom_image(const ExperimentConfig& cfg, const PhantomSpec& p) {
    return rasterize(random_phantom(p.seed), cfg.image_size);
}

std::uint64_t train_seed(const ExperimentConfig& cfg) { return mix_seed(cfg.seed, 7); }

std::uint64_t init_seed(const ExperimentConfig& cfg, const Variant& v) {
    return mix_seed(cfg.seed, 100 + (v.multi_scale ? 2 : 0) +
                                  (v.mode == nn::LearningMode::residual ? 1 : 0));
}

nn::NetSpec variant_spec(const ExperimentConfig& cfg, const Variant& v) {
    nn::NetSpec spec = cfg.net;
    spec.multi_scale = v.multi_scale;
    spec.mode = v.mode;
    return spec;
}

}  // namespace

TvConfig TvSettings::config(double lambda_tv) const {
    TvConfig c;
    c.lambda_tv = lambda_tv;
    c.iterations = iterations;
    c.smoothing_eps = smoothing_eps;
    return c;
}

void ExperimentConfig::validate() const {
    require(image_size >= min_raster_size, ErrorKind::config, "image_size must be >= 16");
    require(full_views >= 1, ErrorKind::config, "full_views must be positive");
    require(!ladder.empty(), ErrorKind::config, "ladder must not be empty");
    for (std::size_t i = 0; i < ladder.size(); ++i) {
        require(ladder[i] >= 1 && full_views % ladder[i] == 0, ErrorKind::config,
                "ladder count " + std::to_string(ladder[i]) + " does not divide full_views " +
                    std::to_string(full_views));
        require(i == 0 || ladder[i] > ladder[i - 1], ErrorKind::config,
                "ladder must be strictly increasing");
    }
    for (std::size_t v : resolved_train_views()) {
        require(std::find(ladder.begin(), ladder.end(), v) != ladder.end(), ErrorKind::config,
                "train view count " + std::to_string(v) + " is not on the ladder");
    }
    require(phantoms.train >= 1 && phantoms.test >= 1, ErrorKind::config,
            "need at least one training and one test phantom");
    require(std::find(ladder.begin(), ladder.end(), homology_views()) != ladder.end(),
            ErrorKind::config, "homology view count is not on the ladder");
    require(homology.grid >= 2, ErrorKind::config, "homology grid needs >= 2 samples");
    net.validate();
    train.validate(net);
    require(train.patch <= image_size, ErrorKind::config, "patch larger than the image");
    require(image_size % net.size_multiple() == 0, ErrorKind::config,
            "image_size must be a multiple of 2^(stages-1)");
    require(tv.iterations >= 1 && tv.smoothing_eps > 0.0, ErrorKind::config,
            "tv needs iterations >= 1 and smoothing_eps > 0");
    require(tv.lambda.has_value() || !tv.lambda_grid.empty(), ErrorKind::config,
            "tv needs a lambda or a lambda_grid");
    if (tv.lambda) require(*tv.lambda >= 0.0, ErrorKind::config, "tv lambda must be >= 0");
    require(streaks.image_size >= min_raster_size && streaks.views >= 1 && streaks.radius > 0.0,
            ErrorKind::config, "bad streak study settings");
}

std::vector<std::size_t> ExperimentConfig::resolved_train_views() const {
    if (!train_views.empty()) return train_views;
    std::vector<std::size_t> v(ladder.begin(), ladder.begin() + std::min<std::size_t>(2, ladder.size()));
    return v;
}

std::size_t ExperimentConfig::sparsest() const { return ladder.front(); }

std::size_t ExperimentConfig::homology_views() const {
    return homology.views == 0 ? sparsest() : homology.views;
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    Reader r(j, "config");
    r.get("seed", c.seed);
    r.get("image_size", c.image_size);
    r.get("full_views", c.full_views);
    r.get("ladder", c.ladder);
    r.get("train_views", c.train_views);
    std::string out = c.out.string();
    r.get("out", out);
    c.out = out;
    r.get("deterministic", c.deterministic);
    if (const json* p = r.child("phantoms")) {
        Reader s(*p, "phantoms");
        s.get("train", c.phantoms.train);
        s.get("validation", c.phantoms.validation);
        s.get("test", c.phantoms.test);
        s.finish();
    }
    if (const json* p = r.child("homology")) {
        Reader s(*p, "homology");
        s.get("images", c.homology.images);
        s.get("views", c.homology.views);
        s.get("grid", c.homology.grid);
        s.get("max_points", c.homology.max_points);
        s.finish();
    }
    if (const json* p = r.child("net")) {
        Reader s(*p, "net");
        s.get("stages", c.net.stages);
        s.get("base_channels", c.net.base_channels);
        s.finish();
    }
    if (const json* p = r.child("train")) {
        Reader s(*p, "train");
        s.get("epochs", c.train.epochs);
        s.get("lr_start", c.train.lr_start);
        s.get("lr_end", c.train.lr_end);
        s.get("weight_decay", c.train.weight_decay);
        s.get("patch", c.train.patch);
        s.get("batch", c.train.batch);
        s.get("patches_per_image", c.train.patches_per_image);
        s.get("flips", c.train.flips);
        s.get("normalize_targets", c.train.normalize_targets);
        s.finish();
    }
    if (const json* p = r.child("tv")) {
        Reader s(*p, "tv");
        if (const json* l = s.child("lambda"); l != nullptr && !l->is_null()) {
            require(l->is_number(), ErrorKind::config, "tv.lambda must be a number or null");
            c.tv.lambda = l->get<double>();
        }
        s.get("lambda_grid", c.tv.lambda_grid);
        s.get("iterations", c.tv.iterations);
        s.get("smoothing_eps", c.tv.smoothing_eps);
        s.finish();
    }
    if (const json* p = r.child("streaks")) {
        Reader s(*p, "streaks");
        s.get("image_size", c.streaks.image_size);
        s.get("views", c.streaks.views);
        s.get("targets", c.streaks.targets);
        s.get("radius", c.streaks.radius);
        s.finish();
    }
    r.finish();
    c.train.seed = train_seed(c);
    c.validate();
    return c;
}

json config_to_json(const ExperimentConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["image_size"] = c.image_size;
    j["full_views"] = c.full_views;
    j["ladder"] = c.ladder;
    j["train_views"] = c.resolved_train_views();
    j["out"] = c.out.string();
    j["deterministic"] = c.deterministic;
    j["phantoms"] = {{"train", c.phantoms.train},
                     {"validation", c.phantoms.validation},
                     {"test", c.phantoms.test}};
    j["homology"] = {{"images", c.homology.images},
                     {"views", c.homology_views()},
                     {"grid", c.homology.grid},
                     {"max_points", c.homology.max_points}};
    j["net"] = {{"stages", c.net.stages}, {"base_channels", c.net.base_channels}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"lr_start", c.train.lr_start},
                  {"lr_end", c.train.lr_end},
                  {"weight_decay", c.train.weight_decay},
                  {"patch", c.train.patch},
                  {"batch", c.train.batch},
                  {"patches_per_image", c.train.patches_per_image},
                  {"flips", c.train.flips},
                  {"normalize_targets", c.train.normalize_targets}};
    j["tv"] = {{"lambda", c.tv.lambda ? json(*c.tv.lambda) : json(nullptr)},
               {"lambda_grid", c.tv.lambda_grid},
               {"iterations", c.tv.iterations},
               {"smoothing_eps", c.tv.smoothing_eps}};
    j["streaks"] = {{"image_size", c.streaks.image_size},
                    {"views", c.streaks.views},
                    {"targets", c.streaks.targets},
                    {"radius", c.streaks.radius}};
    return j;
}

ExperimentConfig load_config(const fs::path& path) {
    json j;
    try {
        j = json::parse(io::read_file(path));
    } catch (const json::exception& e) {
        fail(ErrorKind::config, path.string() + ": " + e.what());
    } catch (const Error& e) {
        fail(ErrorKind::config, e.what());
    }
    return config_from_json(j);
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, ErrorKind::config,
            "override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(text);
    } catch (const json::exception&) {
        value = text;
    }
    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot - start);
        require(!part.empty(), ErrorKind::config, "empty segment in override key '" + key + "'");
        if (!node->is_object()) *node = json::object();
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        node = &(*node)[part];
        start = dot + 1;
    }
}

const char* to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

std::vector<PhantomSpec> phantom_plan(const ExperimentConfig& cfg) {
    std::vector<PhantomSpec> plan;
    std::uint64_t index = 0;
    auto add = [&](Split s, std::size_t count) {
        for (std::size_t k = 0; k < count; ++k, ++index) {
            char id[32];
            std::snprintf(id, sizeof id, "%s_%03zu", to_string(s), k);
            plan.push_back({id, mix_seed(cfg.seed, 1000 + index), s});
        }
    };
    add(Split::train, cfg.phantoms.train);
    add(Split::validation, cfg.phantoms.validation);
    add(Split::test, cfg.phantoms.test);

    std::set<std::uint64_t> train_seeds, other_seeds;
    for (const PhantomSpec& p : plan) {
        (p.split == Split::train ? train_seeds : other_seeds).insert(p.seed);
    }
    for (std::uint64_t s : other_seeds) {
        require(train_seeds.count(s) == 0, ErrorKind::config,
                "a held-out phantom shares its seed with a training phantom");
    }
    require(train_seeds.size() + other_seeds.size() == plan.size(), ErrorKind::config,
            "phantom seeds are not unique");
    return plan;
}

std::vector<const DatasetEntry*> Dataset::split(Split s) const {
    std::vector<const DatasetEntry*> out;
    for (const DatasetEntry& e : entries) {
        if (e.phantom.split == s) out.push_back(&e);
    }
    return out;
}

std::size_t Dataset::pair_count() const {
    std::size_t n = 0;
    for (const DatasetEntry& e : entries) n += e.inputs.size();
    return n;
}

fs::path dataset_dir(const ExperimentConfig& cfg) { return cfg.out / "dataset"; }

Dataset cmd_dataset(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::vector<PhantomSpec> plan = phantom_plan(cfg);
    Dataset data;
    data.root = dataset_dir(cfg);
    data.image_size = cfg.image_size;
    data.full_views = cfg.full_views;
    data.ladder = cfg.ladder;

    json manifest;
    manifest["image_size"] = cfg.image_size;
    manifest["full_views"] = cfg.full_views;
    manifest["ladder"] = cfg.ladder;
    manifest["phantoms"] = json::array();
    for (const PhantomSpec& p : plan) {
        DatasetEntry e;
        e.phantom = p;
        const Image truth = phantom_image(cfg, p);
        const Sinogram full = full_sinogram(cfg, truth);
        const Image reference = fbp(full, cfg.image_size);
        const fs::path dir = entry_dir(data.root, p);
        io::save_image(dir / "truth.raw", truth);
        io::save_image(dir / "reference.raw", reference);
        e.truth = io::float32_round_trip(truth);
        e.reference = io::float32_round_trip(reference);
        json files = {{"truth", "truth.raw"}, {"reference", "reference.raw"}};
        for (std::size_t v : cfg.ladder) {
            const Image x = fbp(subsample_views(full, v), cfg.image_size);
            const Image y = residual(x, reference);
            io::save_image(dir / (view_tag(v) + "_input.raw"), x);
            io::save_image(dir / (view_tag(v) + "_label.raw"), y);
            e.inputs[v] = io::float32_round_trip(x);
            e.labels[v] = io::float32_round_trip(y);
            files[view_tag(v)] = {{"input", view_tag(v) + "_input.raw"},
                                  {"label", view_tag(v) + "_label.raw"}};
        }
        manifest["phantoms"].push_back({{"id", p.id},
                                        {"seed", p.seed},
                                        {"split", to_string(p.split)},
                                        {"dir", fs::relative(dir, data.root).string()},
                                        {"files", files}});
        data.entries.push_back(std::move(e));
    }
    io::atomic_write(data.root / "manifest.json", manifest.dump(2) + "\n");
    return data;
}

Dataset load_dataset(const ExperimentConfig& cfg) {
    Dataset data;
    data.root = dataset_dir(cfg);
    const fs::path mpath = data.root / "manifest.json";
    require(fs::exists(mpath), ErrorKind::missing_artifact,
            "no dataset at " + data.root.string() + " (run the dataset command first)");
    const json m = json::parse(io::read_file(mpath));
    data.image_size = m.at("image_size").get<std::size_t>();
    data.full_views = m.at("full_views").get<std::size_t>();
    data.ladder = m.at("ladder").get<std::vector<std::size_t>>();
    require(data.image_size == cfg.image_size && data.full_views == cfg.full_views &&
                data.ladder == cfg.ladder,
            ErrorKind::missing_artifact,
            "dataset at " + data.root.string() + " was built with a different geometry");
    for (const json& p : m.at("phantoms")) {
        DatasetEntry e;
        e.phantom.id = p.at("id").get<std::string>();
        e.phantom.seed = p.at("seed").get<std::uint64_t>();
        const std::string split = p.at("split").get<std::string>();
        e.phantom.split = split == "train" ? Split::train
                          : split == "validation" ? Split::validation
                                                  : Split::test;
        const fs::path dir = data.root / p.at("dir").get<std::string>();
        e.truth = io::load_image(dir / "truth.raw");
        e.reference = io::load_image(dir / "reference.raw");
        for (std::size_t v : data.ladder) {
            e.inputs[v] = io::load_image(dir / (view_tag(v) + "_input.raw"));
            e.labels[v] = io::load_image(dir / (view_tag(v) + "_label.raw"));
        }
        data.entries.push_back(std::move(e));
    }
    return data;
}

nn::TrainingSet training_set(const Dataset& data, const std::vector<std::size_t>& views,
                             nn::LearningMode mode) {
    nn::TrainingSet set;
    for (std::size_t v : views) {
        require(std::find(data.ladder.begin(), data.ladder.end(), v) != data.ladder.end(),
                ErrorKind::config, "view count " + std::to_string(v) + " not in the dataset");
        for (const DatasetEntry* e : data.split(Split::train)) {
            set.inputs.push_back(e->inputs.at(v));
            set.labels.push_back(mode == nn::LearningMode::residual ? e->labels.at(v)
                                                                    : e->reference);
        }
    }
    return set;
}

nn::ValidationSet validation_set(const Dataset& data, std::size_t views, double peak) {
    nn::ValidationSet val;
    val.peak = peak;
    for (const DatasetEntry* e : data.split(Split::validation)) {
        val.inputs.push_back(e->inputs.at(views));
        val.references.push_back(e->reference);
    }
    return val;
}

double reference_peak(const Dataset& data) {
    std::vector<Image> refs;
    for (const DatasetEntry& e : data.entries) refs.push_back(e.reference);
    return data_range(refs);
}

std::string Variant::name() const {
    return std::string(multi_scale ? "multi_" : "single_") + nn::to_string(mode);
}

std::vector<Variant> all_variants() {
    return {{nn::LearningMode::image, false},
            {nn::LearningMode::residual, false},
            {nn::LearningMode::image, true},
            {nn::LearningMode::residual, true}};
}

Variant parse_variant(const std::string& mode, const std::string& scale) {
    Variant v;
    v.mode = nn::parse_learning_mode(mode);
    require(scale == "multi" || scale == "single", ErrorKind::config,
            "scale must be multi or single, got '" + scale + "'");
    v.multi_scale = scale == "multi";
    return v;
}

TrainSummary cmd_train(const ExperimentConfig& cfg, const Variant& variant) {
    cfg.validate();
    const Dataset data = load_dataset(cfg);
    const auto t0 = Clock::now();
    const nn::NetSpec spec = variant_spec(cfg, variant);
    nn::Network net(spec, init_seed(cfg, variant));
    const nn::TrainingSet train = training_set(data, cfg.resolved_train_views(), variant.mode);
    const nn::ValidationSet val = validation_set(data, cfg.sparsest(), reference_peak(data));

    TrainSummary s;
    s.variant = variant;
    s.history = nn::train(net, train, val, cfg.train);
    s.seconds = seconds_since(t0);
    s.checkpoint = models_dir(cfg) / (variant.name() + ".bin");
    s.checkpoint_hash = nn::save_checkpoint(s.checkpoint, net).hash;

    io::Csv csv({"epoch", "lr", "train_loss", "val_psnr"});
    for (const nn::EpochRecord& r : s.history) {
        csv.row({std::to_string(r.epoch), num(r.lr), num(r.train_loss), num(r.val_psnr)});
    }
    csv.save(models_dir(cfg) / (variant.name() + "_history.csv"));
    return s;
}

double MetricReport::average_psnr(std::size_t views, const std::string& method) const {
    const auto rows = select(views, method);
    require(!rows.empty(), ErrorKind::missing_artifact,
            "no measurements for " + method + " at " + std::to_string(views) + " views");
    double sum = 0.0;
    for (const Measurement* m : rows) sum += m->psnr;
    return sum / static_cast<double>(rows.size());
}

std::vector<const Measurement*> MetricReport::select(std::size_t views,
                                                     const std::string& method) const {
    std::vector<const Measurement*> out;
    for (const Measurement& m : measurements) {
        if (m.views == views && m.method == method) out.push_back(&m);
    }
    return out;
}

double tune_tv_lambda(const ExperimentConfig& cfg, const Dataset& data) {
    auto tuning = data.split(Split::validation);
    if (tuning.empty()) tuning = {data.split(Split::train).front()};
    const double peak = reference_peak(data);
    const std::size_t v = cfg.sparsest();
    std::vector<std::pair<Sinogram, const Image*>> cases;
    for (const DatasetEntry* e : tuning) {
        cases.emplace_back(subsample_views(full_sinogram(cfg, e->truth), v), &e->reference);
    }
    io::Csv csv({"lambda", "mean_psnr"});
    double best = cfg.tv.lambda_grid.front();
    double best_psnr = -std::numeric_limits<double>::infinity();
    for (double lambda : cfg.tv.lambda_grid) {
        double sum = 0.0;
        for (const auto& [sino, ref] : cases) {
            const TvResult r = reconstruct_tv(sino, cfg.image_size, cfg.tv.config(lambda));
            sum += psnr(r.image, *ref, peak);
        }
        const double mean = sum / static_cast<double>(cases.size());
        csv.row({num(lambda), num(mean)});
        if (mean > best_psnr) {
            best_psnr = mean;
            best = lambda;
        }
    }
    csv.save(eval_dir(cfg) / "tv_lambda_grid.csv");
    return best;
}

MetricReport cmd_eval(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset data = load_dataset(cfg);
    std::vector<std::pair<Variant, nn::Network>> nets;
    for (const Variant& v : all_variants()) {
        const fs::path ckpt = models_dir(cfg) / (v.name() + ".bin");
        require(fs::exists(ckpt), ErrorKind::missing_artifact,
                "missing checkpoint " + ckpt.string() + " (run train first)");
        nets.emplace_back(v, nn::load_checkpoint(ckpt));
        require(nets.back().second.spec() == variant_spec(cfg, v), ErrorKind::missing_artifact,
                ckpt.string() + " does not match the configured network");
    }

    MetricReport rep;
    rep.peak = reference_peak(data);
    rep.ladder = cfg.ladder;
    rep.tv_lambda = cfg.tv.lambda ? *cfg.tv.lambda : tune_tv_lambda(cfg, data);
    rep.methods = {"fbp", "tv"};
    for (const auto& [v, net] : nets) rep.methods.push_back(v.name());
    const TvConfig tv = cfg.tv.config(rep.tv_lambda);

    bool first = true;
    for (const DatasetEntry* e : data.split(Split::test)) {
        const Sinogram full = full_sinogram(cfg, e->truth);
        for (std::size_t v : cfg.ladder) {
            const Sinogram sparse = subsample_views(full, v);
            const Image& x = e->inputs.at(v);

            auto t0 = Clock::now();
            (void)fbp(sparse, cfg.image_size);
            rep.measurements.push_back(
                {e->phantom.id, v, "fbp", psnr(x, e->reference, rep.peak), seconds_since(t0)});

            t0 = Clock::now();
            const TvResult r = reconstruct_tv(sparse, cfg.image_size, tv);
            const double tv_secs = seconds_since(t0);
            rep.measurements.push_back(
                {e->phantom.id, v, "tv", psnr(r.image, e->reference, rep.peak), tv_secs});
            if (first && v == cfg.sparsest()) {
                rep.tv_trace = r.trace;
                first = false;
            }

            for (auto& [variant, net] : nets) {
                t0 = Clock::now();
                const Image out = nn::infer(net, x);
                const double secs = seconds_since(t0);
                rep.measurements.push_back(
                    {e->phantom.id, v, variant.name(), psnr(out, e->reference, rep.peak), secs});
            }
        }
    }

    const fs::path dir = eval_dir(cfg);
    io::Csv per_image({"phantom", "views", "method", "psnr"});
    io::Csv timing({"phantom", "views", "method", "seconds"});
    for (const Measurement& m : rep.measurements) {
        per_image.row({m.phantom, std::to_string(m.views), m.method, num(m.psnr)});
        timing.row({m.phantom, std::to_string(m.views), m.method, num(m.seconds)});
    }
    per_image.save(dir / "psnr.csv");
    timing.save(dir / "timing.csv");

    std::vector<std::string> header{"views"};
    header.insert(header.end(), rep.methods.begin(), rep.methods.end());
    io::Csv summary(header);
    for (std::size_t v : cfg.ladder) {
        std::vector<std::string> row{std::to_string(v)};
        for (const std::string& m : rep.methods) row.push_back(num(rep.average_psnr(v, m)));
        summary.row(row);
    }
    summary.save(dir / "psnr_summary.csv");

    io::Csv trace({"iteration", "objective"});
    for (std::size_t k = 0; k < rep.tv_trace.size(); ++k) {
        trace.row({std::to_string(k), num(rep.tv_trace[k])});
    }
    trace.save(dir / "tv_trace.csv");
    io::Csv lambda({"lambda"});
    lambda.row({num(rep.tv_lambda)});
    lambda.save(dir / "tv_lambda.csv");
    return rep;
}

HomologyReport cmd_homology(const ExperimentConfig& cfg) {
    cfg.validate();
    const Dataset data = load_dataset(cfg);
    const std::size_t views = cfg.homology_views();
    std::vector<const DatasetEntry*> pool = data.split(Split::train);
    for (Split s : {Split::test, Split::validation}) {
        const auto more = data.split(s);
        pool.insert(pool.end(), more.begin(), more.end());
    }
    const std::size_t count = std::min(cfg.homology.images, pool.size());
    require(count >= 8, ErrorKind::sample_size,
            "homology needs at least 8 images per cloud, dataset has " +
                std::to_string(pool.size()));

    std::vector<Image> full, res;
    for (std::size_t i = 0; i < count; ++i) {
        full.push_back(pool[i]->reference);
        res.push_back(pool[i]->labels.at(views));
    }
    const homology::RipsOptions opts{cfg.homology.max_points, homology::H0Method::union_find};
    const auto grid = homology::uniform_grid(cfg.homology.grid);
    auto analyse = [&](const std::vector<Image>& images) {
        const auto dm = homology::normalized_distances(homology::image_point_cloud(images));
        return homology::rips_persistence(dm, 1, opts);
    };
    const auto bars_res = analyse(res);
    const auto bars_full = analyse(full);
    const auto curve_res = homology::betti_curve(bars_res, grid);
    const auto curve_full = homology::betti_curve(bars_full, grid);

    HomologyReport rep;
    rep.images = count;
    rep.views = views;
    rep.complexity = homology::complexity_verdict(curve_res, curve_full);
    rep.verdict = homology::verdict_label(rep.complexity.verdict, "residual", "full");
    rep.swapped_verdict = homology::verdict_label(
        homology::complexity_verdict(curve_full, curve_res).verdict, "full", "residual");

    const fs::path dir = cfg.out / "homology";
    io::Csv bars({"cloud", "dimension", "birth", "death"});
    for (const auto& [name, set] : {std::pair{"residual", &bars_res}, std::pair{"full", &bars_full}}) {
        for (const homology::Barcode& b : *set) {
            for (const homology::Interval& iv : b.intervals) {
                bars.row({name, std::to_string(b.dimension), num(iv.birth), num(iv.death)});
            }
        }
    }
    bars.save(dir / "barcodes.csv");
    io::Csv betti({"epsilon", "residual_beta0", "residual_beta1", "full_beta0", "full_beta1"});
    for (std::size_t k = 0; k < grid.size(); ++k) {
        betti.row({num(grid[k]), std::to_string(curve_res[0].beta[k]),
                   std::to_string(curve_res[1].beta[k]), std::to_string(curve_full[0].beta[k]),
                   std::to_string(curve_full[1].beta[k])});
    }
    betti.save(dir / "betti.csv");
    io::Csv verdict({"cloud", "images", "views", "beta0_area", "h1_persistence", "verdict"});
    verdict.row({"residual", std::to_string(count), std::to_string(views),
                 num(rep.complexity.beta0_area_first), num(rep.complexity.h1_persistence_first),
                 rep.verdict});
    verdict.row({"full", std::to_string(count), std::to_string(views),
                 num(rep.complexity.beta0_area_second), num(rep.complexity.h1_persistence_second),
                 rep.verdict});
    verdict.save(dir / "verdict.csv");
    return rep;
}

StreakReport streak_study(const ExperimentConfig& cfg, const Dataset& data) {
    const StreakConfig& sc = cfg.streaks;
    const Image targets = point_targets(sc.targets, 1.0, sc.image_size);
    const Image recon = fbp(project(targets, Geometry::standard(sc.image_size, sc.views)),
                            sc.image_size);
    StreakReport rep;
    const fs::path dir = cfg.out / "streaks";
    io::Csv counts({"target", "x", "y", "radius", "views", "streaks"});
    for (std::size_t k = 0; k < sc.targets.size(); ++k) {
        const auto col = static_cast<std::size_t>(std::lround(recon.col_coord(sc.targets[k].first)));
        const auto row = static_cast<std::size_t>(std::lround(recon.row_coord(sc.targets[k].second)));
        const auto dirs = streak_directions(recon, recon.pixel_center_x(col),
                                            recon.pixel_center_y(row), sc.radius);
        rep.counts.push_back(dirs.size());
        counts.row({std::to_string(k), num(sc.targets[k].first), num(sc.targets[k].second),
                    num(sc.radius), std::to_string(sc.views), std::to_string(dirs.size())});
    }
    counts.save(dir / "streak_counts.csv");
    io::save_image(dir / "point_targets_fbp.raw", recon);
    io::save_pgm(dir / "point_targets_fbp.pgm", recon, -0.05, 0.25);

    io::Csv energy({"phantom", "views", "residual_l2"});
    const auto tests = data.split(Split::test);
    for (std::size_t v : data.ladder) {
        double sum = 0.0;
        for (const DatasetEntry* e : tests) {
            const double l2 = l2_norm(e->labels.at(v));
            energy.row({e->phantom.id, std::to_string(v), num(l2)});
            sum += l2;
        }
        rep.residual_energy.emplace_back(v, sum / static_cast<double>(tests.size()));
    }
    energy.save(dir / "residual_energy.csv");
    return rep;
}

namespace {

void write_manifest(const ExperimentConfig& cfg) {
    json files = json::array();
    std::vector<fs::path> paths;
    for (const auto& entry : fs::recursive_directory_iterator(cfg.out)) {
        if (!entry.is_regular_file()) continue;
        const fs::path rel = fs::relative(entry.path(), cfg.out);
        if (rel == "manifest.json") continue;
        paths.push_back(rel);
    }
    std::sort(paths.begin(), paths.end());
    for (const fs::path& rel : paths) {
        const std::string bytes = io::read_file(cfg.out / rel);
        files.push_back({{"path", rel.generic_string()},
                         {"bytes", bytes.size()},
                         {"fnv1a", io::hex64(io::fnv1a64(bytes))}});
    }
    json sources = {
        {"eval/psnr.csv", {"dataset/manifest.json", "models/*.bin", "eval/tv_lambda.csv"}},
        {"eval/psnr_summary.csv", {"eval/psnr.csv"}},
        {"eval/timing.csv", {"dataset/manifest.json", "models/*.bin"}},
        {"eval/tv_trace.csv", {"dataset/manifest.json", "eval/tv_lambda.csv"}},
        {"eval/tv_lambda_grid.csv", {"dataset/manifest.json"}},
        {"homology/barcodes.csv", {"dataset/manifest.json"}},
        {"homology/betti.csv", {"homology/barcodes.csv"}},
        {"homology/verdict.csv", {"homology/betti.csv"}},
        {"models/*_history.csv", {"dataset/manifest.json", "models/*.json"}},
        {"streaks/streak_counts.csv", {"streaks/point_targets_fbp.raw"}},
        {"streaks/residual_energy.csv", {"dataset/manifest.json"}}};
    const json m = {{"config", config_to_json(cfg)}, {"files", files}, {"csv_sources", sources}};
    io::atomic_write(cfg.out / "manifest.json", m.dump(2) + "\n");
}

std::string markdown_report(const ExperimentConfig& cfg, const ReproduceReport& r) {
    std::ostringstream md;
    const MetricReport& m = r.metrics;
    md << "# Sparse-view CT desk reproduction\n\n";
    md << "Image size " << cfg.image_size << ", full reference " << cfg.full_views
       << " views, ladder";
    for (std::size_t v : cfg.ladder) md << " " << v;
    md << ". Networks: " << cfg.net.stages << " stages, base " << cfg.net.base_channels
       << " channels, " << cfg.train.epochs << " epochs on";
    for (std::size_t v : cfg.resolved_train_views()) md << " " << v;
    md << "-view inputs. Seed " << cfg.seed << ".\n\n";
    md << "Phantoms: " << cfg.phantoms.train << " train, " << cfg.phantoms.validation
       << " validation, " << cfg.phantoms.test << " test (disjoint seeds). PSNR peak "
       << fixed(m.peak, 4) << " (data range of the full-view references).\n\n";

    md << "## Average PSNR (dB) on held-out phantoms\n\n| views |";
    for (const std::string& name : m.methods) md << " " << name << " |";
    md << "\n|---|";
    for (std::size_t i = 0; i < m.methods.size(); ++i) md << "---|";
    md << "\n";
    for (std::size_t v : m.ladder) {
        md << "| " << v << " |";
        for (const std::string& name : m.methods) md << " " << fixed(m.average_psnr(v, name), 2) << " |";
        md << "\n";
    }
    md << "\nTV lambda " << num(m.tv_lambda) << ", " << cfg.tv.iterations << " iterations.\n\n";

    md << "## Wall-clock per image (s)\n\n| method | mean | max |\n|---|---|---|\n";
    for (const std::string& name : m.methods) {
        double sum = 0.0, mx = 0.0;
        std::size_t count = 0;
        for (const Measurement& x : m.measurements) {
            if (x.method != name) continue;
            sum += x.seconds;
            mx = std::max(mx, x.seconds);
            ++count;
        }
        md << "| " << name << " | " << fixed(sum / static_cast<double>(count), 4) << " | "
           << fixed(mx, 4) << " |\n";
    }

    md << "\n## Training\n\n| variant | final train loss | final val PSNR | seconds |\n|---|---|---|---|\n";
    for (const TrainSummary& t : r.training) {
        md << "| " << t.variant.name() << " | " << num(t.history.back().train_loss) << " | "
           << fixed(t.history.back().val_psnr, 2) << " | " << fixed(t.seconds, 1) << " |\n";
    }

    const HomologyReport& h = r.homology;
    md << "\n## Homology\n\n" << h.images << " residual images (" << h.views
       << " views) vs " << h.images << " full-view images.\n\n| cloud | beta0 area | H1 persistence |\n|---|---|---|\n";
    md << "| residual | " << fixed(h.complexity.beta0_area_first, 4) << " | "
       << fixed(h.complexity.h1_persistence_first, 4) << " |\n";
    md << "| full | " << fixed(h.complexity.beta0_area_second, 4) << " | "
       << fixed(h.complexity.h1_persistence_second, 4) << " |\n\nVerdict: " << h.verdict << ".\n";

    md << "\n## Streaks\n\n" << cfg.streaks.views << "-view FBP of " << cfg.streaks.targets.size()
       << " point targets, streak orientations per target:";
    for (std::size_t c : r.streaks.counts) md << " " << c;
    md << ".\n\nMean residual L2 norm:";
    for (const auto& [v, e] : r.streaks.residual_energy) md << " " << v << " views " << fixed(e, 4) << ";";
    md << "\n\nTotal runtime " << fixed(r.seconds, 1) << " s.\n";
    return md.str();
}

}  // namespace

ReproduceReport cmd_reproduce(const ExperimentConfig& cfg) {
    cfg.validate();
    const auto t0 = Clock::now();
    ReproduceReport r;
    io::atomic_write(cfg.out / "resolved_config.json", config_to_json(cfg).dump(2) + "\n");
    r.dataset = cmd_dataset(cfg);
    r.homology = cmd_homology(cfg);
    for (const Variant& v : all_variants()) r.training.push_back(cmd_train(cfg, v));
    r.metrics = cmd_eval(cfg);
    r.streaks = streak_study(cfg, r.dataset);

    ExperimentConfig resolved = cfg;
    resolved.tv.lambda = r.metrics.tv_lambda;
    io::atomic_write(cfg.out / "resolved_config.json", config_to_json(resolved).dump(2) + "\n");
    r.seconds = seconds_since(t0);
    r.report = cfg.out / "report.md";
    io::atomic_write(r.report, markdown_report(resolved, r));
    write_manifest(resolved);
    return r;
}

std::vector<fs::path> deterministic_csvs(const fs::path& out) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".csv") continue;
        if (entry.path().filename() == "timing.csv") continue;
        files.push_back(fs::relative(entry.path(), out));
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace svct::pipeline
