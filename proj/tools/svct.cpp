#include <cstdio>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "svct/error.hpp"
#include "svct/io.hpp"
#include "svct/nn/checkpoint.hpp"
#include "svct/parallel.hpp"
#include "svct/phantom.hpp"
#include "svct/pipeline.hpp"
#include "svct/tomo.hpp"
#include "svct/tv.hpp"

namespace {

using namespace svct;
using namespace svct::pipeline;

struct Globals {
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<bool> deterministic;
    std::optional<std::string> out;
};

ExperimentConfig resolve(const Globals& g) {
    json doc = json::object();
    if (!g.config.empty()) {
        try {
            doc = json::parse(io::read_file(g.config));
        } catch (const json::exception& e) {
            fail(ErrorKind::config, g.config + ": " + e.what());
        } catch (const Error& e) {
            fail(ErrorKind::config, e.what());
        }
    }
    for (const std::string& o : g.overrides) apply_override(doc, o);
    if (g.seed) doc["seed"] = *g.seed;
    if (g.deterministic) doc["deterministic"] = *g.deterministic;
    if (g.out) doc["out"] = *g.out;
    ExperimentConfig cfg = config_from_json(doc);
    set_worker_threads(cfg.deterministic ? 1 : std::max(1U, std::thread::hardware_concurrency()));
    return cfg;
}

void print_history(const TrainSummary& s) {
    std::printf("%s: %zu epochs, final loss %.6g, val PSNR %.3f dB, %.1f s\n  checkpoint %s (%s)\n",
                s.variant.name().c_str(), s.history.size(), s.history.back().train_loss,
                s.history.back().val_psnr, s.seconds, s.checkpoint.c_str(),
                s.checkpoint_hash.c_str());
}

void print_metrics(const MetricReport& m) {
    std::printf("TV lambda %g\n%-6s", m.tv_lambda, "views");
    for (const std::string& name : m.methods) std::printf(" %16s", name.c_str());
    std::printf("\n");
    for (std::size_t v : m.ladder) {
        std::printf("%-6zu", v);
        for (const std::string& name : m.methods) std::printf(" %16.3f", m.average_psnr(v, name));
        std::printf("\n");
    }
}

void print_homology(const HomologyReport& h) {
    std::printf("%zu images per cloud at %zu views\n", h.images, h.views);
    std::printf("residual: beta0 area %.4f, H1 persistence %.4f\n", h.complexity.beta0_area_first,
                h.complexity.h1_persistence_first);
    std::printf("full:     beta0 area %.4f, H1 persistence %.4f\n", h.complexity.beta0_area_second,
                h.complexity.h1_persistence_second);
    std::printf("verdict: %s\n", h.verdict.c_str());
}

Sinogram input_sinogram(const std::string& path, std::size_t views) {
    Sinogram s = io::load_sinogram(path);
    return views == 0 ? s : subsample_views(s, views);
}

int run(int argc, char** argv) {
    CLI::App app{"Sparse-view CT: simulation, reconstruction, residual networks and homology"};
    app.require_subcommand(1);
    Globals g;
    auto add_globals = [&](CLI::App* sub) {
        sub->add_option("--config", g.config, "JSON experiment config");
        sub->add_option("--set", g.overrides, "Override a config key, e.g. train.epochs=5");
        sub->add_option("--seed", g.seed, "Experiment seed");
        sub->add_option("--deterministic", g.deterministic, "Single worker thread (true/false)");
        sub->add_option("--out", g.out, "Output directory");
    };

    auto* dataset = app.add_subcommand("dataset", "Simulate phantoms and write X/Y pairs");
    auto* train = app.add_subcommand("train", "Train one network variant");
    std::string mode = "residual", scale = "multi";
    bool all = false;
    train->add_option("--mode", mode, "residual or image");
    train->add_option("--scale", scale, "multi or single");
    train->add_flag("--all", all, "Train all four variants");
    auto* eval = app.add_subcommand("eval", "Evaluate FBP, TV and all trained variants");
    auto* hom = app.add_subcommand("homology", "Persistent homology of residual vs full images");
    auto* repro = app.add_subcommand("reproduce", "Run the whole experiment and write report.md");

    auto* phantom = app.add_subcommand("phantom", "Rasterize a phantom and its sinogram");
    std::string kind = "shepp";
    std::uint64_t phantom_seed = 0;
    std::size_t size = 0, views = 0;
    phantom->add_option("--kind", kind, "shepp, random or disk")
        ->check(CLI::IsMember({"shepp", "random", "disk"}));
    phantom->add_option("--phantom-seed", phantom_seed, "Seed for --kind random");
    phantom->add_option("--size", size, "Image size (default: config image_size)");
    phantom->add_option("--views", views, "Projection views (default: config full_views)");

    auto* fbp_cmd = app.add_subcommand("fbp", "Filtered back-projection of a sinogram");
    auto* tv_cmd = app.add_subcommand("tv", "TV-regularized reconstruction of a sinogram");
    std::string sinogram, image, checkpoint;
    std::optional<double> lambda;
    for (CLI::App* sub : {fbp_cmd, tv_cmd}) {
        sub->add_option("--sinogram", sinogram, "Sinogram .raw file")->required();
        sub->add_option("--views", views, "Keep every k-th view to reach this count");
        sub->add_option("--size", size, "Image size (default: config image_size)");
    }
    tv_cmd->add_option("--lambda", lambda, "TV weight (default: config tv.lambda)");

    auto* infer_cmd = app.add_subcommand("infer", "Apply a trained network to an image");
    infer_cmd->add_option("--checkpoint", checkpoint, "Checkpoint .bin file")->required();
    infer_cmd->add_option("--image", image, "Input image .raw file")->required();

    for (CLI::App* sub : {dataset, train, eval, hom, repro, phantom, fbp_cmd, tv_cmd, infer_cmd}) {
        add_globals(sub);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const ExperimentConfig cfg = resolve(g);
    if (dataset->parsed()) {
        const Dataset d = cmd_dataset(cfg);
        std::printf("%zu phantoms, %zu (X, Y) pairs in %s\n", d.entries.size(), d.pair_count(),
                    d.root.c_str());
    } else if (train->parsed()) {
        const std::vector<Variant> variants = all ? all_variants()
                                                  : std::vector<Variant>{parse_variant(mode, scale)};
        for (const Variant& v : variants) print_history(cmd_train(cfg, v));
    } else if (eval->parsed()) {
        print_metrics(cmd_eval(cfg));
    } else if (hom->parsed()) {
        print_homology(cmd_homology(cfg));
    } else if (repro->parsed()) {
        const ReproduceReport r = cmd_reproduce(cfg);
        print_homology(r.homology);
        for (const TrainSummary& s : r.training) print_history(s);
        print_metrics(r.metrics);
        std::printf("report %s (%.1f s)\n", r.report.c_str(), r.seconds);
    } else if (phantom->parsed()) {
        const std::size_t n = size ? size : cfg.image_size;
        const std::size_t v = views ? views : cfg.full_views;
        const EllipsePhantom ph = kind == "shepp"    ? shepp_logan()
                                  : kind == "random" ? random_phantom(phantom_seed)
                                                     : centered_disk(0.5);
        const Image img = rasterize(ph, n);
        io::save_image(cfg.out / "phantom.raw", img);
        io::save_pgm(cfg.out / "phantom.pgm", img, 0.0, 1.0);
        io::save_sinogram(cfg.out / "sinogram.raw", project(img, Geometry::standard(n, v)));
        std::printf("wrote %s and %s\n", (cfg.out / "phantom.raw").c_str(),
                    (cfg.out / "sinogram.raw").c_str());
    } else if (fbp_cmd->parsed()) {
        const Image img = fbp(input_sinogram(sinogram, views), size ? size : cfg.image_size);
        io::save_image(cfg.out / "fbp.raw", img);
        std::printf("wrote %s\n", (cfg.out / "fbp.raw").c_str());
    } else if (tv_cmd->parsed()) {
        const double l = lambda ? *lambda : cfg.tv.lambda.value_or(0.0);
        require(lambda || cfg.tv.lambda, ErrorKind::config, "tv needs --lambda or tv.lambda");
        const TvResult r =
            reconstruct_tv(input_sinogram(sinogram, views), size ? size : cfg.image_size,
                           cfg.tv.config(l));
        io::save_image(cfg.out / "tv.raw", r.image);
        io::Csv trace({"iteration", "objective"});
        for (std::size_t k = 0; k < r.trace.size(); ++k) {
            trace.row({std::to_string(k), io::format_number(r.trace[k])});
        }
        trace.save(cfg.out / "tv_trace.csv");
        std::printf("wrote %s (objective %.6g -> %.6g)\n", (cfg.out / "tv.raw").c_str(),
                    r.trace.front(), r.trace.back());
    } else if (infer_cmd->parsed()) {
        nn::Network net = nn::load_checkpoint(checkpoint);
        io::save_image(cfg.out / "infer.raw", nn::infer(net, io::load_image(image)));
        std::printf("wrote %s\n", (cfg.out / "infer.raw").c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const svct::Error& e) {
        std::cerr << "error (" << svct::to_string(e.kind()) << "): " << e.what() << "\n";
        return e.numerical() ? 3 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
