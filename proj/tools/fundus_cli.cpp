#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "fundus/augment.hpp"
#include "fundus/cam.hpp"
#include "fundus/ctran.hpp"
#include "fundus/curation.hpp"
#include "fundus/error.hpp"
#include "fundus/image_io.hpp"
#include "fundus/imaging.hpp"
#include "fundus/imbalance.hpp"
#include "fundus/manifest.hpp"
#include "fundus/metrics.hpp"

namespace fs = std::filesystem;
using namespace fundus;

namespace {

[[noreturn]] void usage_error(const std::string& detail) { throw Error("cli", ErrorCode::InvalidArgument, detail); }

// ---------------------------------------------------------------------------
// Worker pool: runs fn(i) for i in [0, n) on `jobs` threads. Results keep the
// input order; the first failing index (by position) is rethrown.

template <class F>
auto parallel_map(std::size_t n, unsigned jobs, F fn) {
    using R = decltype(fn(std::size_t{}));
    std::vector<std::optional<R>> results(n);
    std::vector<std::exception_ptr> errors(n);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                results[i].emplace(fn(i));
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), std::max<std::size_t>(n, 1)));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<R> out;
    out.reserve(n);
    for (auto& r : results) out.push_back(std::move(*r));
    return out;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    // splitmix64 finaliser over the combined key
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (a + 1) + 0xBF58476D1CE4E5B9ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// File helpers

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

struct ImageInput {
    std::string id;
    fs::path path;
};

// Files keep their given order; directories expand to their sorted images.
std::vector<ImageInput> collect_images(const std::vector<std::string>& inputs) {
    std::vector<ImageInput> out;
    std::set<std::string> seen;
    auto add = [&](const fs::path& p) {
        const auto id = p.stem().string();
        if (!is_valid_id(id)) throw Error("cli", ErrorCode::InvalidId, "'" + id + "' from " + p.string());
        if (!seen.insert(id).second) throw Error("cli", ErrorCode::DuplicateId, "'" + id + "' from " + p.string());
        out.push_back({id, p});
    };
    for (const auto& in : inputs) {
        const fs::path p(in);
        if (fs::is_directory(p)) {
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(p))
                if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& f : files) add(f);
        } else if (fs::is_regular_file(p)) {
            add(p);
        } else {
            throw Error("cli", ErrorCode::IoError, "no such file or directory: " + in);
        }
    }
    if (out.empty()) usage_error("--input: no images found");
    return out;
}

void write_output(const std::string& target, const std::string& text) {
    if (target == "-") {
        std::cout << text;
        std::cout.flush();
        return;
    }
    std::ofstream out(target, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cli", ErrorCode::IoError, "cannot write " + target);
    out << text;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error("cli", ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

LabelCatalog catalog_for(const std::string& manifest_path, const std::string& labels_path) {
    if (!labels_path.empty()) return load_label_catalog(labels_path);
    return LabelCatalog::from_acronyms(read_manifest_header(manifest_path));
}

DatasetManifest read_manifest(const std::string& path, const std::string& labels_path) {
    return load_manifest(path, catalog_for(path, labels_path));
}

std::string manifest_text(const DatasetManifest& m) {
    std::ostringstream out;
    write_manifest_csv(out, m);
    return out.str();
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// ---------------------------------------------------------------------------
// Subcommand options

struct Globals {
    unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    std::string log_level = "info";
};

struct CannyOpts {
    CannyConfig cfg;
    void add(CLI::App* app) {
        app->add_option("--canny-sigma", cfg.sigma, "Gaussian smoothing sigma")->check(CLI::PositiveNumber);
        app->add_option("--canny-low", cfg.low, "hysteresis low threshold")->check(CLI::NonNegativeNumber);
        app->add_option("--canny-high", cfg.high, "hysteresis high threshold")->check(CLI::NonNegativeNumber);
    }
};

struct ScoreQualityOpts {
    std::vector<std::string> inputs;
    std::string out = "-";
    CannyOpts canny;
};

struct ExtractFovOpts {
    std::vector<std::string> inputs;
    std::string out_dir;
    std::string report = "-";
    bool strict = false;
};

struct AssembleOpts {
    std::vector<std::string> sources;
    std::string label_map;
    std::string labels;
    std::string scores;
    std::string image_root;
    std::size_t min_count = 30;
    double drop_fraction = 0.10;
    std::optional<double> threshold;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    std::string out_dir;
    CannyOpts canny;
};

struct ResampleOpts {
    std::string manifest;
    std::string labels;
    std::string algo = "lp-ros";
    double pct = 10.0;
    std::uint64_t seed = 0;
    std::string out = "-";
};

struct ImbalanceOpts {
    std::string manifest;
    std::string labels;
    std::vector<std::string> include;
    std::string out = "-";
};

struct AugmentOpts {
    std::vector<std::string> inputs;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::size_t count = 1;
    std::string trace;
};

struct EvaluateOpts {
    std::string manifest;
    std::string preds;
    std::string labels;
    double threshold = 0.5;
    std::string out;
    std::string format = "table";
};

struct LossOpts {
    std::string kind = "poly";
    LossConfig cfg;
    void add(CLI::App* app) {
        app->add_option("--loss", kind, "loss function")
            ->check(CLI::IsMember({"bce", "wbce", "focal", "asl", "poly"}));
        app->add_option("--focal-gamma", cfg.focal_gamma, "focal loss gamma")->check(CLI::NonNegativeNumber);
        app->add_option("--asl-gamma-pos", cfg.asl_gamma_pos, "ASL positive gamma")->check(CLI::NonNegativeNumber);
        app->add_option("--asl-gamma-neg", cfg.asl_gamma_neg, "ASL negative gamma")->check(CLI::NonNegativeNumber);
        app->add_option("--asl-clip", cfg.asl_clip, "ASL probability margin")->check(CLI::Range(0.0, 0.999999));
        app->add_option("--poly-epsilon", cfg.poly_epsilon, "Poly-1 epsilon");
    }
    LossConfig resolve() const {
        LossConfig c = cfg;
        c.kind = *parse_loss_kind(kind);
        return c;
    }
};

struct TrainToyOpts {
    std::size_t layers = 3;
    std::size_t dim = 32;
    double lr = 1e-5;
    std::size_t batch = 16;
    std::size_t epochs = 10;
    double dropout = 0.1;
    std::uint64_t seed = 0;
    LossOpts loss;
    std::string manifest;
    std::string labels;
    std::string image_root = ".";
    std::size_t grid = 4;
    std::uint64_t feature_seed = 0;
    std::size_t synthetic = 0;
    std::size_t synthetic_labels = 4;
    double holdout = 0.25;
    std::string eval_manifest;
    std::string preds;
    std::string out;
};

struct CamOpts {
    std::string checkpoint;
    std::vector<std::string> inputs;
    std::string label;
    std::string out_dir;
    std::size_t grid = 4;
    std::uint64_t feature_seed = 0;
};

// ---------------------------------------------------------------------------
// Subcommand bodies

int run_score_quality(const ScoreQualityOpts& o, const Globals& g) {
    const auto images = collect_images(o.inputs);
    spdlog::info("scoring {} images on {} workers", images.size(), g.jobs);
    auto scores = parallel_map(images.size(), g.jobs, [&](std::size_t i) {
        return QualityEntry{images[i].id, quality_score(read_image(images[i].path), o.canny.cfg)};
    });
    std::size_t degenerate = 0;
    for (const auto& s : scores)
        if (s.quality.degenerate) {
            ++degenerate;
            spdlog::warn("{}: no edges detected, score 0", s.id);
        }
    std::ostringstream out;
    write_quality_report(out, std::move(scores));
    write_output(o.out, out.str());
    spdlog::info("{} scored, {} degenerate", images.size(), degenerate);
    return 0;
}

int run_extract_fov(const ExtractFovOpts& o, const Globals& g) {
    const auto images = collect_images(o.inputs);
    ensure_dir(o.out_dir);
    struct Row {
        Rect rect;
        bool fallback;
    };
    auto rows = parallel_map(images.size(), g.jobs, [&](std::size_t i) {
        const auto img = read_image(images[i].path);
        Row row{{0, 0, img.width() - 1, img.height() - 1}, false};
        try {
            row.rect = extract_fov(img);
        } catch (const Error& e) {
            if (o.strict || e.code() != ErrorCode::EmptyFov) throw;
            row.fallback = true;
        }
        write_png(crop(img, row.rect), fs::path(o.out_dir) / (images[i].id + ".png"));
        return row;
    });
    std::ostringstream out;
    out << "id,x0,y0,x1,y1,fallback\n";
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto& r = rows[i];
        if (r.fallback) spdlog::warn("{}: empty field of view, kept the full image", images[i].id);
        out << images[i].id << ',' << r.rect.x0 << ',' << r.rect.y0 << ',' << r.rect.x1 << ',' << r.rect.y1 << ','
            << (r.fallback ? 1 : 0) << '\n';
    }
    write_output(o.report, out.str());
    spdlog::info("cropped {} images into {}", images.size(), o.out_dir);
    return 0;
}

int run_assemble(const AssembleOpts& o, const Globals& g) {
    std::vector<SourceManifest> sources;
    for (const auto& spec : o.sources) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
            usage_error("--source: expected NAME=PATH, got '" + spec + "'");
        sources.push_back(load_source_manifest(spec.substr(eq + 1), spec.substr(0, eq)));
        spdlog::info("source {}: {} samples, {} labels", sources.back().name, sources.back().samples.size(),
                     sources.back().label_names.size());
    }
    const auto map = load_label_map(o.label_map);
    const auto catalog = o.labels.empty() ? LabelCatalog::from_acronyms(map.targets()) : load_label_catalog(o.labels);

    const auto merged = merge(sources, catalog, map);
    spdlog::info("merged {} samples over {} labels", merged.size(), merged.catalog().size());

    auto folded = fold_rare_labels(merged, o.min_count);
    spdlog::info("folded {} labels into OTHER, {} samples moved", folded.report.dropped_labels.size(),
                 folded.report.moved_samples);

    std::map<std::string, double> scores;
    if (!o.scores.empty()) {
        scores = load_quality_scores(o.scores);
    } else {
        const auto& samples = folded.manifest.samples();
        const auto q = parallel_map(samples.size(), g.jobs, [&](std::size_t i) {
            return quality_score(read_image(fs::path(o.image_root) / samples[i].image_path), o.canny.cfg).score;
        });
        for (std::size_t i = 0; i < samples.size(); ++i) scores.emplace(samples[i].id, q[i]);
    }

    QualityFilterMode mode = DropFraction{o.drop_fraction};
    if (o.threshold) mode = ScoreThreshold{*o.threshold};
    const auto filtered = quality_filter(folded.manifest, scores, mode);
    spdlog::info("quality filter kept {} of {}", filtered.size(), folded.manifest.size());

    const auto parts = split(filtered, o.val_fraction, o.seed);
    ensure_dir(o.out_dir);
    const fs::path dir(o.out_dir);
    save_manifest(filtered, dir / "manifest.csv");
    save_manifest(parts.train, dir / "train.csv");
    save_manifest(parts.validation, dir / "validation.csv");
    write_output((dir / "fold_report.json").string(), fold_report_json(folded.report) + "\n");

    nlohmann::ordered_json summary;
    summary["merged"] = merged.size();
    summary["folded_labels"] = folded.report.dropped_labels;
    summary["samples"] = filtered.size();
    summary["train"] = parts.train.size();
    summary["validation"] = parts.validation.size();
    summary["labels"] = filtered.catalog().acronyms();
    write_output("-", dump(summary));
    return 0;
}

int run_resample(const ResampleOpts& o, const Globals&) {
    const auto m = read_manifest(o.manifest, o.labels);
    DatasetManifest out = m;
    if (o.algo == "lp-ros") out = lp_ros(m, o.pct, o.seed);
    else if (o.algo == "lp-rus") out = lp_rus(m, o.pct, o.seed);
    else if (o.algo == "ml-ros") out = ml_ros(m, o.pct, o.seed);
    else out = ml_rus(m, o.pct, o.seed);
    spdlog::info("{} at {}%: {} -> {} samples", o.algo, o.pct, m.size(), out.size());
    write_output(o.out, manifest_text(out));
    return 0;
}

int run_imbalance(const ImbalanceOpts& o, const Globals&) {
    const auto m = read_manifest(o.manifest, o.labels);
    std::vector<std::size_t> include;
    for (const auto& acr : o.include) {
        const auto idx = m.catalog().index_of(acr);
        if (!idx) usage_error("--include: unknown label '" + acr + "'");
        include.push_back(*idx);
    }
    write_output(o.out, imbalance_report_json(imbalance_report(m, include)) + "\n");
    return 0;
}

int run_augment(const AugmentOpts& o, const Globals& g) {
    const auto images = collect_images(o.inputs);
    ensure_dir(o.out_dir);
    const AugmentConfig cfg;
    auto traces = parallel_map(images.size(), g.jobs, [&](std::size_t i) {
        const auto img = read_image(images[i].path);
        nlohmann::ordered_json copies = nlohmann::ordered_json::array();
        for (std::size_t k = 0; k < o.count; ++k) {
            const auto seed = mix_seed(o.seed, i, k);
            auto r = augment_traced(img, cfg, seed);
            const auto name = images[i].id + "_aug" + std::to_string(k) + ".png";
            write_png(r.image, fs::path(o.out_dir) / name);
            nlohmann::ordered_json applied = nlohmann::ordered_json::array();
            for (const auto& t : r.applied) applied.push_back({{"name", t.name}, {"params", t.params}});
            copies.push_back({{"file", name}, {"seed", seed}, {"applied", applied}});
        }
        return copies;
    });
    if (!o.trace.empty()) {
        std::string lines;
        for (const auto& t : traces)
            for (const auto& c : t) lines += c.dump() + "\n";
        write_output(o.trace, lines);
    }
    spdlog::info("wrote {} augmented images to {}", images.size() * o.count, o.out_dir);
    return 0;
}

int run_evaluate(const EvaluateOpts& o, const Globals&) {
    const auto m = read_manifest(o.manifest, o.labels);
    const auto p = load_predictions(o.preds, m.catalog());
    const auto report = riadd_report(m, p, o.threshold);
    for (const auto& acr : report.undefined) spdlog::warn("{}: AP/AUC undefined, excluded from the means", acr);
    const auto json = metric_report_json(report) + "\n";
    if (!o.out.empty()) write_output(o.out, json);
    write_output("-", o.format == "json" ? json : metric_report_table(report));
    return 0;
}

std::vector<std::vector<double>> predict_all(const ctran::CTranParams& params, const std::vector<ctran::Example>& data,
                                             unsigned jobs) {
    return parallel_map(data.size(), jobs, [&](std::size_t i) {
        const auto v = ctran::predict(params, data[i].features);
        return std::vector<double>(v.data(), v.data() + v.size());
    });
}

double mean_auc(const std::vector<ctran::Example>& data, const std::vector<std::vector<double>>& probs,
                std::size_t n_labels) {
    double sum = 0;
    std::size_t used = 0;
    for (std::size_t j = 0; j < n_labels; ++j) {
        std::vector<std::uint8_t> y;
        std::vector<double> p;
        for (std::size_t i = 0; i < data.size(); ++i) {
            y.push_back(data[i].y[j]);
            p.push_back(probs[i][j]);
        }
        try {
            sum += auc(y, p);
            ++used;
        } catch (const Error&) {
        }
    }
    return used ? sum / double(used) : 0.0;
}

std::vector<ctran::Example> manifest_examples(const DatasetManifest& m, const TrainToyOpts& o, unsigned jobs) {
    return parallel_map(m.size(), jobs, [&](std::size_t i) {
        const auto img = read_image(fs::path(o.image_root) / m[i].image_path);
        return ctran::Example{ctran::toy_feature_provider(img, o.grid, o.grid, o.dim, o.feature_seed), m[i].labels};
    });
}

int run_train_toy(const TrainToyOpts& o, const Globals& g) {
    if (o.synthetic == 0 && o.manifest.empty()) usage_error("--manifest or --synthetic is required");
    if (o.synthetic > 0 && !o.manifest.empty()) usage_error("--manifest and --synthetic are exclusive");
    if (!o.preds.empty() && o.eval_manifest.empty()) usage_error("--preds needs --eval-manifest");

    std::vector<ctran::Example> train, held;
    std::vector<std::string> labels;
    if (o.synthetic > 0) {
        auto all = ctran::synthetic_task(o.synthetic, o.synthetic_labels, o.dim, o.grid, o.seed);
        const auto n_held = static_cast<std::size_t>(o.holdout * double(all.size()));
        held.assign(all.end() - static_cast<std::ptrdiff_t>(n_held), all.end());
        all.resize(all.size() - n_held);
        train = std::move(all);
        for (std::size_t j = 0; j < o.synthetic_labels; ++j) labels.push_back("L" + std::to_string(j));
    } else {
        const auto m = read_manifest(o.manifest, o.labels);
        train = manifest_examples(m, o, g.jobs);
        labels = m.catalog().acronyms();
    }
    if (train.empty()) usage_error("no training samples");

    auto loss = o.loss.resolve();
    if (loss.kind == LossKind::WBCE) {
        std::vector<std::size_t> counts(labels.size(), 0);
        for (const auto& ex : train)
            for (std::size_t j = 0; j < counts.size(); ++j) counts[j] += ex.y[j];
        loss.weights = inverse_frequency_weights(counts, train.size());
    }
    loss.validate();

    auto params = ctran::CTranParams::init(labels.size(), o.dim, o.layers, o.seed);
    ctran::FitConfig fc;
    fc.train.lr = o.lr;
    fc.train.dropout = o.dropout;
    fc.epochs = o.epochs;
    fc.batch = o.batch;
    fc.seed = o.seed;
    spdlog::info("training {} layers, d={}, {} labels on {} samples ({} loss)", o.layers, o.dim, labels.size(),
                 train.size(), o.loss.kind);
    const auto losses = ctran::fit(params, train, loss, fc);
    for (std::size_t e = 0; e < losses.size(); ++e) spdlog::info("epoch {}: loss {:.6f}", e + 1, losses[e]);

    ctran::save_checkpoint(params, labels, o.out);

    nlohmann::ordered_json summary;
    summary["samples"] = train.size();
    summary["epochs"] = losses.size();
    summary["epoch_loss"] = losses;
    if (!held.empty()) summary["holdout_ml_auc"] = mean_auc(held, predict_all(params, held, g.jobs), labels.size());

    if (!o.eval_manifest.empty()) {
        const auto em = read_manifest(o.eval_manifest, o.labels);
        if (em.catalog().acronyms() != labels) usage_error("--eval-manifest: label columns differ from training");
        const auto data = manifest_examples(em, o, g.jobs);
        const auto probs = predict_all(params, data, g.jobs);
        summary["eval_ml_auc"] = mean_auc(data, probs, labels.size());
        if (!o.preds.empty()) {
            std::vector<std::string> ids;
            std::vector<double> flat;
            for (std::size_t i = 0; i < em.size(); ++i) {
                ids.push_back(em[i].id);
                flat.insert(flat.end(), probs[i].begin(), probs[i].end());
            }
            save_predictions(PredictionMatrix(std::move(ids), labels.size(), std::move(flat)), em.catalog(), o.preds);
        }
    }
    write_output("-", dump(summary));
    return 0;
}

int run_cam(const CamOpts& o, const Globals& g) {
    const auto ck = ctran::load_checkpoint(o.checkpoint);
    const auto it = std::find(ck.labels.begin(), ck.labels.end(), o.label);
    if (it == ck.labels.end()) usage_error("--label: '" + o.label + "' is not in the checkpoint");
    const auto weights = head_weights(ck.params, static_cast<std::size_t>(it - ck.labels.begin()));
    const auto images = collect_images(o.inputs);
    ensure_dir(o.out_dir);
    parallel_map(images.size(), g.jobs, [&](std::size_t i) {
        const auto img = read_image(images[i].path);
        const auto features = ctran::toy_feature_provider(img, o.grid, o.grid, ck.params.dim(), o.feature_seed);
        const auto overlay = render_cam(cam(features, weights), img.width(), img.height(), img);
        write_png(overlay, fs::path(o.out_dir) / (images[i].id + "_" + o.label + ".png"));
        return 0;
    });
    spdlog::info("wrote {} overlays for {}", images.size(), o.label);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    auto logger = spdlog::stderr_logger_mt("fundus");
    logger->set_pattern("%l: %v");
    spdlog::set_default_logger(logger);

    CLI::App app{"Retinal fundus multi-label toolkit"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file mirroring the flags; command-line flags win");

    Globals g;
    app.add_option("--jobs", g.jobs, "worker threads for batch image work")->check(CLI::PositiveNumber);
    app.add_option("--log-level", g.log_level, "stderr log level")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

    ScoreQualityOpts sq;
    auto* c_sq = app.add_subcommand("score-quality", "blur-metric quality report for images");
    c_sq->add_option("--input", sq.inputs, "image files or directories")->required();
    c_sq->add_option("--out", sq.out, "report CSV path, - for stdout");
    sq.canny.add(c_sq);

    ExtractFovOpts fov;
    auto* c_fov = app.add_subcommand("extract-fov", "crop images to their field of view");
    c_fov->add_option("--input", fov.inputs, "image files or directories")->required();
    c_fov->add_option("--out-dir", fov.out_dir, "directory for cropped PNGs")->required();
    c_fov->add_option("--report", fov.report, "rectangle CSV path, - for stdout");
    c_fov->add_flag("--strict", fov.strict, "fail on an empty field of view instead of keeping the full image");

    AssembleOpts as;
    auto* c_as = app.add_subcommand("assemble", "merge sources, fold rare labels, filter by quality, split");
    c_as->add_option("--source", as.sources, "NAME=PATH source manifest, repeatable")->required();
    c_as->add_option("--label-map", as.label_map, "source,source_label,target_label CSV")->required();
    c_as->add_option("--labels", as.labels, "target catalog CSV (default: label-map targets)");
    auto* o_scores = c_as->add_option("--scores", as.scores, "quality report CSV keyed by merged id");
    auto* o_root = c_as->add_option("--image-root", as.image_root, "score images under this root instead");
    o_scores->excludes(o_root);
    c_as->add_option("--min-count", as.min_count, "labels with fewer positives fold into OTHER")
        ->check(CLI::PositiveNumber);
    auto* o_drop = c_as->add_option("--drop-fraction", as.drop_fraction, "fraction of lowest-scoring samples removed")
                       ->check(CLI::Range(0.0, 1.0));
    auto* o_thr = c_as->add_option("--threshold", as.threshold, "remove samples scoring below this instead");
    o_drop->excludes(o_thr);
    c_as->add_option("--val-fraction", as.val_fraction, "validation share of the stratified split")
        ->check(CLI::Range(0.0, 1.0));
    c_as->add_option("--seed", as.seed, "split seed");
    c_as->add_option("--out-dir", as.out_dir, "output directory")->required();
    as.canny.add(c_as);

    ResampleOpts rs;
    auto* c_rs = app.add_subcommand("resample", "rebalance a manifest");
    c_rs->add_option("--manifest", rs.manifest, "input manifest CSV")->required()->check(CLI::ExistingFile);
    c_rs->add_option("--labels", rs.labels, "catalog CSV (default: manifest header)");
    c_rs->add_option("--algo", rs.algo, "resampling algorithm")
        ->check(CLI::IsMember({"lp-ros", "lp-rus", "ml-ros", "ml-rus"}));
    c_rs->add_option("--pct", rs.pct, "budget as a percentage of the manifest size")->check(CLI::Range(0.0, 100.0));
    c_rs->add_option("--seed", rs.seed, "sampling seed");
    c_rs->add_option("--out", rs.out, "output manifest CSV, - for stdout");

    ImbalanceOpts ib;
    auto* c_ib = app.add_subcommand("imbalance-report", "per-label IR, meanIR and CVIR as JSON");
    c_ib->add_option("--manifest", ib.manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
    c_ib->add_option("--labels", ib.labels, "catalog CSV (default: manifest header)");
    c_ib->add_option("--include", ib.include, "restrict to these acronyms");
    c_ib->add_option("--out", ib.out, "JSON path, - for stdout");

    AugmentOpts au;
    auto* c_au = app.add_subcommand("augment", "write augmented copies of images");
    c_au->add_option("--input", au.inputs, "image files or directories")->required();
    c_au->add_option("--out-dir", au.out_dir, "directory for augmented PNGs")->required();
    c_au->add_option("--seed", au.seed, "augmentation seed");
    c_au->add_option("--count", au.count, "copies per input")->check(CLI::PositiveNumber);
    c_au->add_option("--trace", au.trace, "JSON-lines log of applied transforms");

    EvaluateOpts ev;
    auto* c_ev = app.add_subcommand("evaluate", "RIADD-style metric report");
    c_ev->add_option("--manifest", ev.manifest, "ground-truth manifest CSV")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--preds", ev.preds, "prediction CSV")->required()->check(CLI::ExistingFile);
    c_ev->add_option("--labels", ev.labels, "catalog CSV (default: manifest header)");
    c_ev->add_option("--threshold", ev.threshold, "decision threshold for F1")->check(CLI::Range(0.0, 1.0));
    c_ev->add_option("--out", ev.out, "also write the JSON report here");
    c_ev->add_option("--format", ev.format, "stdout format")->check(CLI::IsMember({"table", "json"}));

    TrainToyOpts tt;
    auto* c_tt = app.add_subcommand("train-toy", "train the label-mask transformer on toy features");
    c_tt->add_option("--layers", tt.layers, "encoder layers")->check(CLI::PositiveNumber);
    c_tt->add_option("--dim", tt.dim, "token dimension")->check(CLI::PositiveNumber);
    c_tt->add_option("--lr", tt.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    c_tt->add_option("--batch", tt.batch, "mini-batch size")->check(CLI::PositiveNumber);
    c_tt->add_option("--epochs", tt.epochs, "training epochs");
    c_tt->add_option("--dropout", tt.dropout, "dropout between encoder layers")->check(CLI::Range(0.0, 0.999));
    c_tt->add_option("--seed", tt.seed, "initialisation, masking and shuffling seed");
    tt.loss.add(c_tt);
    c_tt->add_option("--manifest", tt.manifest, "training manifest CSV");
    c_tt->add_option("--labels", tt.labels, "catalog CSV (default: manifest header)");
    c_tt->add_option("--image-root", tt.image_root, "root for manifest image paths");
    c_tt->add_option("--grid", tt.grid, "feature grid side")->check(CLI::PositiveNumber);
    c_tt->add_option("--feature-seed", tt.feature_seed, "seed of the toy feature projection");
    c_tt->add_option("--synthetic", tt.synthetic, "train on this many synthetic samples instead of a manifest");
    c_tt->add_option("--synthetic-labels", tt.synthetic_labels, "labels of the synthetic task")
        ->check(CLI::PositiveNumber);
    c_tt->add_option("--holdout", tt.holdout, "synthetic share held out for AUC")->check(CLI::Range(0.0, 0.9));
    c_tt->add_option("--eval-manifest", tt.eval_manifest, "manifest to predict after training");
    c_tt->add_option("--preds", tt.preds, "prediction CSV for --eval-manifest");
    c_tt->add_option("--out", tt.out, "checkpoint JSON path")->required();

    CamOpts cm;
    auto* c_cm = app.add_subcommand("cam", "class activation overlays");
    c_cm->add_option("--checkpoint", cm.checkpoint, "checkpoint JSON")->required()->check(CLI::ExistingFile);
    c_cm->add_option("--input", cm.inputs, "image files or directories")->required();
    c_cm->add_option("--label", cm.label, "label acronym")->required();
    c_cm->add_option("--out-dir", cm.out_dir, "directory for overlays")->required();
    c_cm->add_option("--grid", cm.grid, "feature grid side used in training")->check(CLI::PositiveNumber);
    c_cm->add_option("--feature-seed", cm.feature_seed, "feature projection seed used in training");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: cli: Usage: " << e.what() << "\n";
        return 2;
    }

    spdlog::set_level(spdlog::level::from_str(g.log_level));
    try {
        if (*c_sq) return run_score_quality(sq, g);
        if (*c_fov) return run_extract_fov(fov, g);
        if (*c_as) return run_assemble(as, g);
        if (*c_rs) return run_resample(rs, g);
        if (*c_ib) return run_imbalance(ib, g);
        if (*c_au) return run_augment(au, g);
        if (*c_ev) return run_evaluate(ev, g);
        if (*c_tt) return run_train_toy(tt, g);
        if (*c_cm) return run_cam(cm, g);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: cli: IoError: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
