#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fundus/analysis/latent.hpp"
#include "fundus/analysis/silhouette.hpp"
#include "fundus/analysis/umap.hpp"
#include "fundus/classify/probe.hpp"
#include "fundus/data/synthetic.hpp"
#include "fundus/pipeline/config.hpp"
#include "fundus/train/harness.hpp"

namespace fundus {

/// Exclusive ownership of a run directory for the length of one command.
/// Two concurrent invocations must use distinct run directories.
class RunLock {
public:
    explicit RunLock(const std::filesystem::path& run_dir) {
        std::filesystem::create_directories(run_dir);
        path_ = run_dir / ".lock";
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0)
            throw std::runtime_error("run directory is locked by another invocation: " +
                                     run_dir.string() + " (remove " + path_.string() +
                                     " if that run crashed)");
        const std::string pid = std::to_string(::getpid()) + "\n";
        [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;
    ~RunLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            std::error_code ec;
            std::filesystem::remove(path_, ec);
        }
    }

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

namespace pipeline_detail {

inline std::filesystem::path dataset_dir(const std::filesystem::path& run_dir) {
    return run_dir / "dataset";
}

inline std::filesystem::path nl_dir(const std::filesystem::path& run_dir, int nl) {
    return run_dir / ("nl" + std::to_string(nl));
}

}  // namespace pipeline_detail

/// Renders the synthetic dataset to PNGs + labels.csv + a seed manifest.
/// Synthetic and real data then share the same ingestion path.
inline std::filesystem::path cmd_generate(const RunConfig& cfg,
                                          const std::filesystem::path& run_dir) {
    if (cfg.dataset.kind != "synthetic")
        throw ConfigError("generate: config has no synthetic dataset section (kind=" +
                          cfg.dataset.kind + ")");
    const auto dir = pipeline_detail::dataset_dir(run_dir);
    const auto items = generate_synthetic_items(cfg.dataset.n_normal, cfg.dataset.n_glaucoma,
                                                cfg.seed, cfg.synthetic_options());
    save_dataset(dir, items);
    nlohmann::json manifest = {{"seed", cfg.seed},
                               {"n_normal", cfg.dataset.n_normal},
                               {"n_glaucoma", cfg.dataset.n_glaucoma},
                               {"image_size", cfg.dataset.image_size},
                               {"overlap", cfg.dataset.overlap},
                               {"label_threshold", cfg.dataset.label_threshold},
                               {"disc_radius", cfg.dataset.disc_radius},
                               {"noise_level", cfg.dataset.noise_level},
                               {"vessel_count", cfg.dataset.vessel_count}};
    std::ofstream out(dir / "manifest.json");
    out << manifest.dump(2) << "\n";
    return dir;
}

/// Ingests the dataset (generating the synthetic one on first use) and
/// produces the stratified split every stage shares.
inline DatasetSplit resolve_dataset(const RunConfig& cfg, const std::filesystem::path& run_dir) {
    std::filesystem::path dir, labels;
    if (cfg.dataset.kind == "synthetic") {
        dir = pipeline_detail::dataset_dir(run_dir);
        labels = dir / "labels.csv";
        if (!std::filesystem::exists(labels)) cmd_generate(cfg, run_dir);
    } else {
        dir = cfg.dataset.path;
        labels = cfg.dataset.labels;
    }
    auto items = load_image_directory(dir, labels, cfg.dataset.image_size);
    return split_stratified(std::move(items), cfg.dataset.split_ratio,
                            Rng::derive(cfg.seed, 0xd511));
}

inline std::unique_ptr<FeatureExtractor<float>> make_configured_extractor(const RunConfig& cfg) {
    return make_extractor<float>(cfg.vae.extractor, cfg.vae.extractor_weights, cfg.seed);
}

inline VaeConfig base_vae_config(const RunConfig& cfg) {
    VaeConfig vc;
    vc.latent_size = cfg.vae.sweep.front();
    vc.encoder_widths = cfg.vae.encoder_widths;
    vc.beta = cfg.vae.beta;
    vc.norm_groups = cfg.vae.norm_groups;
    vc.image_size = cfg.dataset.image_size;
    return vc;
}

/// Trains the first latent size of the sweep set; epoch-level loss curves
/// land in figures/.
inline void cmd_train(const RunConfig& cfg, const std::filesystem::path& run_dir) {
    const auto data = resolve_dataset(cfg, run_dir);
    const auto extractor = make_configured_extractor(cfg);
    VaeConfig vc = base_vae_config(cfg);
    TrainConfig tc = cfg.train;
    tc.seed = Rng::derive(cfg.seed, static_cast<std::uint64_t>(vc.latent_size));
    const auto res = train_one(tc, vc, *extractor, data, pipeline_detail::nl_dir(run_dir, vc.latent_size));

    std::vector<double> epochs, tr, va;
    for (const auto& r : res.history.records) {
        epochs.push_back(static_cast<double>(r.epoch));
        tr.push_back(r.train_total);
        va.push_back(r.val_total);
    }
    std::filesystem::create_directories(run_dir / "figures");
    plot::line_plot((run_dir / "figures" / "loss_curves.png").string(),
                    {{"train total", epochs, tr, {}, false}, {"val total", epochs, va, {}, false}},
                    "Training loss, nl=" + std::to_string(vc.latent_size), "epoch", "loss");
}

/// Full latent-size sweep with per-size checkpoints, reconstruction review
/// samples, sweep_report.csv, and the vs-latent-size figures.
inline SweepReport cmd_sweep(const RunConfig& cfg, const std::filesystem::path& run_dir) {
    const auto data = resolve_dataset(cfg, run_dir);
    const auto extractor = make_configured_extractor(cfg);
    return sweep(cfg.train, base_vae_config(cfg), cfg.vae.sweep, *extractor, data, run_dir);
}

/// Latent probes for every swept checkpoint: validation latents, correlation
/// ranking, UMAP embeddings (full + each top-k ratio), scatter plots, and
/// silhouette scores.
inline void cmd_analyze(const RunConfig& cfg, const std::filesystem::path& run_dir) {
    const auto data = resolve_dataset(cfg, run_dir);
    for (int nl : cfg.vae.sweep) {
        const auto dir = pipeline_detail::nl_dir(run_dir, nl);
        const auto ckpt = dir / "checkpoint.bin";
        if (!std::filesystem::exists(ckpt))
            throw std::runtime_error("analyze: missing checkpoint for nl=" + std::to_string(nl) +
                                     " at " + ckpt.string() + "; run sweep first");
        auto [vae, meta] = load_checkpoint(ckpt);
        const auto analysis_dir = dir / "analysis";
        std::filesystem::create_directories(analysis_dir);

        const auto latents = encode_dataset(vae, data.validation, cfg.train.batch_size);
        write_latents_csv(analysis_dir / "latents.csv", latents);

        const auto ranking = rank_features(latents);
        {
            CsvWriter csv((analysis_dir / "ranking.csv").string(),
                          {"rank", "feature", "abs_correlation"});
            for (size_t r = 0; r < ranking.order.size(); ++r)
                csv.write_row({std::to_string(r), std::to_string(ranking.order[r].first),
                               fmt_num(ranking.order[r].second)});
        }

        UmapOptions uopts;
        uopts.n_neighbors = cfg.analysis.umap_neighbors;
        uopts.min_dist = cfg.analysis.umap_min_dist;
        uopts.n_epochs = cfg.analysis.umap_epochs;

        std::vector<long> ks;
        for (double ratio : cfg.analysis.topk_ratios) {
            const long k = topk_from_ratio(nl, ratio);
            if (k < nl && std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
        }

        CsvWriter scores((analysis_dir / "cluster_scores.csv").string(), {"k", "silhouette"});
        const auto embed_and_save = [&](const LatentMatrix& m, const std::string& tag) {
            UmapOptions o = uopts;
            o.seed = Rng::derive(cfg.seed, 0x03a0 + static_cast<std::uint64_t>(nl));
            const auto emb = umap_embed(m, o);
            write_embedding_csv(analysis_dir / ("umap_" + tag + ".csv"), emb, m.ids, m.labels);
            std::vector<double> xs, ys;
            for (long i = 0; i < emb.n; ++i) {
                xs.push_back(emb.x(i));
                ys.push_back(emb.y(i));
            }
            plot::scatter_plot((analysis_dir / ("umap_" + tag + ".png")).string(), xs, ys,
                               m.labels, {"normal", "glaucoma"},
                               "UMAP nl=" + std::to_string(nl) + " " + tag);
            scores.write_row({tag == "all" ? tag : tag.substr(3),
                              fmt_num(silhouette_score(emb.coords, m.labels))});
        };

        for (long k : ks) embed_and_save(select_top_k(latents, ranking, k), "top" + std::to_string(k));
        embed_and_save(latents, "all");
    }
}

/// SVC probes from the persisted latents: per-size cross-validation over the
/// grid, a train/test evaluation with the globally best candidate, the metric
/// table, ROC overlay, and trend figures.
inline void cmd_classify(const RunConfig& cfg, const std::filesystem::path& run_dir) {
    const auto out_dir = run_dir / "classify";
    std::filesystem::create_directories(out_dir);
    const auto grid = cfg.grid();

    std::map<int, LatentMatrix> latents;
    std::map<int, CvReport> cv_reports;
    for (int nl : cfg.vae.sweep) {
        const auto path = pipeline_detail::nl_dir(run_dir, nl) / "analysis" / "latents.csv";
        if (!std::filesystem::exists(path))
            throw std::runtime_error("classify: missing latents for nl=" + std::to_string(nl) +
                                     " at " + path.string() + "; run analyze first");
        latents.emplace(nl, read_latents_csv(path));
        cv_reports.emplace(nl, cross_validate(latents.at(nl), grid,
                                              Rng::derive(cfg.seed, 0xc0 + nl)));
    }
    write_cv_report_csv(out_dir / "cv_report.csv", cv_reports);

    // one optimal hyperparameter set shared across sizes
    SvcParams best;
    double best_auc = -1;
    for (const auto& [nl, rep] : cv_reports)
        if (rep.candidates[rep.best_index].mean[1] > best_auc) {
            best_auc = rep.candidates[rep.best_index].mean[1];
            best = rep.best_params;
        }
    {
        nlohmann::json j = {{"C", best.C},
                            {"kernel", best.kernel_name()},
                            {"class_weight", best.weight_name()},
                            {"cv_mean_auc", best_auc}};
        std::ofstream out(out_dir / "best_params.json");
        out << j.dump(2) << "\n";
    }

    std::map<int, MetricsReport> reports;
    for (const auto& [nl, m] : latents)
        reports.emplace(nl, train_test_evaluate(m, best, cfg.classify.split_ratio,
                                                Rng::derive(cfg.seed, 0x7e57)));
    if (reports.size() >= 2) {
        metric_trends(reports, out_dir / "metrics.csv", out_dir / "roc_overlay.png",
                      out_dir / "metric_trends.png");
        std::vector<double> nls, acc, auc, f1, prec, rec;
        for (const auto& [nl, rep] : cv_reports) {
            const auto& c = rep.candidates[rep.best_index];
            nls.push_back(nl);
            acc.push_back(c.mean[0]);
            auc.push_back(c.mean[1]);
            f1.push_back(c.mean[2]);
            prec.push_back(c.mean[3]);
            rec.push_back(c.mean[4]);
        }
        plot::line_plot((out_dir / "cv_trends.png").string(),
                        {{"accuracy", nls, acc, {}, true},
                         {"auc", nls, auc, {}, true},
                         {"f1", nls, f1, {}, true},
                         {"precision", nls, prec, {}, true},
                         {"recall", nls, rec, {}, true}},
                        "Cross-validation trends (best candidate)", "latent size", "score", true);
    } else {
        CsvWriter csv((out_dir / "metrics.csv").string(),
                      {"nl", "accuracy", "auc", "f1", "precision", "recall"});
        for (const auto& [nl, rep] : reports)
            csv.write_row({std::to_string(nl), fmt_num(rep.accuracy), fmt_num(rep.auc),
                           fmt_num(rep.f1), fmt_num(rep.precision), fmt_num(rep.recall)});
    }
}

namespace pipeline_detail {

inline void markdown_table(std::ostream& out, const CsvTable& t, size_t max_rows = 64) {
    out << "|";
    for (const auto& h : t.header) out << " " << h << " |";
    out << "\n|";
    for (size_t i = 0; i < t.header.size(); ++i) out << " --- |";
    out << "\n";
    for (size_t r = 0; r < t.rows.size() && r < max_rows; ++r) {
        out << "|";
        for (const auto& f : t.rows[r]) out << " " << f << " |";
        out << "\n";
    }
    if (t.rows.size() > max_rows)
        out << "\n_" << (t.rows.size() - max_rows) << " more rows omitted._\n";
}

}  // namespace pipeline_detail

/// Human-readable summary of whatever stages have run; missing stages are
/// flagged and the report is still written. Regeneration is idempotent.
inline std::filesystem::path cmd_report(const std::filesystem::path& run_dir) {
    namespace fs = std::filesystem;
    const auto path = run_dir / "report.md";
    std::ofstream out(path);
    if (!out) throw std::runtime_error("report: cannot write " + path.string());
    std::vector<std::string> missing;

    out << "# Run report\n\nRun directory: `" << run_dir.string() << "`\n";

    out << "\n## Dataset\n\n";
    if (fs::exists(run_dir / "dataset" / "manifest.json")) {
        std::ifstream in(run_dir / "dataset" / "manifest.json");
        out << "```json\n" << in.rdbuf() << "```\n";
    } else {
        out << "_No generated dataset (directory ingestion or not yet generated)._\n";
    }

    out << "\n## Sweep\n\n";
    if (fs::exists(run_dir / "sweep_report.csv")) {
        pipeline_detail::markdown_table(out, read_csv((run_dir / "sweep_report.csv").string()));
        out << "\n![loss](figures/loss_curves.png)\n![ssim](figures/ssim_vs_nl.png)\n";
    } else {
        out << "_Missing: run the sweep stage._\n";
        missing.push_back("sweep");
    }

    out << "\n## Latent analysis\n\n";
    bool any_analysis = false;
    if (fs::exists(run_dir)) {
        for (const auto& entry : fs::directory_iterator(run_dir)) {
            if (!entry.is_directory()) continue;
            const auto name = entry.path().filename().string();
            if (name.rfind("nl", 0) != 0) continue;
            const auto scores = entry.path() / "analysis" / "cluster_scores.csv";
            if (!fs::exists(scores)) continue;
            any_analysis = true;
            out << "### " << name << "\n\n";
            pipeline_detail::markdown_table(out, read_csv(scores.string()));
            out << "\n";
            for (const auto& f : fs::directory_iterator(entry.path() / "analysis"))
                if (f.path().extension() == ".png")
                    out << "![" << f.path().filename().string() << "](" << name << "/analysis/"
                        << f.path().filename().string() << ")\n";
        }
    }
    if (!any_analysis) {
        out << "_Missing: run the analyze stage._\n";
        missing.push_back("analyze");
    }

    out << "\n## Classification\n\n";
    if (fs::exists(run_dir / "classify" / "metrics.csv")) {
        if (fs::exists(run_dir / "classify" / "best_params.json")) {
            std::ifstream in(run_dir / "classify" / "best_params.json");
            out << "Selected hyperparameters:\n\n```json\n" << in.rdbuf() << "```\n\n";
        }
        pipeline_detail::markdown_table(out, read_csv((run_dir / "classify" / "metrics.csv").string()));
        out << "\n![roc](classify/roc_overlay.png)\n![trends](classify/metric_trends.png)\n";
    } else {
        out << "_Missing: run the classify stage._\n";
        missing.push_back("classify");
    }

    out << "\n## Status\n\n";
    if (missing.empty()) {
        out << "All stages present.\n";
    } else {
        out << "Missing stages:";
        for (const auto& m : missing) out << " " << m;
        out << "\n";
    }
    return path;
}

}  // namespace fundus
