#pragma once

#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/core/ssim.hpp"
#include "fundus/data/dataset.hpp"
#include "fundus/io/csv.hpp"
#include "fundus/nn/adam.hpp"
#include "fundus/plot/plot.hpp"
#include "fundus/train/checkpoint.hpp"
#include "fundus/vae/loss.hpp"

namespace fundus {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double lr = 1e-3;
    int scheduler_step = 14;
    double scheduler_gamma = 0.1;
    double flip_prob = 0.5;
    std::uint64_t seed = 1;

    void validate() const {
        if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
        if (!(lr > 0)) throw std::invalid_argument("train config: lr must be > 0");
        if (scheduler_step < 1) throw std::invalid_argument("train config: scheduler_step must be >= 1");
        if (!(scheduler_gamma > 0 && scheduler_gamma <= 1))
            throw std::invalid_argument("train config: gamma must be in (0,1]");
        if (!(flip_prob >= 0 && flip_prob <= 1))
            throw std::invalid_argument("train config: flip_prob must be in [0,1]");
    }
};

/// Stepped schedule: lr0 * gamma^floor(epoch / step).
inline double lr_at_epoch(const TrainConfig& c, long epoch) {
    return c.lr * std::pow(c.scheduler_gamma, static_cast<double>(epoch / c.scheduler_step));
}

struct EpochRecord {
    long epoch = 0;
    double train_total = 0, train_feature = 0, train_kl = 0;
    double val_total = 0, val_feature = 0, val_kl = 0;
    double lr = 0;
};

struct TrainHistory {
    std::vector<EpochRecord> records;
    long best_epoch = -1;
};

struct TrainResult {
    TrainHistory history;
    std::filesystem::path checkpoint_path;
    CheckpointMeta meta;
};

inline void write_history_csv(const std::filesystem::path& path, const TrainHistory& h) {
    CsvWriter csv(path.string(), {"epoch", "train_total", "train_feat", "train_kl", "val_total",
                                  "val_feat", "val_kl", "lr"});
    for (const auto& r : h.records)
        csv.write_row({std::to_string(r.epoch), fmt_num(r.train_total), fmt_num(r.train_feature),
                       fmt_num(r.train_kl), fmt_num(r.val_total), fmt_num(r.val_feature),
                       fmt_num(r.val_kl), fmt_num(r.lr)});
}

namespace detail {

template <class T>
LossBreakdown mean_validation_loss(const Vae<T>& vae, const FeatureExtractor<T>& ext,
                                   const std::vector<LabeledImage>& items, double beta,
                                   int batch_size) {
    LossBreakdown acc;
    long count = 0;
    for (long start = 0; start < static_cast<long>(items.size()); start += batch_size) {
        const long end = std::min<long>(items.size(), start + batch_size);
        std::vector<Image> batch;
        batch.reserve(end - start);
        for (long i = start; i < end; ++i) batch.push_back(items[i].image);
        const auto x = images_to_tensor<T>(batch);
        const auto lb = evaluate_losses(vae, ext, x, beta);
        const long n = end - start;
        acc.feature += lb.feature * n;
        acc.kl += lb.kl * n;
        acc.total += lb.total * n;
        count += n;
    }
    acc.feature /= count;
    acc.kl /= count;
    acc.total /= count;
    return acc;
}

}  // namespace detail

/// Runs the full recipe for one latent size: Adam with the stepped schedule,
/// evaluation after every epoch with posterior-mean reconstructions, and the
/// lowest-validation-loss weights persisted to out_dir/checkpoint.bin with
/// history.csv next to it.
inline TrainResult train_one(const TrainConfig& tc, const VaeConfig& vc,
                             const FeatureExtractor<float>& extractor, const DatasetSplit& data,
                             const std::filesystem::path& out_dir) {
    tc.validate();
    vc.validate();
    if (data.train.empty() || data.validation.empty())
        throw std::invalid_argument("train: both splits must be non-empty");
    std::filesystem::create_directories(out_dir);

    Vae<float> vae(vc, tc.seed);
    auto params = vae.params();
    nn::Adam<float> opt(params);
    Rng aug_rng(Rng::derive(tc.seed, 0xa06));
    Rng eps_rng(Rng::derive(tc.seed, 0xe52));

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<Tensor<float>> best_weights;

    for (long epoch = 0; epoch < tc.epochs; ++epoch) {
        const double lr = lr_at_epoch(tc, epoch);
        const auto batches = epoch_batches(static_cast<long>(data.train.size()), tc.batch_size,
                                           tc.seed, epoch);
        double sum_total = 0, sum_feat = 0, sum_kl = 0;
        long seen = 0;
        for (size_t bi = 0; bi < batches.size(); ++bi) {
            std::vector<Image> batch;
            batch.reserve(batches[bi].size());
            for (long idx : batches[bi]) batch.push_back(data.train[idx].image);
            batch = augment(batch, tc.flip_prob, aug_rng);
            const auto x = images_to_tensor<float>(batch);
            Tensor<float> eps({x.dim(0), vc.latent_size});
            for (auto& v : eps.data) v = static_cast<float>(eps_rng.normal());

            vae.zero_grads();
            const LossBreakdown lb = vae_backward_step(vae, extractor, x, eps, vc.beta);
            if (!std::isfinite(lb.total))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch " + std::to_string(bi));
            opt.step(params, lr);

            const long n = x.dim(0);
            sum_total += lb.total * n;
            sum_feat += lb.feature * n;
            sum_kl += lb.kl * n;
            seen += n;
        }

        const LossBreakdown val =
            detail::mean_validation_loss(vae, extractor, data.validation, vc.beta, tc.batch_size);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_total = sum_total / seen;
        rec.train_feature = sum_feat / seen;
        rec.train_kl = sum_kl / seen;
        rec.val_total = val.total;
        rec.val_feature = val.feature;
        rec.val_kl = val.kl;
        rec.lr = lr;
        result.history.records.push_back(rec);

        if (val.total < best_val) {
            best_val = val.total;
            result.history.best_epoch = epoch;
            best_weights.clear();
            for (const auto* p : params) best_weights.push_back(p->value);
            result.meta.val_total = val.total;
            result.meta.val_feature = val.feature;
            result.meta.val_kl = val.kl;
        }
    }

    for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_weights[i];
    result.meta.config = vc;
    result.meta.best_epoch = result.history.best_epoch;
    result.meta.epochs_trained = tc.epochs;
    result.meta.seed = tc.seed;
    result.meta.extractor_kind = extractor.kind();
    result.checkpoint_path = out_dir / "checkpoint.bin";
    save_checkpoint(result.checkpoint_path, vae, result.meta);
    write_history_csv(out_dir / "history.csv", result.history);
    return result;
}

struct ReconRecord {
    std::string id;
    Image original;
    Image reconstruction;
    double ssim_score = 0;
    BinaryMask mask;
};

/// Posterior-mean reconstructions of every validation image with SSIM scores
/// and difference masks. Deterministic (eps = 0).
inline std::vector<ReconRecord> reconstruct_validation(const Vae<float>& vae,
                                                       const std::vector<LabeledImage>& validation,
                                                       double mask_threshold = 0.5,
                                                       int batch_size = 64) {
    std::vector<ReconRecord> out;
    out.reserve(validation.size());
    for (long start = 0; start < static_cast<long>(validation.size()); start += batch_size) {
        const long end = std::min<long>(validation.size(), start + batch_size);
        std::vector<Image> batch;
        for (long i = start; i < end; ++i) batch.push_back(validation[i].image);
        const auto xhat = vae.reconstruct_mean(images_to_tensor<float>(batch));
        for (long i = start; i < end; ++i) {
            ReconRecord rec;
            rec.id = validation[i].id;
            rec.original = validation[i].image;
            rec.reconstruction = tensor_to_image(xhat, i - start);
            rec.ssim_score = ssim(rec.original, rec.reconstruction).value;
            rec.mask = diff_mask(rec.original, rec.reconstruction, mask_threshold);
            out.push_back(std::move(rec));
        }
    }
    return out;
}

struct SweepEntry {
    int nl = 0;
    bool ok = false;
    std::string error;
    double val_total = 0, val_feature = 0, val_kl = 0;
    double mean_ssim = 0;
    std::filesystem::path checkpoint;
};

struct SweepReport {
    std::vector<SweepEntry> entries;

    const SweepEntry& at(int nl) const {
        for (const auto& e : entries)
            if (e.nl == nl) return e;
        throw std::out_of_range("sweep report: no entry for nl=" + std::to_string(nl));
    }
};

inline void write_sweep_csv(const std::filesystem::path& path, const SweepReport& report) {
    CsvWriter csv(path.string(),
                  {"nl", "status", "val_total", "val_feat", "val_kl", "mean_ssim", "checkpoint"});
    for (const auto& e : report.entries) {
        std::string status = e.ok ? "ok" : "failed: " + e.error;
        for (auto& ch : status)
            if (ch == ',' || ch == '\n') ch = ';';
        csv.write_row({std::to_string(e.nl), status, fmt_num(e.val_total), fmt_num(e.val_feature),
                       fmt_num(e.val_kl), fmt_num(e.mean_ssim), e.checkpoint.string()});
    }
}

/// Trains one checkpoint per latent size under run_dir/nl<k>/, each with its
/// own rng stream derived from (seed, nl). A failing size is recorded and the
/// remaining sizes still run. Writes sweep_report.csv and the
/// loss/similarity-vs-latent-size figures.
inline SweepReport sweep(const TrainConfig& tc, VaeConfig base, const std::vector<int>& sweep_set,
                         const FeatureExtractor<float>& extractor, const DatasetSplit& data,
                         const std::filesystem::path& run_dir) {
    if (sweep_set.empty()) throw std::invalid_argument("sweep: empty sweep set");
    SweepReport report;
    for (int nl : sweep_set) {
        SweepEntry entry;
        entry.nl = nl;
        try {
            VaeConfig vc = base;
            vc.latent_size = nl;
            TrainConfig per = tc;
            per.seed = Rng::derive(tc.seed, static_cast<std::uint64_t>(nl));
            const auto dir = run_dir / ("nl" + std::to_string(nl));
            TrainResult res = train_one(per, vc, extractor, data, dir);

            auto [vae, meta] = load_checkpoint(res.checkpoint_path);
            const auto recs = reconstruct_validation(vae, data.validation);
            double sum = 0;
            for (const auto& rec : recs) sum += rec.ssim_score;
            entry.mean_ssim = sum / static_cast<double>(data.validation.size());

            // original / reconstruction / difference-mask review samples
            const auto recon_dir = dir / "reconstructions";
            std::filesystem::create_directories(recon_dir);
            CsvWriter scores((recon_dir / "scores.csv").string(), {"id", "ssim"});
            for (size_t r = 0; r < recs.size(); ++r) {
                scores.write_row({recs[r].id, fmt_num(recs[r].ssim_score)});
                if (r >= 4) continue;
                write_png_rgb8((recon_dir / (recs[r].id + "_original.png")).string(),
                               recs[r].original);
                write_png_rgb8((recon_dir / (recs[r].id + "_reconstruction.png")).string(),
                               recs[r].reconstruction);
                write_png_mask1((recon_dir / (recs[r].id + "_mask.png")).string(), recs[r].mask);
            }
            entry.val_total = res.meta.val_total;
            entry.val_feature = res.meta.val_feature;
            entry.val_kl = res.meta.val_kl;
            entry.checkpoint = res.checkpoint_path;
            entry.ok = true;
        } catch (const std::exception& e) {
            entry.error = e.what();
        }
        report.entries.push_back(std::move(entry));
    }

    write_sweep_csv(run_dir / "sweep_report.csv", report);

    std::vector<double> nls, totals, feats, kls, ssims;
    for (const auto& e : report.entries)
        if (e.ok) {
            nls.push_back(e.nl);
            totals.push_back(e.val_total);
            feats.push_back(e.val_feature);
            kls.push_back(e.val_kl);
            ssims.push_back(e.mean_ssim);
        }
    if (!nls.empty()) {
        std::filesystem::create_directories(run_dir / "figures");
        plot::line_plot((run_dir / "figures" / "loss_curves.png").string(),
                        {{"total", nls, totals, {}, true},
                         {"feature", nls, feats, {}, true},
                         {"kl", nls, kls, {}, true}},
                        "Best validation loss vs latent size", "latent size", "loss", true);
        plot::line_plot((run_dir / "figures" / "ssim_vs_nl.png").string(),
                        {{"mean ssim", nls, ssims, {}, true}},
                        "Validation SSIM vs latent size", "latent size", "mean ssim", true);
    }
    return report;
}

}  // namespace fundus
