#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "fundus/core/image.hpp"
#include "fundus/core/rng.hpp"
#include "fundus/io/csv.hpp"
#include "fundus/io/png_io.hpp"

namespace fundus {

struct LabeledImage {
    Image image;
    int label = 0;  // 0 = normal, 1 = glaucoma
    std::string id;
};

struct DatasetSplit {
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> validation;
    double split_ratio = 0.2;

    std::vector<int> labels(const std::vector<LabeledImage>& part) const {
        std::vector<int> out;
        out.reserve(part.size());
        for (const auto& li : part) out.push_back(li.label);
        return out;
    }
};

/// Splits per class, then concatenates, so class proportions survive within
/// one item per class. Shuffle order is seed-deterministic.
inline DatasetSplit split_stratified(std::vector<LabeledImage> items, double split_ratio,
                                     std::uint64_t seed) {
    if (!(split_ratio > 0.0 && split_ratio < 1.0))
        throw std::invalid_argument("split: split_ratio must be in (0,1)");
    DatasetSplit out;
    out.split_ratio = split_ratio;
    for (int cls : {0, 1}) {
        std::vector<LabeledImage> bucket;
        for (auto& li : items)
            if (li.label == cls) bucket.push_back(std::move(li));
        if (bucket.empty()) continue;
        Rng rng(Rng::derive(seed, 0x5117 + cls));
        rng.shuffle(bucket.begin(), bucket.end());
        const long n_val = std::llround(split_ratio * static_cast<double>(bucket.size()));
        for (size_t i = 0; i < bucket.size(); ++i)
            (static_cast<long>(i) < n_val ? out.validation : out.train)
                .push_back(std::move(bucket[i]));
    }
    Rng mix(Rng::derive(seed, 0x5119));
    mix.shuffle(out.train.begin(), out.train.end());
    mix.shuffle(out.validation.begin(), out.validation.end());
    return out;
}

/// Persists images as <id>.png plus labels.csv (`filename,label`), the same
/// layout directory ingestion reads, so synthetic and real data share one
/// loading path.
inline void save_dataset(const std::filesystem::path& dir, const std::vector<LabeledImage>& items) {
    std::filesystem::create_directories(dir);
    CsvWriter csv((dir / "labels.csv").string(), {"filename", "label"});
    for (const auto& li : items) {
        const std::string filename = li.id + ".png";
        write_png_rgb8((dir / filename).string(), li.image);
        csv.write_row({filename, std::to_string(li.label)});
    }
}

/// Loads every file listed in the labels CSV, resized to the pipeline input
/// resolution. Missing files, bad labels, and unlisted images in the
/// directory are ingestion errors naming the offending file.
inline std::vector<LabeledImage> load_image_directory(const std::filesystem::path& dir,
                                                      const std::filesystem::path& labels_csv,
                                                      int target_size = 128) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw std::runtime_error("ingest: not a directory: " + dir.string());
    const CsvTable table = read_csv(labels_csv.string());
    if (table.header != std::vector<std::string>{"filename", "label"})
        throw std::runtime_error("ingest: labels CSV must have header 'filename,label': " +
                                 labels_csv.string());

    std::map<std::string, int> wanted;
    std::vector<LabeledImage> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (row.size() != 2) throw std::runtime_error("ingest: malformed row in " + labels_csv.string());
        const std::string& filename = row[0];
        if (row[1] != "0" && row[1] != "1")
            throw std::runtime_error("ingest: label must be 0 or 1 for file " + filename);
        const fs::path file = dir / filename;
        if (!fs::exists(file))
            throw std::runtime_error("ingest: file listed in CSV is missing: " + file.string());
        LabeledImage li;
        li.image = resize(read_png_image(file.string()), target_size, target_size);
        li.label = row[1] == "1" ? 1 : 0;
        li.id = filename.substr(0, filename.find_last_of('.'));
        wanted.emplace(filename, li.label);
        out.push_back(std::move(li));
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() != ".png") continue;
        const std::string name = entry.path().filename().string();
        if (!wanted.count(name))
            throw std::runtime_error("ingest: image has no label row: " + entry.path().string());
    }
    return out;
}

/// Independent horizontal flips with probability flip_prob, deterministic
/// under a fixed rng stream.
inline std::vector<Image> augment(const std::vector<Image>& batch, double flip_prob, Rng& rng) {
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
        throw std::invalid_argument("augment: flip_prob must be in [0,1]");
    std::vector<Image> out;
    out.reserve(batch.size());
    for (const auto& img : batch)
        out.push_back(rng.uniform() < flip_prob ? horizontal_flip(img) : img);
    return out;
}

/// Index batches for one epoch: every item exactly once, last batch may be
/// short, order deterministic per (seed, epoch).
inline std::vector<std::vector<long>> epoch_batches(long n, int batch_size, std::uint64_t seed,
                                                    long epoch) {
    if (batch_size < 1) throw std::invalid_argument("batches: batch_size must be >= 1");
    std::vector<long> order(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
    Rng rng(Rng::derive(Rng::derive(seed, 0xba7c), static_cast<std::uint64_t>(epoch)));
    rng.shuffle(order.begin(), order.end());
    std::vector<std::vector<long>> out;
    for (long start = 0; start < n; start += batch_size) {
        const long end = std::min(n, start + batch_size);
        out.emplace_back(order.begin() + start, order.begin() + end);
    }
    return out;
}

}  // namespace fundus
