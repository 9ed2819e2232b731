#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "fundus/data/dataset.hpp"
#include "fundus/data/synthetic.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag)
        : path(fs::temp_directory_path() / (std::string("fundus_ds_") + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("generator label follows the threshold predicate", "[dataset]") {
    SyntheticParams p;
    p.image_size = 32;
    p.label_threshold = 0.6;
    p.cup_to_disc = 0.9;
    REQUIRE(generate_fundus(p, 7).label == 1);
    p.cup_to_disc = 0.2;
    REQUIRE(generate_fundus(p, 7).label == 0);
    p.cup_to_disc = 0.6;  // boundary included
    REQUIRE(generate_fundus(p, 7).label == 1);
}

TEST_CASE("generator is deterministic and stays in range", "[dataset]") {
    SyntheticParams p;
    p.image_size = 64;
    const auto a = generate_fundus(p, 42);
    const auto b = generate_fundus(p, 42);
    REQUIRE(a.image.data == b.image.data);
    REQUIRE(a.id == b.id);
    const auto c = generate_fundus(p, 43);
    REQUIRE(a.image.data != c.image.data);
    a.image.validate();

    // cup region is brighter than the periphery, so the class signal exists
    const int s = p.image_size;
    double cup = 0, rim = 0;
    int cup_n = 0, rim_n = 0;
    for (int y = 0; y < s; ++y)
        for (int x = 0; x < s; ++x) {
            const double d = std::hypot(y - (s - 1) / 2.0, x - (s - 1) / 2.0);
            if (d < 0.3 * p.disc_radius * s) {
                cup += a.image.at(1, y, x);
                ++cup_n;
            } else if (d > 1.6 * p.disc_radius * s) {
                rim += a.image.at(1, y, x);
                ++rim_n;
            }
        }
    REQUIRE(cup / cup_n > rim / rim_n + 0.2);
}

TEST_CASE("generator rejects invalid parameters", "[dataset]") {
    SyntheticParams p;
    p.cup_to_disc = 1.5;
    REQUIRE_THROWS_AS(generate_fundus(p, 1), std::invalid_argument);
    p = {};
    p.disc_radius = 0.0;
    REQUIRE_THROWS_AS(generate_fundus(p, 1), std::invalid_argument);
    p = {};
    p.noise_level = -0.1;
    REQUIRE_THROWS_AS(generate_fundus(p, 1), std::invalid_argument);
}

TEST_CASE("synthetic dataset splits stratified with exact counts", "[dataset]") {
    SyntheticDatasetOptions opts;
    opts.base.image_size = 16;

    SECTION("100 + 100 at ratio 0.2") {
        const auto split = build_synthetic_dataset(100, 100, 0.2, 1, opts);
        REQUIRE(split.train.size() == 160);
        REQUIRE(split.validation.size() == 40);
        int val_glaucoma = 0;
        for (const auto& li : split.validation) val_glaucoma += li.label;
        REQUIRE(val_glaucoma == 20);
        int train_glaucoma = 0;
        for (const auto& li : split.train) train_glaucoma += li.label;
        REQUIRE(train_glaucoma == 80);

        std::set<std::string> train_ids, val_ids;
        for (const auto& li : split.train) train_ids.insert(li.id);
        for (const auto& li : split.validation) val_ids.insert(li.id);
        REQUIRE(train_ids.size() == split.train.size());
        for (const auto& id : val_ids) REQUIRE(!train_ids.count(id));
    }
    SECTION("exact halves") {
        const auto split = build_synthetic_dataset(10, 10, 0.5, 1, opts);
        REQUIRE(split.train.size() == 10);
        REQUIRE(split.validation.size() == 10);
    }
    SECTION("uneven counts stay within one item per class") {
        const auto split = build_synthetic_dataset(33, 17, 0.3, 9, opts);
        REQUIRE(split.train.size() + split.validation.size() == 50);
        int val_g = 0, val_n = 0;
        for (const auto& li : split.validation) (li.label ? val_g : val_n) += 1;
        REQUIRE(std::abs(val_n - 0.3 * 33) <= 1.0);
        REQUIRE(std::abs(val_g - 0.3 * 17) <= 1.0);
    }
    SECTION("paper-scale counts give the 6902-item training pool") {
        SyntheticDatasetOptions small = opts;
        small.base.image_size = 8;
        small.base.vessel_count = 1;
        const auto split = build_synthetic_dataset(3158, 3744, 0.2, 1, small);
        REQUIRE(split.train.size() + split.validation.size() == 6902);
    }
    SECTION("degenerate arguments are rejected") {
        REQUIRE_THROWS_AS(build_synthetic_dataset(0, 10, 0.2, 1, opts), std::invalid_argument);
        REQUIRE_THROWS_AS(build_synthetic_dataset(10, 10, 0.0, 1, opts), std::invalid_argument);
    }
    SECTION("overlap mode keeps labels consistent with the threshold") {
        SyntheticDatasetOptions hard = opts;
        hard.overlap = true;
        const auto split = build_synthetic_dataset(20, 20, 0.5, 3, hard);
        REQUIRE(split.train.size() == 20);
        int glaucoma = 0;
        for (const auto& li : split.train) glaucoma += li.label;
        for (const auto& li : split.validation) glaucoma += li.label;
        REQUIRE(glaucoma == 20);
    }
}

TEST_CASE("save then ingest round-trips pixels within one quantization step", "[dataset]") {
    TempDir tmp("roundtrip");
    SyntheticDatasetOptions opts;
    opts.base.image_size = 32;
    const auto split = build_synthetic_dataset(3, 3, 0.5, 5, opts);
    std::vector<LabeledImage> all = split.train;
    all.insert(all.end(), split.validation.begin(), split.validation.end());
    save_dataset(tmp.path, all);

    const auto loaded = load_image_directory(tmp.path, tmp.path / "labels.csv", 32);
    REQUIRE(loaded.size() == all.size());
    std::map<std::string, const LabeledImage*> by_id;
    for (const auto& li : all) by_id[li.id] = &li;
    for (const auto& li : loaded) {
        REQUIRE(by_id.count(li.id));
        const LabeledImage& orig = *by_id[li.id];
        REQUIRE(li.label == orig.label);
        for (size_t i = 0; i < li.image.data.size(); ++i)
            REQUIRE(std::abs(li.image.data[i] - orig.image.data[i]) <= 1.0f / 255.0f);
    }
}

TEST_CASE("ingestion errors name the offending file", "[dataset]") {
    TempDir tmp("errors");
    Image img(16, 16, 0.5f);

    SECTION("csv row referencing an absent file") {
        CsvWriter csv((tmp.path / "labels.csv").string(), {"filename", "label"});
        csv.write_row({"ghost.png", "1"});
        csv.close();
        REQUIRE_THROWS_WITH(load_image_directory(tmp.path, tmp.path / "labels.csv", 16),
                            Catch::Matchers::ContainsSubstring("ghost.png"));
    }
    SECTION("image present but not listed") {
        write_png_rgb8((tmp.path / "listed.png").string(), img);
        write_png_rgb8((tmp.path / "orphan.png").string(), img);
        CsvWriter csv((tmp.path / "labels.csv").string(), {"filename", "label"});
        csv.write_row({"listed.png", "0"});
        csv.close();
        REQUIRE_THROWS_WITH(load_image_directory(tmp.path, tmp.path / "labels.csv", 16),
                            Catch::Matchers::ContainsSubstring("orphan.png"));
    }
    SECTION("bad label value") {
        write_png_rgb8((tmp.path / "a.png").string(), img);
        CsvWriter csv((tmp.path / "labels.csv").string(), {"filename", "label"});
        csv.write_row({"a.png", "2"});
        csv.close();
        REQUIRE_THROWS_WITH(load_image_directory(tmp.path, tmp.path / "labels.csv", 16),
                            Catch::Matchers::ContainsSubstring("a.png"));
    }
    SECTION("larger inputs are stored at the target resolution") {
        Image big(256, 256, 0.25f);
        write_png_rgb8((tmp.path / "big.png").string(), big);
        CsvWriter csv((tmp.path / "labels.csv").string(), {"filename", "label"});
        csv.write_row({"big.png", "1"});
        csv.close();
        const auto loaded = load_image_directory(tmp.path, tmp.path / "labels.csv", 128);
        REQUIRE(loaded.size() == 1);
        REQUIRE(loaded[0].image.height == 128);
        REQUIRE(loaded[0].image.width == 128);
    }
}

TEST_CASE("augmentation flips independently with the given probability", "[dataset]") {
    Rng seed_rng(77);
    std::vector<Image> batch;
    for (int i = 0; i < 16; ++i) {
        Image img(4, 4);
        for (auto& v : img.data) v = static_cast<float>(seed_rng.uniform());
        batch.push_back(std::move(img));
    }

    SECTION("probability 0 leaves the batch unchanged") {
        Rng rng(1);
        const auto out = augment(batch, 0.0, rng);
        for (size_t i = 0; i < batch.size(); ++i) REQUIRE(out[i].data == batch[i].data);
    }
    SECTION("probability 1 flips every image") {
        Rng rng(1);
        const auto out = augment(batch, 1.0, rng);
        for (size_t i = 0; i < batch.size(); ++i)
            REQUIRE(out[i].data == horizontal_flip(batch[i]).data);
    }
    SECTION("flipped fraction concentrates around 1/2") {
        std::vector<Image> big(10000, batch[0]);
        Rng rng(3);
        const auto out = augment(big, 0.5, rng);
        const auto flipped = horizontal_flip(batch[0]);
        long count = 0;
        for (const auto& img : out) count += img.data == flipped.data;
        const double frac = static_cast<double>(count) / 10000.0;
        REQUIRE(frac > 0.47);
        REQUIRE(frac < 0.53);
    }
    SECTION("invalid probability is rejected") {
        Rng rng(1);
        REQUIRE_THROWS_AS(augment(batch, 1.5, rng), std::invalid_argument);
    }
}

TEST_CASE("epoch batches cover every item once in seeded order", "[dataset]") {
    SECTION("130 items at batch 64 give 64, 64, 2") {
        const auto batches = epoch_batches(130, 64, 1, 0);
        REQUIRE(batches.size() == 3);
        REQUIRE(batches[0].size() == 64);
        REQUIRE(batches[1].size() == 64);
        REQUIRE(batches[2].size() == 2);
        std::set<long> seen;
        for (const auto& b : batches) seen.insert(b.begin(), b.end());
        REQUIRE(seen.size() == 130);
        REQUIRE(*seen.begin() == 0);
        REQUIRE(*seen.rbegin() == 129);
    }
    SECTION("same seed and epoch reproduce the ordering") {
        REQUIRE(epoch_batches(50, 8, 9, 2) == epoch_batches(50, 8, 9, 2));
    }
    SECTION("different epochs reshuffle") {
        REQUIRE(epoch_batches(50, 8, 9, 0) != epoch_batches(50, 8, 9, 1));
    }
    SECTION("batch size must be positive") {
        REQUIRE_THROWS_AS(epoch_batches(10, 0, 1, 0), std::invalid_argument);
    }
}
