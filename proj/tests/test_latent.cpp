#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "fundus/analysis/latent.hpp"
#include "fundus/analysis/silhouette.hpp"
#include "fundus/analysis/umap.hpp"
#include "fundus/core/rng.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

LatentMatrix make_matrix(long n, long d) {
    LatentMatrix m;
    m.n = n;
    m.d = d;
    m.values.assign(static_cast<size_t>(n) * d, 0.0);
    m.labels.assign(n, 0);
    for (long i = 0; i < n; ++i) {
        m.labels[i] = i % 2;
        m.ids.push_back("s" + std::to_string(i));
    }
    return m;
}

// independent Pearson correlation for the oracle comparison
double pearson(const std::vector<double>& xs, const std::vector<int>& ys) {
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    return sxx > 0 ? sxy / std::sqrt(sxx * syy) : 0.0;
}

}  // namespace

TEST_CASE("feature ranking by point-biserial correlation", "[latent]") {
    Rng rng(8);

    SECTION("a feature equal to the labels ranks first with |r| = 1") {
        auto m = make_matrix(20, 3);
        for (long i = 0; i < m.n; ++i) {
            m.at(i, 0) = rng.normal();
            m.at(i, 1) = m.labels[i];
            m.at(i, 2) = rng.normal() * 0.1;
        }
        const auto r = rank_features(m);
        REQUIRE(r.order[0].first == 1);
        REQUIRE(r.order[0].second == Catch::Approx(1.0).margin(1e-12));
    }
    SECTION("a constant feature gets correlation 0") {
        auto m = make_matrix(12, 2);
        for (long i = 0; i < m.n; ++i) {
            m.at(i, 0) = 3.5;  // zero variance
            m.at(i, 1) = m.labels[i] + rng.normal() * 0.01;
        }
        const auto r = rank_features(m);
        REQUIRE(r.order[1].first == 0);
        REQUIRE(r.order[1].second == 0.0);
    }
    SECTION("hand matrix matches a brute-force correlation oracle") {
        auto m = make_matrix(5, 3);
        const double vals[5][3] = {
            {0.2, 1.0, -0.4}, {0.9, 0.1, 0.8}, {0.4, 0.7, -0.2}, {0.8, 0.3, 0.9}, {0.1, 0.8, -0.5}};
        m.labels = {0, 1, 0, 1, 0};
        for (long i = 0; i < 5; ++i)
            for (long j = 0; j < 3; ++j) m.at(i, j) = vals[i][j];
        const auto r = rank_features(m);

        std::vector<std::pair<int, double>> want;
        for (long j = 0; j < 3; ++j) {
            std::vector<double> col;
            for (long i = 0; i < 5; ++i) col.push_back(m.at(i, j));
            want.emplace_back(static_cast<int>(j), std::abs(pearson(col, m.labels)));
        }
        std::stable_sort(want.begin(), want.end(),
                         [](const auto& a, const auto& b) { return a.second > b.second; });
        for (size_t i = 0; i < want.size(); ++i) {
            REQUIRE(r.order[i].first == want[i].first);
            REQUIRE(r.order[i].second == Catch::Approx(want[i].second).margin(1e-12));
        }
    }
    SECTION("positive affine rescaling leaves the ranking unchanged") {
        auto m = make_matrix(30, 4);
        for (long i = 0; i < m.n; ++i)
            for (long j = 0; j < m.d; ++j) m.at(i, j) = rng.normal() + (j == 2 ? m.labels[i] : 0.0);
        const auto base = rank_features(m);
        auto scaled = m;
        for (long i = 0; i < m.n; ++i) {
            scaled.at(i, 1) = 7.5 * m.at(i, 1) - 3.0;
            scaled.at(i, 3) = 0.01 * m.at(i, 3) + 100.0;
        }
        const auto r = rank_features(scaled);
        for (long j = 0; j < m.d; ++j) {
            REQUIRE(r.order[j].first == base.order[j].first);
            REQUIRE(r.order[j].second == Catch::Approx(base.order[j].second).margin(1e-9));
        }
    }
    SECTION("single-class input is rejected") {
        auto m = make_matrix(10, 2);
        std::fill(m.labels.begin(), m.labels.end(), 1);
        REQUIRE_THROWS_AS(rank_features(m), std::invalid_argument);
    }
}

TEST_CASE("top-k selection", "[latent]") {
    Rng rng(9);
    auto m = make_matrix(16, 8);
    for (long i = 0; i < m.n; ++i)
        for (long j = 0; j < m.d; ++j)
            m.at(i, j) = rng.normal() + m.labels[i] * (j % 3 == 0 ? 1.0 : 0.1);
    const auto ranking = rank_features(m);

    SECTION("k = nl returns the rank-permuted full matrix") {
        const auto sel = select_top_k(m, ranking, 8);
        REQUIRE(sel.d == 8);
        for (long i = 0; i < m.n; ++i)
            for (long j = 0; j < 8; ++j) REQUIRE(sel.at(i, j) == m.at(i, ranking.order[j].first));
    }
    SECTION("smaller k selects a prefix: columns nest") {
        const auto s2 = select_top_k(m, ranking, 2);
        const auto s5 = select_top_k(m, ranking, 5);
        for (long i = 0; i < m.n; ++i)
            for (long j = 0; j < 2; ++j) REQUIRE(s2.at(i, j) == s5.at(i, j));
    }
    SECTION("k out of range is rejected") {
        REQUIRE_THROWS_AS(select_top_k(m, ranking, 0), std::invalid_argument);
        REQUIRE_THROWS_AS(select_top_k(m, ranking, 9), std::invalid_argument);
    }
    SECTION("the sweep ratio presets map to the expected k") {
        REQUIRE(topk_from_ratio(128, 10.0 / 128.0) == 10);
        REQUIRE(topk_from_ratio(128, 50.0 / 128.0) == 50);
        REQUIRE(topk_from_ratio(128, 1.0) == 128);
        REQUIRE(topk_from_ratio(2048, 10.0 / 128.0) == 160);
        REQUIRE(topk_from_ratio(2048, 50.0 / 128.0) == 800);
        REQUIRE(topk_from_ratio(2048, 1.0) == 2048);
        REQUIRE(topk_from_ratio(4, 0.01) == 1);  // floors at 1
    }
}

TEST_CASE("encode_dataset preserves order and duplicates", "[latent]") {
    VaeConfig cfg;
    cfg.latent_size = 128;
    cfg.encoder_widths = {4, 8};
    cfg.image_size = 16;
    Vae<float> vae(cfg, 5);

    Rng rng(6);
    std::vector<LabeledImage> data;
    for (int i = 0; i < 40; ++i) {
        LabeledImage li;
        li.image = Image(16, 16);
        for (auto& v : li.image.data) v = static_cast<float>(rng.uniform());
        li.label = i % 2;
        li.id = "img" + std::to_string(i);
        data.push_back(std::move(li));
    }
    data[7] = data[3];  // duplicate image

    const auto m = encode_dataset(vae, data, 16);
    REQUIRE(m.n == 40);
    REQUIRE(m.d == 128);
    for (long i = 0; i < 40; ++i) {
        REQUIRE(m.labels[i] == data[i].label);
        REQUIRE(m.ids[i] == data[i].id);
    }
    for (long j = 0; j < m.d; ++j) REQUIRE(m.at(7, j) == m.at(3, j));
}

TEST_CASE("latents csv round trip", "[latent]") {
    const fs::path tmp = fs::temp_directory_path() / "fundus_latents.csv";
    Rng rng(10);
    auto m = make_matrix(6, 4);
    for (auto& v : m.values) v = rng.normal();
    write_latents_csv(tmp, m);
    const auto back = read_latents_csv(tmp);
    REQUIRE(back.n == m.n);
    REQUIRE(back.d == m.d);
    REQUIRE(back.labels == m.labels);
    REQUIRE(back.ids == m.ids);
    for (size_t i = 0; i < m.values.size(); ++i)
        REQUIRE(back.values[i] == Catch::Approx(m.values[i]).epsilon(1e-9));
    fs::remove(tmp);
}

TEST_CASE("umap kernel curve fit reproduces the reference constants", "[latent]") {
    const auto [a, b] = umap_detail::fit_ab(0.1, 1.0);
    // reference implementation reports about (1.577, 0.8951) for these inputs
    REQUIRE(a == Catch::Approx(1.577).epsilon(0.05));
    REQUIRE(b == Catch::Approx(0.8951).epsilon(0.05));
}

TEST_CASE("umap embedding contracts", "[latent]") {
    Rng rng(11);

    SECTION("shape and seeded determinism") {
        auto m = make_matrix(100, 16);
        for (auto& v : m.values) v = rng.normal();
        UmapOptions opts;
        opts.n_epochs = 60;
        const auto e1 = umap_embed(m, opts);
        REQUIRE(e1.n == 100);
        REQUIRE(e1.coords.size() == 200);
        for (double v : e1.coords) REQUIRE(std::isfinite(v));
        const auto e2 = umap_embed(m, opts);
        REQUIRE(e1.coords == e2.coords);
    }
    SECTION("too few samples are rejected") {
        auto m = make_matrix(10, 4);
        REQUIRE_THROWS_AS(umap_embed(m), std::invalid_argument);
    }
    SECTION("well-separated blobs stay separated in the embedding") {
        const long per = 30, d = 8;
        auto m = make_matrix(2 * per, d);
        for (long i = 0; i < 2 * per; ++i) {
            const double center = i < per ? 0.0 : 10.0;
            m.labels[i] = i < per ? 0 : 1;
            for (long j = 0; j < d; ++j) m.at(i, j) = center + rng.normal() * 0.5;
        }
        const auto emb = umap_embed(m);
        const double s = silhouette_score(emb.coords, m.labels);
        REQUIRE(s > 0.5);
    }
}

TEST_CASE("cluster separation scoring", "[latent]") {
    Rng rng(12);

    SECTION("distant point clusters score near 1") {
        std::vector<double> coords;
        std::vector<int> labels;
        for (int i = 0; i < 40; ++i) {
            const bool right = i >= 20;
            coords.push_back((right ? 100.0 : 0.0) + rng.normal() * 0.5);
            coords.push_back(rng.normal() * 0.5);
            labels.push_back(right ? 1 : 0);
        }
        REQUIRE(silhouette_score(coords, labels) > 0.9);
    }
    SECTION("randomly shuffled labels score near 0") {
        std::vector<double> coords;
        std::vector<int> labels;
        for (int i = 0; i < 200; ++i) {
            coords.push_back((i % 2 ? 50.0 : 0.0) + rng.normal());
            coords.push_back(rng.normal());
            labels.push_back(i < 100 ? 0 : 1);
        }
        Rng shuffle_rng(3);
        shuffle_rng.shuffle(labels.begin(), labels.end());
        REQUIRE(std::abs(silhouette_score(coords, labels)) < 0.1);
    }
    SECTION("degenerate geometry and single-class inputs are rejected") {
        std::vector<double> coords(20, 1.5);  // 10 identical points
        std::vector<int> labels(10, 0);
        for (int i = 5; i < 10; ++i) labels[i] = 1;
        REQUIRE_THROWS_AS(silhouette_score(coords, labels), std::invalid_argument);
        std::vector<double> ok = {0, 0, 1, 1, 2, 2};
        REQUIRE_THROWS_AS(silhouette_score(ok, std::vector<int>{1, 1, 1}), std::invalid_argument);
    }
}
