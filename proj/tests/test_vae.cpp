#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "fundus/core/rng.hpp"
#include "fundus/io/safetensors.hpp"
#include "fundus/vae/extractor.hpp"
#include "fundus/vae/loss.hpp"
#include "fundus/vae/model.hpp"

using namespace fundus;

namespace {

template <class T>
Tensor<T> random_batch(long n, int size, Rng& rng) {
    Tensor<T> x({n, 3, size, size});
    for (auto& v : x.data) v = static_cast<T>(rng.uniform());
    return x;
}

// Eq.-style direct evaluation: per layer 1/(2 C W H) * sum of squared diffs,
// per sample, then averaged over the batch.
template <class T>
double feature_loss_direct(const FeatureStack<T>& a, const FeatureStack<T>& b) {
    const long n = a.layers[0].dim(0);
    double batch_acc = 0.0;
    for (long i = 0; i < n; ++i) {
        double per_image = 0.0;
        for (int l = 0; l < 3; ++l) {
            const auto& fa = a.layers[l];
            const auto& fb = b.layers[l];
            const long c = fa.dim(1), h = fa.dim(2), w = fa.dim(3);
            double acc = 0.0;
            for (long cc = 0; cc < c; ++cc)
                for (long y = 0; y < h; ++y)
                    for (long x = 0; x < w; ++x) {
                        const double d = fa.at4(i, cc, y, x) - fb.at4(i, cc, y, x);
                        acc += d * d;
                    }
            per_image += acc / (2.0 * c * h * w);
        }
        batch_acc += per_image;
    }
    return batch_acc / n;
}

}  // namespace

TEST_CASE("kl divergence closed form", "[vae]") {
    Tensor<double> z({1, 2});
    REQUIRE(kl_divergence(z, z) == 0.0);

    Tensor<double> mu({1, 1});
    Tensor<double> lv({1, 1});
    mu[0] = 1.0;
    REQUIRE(kl_divergence(mu, lv) == Catch::Approx(0.5).margin(1e-12));

    mu[0] = 0.0;
    lv[0] = std::log(4.0);
    REQUIRE(kl_divergence(mu, lv) == Catch::Approx(1.5 - std::log(2.0)).margin(1e-12));

    // non-negative everywhere, zero only at (0,0)
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        Tensor<double> m({1, 8}), l({1, 8});
        for (auto& v : m.data) v = rng.normal();
        for (auto& v : l.data) v = rng.normal();
        const double kl = kl_divergence(m, l);
        REQUIRE(kl >= 0.0);
        REQUIRE(kl > 0.0);  // random vectors are never exactly zero
    }
}

TEST_CASE("kl divergence averages over the batch", "[vae]") {
    Tensor<double> mu({2, 1}), lv({2, 1});
    mu.at2(0, 0) = 1.0;  // contributes 0.5
    mu.at2(1, 0) = 0.0;  // contributes 0
    REQUIRE(kl_divergence(mu, lv) == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("reparameterize", "[vae]") {
    Rng rng(7);
    Tensor<double> mu({2, 3}), lv({2, 3}), eps({2, 3});
    for (auto& v : mu.data) v = rng.normal();
    for (auto& v : lv.data) v = rng.normal();

    SECTION("eps = 0 gives the mean") {
        const auto z = reparameterize_with_noise(mu, lv, eps);
        for (long i = 0; i < z.numel(); ++i) REQUIRE(z[i] == mu[i]);
    }
    SECTION("logvar = 0, eps = 1 shifts by one sigma") {
        lv.zero();
        eps.fill(1.0);
        const auto z = reparameterize_with_noise(mu, lv, eps);
        for (long i = 0; i < z.numel(); ++i) REQUIRE(z[i] == Catch::Approx(mu[i] + 1.0).margin(1e-12));
    }
    SECTION("moments of 1e5 standard draws") {
        Tensor<double> m0({1, 100000}), l0({1, 100000});
        Rng draw(123);
        const auto z = reparameterize(m0, l0, draw);
        double mean = 0, var = 0;
        for (long i = 0; i < z.numel(); ++i) mean += z[i];
        mean /= z.numel();
        for (long i = 0; i < z.numel(); ++i) var += (z[i] - mean) * (z[i] - mean);
        var /= z.numel();
        REQUIRE(std::abs(mean) < 0.02);
        REQUIRE(var > 0.98);
        REQUIRE(var < 1.02);
    }
}

TEST_CASE("feature perceptual loss on injected stacks", "[vae]") {
    auto make_stack = [](double v0, double v1, double v2) {
        FeatureStack<double> s;
        s.layers[0] = Tensor<double>({1, 2, 3, 3}, v0);
        s.layers[1] = Tensor<double>({1, 4, 2, 2}, v1);
        s.layers[2] = Tensor<double>({1, 3, 2, 2}, v2);
        return s;
    };

    SECTION("identical stacks give zero") {
        const auto a = make_stack(0.3, -0.2, 1.7);
        REQUIRE(feature_loss_from_stacks(a, a) == 0.0);
    }
    SECTION("constant offset d in one layer gives d^2/2") {
        const double d = 0.37;
        const auto a = make_stack(0.0, 1.0, -2.0);
        const auto b = make_stack(d, 1.0, -2.0);
        REQUIRE(feature_loss_from_stacks(a, b) == Catch::Approx(d * d / 2.0).margin(1e-12));
    }
    SECTION("offset 1 in all three layers gives 3/2") {
        const auto a = make_stack(0.0, 0.0, 0.0);
        const auto b = make_stack(1.0, 1.0, 1.0);
        REQUIRE(feature_loss_from_stacks(a, b) == Catch::Approx(1.5).margin(1e-12));
    }
    SECTION("matches direct evaluation on random stacks and is symmetric") {
        Rng rng(31);
        auto a = make_stack(0, 0, 0);
        auto b = make_stack(0, 0, 0);
        for (int l = 0; l < 3; ++l) {
            for (auto& v : a.layers[l].data) v = rng.normal();
            for (auto& v : b.layers[l].data) v = rng.normal();
        }
        const double got = feature_loss_from_stacks(a, b);
        REQUIRE(got == Catch::Approx(feature_loss_direct(a, b)).margin(1e-9));
        REQUIRE(got == Catch::Approx(feature_loss_from_stacks(b, a)).margin(1e-15));
    }
}

TEST_CASE("total loss composition", "[vae]") {
    Rng rng(9);
    IdentityExtractor<double> ext;
    const auto x = random_batch<double>(2, 8, rng);
    Tensor<double> mu({2, 4}), lv({2, 4});
    for (auto& v : mu.data) v = rng.normal();

    SECTION("identical reconstruction and standard posterior give zero") {
        Tensor<double> z0({2, 4});
        const auto lb = total_loss(x, x, z0, z0, ext, 1.0);
        REQUIRE(lb.feature == 0.0);
        REQUIRE(lb.kl == 0.0);
        REQUIRE(lb.total == 0.0);
    }
    SECTION("beta = 0 drops the KL term") {
        auto y = x;
        y[0] += 0.25;
        const auto lb = total_loss(x, y, mu, lv, ext, 0.0);
        REQUIRE(lb.total == lb.feature);
        REQUIRE(lb.kl > 0.0);
    }
    SECTION("total = feature + beta * kl") {
        auto y = x;
        y[0] += 0.25;
        const auto lb = total_loss(x, y, mu, lv, ext, 2.5);
        REQUIRE(lb.total == Catch::Approx(lb.feature + 2.5 * lb.kl).margin(1e-12));
    }
}

TEST_CASE("encode/decode shape contracts", "[vae]") {
    VaeConfig cfg;
    cfg.latent_size = 128;
    cfg.encoder_widths = {4, 8};
    cfg.image_size = 16;
    Vae<float> vae(cfg, 21);
    Rng rng(22);
    auto x = random_batch<float>(4, 16, rng);

    Tensor<float> mu, lv;
    vae.encode(x, &mu, &lv);
    REQUIRE(mu.shape == std::vector<long>{4, 128});
    REQUIRE(lv.shape == std::vector<long>{4, 128});

    // identical inputs produce identical posterior rows
    for (long i = 0; i < 3 * 16 * 16; ++i) x.data[1 * 3 * 16 * 16 + i] = x.data[i];
    vae.encode(x, &mu, &lv);
    for (long j = 0; j < 128; ++j) {
        REQUIRE(mu.at2(0, j) == mu.at2(1, j));
        REQUIRE(lv.at2(0, j) == lv.at2(1, j));
    }

    const auto img = vae.decode(mu);
    REQUIRE(img.shape == std::vector<long>{4, 3, 16, 16});

    // squashed output stays in [0,1] even for extreme latents
    Tensor<float> zbig({1, 128});
    for (long i = 0; i < 128; ++i) zbig[i] = (i % 2 ? 1.0f : -1.0f) * 1e6f;
    const auto out = vae.decode(zbig);
    for (float v : out.data) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
    }

    SECTION("lower sweep bound nl = 2") {
        cfg.latent_size = 2;
        Vae<float> tiny(cfg, 3);
        Tensor<float> m2;
        tiny.encode(x, &m2, nullptr);
        REQUIRE(m2.shape == std::vector<long>{4, 2});
    }
    SECTION("shape errors") {
        Tensor<float> bad({2, 3, 8, 8});
        REQUIRE_THROWS_AS(vae.encode(bad, &mu, &lv), std::invalid_argument);
        Tensor<float> zbad({1, 64});
        REQUIRE_THROWS_AS(vae.decode(zbad), std::invalid_argument);
    }
    SECTION("config validation") {
        VaeConfig bad = cfg;
        bad.latent_size = 100;
        REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
        bad.latent_size = 4096;
        REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
        bad = cfg;
        bad.encoder_widths.clear();
        REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
    }
}

TEST_CASE("decode preserves batch size through the sweep set", "[vae]") {
    for (int nl : {2, 16, 256}) {
        VaeConfig cfg;
        cfg.latent_size = nl;
        cfg.encoder_widths = {4, 8};
        cfg.image_size = 16;
        Vae<float> vae(cfg, 77);
        Rng rng(78);
        const auto x = random_batch<float>(3, 16, rng);
        Tensor<float> mu, lv;
        vae.encode(x, &mu, &lv);
        Rng noise(79);
        const auto z = reparameterize(mu, lv, noise);
        const auto img = vae.decode(z);
        REQUIRE(img.shape == std::vector<long>{3, 3, 16, 16});
    }
}

TEST_CASE("extractors are deterministic with fixed shapes", "[vae]") {
    Rng rng(41);
    const auto x = random_batch<float>(2, 32, rng);

    SECTION("identity returns the input three times") {
        IdentityExtractor<float> ext;
        const auto s = ext.forward(x);
        for (int l = 0; l < 3; ++l) REQUIRE(s.layers[l].data == x.data);
    }
    SECTION("tiny conv feature dims and determinism") {
        TinyConvExtractor<float> ext(99);
        const auto s = ext.forward(x);
        REQUIRE(s.layers[0].shape == std::vector<long>{2, 8, 32, 32});
        REQUIRE(s.layers[1].shape == std::vector<long>{2, 16, 16, 16});
        REQUIRE(s.layers[2].shape == std::vector<long>{2, 32, 8, 8});
        TinyConvExtractor<float> ext2(99);
        const auto s2 = ext2.forward(x);
        for (int l = 0; l < 3; ++l) REQUIRE(s.layers[l].data == s2.layers[l].data);
    }
}

TEST_CASE("vgg16 prefix extractor loads safetensors weights", "[vae]") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "fundus_vgg_test";
    fs::create_directories(dir);
    const std::string path = (dir / "vgg16_prefix.safetensors").string();

    Rng rng(55);
    std::map<std::string, Tensor<float>> weights;
    auto add = [&](const std::string& name, std::vector<long> shape) {
        Tensor<float> t(std::move(shape));
        for (auto& v : t.data) v = static_cast<float>(rng.normal() * 0.05);
        weights.emplace(name, std::move(t));
    };
    add("conv1_1.weight", {64, 3, 3, 3});
    add("conv1_1.bias", {64});
    add("conv1_2.weight", {64, 64, 3, 3});
    add("conv1_2.bias", {64});
    add("conv2_1.weight", {128, 64, 3, 3});
    add("conv2_1.bias", {128});
    write_safetensors(path, weights);

    Vgg16PrefixExtractor<float> ext(path);
    const auto x = random_batch<float>(1, 64, rng);
    const auto s = ext.forward(x);
    // golden layer dims for the first three rectified conv layers
    REQUIRE(s.layers[0].shape == std::vector<long>{1, 64, 64, 64});
    REQUIRE(s.layers[1].shape == std::vector<long>{1, 64, 64, 64});
    REQUIRE(s.layers[2].shape == std::vector<long>{1, 128, 32, 32});

    REQUIRE_THROWS_AS(Vgg16PrefixExtractor<float>("/nonexistent/weights.safetensors"),
                      std::runtime_error);
    fs::remove_all(dir);
}

TEST_CASE("extractor input gradients match finite differences", "[vae]") {
    TinyConvExtractor<double> ext(3);
    Rng rng(61);
    auto x = random_batch<double>(1, 8, rng);
    FeatureStack<double> target = ext.forward(x);
    for (int l = 0; l < 3; ++l)
        for (auto& v : target.layers[l].data) v += rng.normal() * 0.1;

    const auto loss_at = [&](const Tensor<double>& in) {
        return feature_loss_from_stacks(target, ext.forward(in));
    };

    ExtractorTrace<double> tr;
    const auto feats = ext.forward(x, &tr);
    FeatureStack<double> g;
    for (int l = 0; l < 3; ++l) {
        const auto& fa = target.layers[l];
        const auto& fb = feats.layers[l];
        const long chw = fa.numel() / fa.dim(0);
        Tensor<double> gl(fa.shape);
        for (long i = 0; i < fa.numel(); ++i) gl[i] = (fb[i] - fa[i]) / (chw * fa.dim(0));
        g.layers[l] = std::move(gl);
    }
    const auto gx = ext.backward_input(g, tr);

    const double h = 1e-6;
    for (long i = 0; i < x.numel(); i += 7) {
        const double orig = x[i];
        x[i] = orig + h;
        const double lp = loss_at(x);
        x[i] = orig - h;
        const double lm = loss_at(x);
        x[i] = orig;
        const double num = (lp - lm) / (2 * h);
        REQUIRE(gx[i] == Catch::Approx(num).margin(1e-7));
    }
}

TEST_CASE("total loss gradients on a tiny model match finite differences", "[vae]") {
    VaeConfig cfg;
    cfg.latent_size = 4;
    cfg.encoder_widths = {4, 8};
    cfg.image_size = 16;
    cfg.beta = 1.0;
    Vae<double> vae(cfg, 101);
    IdentityExtractor<double> ext;
    Rng rng(102);
    const auto x = random_batch<double>(2, 16, rng);
    Tensor<double> eps({2, 4});
    for (auto& v : eps.data) v = rng.normal();

    const auto eval = [&] {
        Vae<double>::Trace tr;
        vae.forward_train(x, eps, tr);
        return feature_loss_from_stacks(ext.forward(x), ext.forward(tr.xhat)) +
               cfg.beta * kl_divergence(tr.mu, tr.logvar);
    };

    vae.zero_grads();
    const auto lb = vae_backward_step(vae, ext, x, eps, cfg.beta);
    REQUIRE(lb.total == Catch::Approx(eval()).margin(1e-12));

    auto params = vae.params();
    int checked = 0, pi = 0;
    const double h = 1e-5;
    for (auto* p : params) {
        int from_this_tensor = 0;
        const long stride = std::max<long>(1, p->value.numel() / 4);
        for (long i = pi % stride; i < p->value.numel(); i += stride) {
            const double orig = p->value[i];
            p->value[i] = orig + h;
            const double lp = eval();
            p->value[i] = orig - h;
            const double lm = eval();
            p->value[i] = orig;
            const double num = (lp - lm) / (2 * h);
            const double ana = p->grad[i];
            const double err = std::abs(num - ana) / std::max({1e-8, std::abs(num), std::abs(ana)});
            INFO(p->name << "[" << i << "] numeric " << num << " analytic " << ana);
            REQUIRE(err <= 1e-3);
            ++checked;
            if (++from_this_tensor >= 3) break;
        }
        ++pi;
    }
    REQUIRE(checked >= 50);
}
