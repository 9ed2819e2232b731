#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fundus/pipeline/pipeline.hpp"

using namespace fundus;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const char* tag)
        : path(fs::temp_directory_path() / (std::string("fundus_pl_") + tag)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

RunConfig tiny_config() {
    RunConfig cfg = RunConfig::preset("desk");
    cfg.seed = 11;
    cfg.dataset.n_normal = 24;
    cfg.dataset.n_glaucoma = 24;
    cfg.dataset.split_ratio = 0.4;
    cfg.dataset.image_size = 32;
    cfg.dataset.vessel_count = 3;
    cfg.vae.sweep = {4, 8};
    cfg.vae.encoder_widths = {4, 8};
    cfg.train.epochs = 2;
    cfg.train.batch_size = 16;
    cfg.analysis.topk_ratios = {0.25};
    cfg.analysis.umap_neighbors = 5;
    cfg.analysis.umap_epochs = 150;
    cfg.classify.grid_c = {1.0};
    cfg.classify.grid_kernel = {"rbf"};
    cfg.classify.grid_class_weight = {"balanced"};
    return cfg;
}

const char* kTinyToml = R"(# tiny run
seed = 11
output_root = "runs"

[dataset]
n_normal = 24
n_glaucoma = 24
split_ratio = 0.4
image_size = 32
vessel_count = 3

[vae]
sweep = [4, 8]
encoder_widths = [4, 8]
extractor = "tiny"

[train]
epochs = 2
batch_size = 16

[analysis]
topk_ratios = [0.25]
umap_neighbors = 5
umap_epochs = 150

[classify]
grid_c = [1]
grid_kernel = ["rbf"]
grid_class_weight = ["balanced"]
)";

}  // namespace

TEST_CASE("config parser handles the TOML-style subset", "[pipeline]") {
    const auto doc = parse_config_text(
        "# comment\n"
        "seed = 42\n"
        "name = \"hello world\"\n"
        "[vae]\n"
        "sweep = [2, 4, 8]   # inline comment\n"
        "beta = 0.5\n"
        "flag = true\n"
        "[classify]\n"
        "grid_kernel = [\"linear\", \"rbf\"]\n");
    REQUIRE(doc.sections.at("").at("seed").num == 42);
    REQUIRE(doc.sections.at("").at("name").str == "hello world");
    REQUIRE(doc.sections.at("vae").at("sweep").nums == std::vector<double>{2, 4, 8});
    REQUIRE(doc.sections.at("vae").at("beta").num == 0.5);
    REQUIRE(doc.sections.at("vae").at("flag").b == true);
    REQUIRE(doc.sections.at("classify").at("grid_kernel").strs ==
            std::vector<std::string>{"linear", "rbf"});

    REQUIRE_THROWS_WITH(parse_config_text("[oops\n"), Catch::Matchers::ContainsSubstring("line 1"));
    REQUIRE_THROWS_WITH(parse_config_text("a\nb = $\n"),
                        Catch::Matchers::ContainsSubstring("line"));
}

TEST_CASE("presets encode the training recipes", "[pipeline]") {
    const auto paper = RunConfig::preset("paper");
    REQUIRE(paper.train.epochs == 300);
    REQUIRE(paper.train.lr == 1e-3);
    REQUIRE(paper.train.scheduler_step == 140);
    REQUIRE(paper.train.scheduler_gamma == 0.1);
    REQUIRE(paper.train.batch_size == 64);
    REQUIRE(paper.train.flip_prob == 0.5);
    REQUIRE(paper.vae.sweep ==
            std::vector<int>{2, 4, 8, 16, 32, 64, 128, 256, 512, 1024, 2048});
    REQUIRE(paper.vae.encoder_widths == std::vector<int>{32, 64, 128, 256, 512});
    REQUIRE(paper.vae.extractor == "vgg16");
    REQUIRE(paper.dataset.n_normal == 3158);
    REQUIRE(paper.dataset.n_glaucoma == 3744);
    REQUIRE(paper.dataset.split_ratio == 0.2);
    REQUIRE(paper.dataset.image_size == 128);
    REQUIRE(paper.classify.split_ratio == 0.3);
    bool has_optimum = false;
    for (const auto& p : paper.grid())
        has_optimum |= p.C == 1.0 && p.kernel == Kernel::rbf &&
                       p.class_weight == ClassWeight::balanced;
    REQUIRE(has_optimum);

    const auto desk = RunConfig::preset("desk");
    REQUIRE(desk.train.epochs == 30);
    REQUIRE(desk.train.scheduler_step == 14);
    REQUIRE(desk.vae.sweep == std::vector<int>{4, 32, 256});
    REQUIRE(desk.dataset.n_normal == 250);
    REQUIRE(desk.dataset.n_glaucoma == 250);
    REQUIRE(desk.vae.extractor == "tiny");

    REQUIRE_THROWS_AS(RunConfig::preset("huge"), ConfigError);
}

TEST_CASE("config file application, env overrides, and validation", "[pipeline]") {
    TempDir tmp("cfg");
    const auto cfg_path = tmp.path / "run.toml";
    std::ofstream(cfg_path) << kTinyToml;

    RunConfig cfg = RunConfig::preset("desk");
    cfg.apply_document(parse_config_file(cfg_path));
    REQUIRE(cfg.seed == 11);
    REQUIRE(cfg.dataset.n_normal == 24);
    REQUIRE(cfg.vae.sweep == std::vector<int>{4, 8});
    REQUIRE(cfg.train.epochs == 2);
    REQUIRE(cfg.analysis.topk_ratios == std::vector<double>{0.25});
    cfg.validate();

    SECTION("unknown keys are rejected") {
        RunConfig c2 = RunConfig::preset("desk");
        REQUIRE_THROWS_WITH(c2.apply_document(parse_config_text("[vae]\nwidth = 3\n")),
                            Catch::Matchers::ContainsSubstring("vae.width"));
        REQUIRE_THROWS_WITH(c2.apply_document(parse_config_text("[nope]\nx = 1\n")),
                            Catch::Matchers::ContainsSubstring("nope"));
    }
    SECTION("invalid sweep entries are caught before any side effects") {
        RunConfig c2 = tiny_config();
        c2.vae.sweep = {4, 100};
        REQUIRE_THROWS_WITH(c2.validate(), Catch::Matchers::ContainsSubstring("100"));
    }
    SECTION("vgg16 extractor requires a resolvable weights file") {
        RunConfig c2 = tiny_config();
        c2.vae.extractor = "vgg16";
        REQUIRE_THROWS_WITH(c2.validate(),
                            Catch::Matchers::ContainsSubstring("extractor_weights"));
    }
    SECTION("environment variables override output root and weights path") {
        setenv("FUNDUS_OUTPUT_ROOT", "/tmp/other_root", 1);
        setenv("FUNDUS_EXTRACTOR_WEIGHTS", "/tmp/w.safetensors", 1);
        RunConfig c2 = RunConfig::preset("desk");
        c2.apply_env();
        REQUIRE(c2.output_root == "/tmp/other_root");
        REQUIRE(c2.vae.extractor_weights == "/tmp/w.safetensors");
        unsetenv("FUNDUS_OUTPUT_ROOT");
        unsetenv("FUNDUS_EXTRACTOR_WEIGHTS");
    }
    SECTION("directory kind must point at existing paths") {
        RunConfig c2 = tiny_config();
        c2.dataset.kind = "directory";
        c2.dataset.path = (tmp.path / "absent").string();
        c2.dataset.labels = (tmp.path / "absent.csv").string();
        REQUIRE_THROWS_AS(c2.validate(), ConfigError);
    }
}

TEST_CASE("generate writes a deterministic dataset with manifest", "[pipeline]") {
    TempDir run1("gen1"), run2("gen2");
    const auto cfg = tiny_config();
    const auto dir1 = cmd_generate(cfg, run1.path);
    REQUIRE(fs::exists(dir1 / "labels.csv"));
    REQUIRE(fs::exists(dir1 / "manifest.json"));
    long pngs = 0;
    for (const auto& e : fs::directory_iterator(dir1))
        pngs += e.path().extension() == ".png";
    REQUIRE(pngs == 48);

    const auto dir2 = cmd_generate(cfg, run2.path);
    REQUIRE(slurp(dir1 / "labels.csv") == slurp(dir2 / "labels.csv"));
    REQUIRE(slurp(dir1 / "img_000000.png") == slurp(dir2 / "img_000000.png"));
    REQUIRE(slurp(dir1 / "img_000047.png") == slurp(dir2 / "img_000047.png"));

    RunConfig dir_cfg = cfg;
    dir_cfg.dataset.kind = "directory";
    REQUIRE_THROWS_AS(cmd_generate(dir_cfg, run1.path), ConfigError);
}

TEST_CASE("run lock enforces exclusive run directories", "[pipeline]") {
    TempDir tmp("lock");
    {
        RunLock lock(tmp.path);
        REQUIRE(fs::exists(tmp.path / ".lock"));
        REQUIRE_THROWS_WITH(RunLock(tmp.path), Catch::Matchers::ContainsSubstring("locked"));
    }
    REQUIRE(!fs::exists(tmp.path / ".lock"));
    RunLock again(tmp.path);
}

TEST_CASE("full tiny pipeline end to end", "[pipeline]") {
    TempDir run("e2e");
    const auto cfg = tiny_config();

    const auto report = cmd_sweep(cfg, run.path);  // generates the dataset on demand
    REQUIRE(report.entries.size() == 2);
    REQUIRE(report.at(4).ok);
    REQUIRE(report.at(8).ok);
    REQUIRE(fs::exists(run.path / "dataset" / "labels.csv"));
    REQUIRE(fs::exists(run.path / "nl4" / "checkpoint.bin"));
    REQUIRE(fs::exists(run.path / "nl4" / "reconstructions" / "scores.csv"));
    REQUIRE(fs::exists(run.path / "sweep_report.csv"));

    cmd_analyze(cfg, run.path);
    for (int nl : {4, 8}) {
        const auto adir = run.path / ("nl" + std::to_string(nl)) / "analysis";
        REQUIRE(fs::exists(adir / "latents.csv"));
        REQUIRE(fs::exists(adir / "ranking.csv"));
        REQUIRE(fs::exists(adir / "umap_all.csv"));
        REQUIRE(fs::exists(adir / "umap_all.png"));
        const long k = topk_from_ratio(nl, 0.25);
        REQUIRE(fs::exists(adir / ("umap_top" + std::to_string(k) + ".csv")));
        REQUIRE(fs::exists(adir / "cluster_scores.csv"));
        const auto latents = read_latents_csv(adir / "latents.csv");
        REQUIRE(latents.n == 20);
        REQUIRE(latents.d == nl);
    }

    cmd_classify(cfg, run.path);
    REQUIRE(fs::exists(run.path / "classify" / "cv_report.csv"));
    REQUIRE(fs::exists(run.path / "classify" / "metrics.csv"));
    REQUIRE(fs::exists(run.path / "classify" / "roc_overlay.png"));
    REQUIRE(fs::exists(run.path / "classify" / "metric_trends.png"));
    const auto metrics = read_csv((run.path / "classify" / "metrics.csv").string());
    REQUIRE(metrics.rows.size() == 2);

    const auto report_path = cmd_report(run.path);
    const auto text = slurp(report_path);
    REQUIRE(text.find("## Sweep") != std::string::npos);
    REQUIRE(text.find("## Classification") != std::string::npos);
    REQUIRE(text.find("All stages present.") != std::string::npos);

    // regeneration is idempotent
    const auto again = slurp(cmd_report(run.path));
    REQUIRE(again == text);
}

TEST_CASE("analyze and classify require their upstream artifacts", "[pipeline]") {
    TempDir run("missing");
    const auto cfg = tiny_config();
    REQUIRE_THROWS_WITH(cmd_analyze(cfg, run.path),
                        Catch::Matchers::ContainsSubstring("nl=4"));
    REQUIRE_THROWS_WITH(cmd_classify(cfg, run.path),
                        Catch::Matchers::ContainsSubstring("analyze"));

    const auto report_path = cmd_report(run.path);
    const auto text = slurp(report_path);
    REQUIRE(text.find("Missing stages:") != std::string::npos);
    REQUIRE(text.find("sweep") != std::string::npos);
}

TEST_CASE("cli binary drives the pipeline", "[pipeline]") {
    const char* cli = std::getenv("FUNDUS_CLI");
    REQUIRE(cli != nullptr);
    TempDir tmp("cli");
    const auto cfg_path = tmp.path / "run.toml";
    std::ofstream(cfg_path) << kTinyToml;
    const auto run_dir = tmp.path / "run";

    const auto call = [&](const std::string& args) {
        const std::string cmd = std::string("\"") + cli + "\" " + args + " > " +
                                (tmp.path / "out.txt").string() + " 2>&1";
        return std::system(cmd.c_str());
    };

    REQUIRE(call("generate --config " + cfg_path.string() + " --run-dir " + run_dir.string()) == 0);
    REQUIRE(fs::exists(run_dir / "dataset" / "labels.csv"));
    REQUIRE(call("report --run-dir " + run_dir.string()) == 0);
    REQUIRE(fs::exists(run_dir / "report.md"));

    // invalid sweep entry fails validation before any training
    const auto bad_path = tmp.path / "bad.toml";
    std::ofstream(bad_path) << "[vae]\nsweep = [100]\n";
    REQUIRE(call("sweep --config " + bad_path.string() + " --run-dir " +
                 (tmp.path / "r2").string()) != 0);
    REQUIRE(slurp(tmp.path / "out.txt").find("100") != std::string::npos);
    REQUIRE(!fs::exists(tmp.path / "r2" / "sweep_report.csv"));

    REQUIRE(call("frobnicate") != 0);
}
