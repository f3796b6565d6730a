// End-to-end checks of the saelab binary: the shipped example configs, exit codes, and artifacts.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "scratch.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) q += c == '\'' ? std::string("'\\''") : std::string(1, c);
    return q + "'";
}

Run run(const fs::path& cwd, const std::string& args) {
    const fs::path out = cwd / ".stdout", err = cwd / ".stderr";
    const std::string cmd = "cd " + quote(cwd.string()) + " && " + quote(SAELAB_CLI) + " " + args + " >" +
                            quote(out.string()) + " 2>" + quote(err.string());
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

void write_json(const fs::path& p, const json& j) { std::ofstream(p) << j.dump(2); }

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

std::size_t line_count(const fs::path& p) {
    const std::string s = slurp(p);
    return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

// Copies the example configs and runs the full pipeline once.
struct Pipeline {
    fs::path dir;
    Pipeline() : dir(testutil::scratch_dir("cli")) {
        for (const auto& e : fs::directory_iterator(fs::path(SAELAB_DATA_DIR) / "examples")) {
            if (e.path().extension() == ".json") fs::copy_file(e.path(), dir / e.path().filename());
        }
        for (const char* step : {"synth synth.json", "synth synth_ood.json", "train train_relu.json",
                                 "train train_topk.json", "sweep sweep.json", "eval eval.json", "probe probe.json",
                                 "ontology ontology.json", "overlap overlap.json", "steer-export steer_export.json"}) {
            const Run r = run(dir, std::string(step) + " -q");
            INFO(step, ": ", r.err);
            REQUIRE(r.code == 0);
        }
    }
};

const Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

}  // namespace

TEST_CASE("example pipeline writes every artifact") {
    const fs::path runs = pipeline().dir / "runs";
    for (const char* f : {"synth/data.saeact", "synth/atoms.saeact", "synth/hierarchy.json", "synth_ood/data.saeact",
                          "train_relu/model.saeprm", "train_relu/train_log.csv", "train_topk/model.saeprm",
                          "sweep/sweep.csv", "eval/metrics.csv", "probe/probe.csv", "probe/probe_latent.saeprb",
                          "ontology/ontology.csv", "ontology/ontology_random.csv", "ontology/ontology_raw.csv",
                          "overlap/overlap.json", "steer/steering.saestr", "steer/steering.saestr.json"}) {
        INFO(f);
        CHECK(fs::is_regular_file(runs / f));
    }
    for (const char* d : {"synth", "train_relu", "sweep", "eval", "probe", "ontology", "overlap", "steer"}) {
        INFO(d);
        CHECK(fs::is_regular_file(runs / d / "summary.json"));
        CHECK(fs::is_regular_file(runs / d / "timing.json"));
        CHECK(read_json(runs / d / "manifest.json")["version"] == "1.0.0");
    }
}

TEST_CASE("summaries carry the expected content") {
    const fs::path runs = pipeline().dir / "runs";
    const json train = read_json(runs / "train_relu/summary.json");
    CHECK(train["n"] == 128);
    CHECK(train["final"]["val_mse"].get<double>() >= 0.0);
    const json sweep = read_json(runs / "sweep/summary.json");
    CHECK(sweep["runs"] == 4);
    CHECK(sweep["failed"] == 0);
    CHECK(line_count(runs / "sweep/sweep.csv") == 5);
    CHECK(std::distance(fs::directory_iterator(runs / "sweep/checkpoints"), fs::directory_iterator{}) == 4);
    const json eval = read_json(runs / "eval/summary.json");
    REQUIRE(eval["datasets"].size() == 2);
    CHECK(eval["datasets"][1]["dataset_tag"] == "shifted");
    CHECK(line_count(runs / "eval/metrics.csv") == 3);
    const json probe = read_json(runs / "probe/summary.json");
    CHECK(probe["modes"].size() == 3);
    const json onto = read_json(runs / "ontology/summary.json");
    CHECK(onto["random_baseline"]["seed"] == 7);
    CHECK(read_json(runs / "steer/summary.json")["count"] == 3);
}

TEST_CASE("summary is printed unless quiet") {
    const Run r = run(pipeline().dir, "dataset-info runs/synth/data.saeact");
    CHECK(r.code == 0);
    const json info = json::parse(r.out);
    CHECK(info["n_samples"] == 20000);
    CHECK(info["n_classes"] == 32);
    CHECK(run(pipeline().dir, "dataset-info runs/synth/data.saeact -q").out.empty());
}

TEST_CASE("training is reproducible across runs and thread counts") {
    const fs::path dir = pipeline().dir;
    REQUIRE(run(dir, "train train_relu.json -q --out runs/train_relu_again --threads 3").code == 0);
    CHECK(slurp(dir / "runs/train_relu_again/model.saeprm") == slurp(dir / "runs/train_relu/model.saeprm"));
    CHECK(slurp(dir / "runs/train_relu_again/train_log.csv") == slurp(dir / "runs/train_relu/train_log.csv"));
    REQUIRE(run(dir, "train train_relu.json -q --out runs/train_relu_seed --seed 5").code == 0);
    CHECK(slurp(dir / "runs/train_relu_seed/model.saeprm") != slurp(dir / "runs/train_relu/model.saeprm"));

    json sweep = read_json(dir / "sweep.json");
    sweep["threads"] = 1;
    sweep["out"] = "runs/sweep_serial";
    write_json(dir / "sweep_serial.json", sweep);
    REQUIRE(run(dir, "sweep sweep_serial.json -q").code == 0);
    for (const auto& e : fs::directory_iterator(dir / "runs/sweep/checkpoints")) {
        INFO(e.path().filename());
        CHECK(slurp(e.path()) == slurp(dir / "runs/sweep_serial/checkpoints" / e.path().filename()));
    }
}

TEST_CASE("usage and configuration errors exit 2") {
    const fs::path dir = pipeline().dir;
    CHECK(run(dir, "").code == 2);
    CHECK(run(dir, "dance train_relu.json").code == 2);
    CHECK(run(dir, "train").code == 2);
    CHECK(run(dir, "train train_relu.json --threads 0").code == 2);
    CHECK(run(dir, "--help").code == 0);
    CHECK(run(dir, "--version").out.find("1.0.0") != std::string::npos);
    CHECK(run(dir, "train absent.json").code == 2);

    json cfg = read_json(dir / "train_relu.json");
    cfg["arch"]["lambda"] = -0.5;
    write_json(dir / "neg_lambda.json", cfg);
    const Run neg = run(dir, "train neg_lambda.json");
    CHECK(neg.code == 2);
    CHECK(neg.err.find("lambda") != std::string::npos);

    cfg = read_json(dir / "train_relu.json");
    cfg["dataset"] = "runs/nowhere.saeact";
    write_json(dir / "missing_data.json", cfg);
    const Run missing = run(dir, "train missing_data.json");
    CHECK(missing.code == 2);
    CHECK(missing.err.find("file not found") != std::string::npos);

    cfg = read_json(dir / "train_relu.json");
    cfg["train"]["epoch"] = 3;
    write_json(dir / "typo.json", cfg);
    CHECK(run(dir, "train typo.json").code == 2);

    cfg = read_json(dir / "steer_export.json");
    cfg["features"] = {3, 1, 3};
    cfg["out"] = "runs/steer_dup";
    write_json(dir / "steer_dup.json", cfg);
    const Run dup = run(dir, "steer-export steer_dup.json");
    CHECK(dup.code == 2);
    CHECK(dup.err.find("duplicate") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "runs/steer_dup"));

    std::ofstream(dir / "not_json.json") << "{\"dataset\": ";
    CHECK(run(dir, "train not_json.json").code == 2);
}

TEST_CASE("divergence exits 3") {
    const fs::path dir = pipeline().dir;
    json cfg = read_json(dir / "train_relu.json");
    cfg["train"]["lr"] = 1e300;
    cfg["out"] = "runs/diverged";
    write_json(dir / "diverge.json", cfg);
    const Run r = run(dir, "train diverge.json");
    CHECK(r.code == 3);
    CHECK(r.err.find("diverged at step") != std::string::npos);
}

TEST_CASE("I/O and format failures exit 4") {
    const fs::path dir = pipeline().dir;
    std::ofstream(dir / "junk.saeprm") << "this is not a checkpoint";
    json cfg = read_json(dir / "eval.json");
    cfg["checkpoint"] = "junk.saeprm";
    cfg["out"] = "runs/eval_junk";
    write_json(dir / "eval_junk.json", cfg);
    CHECK(run(dir, "eval eval_junk.json").code == 4);

    std::ofstream(dir / "junk.saeact") << "SAEACT01 but truncated";
    CHECK(run(dir, "dataset-info junk.saeact").code == 4);

    // A regular file where the output directory should go.
    CHECK(run(dir, "steer-export steer_export.json --out runs/train_relu/model.saeprm/sub").code == 4);
}

TEST_CASE("a mismatched dataset is reported without failing the run") {
    const fs::path dir = pipeline().dir;
    json synth = {{"kind", "gaussian"}, {"rows", 100}, {"dim", 8}, {"out", "runs/dim8"}};
    write_json(dir / "dim8.json", synth);
    REQUIRE(run(dir, "synth dim8.json -q").code == 0);
    json cfg = read_json(dir / "eval.json");
    cfg["datasets"] = {{{"tag", "ok"}, {"path", "runs/synth/data.saeact"}}, {{"tag", "dim8"}, {"path", "runs/dim8/data.saeact"}}};
    cfg["out"] = "runs/eval_mixed";
    write_json(dir / "eval_mixed.json", cfg);
    const Run r = run(dir, "eval eval_mixed.json -q");
    CHECK(r.code == 0);
    const std::string csv = slurp(dir / "runs/eval_mixed/metrics.csv");
    CHECK(csv.find("dim8,0,nan") != std::string::npos);
}
