#include "saelab/workflows.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>

#include <fmt/core.h>

#include "json_util.hpp"
#include "saelab/activation_store.hpp"
#include "saelab/errors.hpp"
#include "saelab/feature_analysis.hpp"
#include "saelab/metrics.hpp"
#include "saelab/ontology.hpp"
#include "saelab/probe.hpp"
#include "saelab/sae.hpp"
#include "saelab/steering.hpp"
#include "saelab/synthetic.hpp"
#include "saelab/trainer.hpp"

namespace saelab::workflows {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kVersion[] = "1.0.0";

class Context {
public:
    Context(std::string command, json config, fs::path base_dir, const Overrides& ov)
        : command_(std::move(command)), config_(std::move(config)), base_dir_(std::move(base_dir)) {
        if (!config_.is_object()) throw ConfigError(fmt::format("{}: config must be a JSON object", command_));
        if (ov.seed) config_["seed"] = *ov.seed;
        if (ov.out) config_["out"] = ov.out->string();
        if (ov.threads) config_["threads"] = *ov.threads;
    }

    const json& config() const { return config_; }
    const std::string& command() const { return command_; }

    void allow(std::initializer_list<std::string_view> keys) const {
        detail::reject_unknown_keys(config_, keys, command_);
    }

    template <typename T>
    T get(const char* key, T fallback) const {
        detail::read_field(config_, key, fallback, command_);
        return fallback;
    }

    const json& section(const char* key) const {
        static const json empty = json::object();
        if (!config_.contains(key)) return empty;
        if (!config_.at(key).is_object()) throw ConfigError(fmt::format("{}.{}: expected an object", command_, key));
        return config_.at(key);
    }

    fs::path resolve(const std::string& p) const {
        fs::path path(p);
        return path.is_absolute() ? path : base_dir_ / path;
    }

    /// Path to an existing input file named by `key`.
    fs::path input(const char* key) const {
        if (!config_.contains(key)) throw ConfigError(fmt::format("{}: missing required key '{}'", command_, key));
        return existing(get<std::string>(key, {}), key);
    }

    fs::path existing(const std::string& raw, std::string_view what) const {
        if (raw.empty()) throw ConfigError(fmt::format("{}.{}: empty path", command_, what));
        fs::path p = resolve(raw);
        if (!fs::is_regular_file(p))
            throw ConfigError(fmt::format("{}.{}: file not found '{}'", command_, what, p.string()));
        return p;
    }

    std::uint64_t seed() const { return get<std::uint64_t>("seed", 0); }
    std::size_t threads() const {
        auto t = get<std::size_t>("threads", 1);
        if (t < 1) throw ConfigError(fmt::format("{}.threads: must be >= 1", command_));
        return t;
    }

    /// Creates the output directory; call after validation.
    const fs::path& out_dir() {
        if (out_.empty()) {
            auto raw = get<std::string>("out", {});
            if (raw.empty()) throw ConfigError(fmt::format("{}: missing output directory ('out' or --out)", command_));
            out_ = resolve(raw);
        }
        return out_;
    }

    void prepare_out() {
        std::error_code ec;
        fs::create_directories(out_dir(), ec);
        if (ec) throw IoError(fmt::format("cannot create output directory '{}': {}", out_.string(), ec.message()));
    }

    fs::path file(const std::string& name) {
        files_.push_back(name);
        return out_dir() / name;
    }

    CommandResult finish(json summary, double wall_s) {
        CommandResult r;
        if (out_.empty()) {
            r.summary = std::move(summary);
            return r;
        }
        write_json(file("summary.json"), summary);
        write_json(out_ / "timing.json", {{"command", command_}, {"wall_s", wall_s}});
        files_.push_back("timing.json");
        json manifest = {{"command", command_}, {"version", kVersion}, {"config", config_}, {"files", files_}};
        write_json(out_ / "manifest.json", manifest);
        files_.push_back("manifest.json");
        r.out_dir = out_;
        r.files = files_;
        r.summary = std::move(summary);
        return r;
    }

    static void write_json(const fs::path& path, const json& j) {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
        out << j.dump(2) << '\n';
        if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
    }

private:
    std::string command_;
    json config_;
    fs::path base_dir_;
    fs::path out_;
    std::vector<std::string> files_;
};

SaeArchitecture parse_arch(const json& j) {
    constexpr std::string_view where = "arch";
    detail::reject_unknown_keys(j, {"kind", "lambda", "k", "topk_use_bias", "tie_gate_weights"}, where);
    SaeArchitecture a;
    std::string kind = "relu";
    detail::read_field(j, "kind", kind, where);
    try {
        a.kind = parse_sae_kind(kind);
    } catch (const InvalidArgument& e) {
        throw ConfigError(fmt::format("arch.kind: {}", e.what()));
    }
    detail::read_field(j, "lambda", a.lambda, where);
    detail::read_field(j, "k", a.k, where);
    detail::read_field(j, "topk_use_bias", a.topk_use_bias, where);
    detail::read_field(j, "tie_gate_weights", a.tie_gate_weights, where);
    if (a.uses_l1() && !(a.lambda >= 0.0 && std::isfinite(a.lambda)))
        throw ConfigError(fmt::format("arch.lambda: must be a finite value >= 0, got {}", a.lambda));
    return a;
}

json arch_json(const SaeArchitecture& a) {
    json j = {{"kind", to_string(a.kind)}};
    if (a.kind == SaeKind::TopK) {
        j["k"] = a.k;
        j["topk_use_bias"] = a.topk_use_bias;
    } else {
        j["lambda"] = a.lambda;
    }
    if (a.kind == SaeKind::Gated) j["tie_gate_weights"] = a.tie_gate_weights;
    return j;
}

template <typename Fn>
auto as_config_error(std::string_view where, Fn&& fn) {
    try {
        return fn();
    } catch (const InvalidArgument& e) {
        throw ConfigError(fmt::format("{}: {}", where, e.what()));
    }
}

std::vector<TaggedDataset> tagged_datasets(const Context& ctx, const char* key) {
    const json& cfg = ctx.config();
    if (!cfg.contains(key) || !cfg.at(key).is_array() || cfg.at(key).empty())
        throw ConfigError(fmt::format("{}.{}: expected a non-empty array of {{tag, path}}", ctx.command(), key));
    std::vector<std::pair<std::string, fs::path>> entries;
    for (const auto& e : cfg.at(key)) {
        std::string where = fmt::format("{}.{}", ctx.command(), key);
        detail::reject_unknown_keys(e, {"tag", "path"}, where);
        std::string tag, path;
        detail::read_field(e, "tag", tag, where);
        detail::read_field(e, "path", path, where);
        if (tag.empty()) throw ConfigError(fmt::format("{}: every entry needs a tag", where));
        entries.emplace_back(tag, ctx.existing(path, key));
    }
    std::vector<TaggedDataset> out;
    for (auto& [tag, path] : entries) out.push_back({tag, DatasetView::all(ActivationDataset::open(path))});
    return out;
}

std::string hex64(std::uint64_t v) { return fmt::format("{:016x}", v); }

// ---------------------------------------------------------------------------

json cmd_train(Context& ctx) {
    ctx.allow({"dataset", "arch", "expansion", "train", "out", "seed", "threads"});
    fs::path data_path = ctx.input("dataset");
    SaeArchitecture arch = parse_arch(ctx.section("arch"));
    auto expansion = ctx.get<std::size_t>("expansion", 8);
    TrainConfig cfg = TrainConfig::from_json(ctx.section("train"));
    cfg.seed = ctx.seed();
    as_config_error("train", [&] { cfg.validate(); });
    if (expansion < 1) throw ConfigError("train.expansion: must be >= 1");
    ctx.threads();
    ctx.out_dir();

    auto data = ActivationDataset::open(data_path);
    as_config_error("arch", [&] { arch.validate(expansion * data->dim()); });
    ctx.prepare_out();

    TrainResult result = train(DatasetView::all(data), arch, expansion, cfg);
    save_checkpoint(ctx.file("model.saeprm"), result.params, arch);
    result.report.write_csv(ctx.file("train_log.csv"));

    json summary = {{"arch", arch_json(arch)},
                    {"expansion", expansion},
                    {"d", result.params.d},
                    {"n", result.params.n},
                    {"steps", result.report.total_steps},
                    {"checksum", hex64(result.report.checksum)},
                    {"val_on_train", result.report.val_on_train},
                    {"lambda_reduction", result.report.lambda_reduction}};
    if (!result.report.records.empty()) {
        const auto& last = result.report.records.back();
        summary["final"] = {{"val_mse", last.val_mse},
                            {"val_l0", last.val_l0},
                            {"val_l1", last.val_l1},
                            {"dead_fraction", last.dead_fraction},
                            {"train_loss", last.train_loss.total}};
    }
    return summary;
}

json cmd_sweep(Context& ctx) {
    ctx.allow({"dataset", "grid", "train", "save_checkpoints", "out", "seed", "threads"});
    fs::path data_path = ctx.input("dataset");
    SweepGrid grid = SweepGrid::from_json(ctx.section("grid"));
    as_config_error("grid", [&] { grid.validate(); });
    TrainConfig cfg = TrainConfig::from_json(ctx.section("train"));
    cfg.seed = ctx.seed();
    as_config_error("train", [&] { cfg.validate(); });
    bool save = ctx.get<bool>("save_checkpoints", false);
    SweepOptions opts;
    opts.threads = ctx.threads();
    ctx.out_dir();
    auto data = ActivationDataset::open(data_path);
    ctx.prepare_out();
    if (save) {
        opts.checkpoint_dir = ctx.out_dir() / "checkpoints";
        fs::create_directories(*opts.checkpoint_dir);
    }

    auto rows = sweep(DatasetView::all(data), grid, cfg, opts);
    write_sweep_csv(ctx.file("sweep.csv"), rows);
    std::size_t failed = 0;
    for (const auto& r : rows) {
        if (r.status != "ok") ++failed;
        if (!r.checkpoint_path.empty()) ctx.file("checkpoints/" + r.checkpoint_path);
    }
    return {{"runs", rows.size()}, {"failed", failed}, {"grid", grid.to_json()}};
}

json cmd_eval(Context& ctx) {
    ctx.allow({"checkpoint", "datasets", "out", "seed", "threads"});
    fs::path ckpt_path = ctx.input("checkpoint");
    auto datasets = tagged_datasets(ctx, "datasets");
    ctx.out_dir();
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ctx.prepare_out();
    auto reports = ood_eval(ckpt.params, ckpt.arch, datasets);
    write_metrics_csv(ctx.file("metrics.csv"), reports);
    json rows = json::array();
    for (const auto& r : reports) {
        json row = {{"dataset_tag", r.dataset_tag}, {"n", r.n_samples}, {"mean_mse", r.mean_mse},
                    {"mean_l0", r.mean_l0}, {"explained_variance", r.explained_variance}};
        if (!r.error.empty()) row["error"] = r.error;
        rows.push_back(row);
    }
    return {{"arch", arch_json(ckpt.arch)}, {"datasets", rows}};
}

json cmd_probe(Context& ctx) {
    ctx.allow({"checkpoint", "train_dataset", "eval_datasets", "feature_modes", "probe", "out", "seed", "threads"});
    fs::path train_path = ctx.input("train_dataset");
    auto evals = tagged_datasets(ctx, "eval_datasets");
    std::vector<std::string> mode_names{"raw", "latent", "pre_activation"};
    detail::read_field(ctx.config(), "feature_modes", mode_names, "probe");
    if (mode_names.empty()) throw ConfigError("probe.feature_modes: must not be empty");
    std::vector<FeatureMode> modes;
    for (const auto& m : mode_names) modes.push_back(as_config_error("probe.feature_modes", [&] { return parse_feature_mode(m); }));
    bool needs_model = std::any_of(modes.begin(), modes.end(), [](FeatureMode m) { return m != FeatureMode::Raw; });
    std::optional<fs::path> ckpt_path;
    if (needs_model) ckpt_path = ctx.input("checkpoint");
    ProbeConfig pcfg = ProbeConfig::from_json(ctx.section("probe"));
    pcfg.seed = ctx.seed();
    ctx.out_dir();

    auto train_data = ActivationDataset::open(train_path);
    if (!train_data->has_labels()) throw ConfigError("probe.train_dataset: dataset has no labels");
    for (const auto& e : evals)
        if (!e.view.data->has_labels()) throw ConfigError(fmt::format("probe.eval_datasets: '{}' has no labels", e.tag));
    Checkpoint ckpt;
    if (ckpt_path) ckpt = load_checkpoint(*ckpt_path);
    ctx.prepare_out();

    const std::size_t n_classes = train_data->n_classes();
    auto train_view = DatasetView::all(train_data);
    auto train_labels = train_view.labels();
    auto probe_csv = ctx.file("probe.csv");
    json per_mode = json::array();
    bool header = true;
    for (FeatureMode mode : modes) {
        Matrix features = featurize(ckpt.params, ckpt.arch, train_view, mode);
        ProbeFit fit = fit_probe(features, train_labels, n_classes, pcfg);
        std::vector<LabeledFeatures> lf;
        lf.push_back({"train", std::move(features), train_labels, n_classes});
        for (const auto& e : evals)
            lf.push_back({e.tag, featurize(ckpt.params, ckpt.arch, e.view, mode), e.view.labels(), e.view.data->n_classes()});
        ProbeReport report = domain_shift_eval(fit.probe, lf);
        report.train_loss_curve = fit.loss_curve;
        write_probe_csv(probe_csv, mode, report, header);
        header = false;
        save_probe(ctx.file(fmt::format("probe_{}.saeprb", to_string(mode))), fit.probe);
        json acc = json::object();
        for (const auto& [tag, a] : report.accuracies) acc[tag] = a;
        per_mode.push_back({{"feature_mode", to_string(mode)},
                            {"config", fit.probe.config.to_json()},
                            {"accuracy", acc},
                            {"loss_curve", fit.loss_curve}});
    }
    return {{"n_classes", n_classes}, {"modes", per_mode}};
}

json cmd_ontology(Context& ctx) {
    ctx.allow({"checkpoint", "dataset", "hierarchy", "rate_threshold", "thresholds", "random_baseline",
               "raw_neuron_baseline", "out", "seed", "threads"});
    fs::path ckpt_path = ctx.input("checkpoint");
    fs::path data_path = ctx.input("dataset");
    fs::path hier_path = ctx.input("hierarchy");
    auto rate = ctx.get<double>("rate_threshold", 0.5);
    if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError(fmt::format("ontology.rate_threshold: must be in (0, 1], got {}", rate));
    auto thresholds = ctx.get<std::vector<double>>("thresholds", {0.99, 0.75});
    const json& rb = ctx.section("random_baseline");
    detail::reject_unknown_keys(rb, {"enabled", "n", "seed"}, "ontology.random_baseline");
    bool random_enabled = rb.value("enabled", true);
    bool raw_enabled = ctx.get<bool>("raw_neuron_baseline", true);
    ctx.out_dir();

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    auto data = ActivationDataset::open(data_path);
    Hierarchy h = Hierarchy::load(hier_path);
    if (!data->has_labels()) throw ConfigError("ontology.dataset: dataset has no labels");
    if (data->n_classes() != h.n_leaves())
        throw ConfigError(fmt::format("ontology: dataset has {} classes but the hierarchy has {} leaves", data->n_classes(),
                                      h.n_leaves()));
    if (data->dim() != ckpt.params.d)
        throw ConfigError(fmt::format("ontology: model dim {} != dataset dim {}", ckpt.params.d, data->dim()));
    ctx.prepare_out();

    auto view = DatasetView::all(data);
    auto sets = activated_classes(ckpt.params, ckpt.arch, view, rate);
    OntologyReport sae = ontology_report(sets, h, thresholds);
    sae.write_csv(ctx.file("ontology.csv"));
    json summary = {{"rate_threshold", rate}, {"sae", sae.summary_json()}};
    if (random_enabled) {
        std::size_t n = rb.value("n", ckpt.params.n);
        std::uint64_t seed = rb.value("seed", ctx.seed());
        OntologyReport r = random_baseline(data->dim(), n, view, h, rate, seed, thresholds);
        r.write_csv(ctx.file("ontology_random.csv"));
        summary["random_baseline"] = r.summary_json();
        summary["random_baseline"]["seed"] = seed;
    }
    if (raw_enabled) {
        OntologyReport r = raw_neuron_baseline(view, h, rate, thresholds);
        r.write_csv(ctx.file("ontology_raw.csv"));
        summary["raw_neuron_baseline"] = r.summary_json();
    }
    return summary;
}

json cmd_overlap(Context& ctx) {
    ctx.allow({"a", "b", "checkpoint", "top_fraction", "pooling", "out", "seed", "threads"});
    fs::path a_path = ctx.input("a");
    fs::path b_path = ctx.input("b");
    std::optional<fs::path> ckpt_path;
    if (ctx.config().contains("checkpoint")) ckpt_path = ctx.input("checkpoint");
    auto fraction = ctx.get<double>("top_fraction", 0.01);
    if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError(fmt::format("overlap.top_fraction: must be in (0, 1], got {}", fraction));
    Pooling pooling = parse_pooling(ctx.get<std::string>("pooling", "max"));
    ctx.out_dir();

    auto load = [&](const fs::path& p, const std::optional<Checkpoint>& ckpt) {
        Matrix rows = ActivationDataset::open(p)->to_matrix();
        return ckpt ? encode(ckpt->params, ckpt->arch, rows) : rows;
    };
    std::optional<Checkpoint> ckpt;
    if (ckpt_path) ckpt = load_checkpoint(*ckpt_path);
    Matrix a = load(a_path, ckpt);
    Matrix b = load(b_path, ckpt);
    if (a.cols() != b.cols()) throw ConfigError(fmt::format("overlap: n mismatch ({} vs {})", a.cols(), b.cols()));
    ctx.prepare_out();
    OverlapResult r = feature_overlap(a, b, fraction, pooling);
    json j = r.to_json();
    j["pooling"] = pooling == Pooling::Max ? "max" : "mean";
    j["set_a"] = r.set_a;
    j["set_b"] = r.set_b;
    Context::write_json(ctx.file("overlap.json"), j);
    return r.to_json();
}

json cmd_steer_export(Context& ctx) {
    ctx.allow({"checkpoint", "features", "lambda_range", "source_id", "out", "seed", "threads"});
    fs::path ckpt_path = ctx.input("checkpoint");
    auto features = ctx.get<std::vector<std::size_t>>("features", {});
    auto range = ctx.get<std::vector<double>>("lambda_range", {0.0, 10.0});
    if (range.size() != 2 || !(range[0] <= range[1])) throw ConfigError("steer-export.lambda_range: expected [lo, hi] with lo <= hi");
    auto source = ctx.get<std::string>("source_id", ckpt_path.filename().string());
    {
        std::vector<std::size_t> sorted(features);
        std::sort(sorted.begin(), sorted.end());
        auto dup = std::adjacent_find(sorted.begin(), sorted.end());
        if (dup != sorted.end()) throw ConfigError(fmt::format("steer-export.features: duplicate feature id {}", *dup));
    }
    ctx.out_dir();
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    for (std::size_t k : features)
        if (k >= ckpt.params.n)
            throw ConfigError(fmt::format("steer-export.features: id {} out of range [0, {})", k, ckpt.params.n));
    ctx.prepare_out();
    auto path = ctx.file("steering.saestr");
    export_steering(ckpt.params, features, path, source, range[0], range[1]);
    ctx.file("steering.saestr.json");
    return {{"count", features.size()}, {"d", ckpt.params.d}, {"source_id", source}};
}

json cmd_dataset_info(Context& ctx) {
    ctx.allow({"dataset", "out", "seed", "threads"});
    fs::path path = ctx.input("dataset");
    auto data = ActivationDataset::open(path);
    json info = {{"path", path.string()},
                 {"n_samples", data->n_samples()},
                 {"dim", data->dim()},
                 {"has_labels", data->has_labels()},
                 {"n_classes", data->n_classes()},
                 {"meta", data->meta().to_json()}};
    if (data->has_labels()) {
        std::map<std::uint32_t, std::size_t> counts;
        for (auto l : data->labels()) ++counts[l];
        json c = json::object();
        for (auto [label, count] : counts) c[std::to_string(label)] = count;
        info["label_counts"] = c;
    }
    if (data->n_samples() >= 2) {
        auto stats = dataset_stats(DatasetView::all(data));
        info["mean"] = std::vector<double>(stats.mean.data(), stats.mean.data() + stats.mean.size());
        info["std"] = std::vector<double>(stats.stddev.data(), stats.stddev.data() + stats.stddev.size());
    }
    if (ctx.config().contains("out")) {
        ctx.prepare_out();
        Context::write_json(ctx.file("dataset_info.json"), info);
    }
    return info;
}

json cmd_synth(Context& ctx) {
    ctx.allow({"kind", "rows", "dim", "scale", "n_atoms", "active", "groups", "classes_per_group", "distractors",
               "n_classes", "separation", "noise", "coef_range", "out", "seed", "threads"});
    auto kind = ctx.get<std::string>("kind", "gaussian");
    auto rows = ctx.get<std::size_t>("rows", 5000);
    auto dim = ctx.get<std::size_t>("dim", 16);
    auto coef = ctx.get<std::vector<double>>("coef_range", {0.5, 2.0});
    if (coef.size() != 2) throw ConfigError("synth.coef_range: expected [lo, hi]");
    std::uint64_t seed = ctx.seed();
    ctx.out_dir();
    ctx.prepare_out();

    json summary = {{"kind", kind}, {"rows", rows}, {"dim", dim}, {"seed", seed}};
    auto write = [&](const std::string& name, const Matrix& x, const std::vector<std::uint32_t>& labels,
                     std::size_t n_classes) {
        DatasetMeta meta;
        meta.source_model = "synthetic";
        meta.layer_tag = "none";
        meta.n_classes = static_cast<std::uint32_t>(n_classes);
        meta.notes = fmt::format("synth {} seed {}", kind, seed);
        std::optional<std::vector<std::uint32_t>> lab;
        if (!labels.empty()) lab = labels;
        write_dataset(ctx.file(name), x, lab, meta);
    };
    as_config_error("synth", [&] {
        if (kind == "gaussian") {
            write("data.saeact", synthetic::gaussian(rows, dim, seed, ctx.get<double>("scale", 1.0)), {}, 0);
        } else if (kind == "dictionary") {
            auto sd = synthetic::sparse_dictionary(rows, dim, ctx.get<std::size_t>("n_atoms", 64),
                                                   ctx.get<std::size_t>("active", 3), seed, coef[0], coef[1]);
            write("data.saeact", sd.data, {}, 0);
            write("atoms.saeact", sd.atoms, {}, 0);
        } else if (kind == "clustered") {
            synthetic::ClusterLayout layout;
            layout.groups = ctx.get<std::size_t>("groups", layout.groups);
            layout.classes_per_group = ctx.get<std::size_t>("classes_per_group", layout.classes_per_group);
            layout.distractors = ctx.get<std::size_t>("distractors", layout.distractors);
            auto sd = synthetic::clustered_dictionary(rows, dim, layout, seed, coef[0], coef[1]);
            write("data.saeact", sd.data, sd.labels, sd.n_classes);
            write("atoms.saeact", sd.atoms, {}, 0);
            Context::write_json(ctx.file("hierarchy.json"), synthetic::cluster_hierarchy(layout));
            summary["n_classes"] = sd.n_classes;
        } else if (kind == "blobs") {
            auto n_classes = ctx.get<std::size_t>("n_classes", 4);
            auto b = synthetic::blobs(rows, dim, n_classes, ctx.get<double>("separation", 4.0),
                                      ctx.get<double>("noise", 1.0), seed);
            write("data.saeact", b.data, b.labels, n_classes);
            summary["n_classes"] = n_classes;
        } else {
            throw ConfigError(fmt::format("synth.kind: unknown kind '{}' (gaussian, dictionary, clustered, blobs)", kind));
        }
        return 0;
    });
    return summary;
}

using Handler = json (*)(Context&);

const std::map<std::string, Handler, std::less<>>& handlers() {
    static const std::map<std::string, Handler, std::less<>> table = {
        {"train", cmd_train},     {"sweep", cmd_sweep},         {"eval", cmd_eval},
        {"probe", cmd_probe},     {"ontology", cmd_ontology},   {"overlap", cmd_overlap},
        {"steer-export", cmd_steer_export}, {"dataset-info", cmd_dataset_info}, {"synth", cmd_synth},
    };
    return table;
}

bool looks_like_dataset(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    char magic[8] = {};
    in.read(magic, 8);
    return in.gcount() == 8 && std::string_view(magic, 8) == kDatasetMagic;
}

}  // namespace

const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names = {"train", "sweep", "eval", "probe", "ontology",
                                                   "overlap", "steer-export", "dataset-info", "synth"};
    return names;
}

CommandResult run_command(std::string_view command, const json& config, const fs::path& base_dir,
                          const Overrides& overrides) {
    auto it = handlers().find(command);
    if (it == handlers().end()) throw ConfigError(fmt::format("unknown command '{}'", command));
    Context ctx(std::string(command), config, base_dir, overrides);
    auto start = std::chrono::steady_clock::now();
    json summary;
    try {
        summary = it->second(ctx);
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("{}: {}", command, e.what()));
    } catch (const fs::filesystem_error& e) {
        throw IoError(e.what());
    }
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return ctx.finish(std::move(summary), wall);
}

CommandResult run_command(std::string_view command, const fs::path& config_path, const Overrides& overrides) {
    if (!fs::is_regular_file(config_path))
        throw ConfigError(fmt::format("config file not found '{}'", config_path.string()));
    fs::path base = config_path.parent_path();
    if (command == "dataset-info" && looks_like_dataset(config_path))
        return run_command(command, json{{"dataset", config_path.filename().string()}}, base, overrides);
    std::ifstream in(config_path);
    if (!in) throw IoError(fmt::format("cannot read config '{}'", config_path.string()));
    json config;
    try {
        config = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config '{}': {}", config_path.string(), e.what()));
    }
    return run_command(command, config, base, overrides);
}

}  // namespace saelab::workflows
