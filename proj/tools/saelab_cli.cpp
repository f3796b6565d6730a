// saelab command-line front end. Talks to the engine only through the C API.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "saelab/saelab.h"

namespace {

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::uint32_t threads = 0;
    bool quiet = false;
};

struct Command {
    const char* name;
    const char* help;
};

constexpr Command kCommands[] = {
    {"train", "train one SAE and write a checkpoint, training log and summary"},
    {"sweep", "train one SAE per grid point and write sweep.csv"},
    {"eval", "evaluate a checkpoint on one or more activation files"},
    {"probe", "fit linear probes on raw, latent or pre-activation features"},
    {"ontology", "feature-to-class association, LCH and coverage against a hierarchy"},
    {"overlap", "Jaccard overlap of top-fraction features between two activation sets"},
    {"steer-export", "export unit decoder directions as a steering file"},
    {"dataset-info", "print header, labels and per-dimension stats of an activation file"},
    {"synth", "generate a synthetic activation dataset"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"saelab: sparse autoencoder training and analysis"};
    app.set_version_flag("--version", std::string(sae_version()));
    app.require_subcommand(1);

    Common common;
    for (const auto& cmd : kCommands) {
        auto* sub = app.add_subcommand(cmd.name, cmd.help);
        sub->add_option("config", common.config, "JSON config (dataset-info also accepts an activation file)")
            ->required();
        sub->add_option("--seed", common.seed, "override the config seed");
        sub->add_option("--out", common.out, "override the output directory");
        sub->add_option("--threads", common.threads, "worker threads (results do not depend on this)")
            ->check(CLI::PositiveNumber);
        sub->add_flag("-q,--quiet", common.quiet, "do not print the JSON summary");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Help and version exit 0; every usage error is a validation failure.
        int code = app.exit(e);
        return code == 0 ? 0 : sae_exit_code(SAE_ERR_CONFIG);
    }

    const std::string command = app.get_subcommands().front()->get_name();
    sae_run_options opts{};
    opts.has_seed = common.seed.has_value() ? 1 : 0;
    opts.seed = common.seed.value_or(0);
    opts.out = common.out.empty() ? nullptr : common.out.c_str();
    opts.threads = common.threads;

    char* summary = nullptr;
    sae_status status = sae_run_command(command.c_str(), common.config.c_str(), &opts, &summary);
    if (status != SAE_OK) {
        std::fprintf(stderr, "saelab %s: error: %s\n", command.c_str(), sae_last_error());
        return sae_exit_code(status);
    }
    if (!common.quiet && summary) std::printf("%s\n", summary);
    sae_string_free(summary);
    return 0;
}
