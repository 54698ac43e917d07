#include "scdd/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
    CLI::App app{"Self-correcting discrete diffusion toolkit"};
    app.require_subcommand(1);
    scdd::CommandOptions opts;
    std::string config;
    std::string checkpoint;
    std::string out = ".";
    std::uint64_t seed = 0;

    for (const char* name : {"verify", "train", "sample", "eval", "ablate"}) {
        auto* sub = app.add_subcommand(name);
        sub->add_option("--config", config, "key = value config file");
        sub->add_option("--checkpoint", checkpoint, "checkpoint to load");
        sub->add_option("--out", out, "output directory");
        sub->add_option("--seed", seed, "override the config seed");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const auto* sub = app.get_subcommands().front();
    opts.config = config;
    opts.out = out;
    if (!checkpoint.empty()) {
        opts.checkpoint = checkpoint;
    }
    if (sub->count("--seed") > 0) {
        opts.seed = seed;
    }
    return scdd::run_command(sub->get_name(), opts, std::cout, std::cerr);
}
