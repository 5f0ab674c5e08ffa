// modaltl: stage-by-stage beam surrogate, transfer and monitoring pipeline.
//
// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 dimension
// mismatch.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

#include "modaltl/pipeline.hpp"

namespace {

enum Exit { ok = 0, config_error = 2, numerical_failure = 3, dimension_mismatch = 4 };

int report(const char* kind, const std::exception& e, int code) {
    std::cerr << "modaltl: " << kind << ": " << e.what() << '\n';
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    using namespace modaltl;

    CLI::App app{"Beam surrogate models, transfer learning and Bayesian damage tracking"};
    app.require_subcommand(1);
    std::string config_file;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out;
    bool quiet = false;
    app.add_option("--config", config_file, "Pipeline config (JSON)")->required();
    app.add_option("--seed", seed, "Global seed (overrides the config)");
    app.add_option("--threads", threads, "Worker threads for dataset generation and tracking")->check(CLI::Range(1u, 1024u));
    app.add_option("--out", out, "Artifact directory (overrides the config)");
    app.add_flag("-q,--quiet", quiet, "Only print errors");

    std::string structure = "all";
    std::string likelihood;
    app.add_subcommand("fem-modes", "Modal analysis of one structure for a multiplier vector");
    app.add_subcommand("dataset", "LHS training and validation sets")
        ->add_option("--structure", structure, "all, source or target")
        ->check(CLI::IsMember({"all", "source", "target"}));
    app.add_subcommand("train", "Train the source surrogate");
    app.add_subcommand("transfer", "Pair modes and fine-tune the target surrogate");
    app.add_subcommand("validate", "R^2 and MAC of the surrogates on fresh samples");
    app.add_subcommand("scenario", "Modal effects of the configured damage scenarios");
    app.add_subcommand("stream", "Synthetic hourly monitoring stream");
    app.add_subcommand("track", "Posterior trace over the stream")
        ->add_option("--likelihood", likelihood, "Shape likelihood override: mac, full_gaussian or none")
        ->check(CLI::IsMember({"mac", "full_gaussian", "none"}));
    app.add_subcommand("report", "Summary and plot-ready tables");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        pipeline::Context ctx;
        ctx.config = pipeline::load_config(config_file);
        if (seed) ctx.config.seed = *seed;
        if (threads) ctx.config.threads = *threads;
        if (!out.empty()) ctx.config.out = out;
        ctx.command = app.get_subcommands().front()->get_name();
        ctx.log = quiet ? nullptr : &std::cout;
        if (!quiet) std::cout << "modaltl " << ctx.command << "  config_hash " << ctx.config.hash << "  seed " << ctx.config.seed << '\n';

        const auto& cmd = ctx.command;
        if (cmd == "fem-modes") pipeline::cmd_fem_modes(ctx);
        else if (cmd == "dataset") pipeline::cmd_dataset(ctx, structure);
        else if (cmd == "train") pipeline::cmd_train(ctx);
        else if (cmd == "transfer") pipeline::cmd_transfer(ctx);
        else if (cmd == "validate") pipeline::cmd_validate(ctx);
        else if (cmd == "scenario") pipeline::cmd_scenario(ctx);
        else if (cmd == "stream") pipeline::cmd_stream(ctx);
        else if (cmd == "track") pipeline::cmd_track(ctx, likelihood);
        else if (cmd == "report") pipeline::cmd_report(ctx);
    } catch (const ConfigError& e) {
        return report("config error", e, config_error);
    } catch (const DimensionMismatchError& e) {
        return report("dimension mismatch", e, dimension_mismatch);
    } catch (const NumericalError& e) {
        return report("numerical failure", e, numerical_failure);
    } catch (const EigensolverError& e) {
        return report("numerical failure", e, numerical_failure);
    } catch (const SingularMassError& e) {
        return report("numerical failure", e, numerical_failure);
    } catch (const Error& e) {
        return report("invalid input", e, config_error);
    } catch (const std::filesystem::filesystem_error& e) {
        return report("file system", e, config_error);
    } catch (const std::exception& e) {
        return report("numerical failure", e, numerical_failure);
    }
    return ok;
}
