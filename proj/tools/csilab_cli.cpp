#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "csilab/errors.hpp"
#include "csilab/experiment.hpp"
#include "csilab/parallel.hpp"

namespace {

// Exit codes: 0 ok, 1 unexpected, 2 missing input, 3 schema violation,
// 4 constraint violation, 5 invalid argument, 6 training/numeric failure.
int error_exit(const std::string& type, const std::string& message, int code) {
    nlohmann::json j;
    j["error"] = {{"type", type}, {"message", message}};
    std::cerr << j.dump() << std::endl;
    return code;
}

struct CommonArgs {
    std::string config_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::size_t threads = 0;
};

void add_common(CLI::App* app, CommonArgs& args) {
    app->add_option("--config", args.config_path, "experiment config JSON")->required();
    app->add_option("--out", args.out_dir, "output directory");
    app->add_option("--seed", args.seed, "override config seed")
        ->each([&](const std::string&) { args.seed_set = true; });
    app->add_option("--threads", args.threads, "worker threads (0 = hardware)");
}

std::filesystem::path resolve_out(const csilab::harness::ExperimentConfig& cfg,
                                  const CommonArgs& args) {
    if (!args.out_dir.empty()) return args.out_dir;
    if (!cfg.out_dir.empty()) return cfg.out_dir;
    if (const char* env = std::getenv("CSILAB_OUT"); env && *env) return env;
    return ".";
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"csilab: CSI positioning attack/defense experiment driver"};
    app.require_subcommand(1);

    CommonArgs args;

    auto* scene_cmd = app.add_subcommand("scene", "scene management");
    auto* scene_gen = scene_cmd->add_subcommand("gen", "generate primary and alt scenes");
    add_common(scene_gen, args);

    auto* dataset_cmd = app.add_subcommand("dataset", "dataset management");
    auto* dataset_build = dataset_cmd->add_subcommand("build", "build train/test/alt datasets");
    add_common(dataset_build, args);

    auto* train_cmd = app.add_subcommand("train", "train positioning networks");
    add_common(train_cmd, args);

    auto* attack_cmd = app.add_subcommand("attack", "attack experiments");
    auto* attack_sweep = attack_cmd->add_subcommand("sweep", "run the attack sweep, emit CSV");
    add_common(attack_sweep, args);

    auto* report_cmd = app.add_subcommand("report", "summarize the sweep CSV as JSON");
    add_common(report_cmd, args);

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = csilab::harness::load_config(args.config_path);
        if (args.seed_set) cfg.seed = args.seed;
        std::size_t threads = args.threads ? args.threads
                              : cfg.threads ? cfg.threads
                                            : csilab::default_threads();
        const std::filesystem::path out = resolve_out(cfg, args);
        std::filesystem::create_directories(out);

        if (scene_gen->parsed()) {
            csilab::harness::cmd_scene_gen(cfg, out);
            std::cout << "scenes written to " << out.string() << std::endl;
        } else if (dataset_build->parsed()) {
            csilab::harness::cmd_dataset_build(cfg, out, threads);
            std::cout << "datasets written to " << out.string() << std::endl;
        } else if (train_cmd->parsed()) {
            csilab::harness::cmd_train(cfg, out, threads);
            std::cout << "models written to " << out.string() << std::endl;
        } else if (attack_sweep->parsed()) {
            const auto rows = csilab::harness::cmd_attack_sweep(cfg, out, threads);
            std::cout << "sweep complete: " << rows.size() << " rows -> "
                      << csilab::harness::sweep_csv_path(out).string() << std::endl;
        } else if (report_cmd->parsed()) {
            const auto rep = csilab::harness::cmd_report(cfg, out);
            std::cout << rep.dump(2) << std::endl;
        }
        return 0;
    } catch (const csilab::missing_input& e) {
        return error_exit("missing_input", e.what(), 2);
    } catch (const csilab::schema_error& e) {
        return error_exit("schema_violation", e.what(), 3);
    } catch (const csilab::constraint_violation& e) {
        return error_exit("constraint_violation", e.what(), 4);
    } catch (const std::invalid_argument& e) {
        return error_exit("invalid_argument", e.what(), 5);
    } catch (const csilab::training_failure& e) {
        return error_exit("training_failure", e.what(), 6);
    } catch (const csilab::numeric_failure& e) {
        return error_exit("numeric_failure", e.what(), 6);
    } catch (const std::exception& e) {
        return error_exit("internal", e.what(), 1);
    }
}
