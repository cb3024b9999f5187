#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csilab/attacks.hpp"
#include "csilab/features.hpp"
#include "csilab/ofdm.hpp"
#include "csilab/posnet.hpp"
#include "csilab/scene.hpp"

namespace csilab::harness {

/// One sweep row request: an attack type evaluated at each (L_p, lambda)
/// against the listed victim variants ("no_at" / "at").
struct AttackEntry {
    std::string attack;  // none | random | white_box | transfer | pool
    std::vector<std::size_t> lp_sweep;
    std::vector<double> lambda_sweep;
    std::vector<std::string> models = {"no_at"};
};

struct ExperimentConfig {
    std::uint64_t seed = 1;
    std::string out_dir;  // optional; CLI --out and $CSILAB_OUT take part too
    std::size_t threads = 0;

    scene::Scene scene;          // primary scene template (scatterers re-seeded)
    ofdm::OfdmConfig ofdm;
    std::size_t grid_n = 15;
    std::size_t delay_taps = 16;

    std::size_t n_train = 5000;
    std::size_t n_test = 1000;
    double snr_db = 10.0;

    std::vector<features::FeatureTag> features_list = {features::FeatureTag::F1};
    std::vector<bool> adversarial_list = {false};
    bool train_alt = false;
    std::size_t epochs = 100;
    std::size_t batch = 64;
    double learning_rate = 1e-3;
    std::vector<std::size_t> widths = {512, 256, 256, 256};
    std::size_t at_perturbation_length = 16;

    std::size_t attack_iterations = 200;
    double attack_step = 0.05;
    std::size_t attack_restarts = 4;
    std::size_t attack_stall_limit = 25;
    std::size_t pool_size = 10;
    std::string pool_source = "alt";  // alt | victim
    std::size_t eval_samples = 0;     // 0 = whole test set
    ofdm::RateParams rate;
    std::vector<AttackEntry> attack_entries;  // empty = all five with defaults
    std::vector<std::size_t> lp_sweep = {1, 2, 4, 8, 16};
    std::vector<double> lambda_sweep = {0.0};
};

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

struct SweepRow {
    std::string attack;
    std::string feature;
    int adv_trained = 0;
    std::size_t lp = 1;
    double lambda = 0.0;
    double mean_err_m = 0.0;
    double median_err_m = 0.0;
    double rate_bits = 0.0;
};

inline constexpr const char* kSweepHeader =
    "attack,feature,adv_trained,L_p,lambda,mean_err_m,median_err_m,rate_bits";

// Stage entry points shared by the CLI and the acceptance suite.
void cmd_scene_gen(const ExperimentConfig& cfg, const std::filesystem::path& out);
void cmd_dataset_build(const ExperimentConfig& cfg, const std::filesystem::path& out,
                       std::size_t threads);
void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
               std::size_t threads);
std::vector<SweepRow> cmd_attack_sweep(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out, std::size_t threads);
nlohmann::json cmd_report(const ExperimentConfig& cfg, const std::filesystem::path& out);

// Canonical artifact names inside the output directory.
std::filesystem::path scene_path(const std::filesystem::path& out, bool alt);
std::filesystem::path dataset_path(const std::filesystem::path& out, const std::string& split);
std::filesystem::path model_path(const std::filesystem::path& out, features::FeatureTag tag,
                                 bool adversarial, bool alt);
std::filesystem::path sweep_csv_path(const std::filesystem::path& out);
std::filesystem::path report_path(const std::filesystem::path& out);

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& file);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& file);

/// Minimal JSON-schema subset validation (type / required / properties /
/// items); throws schema_error on mismatch.
void validate_against_schema(const nlohmann::json& value, const nlohmann::json& schema);

} // namespace csilab::harness
