#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "csilab/autodiff.hpp"
#include "csilab/features.hpp"
#include "csilab/ofdm.hpp"
#include "csilab/scene.hpp"

namespace csilab::posnet {

using ProbabilityMap = Eigen::VectorXd;

/// n x n lattice of grid points covering an area; position estimates are
/// probability-weighted centroids and therefore stay inside the lattice hull.
struct Grid {
    std::size_t n = 15;
    Eigen::Matrix2Xd points;  // 2 x K, row-major lattice order
    scene::Area area;

    static Grid regular(std::size_t n, const scene::Area& area);
    std::size_t size() const { return static_cast<std::size_t>(points.cols()); }
    double spacing() const;
    bool hull_contains(const Eigen::Vector2d& p, double slack = 1e-9) const;
};

struct DenseLayer {
    Eigen::MatrixXd weight;
    Eigen::VectorXd bias;
};

struct BatchNormState {
    Eigen::VectorXd gamma, beta, running_mean, running_var;
};

/// Five dense layers; batch norm in the first two; ReLU on the first four;
/// softmax head over the K grid points.
struct PositioningModel {
    features::FeatureTag feature = features::FeatureTag::F1;
    std::size_t input_dim = 0;
    std::vector<std::size_t> widths;  // four hidden widths
    std::vector<DenseLayer> layers;   // five
    std::array<BatchNormState, 2> bn;
    Grid grid;
    double bn_eps = 1e-5;
    bool adversarially_trained = false;
    std::uint64_t init_seed = 0;

    static PositioningModel init(features::FeatureTag tag, std::size_t input_dim,
                                 std::vector<std::size_t> widths, Grid grid, std::uint64_t seed);
    void validate() const;
};

// Inference-mode forward (running batch statistics).
ProbabilityMap forward(const PositioningModel& model, const Eigen::VectorXd& feature);
Eigen::MatrixXd forward_batch(const PositioningModel& model, const Eigen::MatrixXd& features);

Eigen::Vector2d decode_position(const ProbabilityMap& map, const Grid& grid);

// Gaussian target: m_k ∝ exp(-||g_k - x||² / (2σ²)), normalized.
ProbabilityMap reference_map(const Eigen::Vector2d& x, const Grid& grid, double sigma);

// -(1/K) Σ_k [m*_k log m_k + (1-m*_k) log(1-m_k)], entries clamped to
// [1e-7, 1-1e-7].
double bce_loss(const ProbabilityMap& m, const ProbabilityMap& target);

struct TrainConfig {
    std::size_t epochs = 100;
    std::size_t batch = 64;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double bn_momentum = 0.9;
    double ref_sigma = 0.0;  // 0 = one grid spacing
    std::size_t delay_taps = 16;
    bool adversarial = false;
    std::size_t at_perturbation_length = 16;
    std::uint64_t seed = 1;
};

struct TrainResult {
    std::vector<double> loss_history;
};

/// Deterministic Adam/BCE training. With adversarial=true every batch sample's
/// CSI is perturbed by a fresh random-attack draw before feature extraction.
TrainResult train(PositioningModel& model, const scene::Dataset& dataset, const TrainConfig& cfg);

struct EvalSummary {
    std::vector<double> errors;                // meters, per sample
    std::vector<Eigen::Vector2d> estimates;
    double mean = 0.0;
    double median = 0.0;
};

/// Distance errors ||x̂ - x_true||₂ over a dataset; `perturbations` (when
/// non-null, one per sample) are applied to the stored CSI first.
EvalSummary evaluate(const PositioningModel& model, const scene::Dataset& dataset,
                     const std::vector<ofdm::PerturbationSequence>* perturbations,
                     std::size_t delay_taps, std::size_t threads = 1);

// JSON metadata + little-endian f32 blob at base.json / base.bin.
void save_model(const PositioningModel& model, const std::filesystem::path& base);
PositioningModel load_model(const std::filesystem::path& base);

/// Inference-mode network as a diffgraph subgraph (parameters as constants);
/// returns the probability-map node.
int build_network_graph(diff::Tape& tape, const PositioningModel& model, int feature_node);

} // namespace csilab::posnet
