#pragma once

#include <cstdint>
#include <vector>

#include "csilab/ofdm.hpp"
#include "csilab/posnet.hpp"
#include "csilab/scene.hpp"

namespace csilab::attacks {

struct AttackConfig {
    std::size_t perturbation_length = 8;  // L_p
    double lambda = 0.0;                  // rate-regularization weight
    std::size_t iterations = 200;
    double step = 0.05;
    std::size_t restarts = 4;
    std::size_t pool_size = 10;           // T
    ofdm::RateParams rate;
    std::uint64_t seed = 1;
    std::size_t delay_taps = 16;
    std::size_t stall_limit = 25;  // restart ends after this many non-improving iterations

    void validate(const ofdm::OfdmConfig& cfg) const;
};

struct WhiteBoxResult {
    ofdm::PerturbationSequence perturbation;
    double objective;
    std::vector<double> trace;  // accepted objectives, monotone non-decreasing
};

/// Projected gradient ascent on ||x̂ - x̂_adv(p̄)||² + λ·R(H, p̄) over the unit
/// sphere in C^{L_p}; gradients flow through feature extraction, the network,
/// decoding and the rate. Best of `restarts` random initializations.
WhiteBoxResult white_box(const posnet::PositioningModel& model, const ofdm::CsiMatrix& csi,
                         const ofdm::OfdmConfig& cfg, const AttackConfig& attack);

// White-box against a surrogate network; the victim CSI estimate is reused.
WhiteBoxResult transfer(const posnet::PositioningModel& alt_model, const ofdm::CsiMatrix& csi,
                        const ofdm::OfdmConfig& cfg, const AttackConfig& attack);

/// T white-box sequences, each optimized on one randomly drawn dataset sample.
std::vector<ofdm::PerturbationSequence> build_pool(const posnet::PositioningModel& model,
                                                   const scene::Dataset& source,
                                                   std::size_t pool_size,
                                                   const AttackConfig& attack,
                                                   std::size_t threads = 1);

// Uniform draw from a precomputed pool.
const ofdm::PerturbationSequence& pool_attack(const std::vector<ofdm::PerturbationSequence>& pool,
                                              std::uint64_t seed);

// Amplitudes U[0,1], phases U[0,2π), normalized.
ofdm::PerturbationSequence random_attack(std::size_t perturbation_length, std::uint64_t seed);

} // namespace csilab::attacks
