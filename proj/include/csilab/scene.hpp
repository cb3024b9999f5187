#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "csilab/ofdm.hpp"

namespace csilab::scene {

struct Scatterer {
    Eigen::Vector2d position;
    std::complex<double> reflection;
};

struct Area {
    double xmin = 0.0, ymin = 0.0, xmax = 20.0, ymax = 20.0;
    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax;
    }
    double diagonal() const;
};

/// Geometric multipath scene: a uniform linear array at the base station and
/// single-bounce scatterers with complex reflection coefficients.
struct Scene {
    Eigen::Vector2d bs_position{0.0, 0.0};
    std::size_t antenna_count = 8;
    double antenna_spacing = 0.03;       // m
    double carrier_wavelength = 0.06;    // m (~5 GHz)
    double bandwidth_hz = 20e6;
    bool line_of_sight = true;
    std::vector<Scatterer> scatterers;
    Area area;
    std::uint64_t seed = 1;

    void validate() const;
};

// Desk-scale default: 20 m x 20 m, B=8, 12 seeded scatterers, 5 GHz / 20 MHz.
Scene make_default_scene(std::uint64_t seed);
// Same area, base station at the opposite corner, fresh scatterers.
Scene make_alt_scene(const Scene& base, std::uint64_t seed);

/// Raw impulse response for one antenna: per path (LoS + one bounce per
/// scatterer), gain (1/d) * rho * exp(-j 2π d/λ) * steering(b, θ) accumulated
/// on tap round(d·B_w/c0) clamped to [0, L-1].
ofdm::ComplexVec impulse_response(const Scene& scene, const Eigen::Vector2d& x,
                                  std::size_t antenna, std::size_t taps);

// All antennas, jointly rescaled so sum_b ||h̄_b||² = 1 (‖H‖_F² = W).
std::vector<ofdm::ComplexVec> normalized_impulse_response(const Scene& scene,
                                                          const Eigen::Vector2d& x,
                                                          std::size_t taps);

// Noiseless true transfer-function matrix at x (rows = antennas).
ofdm::CsiMatrix true_csi(const Scene& scene, const Eigen::Vector2d& x, const ofdm::OfdmConfig& cfg);

struct Sample {
    ofdm::CsiMatrix csi;
    Eigen::Vector2d position;
};

struct Dataset {
    std::vector<Sample> samples;
    ofdm::OfdmConfig config;
    Scene scene;
    std::string split;
    double snr_db = 10.0;

    std::size_t antennas() const { return samples.empty() ? 0 : samples.front().csi.antennas(); }
};

/// N samples at uniform positions with pilot-based CSI estimation at snr_db
/// (infinity = noiseless). Bit-identical for any thread count.
Dataset build_dataset(const Scene& scene, const ofdm::OfdmConfig& cfg, std::size_t n,
                      double snr_db, std::uint64_t seed, const std::string& split,
                      std::size_t threads = 1);

// "CSID" binary + JSON sidecar at base.csid / base.json.
void save_dataset(const Dataset& ds, const std::filesystem::path& base);
Dataset load_dataset(const std::filesystem::path& base);

nlohmann::json scene_to_json(const Scene& s);
Scene scene_from_json(const nlohmann::json& j);
nlohmann::json ofdm_to_json(const ofdm::OfdmConfig& cfg);
ofdm::OfdmConfig ofdm_from_json(const nlohmann::json& j);

} // namespace csilab::scene
