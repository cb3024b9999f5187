#include "csilab/scene.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "csilab/errors.hpp"
#include "csilab/parallel.hpp"
#include "csilab/rng.hpp"

namespace csilab::scene {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kSpeedOfLight = 299792458.0;

struct Path {
    double total_distance;
    std::complex<double> reflection;
    double sin_arrival;  // array axis is +x; broadside arrivals have sinθ = 0
};

std::vector<Path> enumerate_paths(const Scene& scene, const Eigen::Vector2d& x) {
    std::vector<Path> paths;
    paths.reserve(scene.scatterers.size() + 1);
    if (scene.line_of_sight) {
        const Eigen::Vector2d d = x - scene.bs_position;
        const double dist = std::max(d.norm(), 1e-3);
        paths.push_back({dist, {1.0, 0.0}, d.x() / dist});
    }
    for (const auto& sc : scene.scatterers) {
        const Eigen::Vector2d leg1 = sc.position - scene.bs_position;
        const Eigen::Vector2d leg2 = x - sc.position;
        const double d1 = std::max(leg1.norm(), 1e-3);
        const double dist = d1 + std::max(leg2.norm(), 1e-3);
        paths.push_back({dist, sc.reflection, leg1.x() / d1});
    }
    return paths;
}

void write_u32(std::ofstream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

} // namespace

double Area::diagonal() const { return std::hypot(xmax - xmin, ymax - ymin); }

void Scene::validate() const {
    if (antenna_count == 0) throw std::invalid_argument("Scene: antenna count must be >= 1");
    if (!(antenna_spacing > 0.0) || !(carrier_wavelength > 0.0) || !(bandwidth_hz > 0.0))
        throw std::invalid_argument("Scene: spacing/wavelength/bandwidth must be positive");
    if (!(area.xmax > area.xmin) || !(area.ymax > area.ymin))
        throw std::invalid_argument("Scene: empty area");
    if (scatterers.empty() && !line_of_sight)
        throw std::invalid_argument("Scene: needs at least one scatterer or line of sight");
}

Scene make_default_scene(std::uint64_t seed) {
    Scene s;
    s.bs_position = {0.0, 0.0};
    s.area = {0.0, 0.0, 20.0, 20.0};
    s.seed = seed;
    Rng rng(derive_seed(seed, 0x7363656e65ull));  // "scene"
    s.scatterers.reserve(12);
    for (int i = 0; i < 12; ++i) {
        Scatterer sc;
        sc.position = {rng.uniform(s.area.xmin, s.area.xmax),
                       rng.uniform(s.area.ymin, s.area.ymax)};
        const double amp = rng.uniform(0.5, 1.0);
        const double phase = rng.uniform(0.0, kTwoPi);
        sc.reflection = std::polar(amp, phase);
        s.scatterers.push_back(sc);
    }
    s.validate();
    return s;
}

Scene make_alt_scene(const Scene& base, std::uint64_t seed) {
    Scene alt = base;
    alt.bs_position = {base.area.xmax, base.area.ymax};
    alt.seed = seed;
    Rng rng(derive_seed(seed, 0x616c74ull));  // "alt"
    for (auto& sc : alt.scatterers) {
        sc.position = {rng.uniform(alt.area.xmin, alt.area.xmax),
                       rng.uniform(alt.area.ymin, alt.area.ymax)};
        const double amp = rng.uniform(0.5, 1.0);
        const double phase = rng.uniform(0.0, kTwoPi);
        sc.reflection = std::polar(amp, phase);
    }
    alt.validate();
    return alt;
}

ofdm::ComplexVec impulse_response(const Scene& scene, const Eigen::Vector2d& x,
                                  std::size_t antenna, std::size_t taps) {
    scene.validate();
    if (!scene.area.contains(x))
        throw std::invalid_argument("impulse_response: position outside scene area");
    if (antenna >= scene.antenna_count)
        throw std::invalid_argument("impulse_response: antenna index out of range");
    if (taps == 0) throw std::invalid_argument("impulse_response: taps must be >= 1");

    ofdm::ComplexVec h(taps, {0.0, 0.0});
    const double steer_coeff =
        -kTwoPi * scene.antenna_spacing / scene.carrier_wavelength * static_cast<double>(antenna);
    for (const Path& p : enumerate_paths(scene, x)) {
        const double prop_phase = -kTwoPi * p.total_distance / scene.carrier_wavelength;
        const std::complex<double> gain = (1.0 / p.total_distance) * p.reflection *
                                          std::polar(1.0, prop_phase) *
                                          std::polar(1.0, steer_coeff * p.sin_arrival);
        long tap = std::lround(p.total_distance * scene.bandwidth_hz / kSpeedOfLight);
        tap = std::min<long>(std::max<long>(tap, 0), static_cast<long>(taps) - 1);
        h[static_cast<std::size_t>(tap)] += gain;
    }
    return h;
}

std::vector<ofdm::ComplexVec> normalized_impulse_response(const Scene& scene,
                                                          const Eigen::Vector2d& x,
                                                          std::size_t taps) {
    std::vector<ofdm::ComplexVec> rows;
    rows.reserve(scene.antenna_count);
    double power = 0.0;
    for (std::size_t b = 0; b < scene.antenna_count; ++b) {
        rows.push_back(impulse_response(scene, x, b, taps));
        for (const auto& z : rows.back()) power += std::norm(z);
    }
    const double inv = 1.0 / std::sqrt(std::max(power, 1e-300));
    for (auto& row : rows)
        for (auto& z : row) z *= inv;
    return rows;
}

ofdm::CsiMatrix true_csi(const Scene& scene, const Eigen::Vector2d& x,
                         const ofdm::OfdmConfig& cfg) {
    ofdm::CsiMatrix csi;
    for (auto& row : normalized_impulse_response(scene, x, cfg.channel_taps))
        csi.rows.push_back(ofdm::transfer_function(row, cfg.subcarriers));
    return csi;
}

Dataset build_dataset(const Scene& scene, const ofdm::OfdmConfig& cfg, std::size_t n,
                      double snr_db, std::uint64_t seed, const std::string& split,
                      std::size_t threads) {
    scene.validate();
    cfg.validate();
    if (n == 0) throw std::invalid_argument("build_dataset: N must be >= 1");

    const std::vector<int> pilot = ofdm::make_pilot(cfg.subcarriers, scene.seed);
    const double snr_lin = std::isfinite(snr_db) ? std::pow(10.0, snr_db / 10.0) : 0.0;
    const double b_count = static_cast<double>(scene.antenna_count);

    Dataset ds;
    ds.config = cfg;
    ds.scene = scene;
    ds.split = split;
    ds.snr_db = snr_db;
    ds.samples.resize(n);

    parallel_for(n, threads, [&](std::size_t i) {
        Rng rng(derive_seed(seed, i));
        Eigen::Vector2d x{rng.uniform(scene.area.xmin, scene.area.xmax),
                          rng.uniform(scene.area.ymin, scene.area.ymax)};
        const auto rows = normalized_impulse_response(scene, x, cfg.channel_taps);
        ofdm::CsiMatrix csi;
        csi.rows.reserve(rows.size());
        // Mean received per-subcarrier power is ‖H‖_F²/(B·W) = 1/B after
        // normalization; noise variance follows the target SNR against it.
        const double n0 = std::isfinite(snr_db) ? 1.0 / (b_count * snr_lin) : 0.0;
        const double sigma = std::sqrt(n0 / 2.0);
        for (const auto& taps : rows) {
            ofdm::ComplexVec y = ofdm::transfer_function(taps, cfg.subcarriers);
            for (std::size_t w = 0; w < y.size(); ++w) {
                y[w] *= static_cast<double>(pilot[w]);  // received pilot symbol
                if (sigma > 0.0)
                    y[w] += ofdm::cplx(sigma * rng.gaussian(), sigma * rng.gaussian());
            }
            csi.rows.push_back(ofdm::estimate_csi(y, pilot));
        }
        ds.samples[i] = Sample{std::move(csi), x};
    });
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& base) {
    std::filesystem::path bin = base;
    bin += ".csid";
    std::filesystem::path meta = base;
    meta += ".json";

    std::ofstream out(bin, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot open " + bin.string());
    const std::uint32_t n = static_cast<std::uint32_t>(ds.samples.size());
    const std::uint32_t b = static_cast<std::uint32_t>(ds.antennas());
    const std::uint32_t w = static_cast<std::uint32_t>(ds.config.subcarriers);
    out.write("CSID", 4);
    write_u32(out, 1u);
    write_u32(out, n);
    write_u32(out, b);
    write_u32(out, w);
    write_u32(out, 2u);
    std::vector<float> buf;
    buf.reserve(2 * b * w + 2);
    for (const auto& s : ds.samples) {
        buf.clear();
        for (const auto& row : s.csi.rows)
            for (const auto& z : row) {
                buf.push_back(static_cast<float>(z.real()));
                buf.push_back(static_cast<float>(z.imag()));
            }
        buf.push_back(static_cast<float>(s.position.x()));
        buf.push_back(static_cast<float>(s.position.y()));
        out.write(reinterpret_cast<const char*>(buf.data()),
                  static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }

    nlohmann::json j;
    j["scene"] = scene_to_json(ds.scene);
    j["ofdm"] = ofdm_to_json(ds.config);
    j["split"] = ds.split;
    if (std::isfinite(ds.snr_db))
        j["snr_db"] = ds.snr_db;
    else
        j["snr_db"] = nullptr;
    std::ofstream mo(meta);
    if (!mo) throw std::runtime_error("save_dataset: cannot open " + meta.string());
    mo << j.dump(2) << "\n";
}

Dataset load_dataset(const std::filesystem::path& base) {
    std::filesystem::path bin = base;
    bin += ".csid";
    std::filesystem::path meta = base;
    meta += ".json";
    if (!std::filesystem::exists(bin)) throw missing_input("dataset not found: " + bin.string());
    if (!std::filesystem::exists(meta)) throw missing_input("dataset sidecar not found: " + meta.string());

    Dataset ds;
    {
        std::ifstream mi(meta);
        nlohmann::json j;
        try {
            mi >> j;
        } catch (const nlohmann::json::exception& e) {
            throw schema_error("dataset sidecar is not valid JSON: " + std::string(e.what()));
        }
        if (!j.contains("scene") || !j.contains("ofdm"))
            throw schema_error("dataset sidecar missing scene/ofdm");
        ds.scene = scene_from_json(j["scene"]);
        ds.config = ofdm_from_json(j["ofdm"]);
        ds.split = j.value("split", "");
        ds.snr_db = j.contains("snr_db") && !j["snr_db"].is_null()
                        ? j["snr_db"].get<double>()
                        : std::numeric_limits<double>::infinity();
    }

    std::ifstream in(bin, std::ios::binary);
    char magic[4] = {};
    in.read(magic, 4);
    if (std::memcmp(magic, "CSID", 4) != 0) throw schema_error("bad dataset magic");
    if (read_u32(in) != 1u) throw schema_error("unsupported dataset version");
    const std::uint32_t n = read_u32(in);
    const std::uint32_t b = read_u32(in);
    const std::uint32_t w = read_u32(in);
    const std::uint32_t d = read_u32(in);
    if (d != 2u) throw schema_error("unsupported position dimension");
    ds.samples.resize(n);
    std::vector<float> buf(2 * static_cast<std::size_t>(b) * w + 2);
    for (std::uint32_t i = 0; i < n; ++i) {
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!in) throw schema_error("dataset truncated");
        Sample& s = ds.samples[i];
        s.csi.rows.assign(b, ofdm::ComplexVec(w));
        std::size_t k = 0;
        for (std::uint32_t bb = 0; bb < b; ++bb)
            for (std::uint32_t ww = 0; ww < w; ++ww) {
                s.csi.rows[bb][ww] = {static_cast<double>(buf[k]), static_cast<double>(buf[k + 1])};
                k += 2;
            }
        s.position = {static_cast<double>(buf[k]), static_cast<double>(buf[k + 1])};
    }
    return ds;
}

nlohmann::json scene_to_json(const Scene& s) {
    nlohmann::json j;
    j["bs_position"] = {s.bs_position.x(), s.bs_position.y()};
    j["antenna_count"] = s.antenna_count;
    j["antenna_spacing"] = s.antenna_spacing;
    j["carrier_wavelength"] = s.carrier_wavelength;
    j["bandwidth_hz"] = s.bandwidth_hz;
    j["line_of_sight"] = s.line_of_sight;
    j["area"] = {s.area.xmin, s.area.ymin, s.area.xmax, s.area.ymax};
    j["seed"] = s.seed;
    nlohmann::json sc = nlohmann::json::array();
    for (const auto& it : s.scatterers)
        sc.push_back({it.position.x(), it.position.y(), it.reflection.real(), it.reflection.imag()});
    j["scatterers"] = sc;
    return j;
}

Scene scene_from_json(const nlohmann::json& j) {
    try {
        Scene s;
        s.bs_position = {j.at("bs_position").at(0).get<double>(),
                         j.at("bs_position").at(1).get<double>()};
        s.antenna_count = j.at("antenna_count").get<std::size_t>();
        s.antenna_spacing = j.at("antenna_spacing").get<double>();
        s.carrier_wavelength = j.at("carrier_wavelength").get<double>();
        s.bandwidth_hz = j.at("bandwidth_hz").get<double>();
        s.line_of_sight = j.at("line_of_sight").get<bool>();
        s.area = {j.at("area").at(0).get<double>(), j.at("area").at(1).get<double>(),
                  j.at("area").at(2).get<double>(), j.at("area").at(3).get<double>()};
        s.seed = j.at("seed").get<std::uint64_t>();
        for (const auto& it : j.at("scatterers")) {
            Scatterer sc;
            sc.position = {it.at(0).get<double>(), it.at(1).get<double>()};
            sc.reflection = {it.at(2).get<double>(), it.at(3).get<double>()};
            s.scatterers.push_back(sc);
        }
        s.validate();
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error("scene JSON malformed: " + std::string(e.what()));
    }
}

nlohmann::json ofdm_to_json(const ofdm::OfdmConfig& cfg) {
    nlohmann::json j;
    j["subcarriers"] = cfg.subcarriers;
    j["cyclic_prefix"] = cfg.cyclic_prefix;
    j["channel_taps"] = cfg.channel_taps;
    j["data_subcarriers"] = cfg.data_subcarriers;  // empty = all
    return j;
}

ofdm::OfdmConfig ofdm_from_json(const nlohmann::json& j) {
    try {
        ofdm::OfdmConfig cfg;
        cfg.subcarriers = j.at("subcarriers").get<std::size_t>();
        cfg.cyclic_prefix = j.at("cyclic_prefix").get<std::size_t>();
        cfg.channel_taps = j.at("channel_taps").get<std::size_t>();
        if (j.contains("data_subcarriers"))
            cfg.data_subcarriers = j["data_subcarriers"].get<std::vector<std::size_t>>();
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error("ofdm JSON malformed: " + std::string(e.what()));
    }
}

} // namespace csilab::scene
