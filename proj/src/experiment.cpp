#include "csilab/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "csilab/errors.hpp"
#include "csilab/parallel.hpp"
#include "csilab/rng.hpp"

namespace csilab::harness {

namespace {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::uint64_t row_seed(const ExperimentConfig& cfg, const SweepRow& row) {
    std::uint64_t h = splitmix64(cfg.seed ^ 0x726f77ull);
    for (char c : row.attack) h = splitmix64(h ^ static_cast<std::uint64_t>(c));
    for (char c : row.feature) h = splitmix64(h ^ static_cast<std::uint64_t>(c));
    h = splitmix64(h ^ static_cast<std::uint64_t>(row.adv_trained));
    h = splitmix64(h ^ static_cast<std::uint64_t>(row.lp));
    std::uint64_t lb = 0;
    static_assert(sizeof(double) == sizeof(std::uint64_t));
    std::memcpy(&lb, &row.lambda, sizeof(lb));
    return splitmix64(h ^ lb);
}

scene::Dataset subset(const scene::Dataset& ds, std::size_t n) {
    if (n == 0 || n >= ds.samples.size()) return ds;
    scene::Dataset out = ds;
    out.samples.assign(ds.samples.begin(), ds.samples.begin() + static_cast<long>(n));
    return out;
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0
                     : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

void require_file(const std::filesystem::path& p, const std::string& producer) {
    if (!std::filesystem::exists(p))
        throw missing_input(p.string() + " not found; run `" + producer + "` first");
}

} // namespace

ExperimentConfig config_from_json(const nlohmann::json& j) {
    try {
        ExperimentConfig cfg;
        cfg.seed = j.value("seed", 1ull);
        cfg.out_dir = j.value("out_dir", std::string());
        cfg.threads = j.value("threads", 0ull);

        cfg.scene = scene::make_default_scene(cfg.seed);
        if (j.contains("scene")) {
            const auto& s = j["scene"];
            if (s.contains("area"))
                cfg.scene.area = {s["area"].at(0).get<double>(), s["area"].at(1).get<double>(),
                                  s["area"].at(2).get<double>(), s["area"].at(3).get<double>()};
            if (s.contains("bs_position"))
                cfg.scene.bs_position = {s["bs_position"].at(0).get<double>(),
                                         s["bs_position"].at(1).get<double>()};
            if (s.contains("antenna_count"))
                cfg.scene.antenna_count = s["antenna_count"].get<std::size_t>();
            if (s.contains("antenna_spacing"))
                cfg.scene.antenna_spacing = s["antenna_spacing"].get<double>();
            if (s.contains("carrier_wavelength"))
                cfg.scene.carrier_wavelength = s["carrier_wavelength"].get<double>();
            if (s.contains("bandwidth_hz")) cfg.scene.bandwidth_hz = s["bandwidth_hz"].get<double>();
            if (s.contains("line_of_sight")) cfg.scene.line_of_sight = s["line_of_sight"].get<bool>();
            if (s.contains("scatterer_count")) {
                // re-draw with the requested count
                scene::Scene tmp = cfg.scene;
                tmp.scatterers.clear();
                Rng rng(derive_seed(cfg.seed, 0x7363656e65ull));
                const auto n = s["scatterer_count"].get<std::size_t>();
                for (std::size_t i = 0; i < n; ++i) {
                    scene::Scatterer sc;
                    sc.position = {rng.uniform(tmp.area.xmin, tmp.area.xmax),
                                   rng.uniform(tmp.area.ymin, tmp.area.ymax)};
                    sc.reflection = std::polar(rng.uniform(0.5, 1.0),
                                               rng.uniform(0.0, 6.283185307179586));
                    tmp.scatterers.push_back(sc);
                }
                cfg.scene = tmp;
            }
        }
        cfg.scene.seed = cfg.seed;

        if (j.contains("ofdm")) cfg.ofdm = scene::ofdm_from_json(j["ofdm"]);
        cfg.grid_n = j.value("grid_n", 15ull);
        cfg.delay_taps = j.value("delay_taps", 16ull);

        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            cfg.n_train = d.value("n_train", cfg.n_train);
            cfg.n_test = d.value("n_test", cfg.n_test);
            if (d.contains("snr_db") && !d["snr_db"].is_null())
                cfg.snr_db = d["snr_db"].get<double>();
            else if (d.contains("snr_db"))
                cfg.snr_db = std::numeric_limits<double>::infinity();
        }

        if (j.contains("train")) {
            const auto& t = j["train"];
            cfg.epochs = t.value("epochs", cfg.epochs);
            cfg.batch = t.value("batch", cfg.batch);
            cfg.learning_rate = t.value("learning_rate", cfg.learning_rate);
            if (t.contains("widths")) cfg.widths = t["widths"].get<std::vector<std::size_t>>();
            cfg.at_perturbation_length =
                t.value("at_perturbation_length", cfg.at_perturbation_length);
            if (t.contains("features")) {
                cfg.features_list.clear();
                for (const auto& f : t["features"])
                    cfg.features_list.push_back(features::tag_from_string(f.get<std::string>()));
            }
            if (t.contains("adversarial"))
                cfg.adversarial_list = t["adversarial"].get<std::vector<bool>>();
            cfg.train_alt = t.value("alt", cfg.train_alt);
        }

        if (j.contains("attack")) {
            const auto& a = j["attack"];
            cfg.attack_iterations = a.value("iterations", cfg.attack_iterations);
            cfg.attack_step = a.value("step", cfg.attack_step);
            cfg.attack_restarts = a.value("restarts", cfg.attack_restarts);
            cfg.attack_stall_limit = a.value("stall_limit", cfg.attack_stall_limit);
            cfg.pool_size = a.value("pool_size", cfg.pool_size);
            cfg.pool_source = a.value("pool_source", cfg.pool_source);
            cfg.eval_samples = a.value("eval_samples", cfg.eval_samples);
            if (a.contains("lp_sweep")) cfg.lp_sweep = a["lp_sweep"].get<std::vector<std::size_t>>();
            if (a.contains("lambda_sweep"))
                cfg.lambda_sweep = a["lambda_sweep"].get<std::vector<double>>();
            if (a.contains("rate")) {
                cfg.rate.symbol_power = a["rate"].value("symbol_power", cfg.rate.symbol_power);
                cfg.rate.noise_power = a["rate"].value("noise_power", cfg.rate.noise_power);
            }
            if (a.contains("entries")) {
                for (const auto& e : a["entries"]) {
                    AttackEntry entry;
                    entry.attack = e.at("attack").get<std::string>();
                    entry.lp_sweep = e.contains("lp")
                                         ? e["lp"].get<std::vector<std::size_t>>()
                                         : cfg.lp_sweep;
                    entry.lambda_sweep = e.contains("lambda")
                                             ? e["lambda"].get<std::vector<double>>()
                                             : cfg.lambda_sweep;
                    if (e.contains("models"))
                        entry.models = e["models"].get<std::vector<std::string>>();
                    cfg.attack_entries.push_back(std::move(entry));
                }
            }
        }
        if (cfg.attack_entries.empty()) {
            for (const char* name : {"none", "random", "white_box", "transfer", "pool"}) {
                AttackEntry e;
                e.attack = name;
                e.lp_sweep = cfg.lp_sweep;
                e.lambda_sweep = cfg.lambda_sweep;
                cfg.attack_entries.push_back(std::move(e));
            }
        }

        cfg.ofdm.validate();
        cfg.scene.validate();
        if (cfg.features_list.empty() || cfg.adversarial_list.empty() || cfg.lp_sweep.empty() ||
            cfg.lambda_sweep.empty())
            throw schema_error("config: feature/adversarial/sweep lists must be nonempty");
        for (const auto& e : cfg.attack_entries) {
            if (e.attack != "none" && e.attack != "random" && e.attack != "white_box" &&
                e.attack != "transfer" && e.attack != "pool")
                throw schema_error("config: unknown attack type " + e.attack);
            if (e.lp_sweep.empty() || e.lambda_sweep.empty() || e.models.empty())
                throw schema_error("config: empty sweep in attack entry");
            for (const auto& m : e.models)
                if (m != "no_at" && m != "at") throw schema_error("config: unknown model tag " + m);
        }
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error("config malformed: " + std::string(e.what()));
    } catch (const std::invalid_argument& e) {
        throw schema_error("config invalid: " + std::string(e.what()));
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw missing_input("config not found: " + path.string());
    std::ifstream in(path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw schema_error("config is not valid JSON: " + std::string(e.what()));
    }
    return config_from_json(j);
}

std::filesystem::path scene_path(const std::filesystem::path& out, bool alt) {
    return out / (alt ? "scene_alt.json" : "scene.json");
}

std::filesystem::path dataset_path(const std::filesystem::path& out, const std::string& split) {
    return out / ("data_" + split);
}

std::filesystem::path model_path(const std::filesystem::path& out, features::FeatureTag tag,
                                 bool adversarial, bool alt) {
    std::string name = "model_";
    if (alt) name += "alt_";
    name += tag == features::FeatureTag::F1 ? "f1" : "f2";
    name += adversarial ? "_at" : "_noat";
    return out / name;
}

std::filesystem::path sweep_csv_path(const std::filesystem::path& out) { return out / "sweep.csv"; }

std::filesystem::path report_path(const std::filesystem::path& out) { return out / "report.json"; }

void cmd_scene_gen(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    std::filesystem::create_directories(out);
    const scene::Scene primary = cfg.scene;
    const scene::Scene alt = scene::make_alt_scene(primary, derive_seed(cfg.seed, 0xa17));
    {
        std::ofstream o(scene_path(out, false));
        o << scene::scene_to_json(primary).dump(2) << "\n";
    }
    {
        std::ofstream o(scene_path(out, true));
        o << scene::scene_to_json(alt).dump(2) << "\n";
    }
}

void cmd_dataset_build(const ExperimentConfig& cfg, const std::filesystem::path& out,
                       std::size_t threads) {
    require_file(scene_path(out, false), "scene gen");
    require_file(scene_path(out, true), "scene gen");
    nlohmann::json js, ja;
    {
        std::ifstream i(scene_path(out, false));
        i >> js;
    }
    {
        std::ifstream i(scene_path(out, true));
        i >> ja;
    }
    const scene::Scene primary = scene::scene_from_json(js);
    const scene::Scene alt = scene::scene_from_json(ja);

    const auto train = scene::build_dataset(primary, cfg.ofdm, cfg.n_train, cfg.snr_db,
                                            derive_seed(cfg.seed, 0x7472), "train", threads);
    scene::save_dataset(train, dataset_path(out, "train"));
    const auto test = scene::build_dataset(primary, cfg.ofdm, cfg.n_test, cfg.snr_db,
                                           derive_seed(cfg.seed, 0x7465), "test", threads);
    scene::save_dataset(test, dataset_path(out, "test"));
    const auto alt_train = scene::build_dataset(alt, cfg.ofdm, cfg.n_train, cfg.snr_db,
                                                derive_seed(cfg.seed, 0x616c), "alt_train", threads);
    scene::save_dataset(alt_train, dataset_path(out, "alt_train"));
}

namespace {

posnet::PositioningModel train_one(const ExperimentConfig& cfg, const scene::Dataset& data,
                                   features::FeatureTag tag, bool adversarial, bool alt,
                                   const std::filesystem::path& out) {
    const std::size_t d =
        features::dimension(tag, data.antennas(), cfg.delay_taps);
    posnet::Grid grid = posnet::Grid::regular(cfg.grid_n, data.scene.area);
    const std::uint64_t model_seed =
        derive_seed(cfg.seed, 0x6d00 + (alt ? 4u : 0u) + (adversarial ? 2u : 0u) +
                                  (tag == features::FeatureTag::F2 ? 1u : 0u));
    posnet::PositioningModel model =
        posnet::PositioningModel::init(tag, d, cfg.widths, grid, model_seed);

    posnet::TrainConfig tc;
    tc.epochs = cfg.epochs;
    tc.batch = cfg.batch;
    tc.learning_rate = cfg.learning_rate;
    tc.delay_taps = cfg.delay_taps;
    tc.adversarial = adversarial;
    tc.at_perturbation_length = cfg.at_perturbation_length;
    tc.seed = model_seed;
    const auto result = posnet::train(model, data, tc);

    const auto base = model_path(out, tag, adversarial, alt);
    posnet::save_model(model, base);
    nlohmann::json log;
    log["loss_history"] = result.loss_history;
    std::ofstream lo(base.string() + "_loss.json");
    lo << log.dump(2) << "\n";
    return model;
}

} // namespace

void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out,
               std::size_t threads) {
    (void)threads;  // training is single-threaded and deterministic
    require_file(dataset_path(out, "train").string() + ".csid", "dataset build");
    const auto train_data = scene::load_dataset(dataset_path(out, "train"));
    for (features::FeatureTag tag : cfg.features_list)
        for (bool adv : cfg.adversarial_list) train_one(cfg, train_data, tag, adv, false, out);
    if (cfg.train_alt) {
        require_file(dataset_path(out, "alt_train").string() + ".csid", "dataset build");
        const auto alt_data = scene::load_dataset(dataset_path(out, "alt_train"));
        for (features::FeatureTag tag : cfg.features_list)
            train_one(cfg, alt_data, tag, false, true, out);
    }
}

namespace {

struct SweepContext {
    const ExperimentConfig& cfg;
    const std::filesystem::path& out;
    std::size_t threads;
    scene::Dataset eval_set;
    scene::Dataset pool_source_set;
    bool pool_source_loaded = false;
};

attacks::AttackConfig make_attack_config(const ExperimentConfig& cfg, std::size_t lp,
                                         double lambda, std::uint64_t seed) {
    attacks::AttackConfig ac;
    ac.perturbation_length = lp;
    ac.lambda = lambda;
    ac.iterations = cfg.attack_iterations;
    ac.step = cfg.attack_step;
    ac.restarts = cfg.attack_restarts;
    ac.stall_limit = cfg.attack_stall_limit;
    ac.pool_size = cfg.pool_size;
    ac.rate = cfg.rate;
    ac.delay_taps = cfg.delay_taps;
    ac.seed = seed;
    return ac;
}

SweepRow run_row(SweepContext& ctx, const posnet::PositioningModel& victim,
                 const posnet::PositioningModel* alt_model, SweepRow row) {
    const ExperimentConfig& cfg = ctx.cfg;
    const std::uint64_t seed = row_seed(cfg, row);
    const std::size_t n = ctx.eval_set.samples.size();

    std::vector<ofdm::PerturbationSequence> perts;
    const std::vector<ofdm::PerturbationSequence>* perts_ptr = nullptr;

    if (row.attack != "none") {
        perts.assign(n, ofdm::PerturbationSequence(ofdm::ComplexVec{ofdm::cplx(1.0, 0.0)}));
        if (row.attack == "random") {
            for (std::size_t i = 0; i < n; ++i)
                perts[i] = attacks::random_attack(row.lp, derive_seed(seed, i));
        } else if (row.attack == "white_box" || row.attack == "transfer") {
            const posnet::PositioningModel& attacked_through =
                row.attack == "white_box" ? victim : *alt_model;
            parallel_for(n, ctx.threads, [&](std::size_t i) {
                const auto ac = make_attack_config(cfg, row.lp, row.lambda, derive_seed(seed, i));
                perts[i] = attacks::white_box(attacked_through, ctx.eval_set.samples[i].csi,
                                              ctx.eval_set.config, ac)
                               .perturbation;
            });
        } else if (row.attack == "pool") {
            const posnet::PositioningModel& pool_model =
                cfg.pool_source == "victim" || !alt_model ? victim : *alt_model;
            const auto ac = make_attack_config(cfg, row.lp, row.lambda, seed);
            const auto pool = attacks::build_pool(pool_model, ctx.pool_source_set, cfg.pool_size,
                                                  ac, ctx.threads);
            for (std::size_t i = 0; i < n; ++i)
                perts[i] = attacks::pool_attack(pool, derive_seed(seed, 0xd000 + i));
        }
        perts_ptr = &perts;
    }

    const auto summary =
        posnet::evaluate(victim, ctx.eval_set, perts_ptr, cfg.delay_taps, ctx.threads);
    row.mean_err_m = summary.mean;
    row.median_err_m = summary.median;

    std::vector<double> rates(n);
    parallel_for(n, ctx.threads, [&](std::size_t i) {
        rates[i] = ofdm::rate(ctx.eval_set.samples[i].csi, perts_ptr ? &perts[i] : nullptr,
                              cfg.rate);
    });
    row.rate_bits = mean_of(rates);
    return row;
}

} // namespace

std::vector<SweepRow> cmd_attack_sweep(const ExperimentConfig& cfg,
                                       const std::filesystem::path& out, std::size_t threads) {
    require_file(dataset_path(out, "test").string() + ".csid", "dataset build");
    SweepContext ctx{cfg, out, threads, {}, {}, false};
    ctx.eval_set = subset(scene::load_dataset(dataset_path(out, "test")), cfg.eval_samples);

    bool needs_alt = false;
    bool needs_pool = false;
    for (const auto& e : cfg.attack_entries) {
        needs_alt = needs_alt || e.attack == "transfer" ||
                    (e.attack == "pool" && cfg.pool_source == "alt");
        needs_pool = needs_pool || e.attack == "pool";
    }

    std::vector<SweepRow> rows;
    for (features::FeatureTag tag : cfg.features_list) {
        std::optional<posnet::PositioningModel> alt_model;
        if (needs_alt) {
            const auto p = model_path(out, tag, false, true);
            require_file(p.string() + ".json", "train");
            alt_model = posnet::load_model(p);
        }
        if (needs_pool && !ctx.pool_source_loaded) {
            const std::string split = cfg.pool_source == "alt" ? "alt_train" : "train";
            require_file(dataset_path(out, split).string() + ".csid", "dataset build");
            ctx.pool_source_set = scene::load_dataset(dataset_path(out, split));
            ctx.pool_source_loaded = true;
        }

        for (bool adv : cfg.adversarial_list) {
            const auto vp = model_path(out, tag, adv, false);
            require_file(vp.string() + ".json", "train");
            const posnet::PositioningModel victim = posnet::load_model(vp);
            const std::string model_tag = adv ? "at" : "no_at";

            for (const auto& entry : cfg.attack_entries) {
                if (std::find(entry.models.begin(), entry.models.end(), model_tag) ==
                    entry.models.end())
                    continue;
                for (std::size_t lp : entry.lp_sweep)
                    for (double lambda : entry.lambda_sweep) {
                        SweepRow row;
                        row.attack = entry.attack;
                        row.feature = features::to_string(tag);
                        row.adv_trained = adv ? 1 : 0;
                        row.lp = lp;
                        row.lambda = lambda;
                        rows.push_back(
                            run_row(ctx, victim, alt_model ? &*alt_model : nullptr, row));
                    }
            }
        }
    }

    write_sweep_csv(rows, sweep_csv_path(out));
    return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& file) {
    std::ofstream o(file);
    if (!o) throw std::runtime_error("cannot open " + file.string());
    o << kSweepHeader << "\n";
    for (const auto& r : rows) {
        o << r.attack << "," << r.feature << "," << r.adv_trained << "," << r.lp << ","
          << fmt_double(r.lambda) << "," << fmt_double(r.mean_err_m) << ","
          << fmt_double(r.median_err_m) << "," << fmt_double(r.rate_bits) << "\n";
    }
}

std::vector<SweepRow> read_sweep_csv(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) throw missing_input("sweep CSV not found: " + file.string());
    std::ifstream in(file);
    std::string line;
    if (!std::getline(in, line)) throw schema_error("sweep CSV empty");
    if (line != kSweepHeader) throw schema_error("sweep CSV header mismatch");
    std::vector<SweepRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        SweepRow r;
        std::getline(ss, r.attack, ',');
        std::getline(ss, r.feature, ',');
        std::getline(ss, field, ',');
        r.adv_trained = std::stoi(field);
        std::getline(ss, field, ',');
        r.lp = static_cast<std::size_t>(std::stoul(field));
        std::getline(ss, field, ',');
        r.lambda = std::stod(field);
        std::getline(ss, field, ',');
        r.mean_err_m = std::stod(field);
        std::getline(ss, field, ',');
        r.median_err_m = std::stod(field);
        std::getline(ss, field, ',');
        r.rate_bits = std::stod(field);
        rows.push_back(std::move(r));
    }
    return rows;
}

namespace {

const SweepRow* find_row(const std::vector<SweepRow>& rows, const std::string& attack,
                         const std::string& feature, int adv, std::size_t lp) {
    for (const auto& r : rows)
        if (r.attack == attack && r.feature == feature && r.adv_trained == adv && r.lp == lp &&
            r.lambda == 0.0)
            return &r;
    return nullptr;
}

// "none" rows ignore L_p; take the first match.
const SweepRow* find_none(const std::vector<SweepRow>& rows, const std::string& feature, int adv) {
    for (const auto& r : rows)
        if (r.attack == "none" && r.feature == feature && r.adv_trained == adv) return &r;
    return nullptr;
}

} // namespace

nlohmann::json cmd_report(const ExperimentConfig& cfg, const std::filesystem::path& out) {
    const auto rows = read_sweep_csv(sweep_csv_path(out));
    const std::string feat = features::to_string(cfg.features_list.front());

    nlohmann::json rep;
    rep["rows"] = rows.size();
    rep["feature"] = feat;
    nlohmann::json crit;

    // Efficacy ordering: unperturbed < random(max L_p) < white-box(max L_p);
    // white-box >= 1.1x random, random >= 2x unperturbed; transfer/pool between
    // random and white-box with 10% slack.
    {
        const std::size_t lp = cfg.lp_sweep.back();
        const auto* none = find_none(rows, feat, 0);
        const auto* rnd = find_row(rows, "random", feat, 0, lp);
        const auto* wb = find_row(rows, "white_box", feat, 0, lp);
        const auto* tr = find_row(rows, "transfer", feat, 0, lp);
        const auto* pl = find_row(rows, "pool", feat, 0, lp);
        nlohmann::json c;
        c["available"] = none && rnd && wb;
        if (none && rnd && wb) {
            bool pass = rnd->mean_err_m >= 2.0 * none->mean_err_m &&
                        wb->mean_err_m >= 1.1 * rnd->mean_err_m;
            c["unperturbed_mean_m"] = none->mean_err_m;
            c["random_mean_m"] = rnd->mean_err_m;
            c["white_box_mean_m"] = wb->mean_err_m;
            if (tr) {
                pass = pass && tr->mean_err_m >= 0.9 * rnd->mean_err_m &&
                       tr->mean_err_m <= 1.1 * wb->mean_err_m;
                c["transfer_mean_m"] = tr->mean_err_m;
            }
            if (pl) {
                pass = pass && pl->mean_err_m >= 0.9 * rnd->mean_err_m &&
                       pl->mean_err_m <= 1.1 * wb->mean_err_m;
                c["pool_mean_m"] = pl->mean_err_m;
            }
            c["pass"] = pass;
        } else {
            c["pass"] = false;
        }
        crit["efficacy_ordering"] = c;
    }

    // Monotone-then-saturating white-box trend over {1,2,4,8} with 5% slack.
    {
        nlohmann::json c;
        std::vector<double> vals;
        bool available = true;
        for (std::size_t lp : {1, 2, 4, 8}) {
            const auto* r = find_row(rows, "white_box", feat, 0, lp);
            if (!r) {
                available = false;
                break;
            }
            vals.push_back(r->mean_err_m);
        }
        c["available"] = available;
        if (available) {
            bool pass = true;
            for (std::size_t i = 1; i < vals.size(); ++i)
                pass = pass && vals[i] >= 0.95 * vals[i - 1];
            c["values"] = vals;
            c["pass"] = pass;
        } else {
            c["pass"] = false;
        }
        crit["monotone_trend"] = c;
    }

    // Rate cost: random at L_p=8 loses at most 15% of the unperturbed rate.
    {
        nlohmann::json c;
        const auto* none = find_none(rows, feat, 0);
        const auto* rnd8 = find_row(rows, "random", feat, 0, 8);
        c["available"] = none && rnd8;
        if (none && rnd8) {
            c["unperturbed_rate"] = none->rate_bits;
            c["random_lp8_rate"] = rnd8->rate_bits;
            c["relative_drop"] = 1.0 - rnd8->rate_bits / none->rate_bits;
            c["pass"] = rnd8->rate_bits >= 0.85 * none->rate_bits;
        } else {
            c["pass"] = false;
        }
        crit["rate_cost"] = c;
    }

    // Adversarial-training trade-off at max L_p.
    {
        nlohmann::json c;
        const std::size_t lp = cfg.lp_sweep.back();
        const auto* wb_noat = find_row(rows, "white_box", feat, 0, lp);
        const auto* wb_at = find_row(rows, "white_box", feat, 1, lp);
        const auto* clean_noat = find_none(rows, feat, 0);
        const auto* clean_at = find_none(rows, feat, 1);
        c["available"] = wb_noat && wb_at && clean_noat && clean_at;
        if (wb_noat && wb_at && clean_noat && clean_at) {
            c["no_at_white_box_mean_m"] = wb_noat->mean_err_m;
            c["at_white_box_mean_m"] = wb_at->mean_err_m;
            c["no_at_clean_mean_m"] = clean_noat->mean_err_m;
            c["at_clean_mean_m"] = clean_at->mean_err_m;
            c["pass"] = wb_at->mean_err_m < wb_noat->mean_err_m &&
                        clean_at->mean_err_m > clean_noat->mean_err_m;
        } else {
            c["pass"] = false;
        }
        crit["at_tradeoff"] = c;
    }

    rep["criteria"] = crit;

    // Validate against the shipped schema before writing.
    const std::filesystem::path schema_file =
        std::filesystem::path(CSILAB_SCHEMA_DIR) / "report.schema.json";
    if (std::filesystem::exists(schema_file)) {
        std::ifstream si(schema_file);
        nlohmann::json schema;
        si >> schema;
        validate_against_schema(rep, schema);
    }

    std::ofstream o(report_path(out));
    o << rep.dump(2) << "\n";
    return rep;
}

void validate_against_schema(const nlohmann::json& value, const nlohmann::json& schema) {
    if (schema.contains("type")) {
        const std::string t = schema["type"].get<std::string>();
        const bool ok = (t == "object" && value.is_object()) || (t == "array" && value.is_array()) ||
                        (t == "string" && value.is_string()) ||
                        (t == "number" && value.is_number()) ||
                        (t == "integer" && value.is_number_integer()) ||
                        (t == "boolean" && value.is_boolean()) || (t == "null" && value.is_null());
        if (!ok) throw schema_error("schema: expected type " + t);
    }
    if (schema.contains("required")) {
        for (const auto& k : schema["required"])
            if (!value.contains(k.get<std::string>()))
                throw schema_error("schema: missing required key " + k.get<std::string>());
    }
    if (schema.contains("properties") && value.is_object()) {
        for (auto it = schema["properties"].begin(); it != schema["properties"].end(); ++it)
            if (value.contains(it.key())) validate_against_schema(value[it.key()], it.value());
    }
    if (schema.contains("items") && value.is_array()) {
        for (const auto& v : value) validate_against_schema(v, schema["items"]);
    }
}

} // namespace csilab::harness
