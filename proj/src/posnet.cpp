#include "csilab/posnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "csilab/errors.hpp"
#include "csilab/parallel.hpp"
#include "csilab/rng.hpp"

namespace csilab::posnet {

namespace {

constexpr double kBceEps = 1e-7;

Eigen::VectorXd relu(const Eigen::VectorXd& v) { return v.cwiseMax(0.0); }

Eigen::VectorXd softmax(const Eigen::VectorXd& v) {
    const double mx = v.maxCoeff();
    Eigen::VectorXd e = (v.array() - mx).exp();
    return e / e.sum();
}

Eigen::VectorXd bn_infer(const Eigen::VectorXd& z, const BatchNormState& bn, double eps) {
    const Eigen::ArrayXd istd = (bn.running_var.array() + eps).rsqrt();
    return (bn.gamma.array() * (z.array() - bn.running_mean.array()) * istd + bn.beta.array())
        .matrix();
}

double median_of(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void write_f32(std::ofstream& out, const Eigen::MatrixXd& m) {
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) {
            const float f = static_cast<float>(m(r, c));
            out.write(reinterpret_cast<const char*>(&f), sizeof(f));
        }
}

void read_f32(std::ifstream& in, Eigen::MatrixXd& m) {
    for (long r = 0; r < m.rows(); ++r)
        for (long c = 0; c < m.cols(); ++c) {
            float f = 0.0f;
            in.read(reinterpret_cast<char*>(&f), sizeof(f));
            m(r, c) = static_cast<double>(f);
        }
    if (!in) throw schema_error("model weight blob truncated");
}

} // namespace

Grid Grid::regular(std::size_t n, const scene::Area& area) {
    if (n < 2) throw std::invalid_argument("Grid: need at least a 2x2 lattice");
    Grid g;
    g.n = n;
    g.area = area;
    g.points.resize(2, static_cast<long>(n * n));
    const double dx = (area.xmax - area.xmin) / static_cast<double>(n - 1);
    const double dy = (area.ymax - area.ymin) / static_cast<double>(n - 1);
    for (std::size_t iy = 0; iy < n; ++iy)
        for (std::size_t ix = 0; ix < n; ++ix) {
            const long k = static_cast<long>(iy * n + ix);
            g.points(0, k) = area.xmin + static_cast<double>(ix) * dx;
            g.points(1, k) = area.ymin + static_cast<double>(iy) * dy;
        }
    return g;
}

double Grid::spacing() const {
    return (area.xmax - area.xmin) / static_cast<double>(n - 1);
}

bool Grid::hull_contains(const Eigen::Vector2d& p, double slack) const {
    return p.x() >= area.xmin - slack && p.x() <= area.xmax + slack &&
           p.y() >= area.ymin - slack && p.y() <= area.ymax + slack;
}

PositioningModel PositioningModel::init(features::FeatureTag tag, std::size_t input_dim,
                                        std::vector<std::size_t> widths, Grid grid,
                                        std::uint64_t seed) {
    if (widths.size() != 4) throw std::invalid_argument("PositioningModel: expected four hidden widths");
    PositioningModel m;
    m.feature = tag;
    m.input_dim = input_dim;
    m.widths = std::move(widths);
    m.grid = std::move(grid);
    m.init_seed = seed;

    Rng rng(derive_seed(seed, 0x696e6974ull));  // "init"
    std::vector<std::size_t> dims = {input_dim, m.widths[0], m.widths[1], m.widths[2],
                                     m.widths[3], m.grid.size()};
    m.layers.resize(5);
    for (std::size_t i = 0; i < 5; ++i) {
        const std::size_t fan_in = dims[i];
        const std::size_t fan_out = dims[i + 1];
        const double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));  // He, ReLU stack
        m.layers[i].weight.resize(static_cast<long>(fan_out), static_cast<long>(fan_in));
        for (long r = 0; r < m.layers[i].weight.rows(); ++r)
            for (long c = 0; c < m.layers[i].weight.cols(); ++c)
                m.layers[i].weight(r, c) = std_dev * rng.gaussian();
        m.layers[i].bias = Eigen::VectorXd::Zero(static_cast<long>(fan_out));
    }
    for (std::size_t i = 0; i < 2; ++i) {
        const long w = static_cast<long>(dims[i + 1]);
        m.bn[i].gamma = Eigen::VectorXd::Ones(w);
        m.bn[i].beta = Eigen::VectorXd::Zero(w);
        m.bn[i].running_mean = Eigen::VectorXd::Zero(w);
        m.bn[i].running_var = Eigen::VectorXd::Ones(w);
    }
    m.validate();
    return m;
}

void PositioningModel::validate() const {
    if (layers.size() != 5) throw std::invalid_argument("PositioningModel: expected five layers");
    std::size_t in = input_dim;
    for (std::size_t i = 0; i < 5; ++i) {
        if (static_cast<std::size_t>(layers[i].weight.cols()) != in ||
            layers[i].weight.rows() != layers[i].bias.size())
            throw std::invalid_argument("PositioningModel: layer dimension chain broken");
        in = static_cast<std::size_t>(layers[i].weight.rows());
    }
    if (in != grid.size())
        throw std::invalid_argument("PositioningModel: head width does not match grid size");
}

ProbabilityMap forward(const PositioningModel& model, const Eigen::VectorXd& feature) {
    if (static_cast<std::size_t>(feature.size()) != model.input_dim)
        throw std::invalid_argument("forward: feature dimension mismatch");
    Eigen::VectorXd a = feature;
    for (std::size_t i = 0; i < 5; ++i) {
        Eigen::VectorXd z = model.layers[i].weight * a + model.layers[i].bias;
        if (i < 2) z = bn_infer(z, model.bn[i], model.bn_eps);
        a = i < 4 ? relu(z) : softmax(z);
    }
    return a;
}

Eigen::MatrixXd forward_batch(const PositioningModel& model, const Eigen::MatrixXd& features) {
    Eigen::MatrixXd out(static_cast<long>(model.grid.size()), features.cols());
    for (long c = 0; c < features.cols(); ++c) out.col(c) = forward(model, features.col(c));
    return out;
}

Eigen::Vector2d decode_position(const ProbabilityMap& map, const Grid& grid) {
    if (map.size() != static_cast<long>(grid.size()))
        throw std::invalid_argument("decode_position: map/grid size mismatch");
    return grid.points * map;
}

ProbabilityMap reference_map(const Eigen::Vector2d& x, const Grid& grid, double sigma) {
    if (!(sigma > 0.0)) throw std::invalid_argument("reference_map: sigma must be positive");
    const long k = static_cast<long>(grid.size());
    Eigen::VectorXd d2(k);
    for (long i = 0; i < k; ++i) d2(i) = (grid.points.col(i) - x).squaredNorm();
    const double d2min = d2.minCoeff();  // shift before exp so the peak never underflows
    Eigen::VectorXd m = ((d2.array() - d2min) / (-2.0 * sigma * sigma)).exp();
    return m / m.sum();
}

double bce_loss(const ProbabilityMap& m, const ProbabilityMap& target) {
    if (m.size() != target.size()) throw std::invalid_argument("bce_loss: dimension mismatch");
    const Eigen::ArrayXd mc = m.array().max(kBceEps).min(1.0 - kBceEps);
    const Eigen::ArrayXd t = target.array();
    const double acc = (t * mc.log() + (1.0 - t) * (1.0 - mc).log()).sum();
    return -acc / static_cast<double>(m.size());
}

namespace {

struct ParamSet {
    std::vector<Eigen::MatrixXd*> tensors;
    std::vector<int> leaf_ids;
};

struct Adam {
    std::vector<Eigen::MatrixXd> m, v;
    std::size_t t = 0;

    void init(const std::vector<Eigen::MatrixXd*>& params) {
        for (auto* p : params) {
            m.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
            v.push_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        }
    }
    void step(std::vector<Eigen::MatrixXd*>& params, const std::vector<Eigen::MatrixXd>& grads,
              const TrainConfig& cfg) {
        ++t;
        const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(t));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m[i] = cfg.adam_beta1 * m[i] + (1.0 - cfg.adam_beta1) * grads[i];
            v[i] = cfg.adam_beta2 * v[i].array().matrix() +
                   (1.0 - cfg.adam_beta2) * grads[i].array().square().matrix();
            params[i]->array() -= cfg.learning_rate * (m[i].array() / bc1) /
                                  ((v[i].array() / bc2).sqrt() + 1e-8);
        }
    }
};

// Biases and BN vectors live as column matrices while on the tape.
struct BatchGraph {
    int loss = -1;
    int bn_node0 = -1, bn_node1 = -1;
};

BatchGraph build_train_graph(diff::Tape& tape, const PositioningModel& model,
                             const std::vector<int>& ids, const Eigen::MatrixXd& x,
                             const Eigen::MatrixXd& targets) {
    // ids order: W0..W4, b0..b4, g0, be0, g1, be1
    const int xc = tape.constant(x);
    BatchGraph out;
    int a = xc;
    for (std::size_t i = 0; i < 5; ++i) {
        int z = tape.add(tape.matmul(ids[i], a), ids[5 + i]);
        if (i < 2) {
            z = tape.batchnorm_train(z, ids[10 + 2 * i], ids[11 + 2 * i], model.bn_eps);
            (i == 0 ? out.bn_node0 : out.bn_node1) = z;
        }
        a = i < 4 ? tape.relu(z) : tape.softmax_cols(z);
    }
    const int mc = tape.clamp(a, kBceEps, 1.0 - kBceEps);
    const int log_m = tape.log_(mc);
    const int log_1m = tape.log_(tape.add_scalar(tape.scale(mc, -1.0), 1.0));
    const int tgt = tape.constant(targets);
    const int tgt_c = tape.constant(Eigen::MatrixXd(Eigen::MatrixXd::Ones(targets.rows(), targets.cols()) - targets));
    const int total = tape.add(tape.mul(tgt, log_m), tape.mul(tgt_c, log_1m));
    out.loss = tape.scale(tape.sum(total),
                          -1.0 / static_cast<double>(targets.rows() * targets.cols()));
    return out;
}

} // namespace

TrainResult train(PositioningModel& model, const scene::Dataset& dataset, const TrainConfig& cfg) {
    model.validate();
    if (dataset.samples.empty()) throw std::invalid_argument("train: empty dataset");
    for (const auto& s : dataset.samples)
        if (!model.grid.hull_contains(s.position, 1e-6))
            throw std::invalid_argument("train: grid does not cover a training position");
    const std::size_t n = dataset.samples.size();
    const std::size_t d = features::dimension(model.feature, dataset.antennas(), cfg.delay_taps);
    if (d != model.input_dim)
        throw std::invalid_argument("train: feature dimension does not match model input");

    const double sigma = cfg.ref_sigma > 0.0 ? cfg.ref_sigma : model.grid.spacing();
    const long k = static_cast<long>(model.grid.size());
    Eigen::MatrixXd targets(k, static_cast<long>(n));
    for (std::size_t i = 0; i < n; ++i)
        targets.col(static_cast<long>(i)) = reference_map(dataset.samples[i].position, model.grid, sigma);

    Eigen::MatrixXd clean_features;
    if (!cfg.adversarial) {
        clean_features.resize(static_cast<long>(d), static_cast<long>(n));
        for (std::size_t i = 0; i < n; ++i)
            clean_features.col(static_cast<long>(i)) =
                features::extract(model.feature, dataset.samples[i].csi, cfg.delay_taps).values;
    }

    std::vector<Eigen::MatrixXd> bias_mats(5), bn_mats(4);
    std::vector<Eigen::MatrixXd*> params;
    for (auto& l : model.layers) params.push_back(&l.weight);
    for (std::size_t i = 0; i < 5; ++i) {
        bias_mats[i] = model.layers[i].bias;
        params.push_back(&bias_mats[i]);
    }
    for (std::size_t i = 0; i < 2; ++i) {
        bn_mats[2 * i] = model.bn[i].gamma;
        bn_mats[2 * i + 1] = model.bn[i].beta;
        params.push_back(&bn_mats[2 * i]);
        params.push_back(&bn_mats[2 * i + 1]);
    }

    Adam adam;
    adam.init(params);
    Rng shuffle_rng(derive_seed(cfg.seed, 0x73687566ull));  // "shuf"
    Rng at_rng(derive_seed(cfg.seed, 0x61747065ull));       // "atpe"

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    const std::size_t batch = std::min(cfg.batch, n);
    const std::size_t steps = n / batch;

    TrainResult result;
    result.loss_history.reserve(cfg.epochs);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(order[i], order[shuffle_rng.uniform_index(i + 1)]);

        double epoch_loss = 0.0;
        for (std::size_t s = 0; s < steps; ++s) {
            Eigen::MatrixXd x(static_cast<long>(d), static_cast<long>(batch));
            Eigen::MatrixXd t(k, static_cast<long>(batch));
            for (std::size_t j = 0; j < batch; ++j) {
                const std::size_t idx = order[s * batch + j];
                t.col(static_cast<long>(j)) = targets.col(static_cast<long>(idx));
                if (cfg.adversarial) {
                    const auto pert =
                        ofdm::random_perturbation(cfg.at_perturbation_length, at_rng);
                    const auto perturbed =
                        ofdm::apply_perturbation(dataset.samples[idx].csi, pert, dataset.config);
                    x.col(static_cast<long>(j)) =
                        features::extract(model.feature, perturbed, cfg.delay_taps).values;
                } else {
                    x.col(static_cast<long>(j)) = clean_features.col(static_cast<long>(idx));
                }
            }

            diff::Tape tape;
            std::vector<int> ids;
            ids.reserve(params.size());
            for (auto* p : params) ids.push_back(tape.leaf(*p));
            const BatchGraph g = build_train_graph(tape, model, ids, x, t);
            const double loss = tape.value(g.loss)(0, 0);
            if (!std::isfinite(loss))
                throw training_failure("train: loss diverged", epoch);
            epoch_loss += loss;

            tape.backward(g.loss);
            std::vector<Eigen::MatrixXd> grads;
            grads.reserve(params.size());
            for (int id : ids) grads.push_back(tape.grad(id));
            adam.step(params, grads, cfg);

            for (std::size_t i = 0; i < 2; ++i) {
                const auto [mean, var] = tape.batch_stats(i == 0 ? g.bn_node0 : g.bn_node1);
                model.bn[i].running_mean =
                    cfg.bn_momentum * model.bn[i].running_mean + (1.0 - cfg.bn_momentum) * mean;
                model.bn[i].running_var =
                    cfg.bn_momentum * model.bn[i].running_var + (1.0 - cfg.bn_momentum) * var;
            }
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(steps));
    }

    for (std::size_t i = 0; i < 5; ++i) model.layers[i].bias = bias_mats[i].col(0);
    for (std::size_t i = 0; i < 2; ++i) {
        model.bn[i].gamma = bn_mats[2 * i].col(0);
        model.bn[i].beta = bn_mats[2 * i + 1].col(0);
    }
    model.adversarially_trained = cfg.adversarial;
    return result;
}

EvalSummary evaluate(const PositioningModel& model, const scene::Dataset& dataset,
                     const std::vector<ofdm::PerturbationSequence>* perturbations,
                     std::size_t delay_taps, std::size_t threads) {
    if (perturbations && perturbations->size() != dataset.samples.size())
        throw std::invalid_argument("evaluate: one perturbation per sample required");
    EvalSummary out;
    const std::size_t n = dataset.samples.size();
    out.errors.resize(n);
    out.estimates.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
        const auto& sample = dataset.samples[i];
        Eigen::VectorXd f;
        if (perturbations) {
            const auto perturbed =
                ofdm::apply_perturbation(sample.csi, (*perturbations)[i], dataset.config);
            f = features::extract(model.feature, perturbed, delay_taps).values;
        } else {
            f = features::extract(model.feature, sample.csi, delay_taps).values;
        }
        const Eigen::Vector2d est = decode_position(forward(model, f), model.grid);
        out.estimates[i] = est;
        out.errors[i] = (est - sample.position).norm();
    });
    out.mean = std::accumulate(out.errors.begin(), out.errors.end(), 0.0) /
               static_cast<double>(std::max<std::size_t>(n, 1));
    out.median = median_of(out.errors);
    return out;
}

void save_model(const PositioningModel& model, const std::filesystem::path& base) {
    model.validate();
    std::filesystem::path bin = base;
    bin += ".bin";
    std::filesystem::path meta = base;
    meta += ".json";

    std::ofstream out(bin, std::ios::binary);
    if (!out) throw std::runtime_error("save_model: cannot open " + bin.string());
    for (const auto& l : model.layers) {
        write_f32(out, l.weight);
        write_f32(out, l.bias);
    }
    for (const auto& bn : model.bn) {
        write_f32(out, bn.gamma);
        write_f32(out, bn.beta);
        write_f32(out, bn.running_mean);
        write_f32(out, bn.running_var);
    }

    nlohmann::json j;
    j["format"] = "csilab-model";
    j["version"] = 1;
    j["feature"] = features::to_string(model.feature);
    j["input_dim"] = model.input_dim;
    j["widths"] = model.widths;
    j["grid"] = {{"n", model.grid.n},
                 {"area", {model.grid.area.xmin, model.grid.area.ymin, model.grid.area.xmax,
                           model.grid.area.ymax}}};
    j["bn_eps"] = model.bn_eps;
    j["adversarially_trained"] = model.adversarially_trained;
    j["init_seed"] = model.init_seed;
    j["weights_file"] = bin.filename().string();
    // f32 little-endian, in this order
    j["weight_order"] = {"layer{0..4}: weight row-major, bias",
                         "bn{0..1}: gamma, beta, running_mean, running_var"};
    std::ofstream mo(meta);
    if (!mo) throw std::runtime_error("save_model: cannot open " + meta.string());
    mo << j.dump(2) << "\n";
}

PositioningModel load_model(const std::filesystem::path& base) {
    std::filesystem::path bin = base;
    bin += ".bin";
    std::filesystem::path meta = base;
    meta += ".json";
    if (!std::filesystem::exists(meta)) throw missing_input("model not found: " + meta.string());
    if (!std::filesystem::exists(bin)) throw missing_input("model weights not found: " + bin.string());

    nlohmann::json j;
    {
        std::ifstream mi(meta);
        try {
            mi >> j;
        } catch (const nlohmann::json::exception& e) {
            throw schema_error("model metadata is not valid JSON: " + std::string(e.what()));
        }
    }
    PositioningModel m;
    try {
        if (j.at("format").get<std::string>() != "csilab-model" || j.at("version").get<int>() != 1)
            throw schema_error("unsupported model format/version");
        m.feature = features::tag_from_string(j.at("feature").get<std::string>());
        m.input_dim = j.at("input_dim").get<std::size_t>();
        m.widths = j.at("widths").get<std::vector<std::size_t>>();
        const auto& ga = j.at("grid").at("area");
        scene::Area area{ga.at(0).get<double>(), ga.at(1).get<double>(), ga.at(2).get<double>(),
                         ga.at(3).get<double>()};
        m.grid = Grid::regular(j.at("grid").at("n").get<std::size_t>(), area);
        m.bn_eps = j.at("bn_eps").get<double>();
        m.adversarially_trained = j.value("adversarially_trained", false);
        m.init_seed = j.value("init_seed", 0ull);
    } catch (const nlohmann::json::exception& e) {
        throw schema_error("model metadata malformed: " + std::string(e.what()));
    }

    std::vector<std::size_t> dims = {m.input_dim, m.widths.at(0), m.widths.at(1), m.widths.at(2),
                                     m.widths.at(3), m.grid.size()};
    m.layers.resize(5);
    std::ifstream in(bin, std::ios::binary);
    for (std::size_t i = 0; i < 5; ++i) {
        m.layers[i].weight.resize(static_cast<long>(dims[i + 1]), static_cast<long>(dims[i]));
        Eigen::MatrixXd b(static_cast<long>(dims[i + 1]), 1);
        read_f32(in, m.layers[i].weight);
        read_f32(in, b);
        m.layers[i].bias = b.col(0);
    }
    for (std::size_t i = 0; i < 2; ++i) {
        const long w = static_cast<long>(dims[i + 1]);
        Eigen::MatrixXd buf(w, 1);
        read_f32(in, buf);
        m.bn[i].gamma = buf.col(0);
        read_f32(in, buf);
        m.bn[i].beta = buf.col(0);
        read_f32(in, buf);
        m.bn[i].running_mean = buf.col(0);
        read_f32(in, buf);
        m.bn[i].running_var = buf.col(0);
    }
    m.validate();
    return m;
}

int build_network_graph(diff::Tape& tape, const PositioningModel& model, int feature_node) {
    model.validate();
    if (tape.value(feature_node).rows() != static_cast<long>(model.input_dim) ||
        tape.value(feature_node).cols() != 1)
        throw std::invalid_argument("build_network_graph: feature node shape mismatch");
    int a = feature_node;
    for (std::size_t i = 0; i < 5; ++i) {
        const int w = tape.constant(model.layers[i].weight);
        const int b = tape.constant(model.layers[i].bias);
        int z = tape.add(tape.matmul(w, a), b);
        if (i < 2) {
            const int gamma = tape.constant(model.bn[i].gamma);
            const int beta = tape.constant(model.bn[i].beta);
            z = tape.batchnorm_infer(z, gamma, beta, model.bn[i].running_mean,
                                     model.bn[i].running_var, model.bn_eps);
        }
        a = i < 4 ? tape.relu(z) : tape.softmax_cols(z);
    }
    return a;
}

} // namespace csilab::posnet
