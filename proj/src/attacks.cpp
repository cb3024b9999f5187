#include "csilab/attacks.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "csilab/autodiff.hpp"
#include "csilab/errors.hpp"
#include "csilab/parallel.hpp"
#include "csilab/rng.hpp"

namespace csilab::attacks {

namespace {

// Eq.-5 objective machinery shared by value-only and value+gradient passes.
struct Objective {
    const posnet::PositioningModel& model;
    const ofdm::CsiMatrix& csi;
    const ofdm::OfdmConfig& cfg;
    const AttackConfig& attack;
    Eigen::Vector2d base_estimate;
    Eigen::VectorXd rate_gain_esn0;  // per-subcarrier (sum_b |H_bw|^2) * Es/N0
    Eigen::VectorXd omega_mask;
    double omega_count;

    Objective(const posnet::PositioningModel& m, const ofdm::CsiMatrix& h,
              const ofdm::OfdmConfig& c, const AttackConfig& a)
        : model(m), csi(h), cfg(c), attack(a) {
        const auto f = features::extract(model.feature, csi, attack.delay_taps);
        base_estimate = posnet::decode_position(posnet::forward(model, f.values), model.grid);

        const long w = static_cast<long>(csi.subcarriers());
        rate_gain_esn0.resize(w);
        for (long i = 0; i < w; ++i) {
            double g = 0.0;
            for (const auto& row : csi.rows) g += std::norm(row[static_cast<std::size_t>(i)]);
            rate_gain_esn0(i) = g * attack.rate.symbol_power / attack.rate.noise_power;
        }
        omega_mask = Eigen::VectorXd::Zero(w);
        if (attack.rate.data_subcarriers.empty()) {
            omega_mask.setOnes();
            omega_count = static_cast<double>(w);
        } else {
            for (std::size_t idx : attack.rate.data_subcarriers)
                omega_mask(static_cast<long>(idx)) = 1.0;
            omega_count = static_cast<double>(attack.rate.data_subcarriers.size());
        }
    }

    // p holds [re; im] of the (unit-norm) time-domain sequence.
    double eval(const Eigen::VectorXd& p, Eigen::VectorXd* grad) const {
        const long lp = p.size() / 2;
        const std::size_t w = csi.subcarriers();
        diff::Tape tape;
        const diff::Tape::CVec pbar = tape.complex_leaf(p.head(lp), p.tail(lp));
        const diff::Tape::CVec ptf =
            tape.cscale(tape.dft_map(pbar, w, false), std::sqrt(static_cast<double>(w)));

        std::vector<diff::Tape::CVec> rows;
        rows.reserve(csi.antennas());
        for (const auto& row : csi.rows) {
            Eigen::VectorXd re(static_cast<long>(w)), im(static_cast<long>(w));
            for (std::size_t i = 0; i < w; ++i) {
                re(static_cast<long>(i)) = row[i].real();
                im(static_cast<long>(i)) = row[i].imag();
            }
            rows.push_back(tape.cmul(tape.complex_constant(re, im), ptf));
        }

        const int f = features::build_feature_graph(tape, model.feature, rows, attack.delay_taps);
        const int m = posnet::build_network_graph(tape, model, f);
        const int xhat = tape.matmul(tape.constant(model.grid.points), m);
        const int diff_n = tape.add(xhat, tape.constant(Eigen::MatrixXd(-base_estimate)));
        int obj = tape.sum(tape.square(diff_n));

        if (attack.lambda != 0.0) {
            const int pw2 = tape.add(tape.square(ptf.re), tape.square(ptf.im));
            const int snr_w = tape.mul(pw2, tape.constant(rate_gain_esn0));
            const int lg = tape.log2_(tape.add_scalar(snr_w, 1.0));
            const int rate_node =
                tape.scale(tape.sum(tape.mul(lg, tape.constant(omega_mask))), 1.0 / omega_count);
            obj = tape.add(obj, tape.scale(rate_node, attack.lambda));
        }

        const double value = tape.value(obj)(0, 0);
        if (grad) {
            tape.backward(obj);
            grad->resize(2 * lp);
            grad->head(lp) = tape.grad(pbar.re);
            grad->tail(lp) = tape.grad(pbar.im);
        }
        return value;
    }
};

Eigen::VectorXd to_stacked(const ofdm::PerturbationSequence& p) {
    const long lp = static_cast<long>(p.length());
    Eigen::VectorXd v(2 * lp);
    for (long i = 0; i < lp; ++i) {
        v(i) = p.taps()[static_cast<std::size_t>(i)].real();
        v(lp + i) = p.taps()[static_cast<std::size_t>(i)].imag();
    }
    return v;
}

ofdm::PerturbationSequence from_stacked(const Eigen::VectorXd& v) {
    const long lp = v.size() / 2;
    ofdm::ComplexVec taps(static_cast<std::size_t>(lp));
    for (long i = 0; i < lp; ++i) taps[static_cast<std::size_t>(i)] = {v(i), v(lp + i)};
    return ofdm::PerturbationSequence(std::move(taps));
}

std::string dump_iterate(const Eigen::VectorXd& p, double objective) {
    std::ostringstream os;
    os << "objective=" << objective << " iterate=[";
    for (long i = 0; i < p.size(); ++i) os << (i ? "," : "") << p(i);
    os << "]";
    return os.str();
}

} // namespace

void AttackConfig::validate(const ofdm::OfdmConfig& cfg) const {
    if (perturbation_length == 0) throw std::invalid_argument("AttackConfig: L_p must be >= 1");
    if (lambda < 0.0) throw std::invalid_argument("AttackConfig: lambda must be >= 0");
    if (iterations == 0 || restarts == 0)
        throw std::invalid_argument("AttackConfig: iterations/restarts must be >= 1");
    rate.validate();
    if (cfg.channel_taps + perturbation_length > cfg.cyclic_prefix + 1)
        throw constraint_violation("AttackConfig: L + L_p > C + 1 breaks orthogonality");
}

WhiteBoxResult white_box(const posnet::PositioningModel& model, const ofdm::CsiMatrix& csi,
                         const ofdm::OfdmConfig& cfg, const AttackConfig& attack) {
    attack.validate(cfg);
    csi.validate();
    const Objective objective(model, csi, cfg, attack);

    Rng rng(derive_seed(attack.seed, 0x77626f78ull));  // "wbox"
    Eigen::VectorXd best_p;
    double best_obj = -std::numeric_limits<double>::infinity();
    std::vector<double> best_trace;

    for (std::size_t restart = 0; restart < attack.restarts; ++restart) {
        Eigen::VectorXd p = to_stacked(ofdm::random_perturbation(attack.perturbation_length, rng));
        Eigen::VectorXd grad;
        double obj = objective.eval(p, nullptr);
        if (!std::isfinite(obj)) throw numeric_failure("white_box: " + dump_iterate(p, obj));
        std::vector<double> trace = {obj};
        std::size_t stall = 0;

        for (std::size_t iter = 0; iter < attack.iterations; ++iter) {
            objective.eval(p, &grad);
            if (!grad.allFinite())
                throw numeric_failure("white_box: non-finite gradient, " + dump_iterate(p, obj));
            const double gnorm = grad.norm();
            if (gnorm < 1e-15) break;  // flat (e.g. L_p = 1): any unit iterate is optimal
            grad /= gnorm;

            bool improved = false;
            for (double step = attack.step; step > 1e-7; step *= 0.5) {
                Eigen::VectorXd cand = p + step * grad;
                cand /= cand.norm();  // projection back to the sphere
                const double cobj = objective.eval(cand, nullptr);
                if (!std::isfinite(cobj))
                    throw numeric_failure("white_box: " + dump_iterate(cand, cobj));
                if (cobj > obj) {
                    p = std::move(cand);
                    obj = cobj;
                    improved = true;
                    break;
                }
            }
            if (!improved) break;
            trace.push_back(obj);
            if (obj - trace[trace.size() - 2] <= 1e-9 * std::max(1.0, std::abs(obj))) {
                if (++stall >= attack.stall_limit) break;
            } else {
                stall = 0;
            }
        }

        if (obj > best_obj) {
            best_obj = obj;
            best_p = p;
            best_trace = std::move(trace);
        }
    }

    return {from_stacked(best_p), best_obj, std::move(best_trace)};
}

WhiteBoxResult transfer(const posnet::PositioningModel& alt_model, const ofdm::CsiMatrix& csi,
                        const ofdm::OfdmConfig& cfg, const AttackConfig& attack) {
    return white_box(alt_model, csi, cfg, attack);
}

std::vector<ofdm::PerturbationSequence> build_pool(const posnet::PositioningModel& model,
                                                   const scene::Dataset& source,
                                                   std::size_t pool_size,
                                                   const AttackConfig& attack,
                                                   std::size_t threads) {
    if (pool_size == 0) throw std::invalid_argument("build_pool: T must be >= 1");
    if (source.samples.empty()) throw std::invalid_argument("build_pool: empty sample source");

    Rng rng(derive_seed(attack.seed, 0x706f6f6cull));  // "pool"
    std::vector<std::size_t> picks(pool_size);
    for (auto& idx : picks) idx = rng.uniform_index(source.samples.size());

    std::vector<ofdm::PerturbationSequence> pool(pool_size,
                                                 ofdm::PerturbationSequence(ofdm::ComplexVec{ofdm::cplx(1.0, 0.0)}));
    parallel_for(pool_size, threads, [&](std::size_t t) {
        AttackConfig per_entry = attack;
        per_entry.seed = derive_seed(attack.seed, 0xe000 + t);
        pool[t] = white_box(model, source.samples[picks[t]].csi, source.config, per_entry)
                      .perturbation;
    });
    return pool;
}

const ofdm::PerturbationSequence& pool_attack(const std::vector<ofdm::PerturbationSequence>& pool,
                                              std::uint64_t seed) {
    if (pool.empty()) throw std::invalid_argument("pool_attack: empty pool");
    Rng rng(derive_seed(seed, 0x64726177ull));  // "draw"
    return pool[rng.uniform_index(pool.size())];
}

ofdm::PerturbationSequence random_attack(std::size_t perturbation_length, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x726e6474ull));  // "rndt"
    return ofdm::random_perturbation(perturbation_length, rng);
}

} // namespace csilab::attacks
