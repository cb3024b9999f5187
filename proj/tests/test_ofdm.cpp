#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "csilab/errors.hpp"
#include "csilab/ofdm.hpp"
#include "csilab/rng.hpp"
#include "oracles.hpp"

using namespace csilab;
using namespace csilab::ofdm;

TEST_CASE("dft of delta is constant 1/sqrt(W)") {
    const ComplexVec delta = {{1, 0}, {0, 0}, {0, 0}, {0, 0}};
    const ComplexVec out = dft(delta);
    for (const auto& z : out) {
        CHECK(z.real() == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(z.imag() == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("dft of all-ones length 4 is [2,0,0,0]") {
    const ComplexVec ones(4, {1, 0});
    const ComplexVec out = dft(ones);
    CHECK(std::abs(out[0] - cplx(2.0, 0.0)) < 1e-12);
    for (std::size_t i = 1; i < 4; ++i) CHECK(std::abs(out[i]) < 1e-12);
}

TEST_CASE("dft matches direct O(W^2) oracle and preserves norm") {
    Rng rng(42);
    const ComplexVec x = oracles::random_complex(16, rng);
    const ComplexVec fast = dft(x);
    const ComplexVec slow = oracles::dft_direct(x, -1);
    CHECK(oracles::max_abs_diff(fast, slow) < 1e-12);
    CHECK(std::abs(oracles::norm2(fast) - oracles::norm2(x)) < 1e-12);
}

TEST_CASE("idft inverts dft at W=64") {
    Rng rng(7);
    const ComplexVec x = oracles::random_complex(64, rng);
    CHECK(oracles::max_abs_diff(idft(dft(x)), x) < 1e-12);
}

TEST_CASE("idft of [2,0,0,0] is all-ones") {
    const ComplexVec in = {{2, 0}, {0, 0}, {0, 0}, {0, 0}};
    const ComplexVec out = idft(in);
    for (const auto& z : out) CHECK(std::abs(z - cplx(1.0, 0.0)) < 1e-12);
}

TEST_CASE("idft matches direct inverse oracle on non-power-of-two length") {
    Rng rng(11);
    const ComplexVec x = oracles::random_complex(12, rng);
    CHECK(oracles::max_abs_diff(idft(x), oracles::dft_direct(x, +1)) < 1e-12);
}

TEST_CASE("dft/idft reject empty input") {
    CHECK_THROWS_AS(dft({}), std::invalid_argument);
    CHECK_THROWS_AS(idft({}), std::invalid_argument);
}

TEST_CASE("circular convolution with delta is identity") {
    Rng rng(3);
    const ComplexVec a = oracles::random_complex(8, rng);
    ComplexVec delta(8, {0, 0});
    delta[0] = {1, 0};
    CHECK(oracles::max_abs_diff(circ_conv(a, delta), a) < 1e-10);
}

TEST_CASE("circular convolution hand example [1,1]⊛[1,1] = [2,2]") {
    const ComplexVec a = {{1, 0}, {1, 0}};
    const ComplexVec out = circ_conv(a, a);
    CHECK(std::abs(out[0] - cplx(2, 0)) < 1e-12);
    CHECK(std::abs(out[1] - cplx(2, 0)) < 1e-12);
}

TEST_CASE("circular convolution via DFT equals direct sum, W=64") {
    Rng rng(5);
    const ComplexVec a = oracles::random_complex(64, rng);
    const ComplexVec b = oracles::random_complex(64, rng);
    CHECK(oracles::max_abs_diff(circ_conv(a, b), oracles::circ_conv_direct(a, b)) < 1e-10);
}

TEST_CASE("circ_conv zero-pads the shorter operand") {
    Rng rng(6);
    const ComplexVec a = oracles::random_complex(16, rng);
    const ComplexVec b = oracles::random_complex(5, rng);
    ComplexVec b_padded(16, {0, 0});
    std::copy(b.begin(), b.end(), b_padded.begin());
    CHECK(oracles::max_abs_diff(circ_conv(a, b), oracles::circ_conv_direct(a, b_padded)) < 1e-10);
}

TEST_CASE("linear convolution identities") {
    Rng rng(9);
    const ComplexVec a = oracles::random_complex(6, rng);
    CHECK(oracles::max_abs_diff(lin_conv(a, {{1, 0}}), a) == 0.0);
    const ComplexVec x = {{1, 0}, {2, 0}};
    const ComplexVec y = {{3, 0}, {4, 0}};
    const ComplexVec out = lin_conv(x, y);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == cplx(3, 0));
    CHECK(out[1] == cplx(10, 0));
    CHECK(out[2] == cplx(8, 0));
}

TEST_CASE("linear convolution matches scatter oracle exactly") {
    Rng rng(10);
    const ComplexVec a = oracles::random_complex(7, rng);
    const ComplexVec b = oracles::random_complex(5, rng);
    const ComplexVec mine = lin_conv(a, b);
    const ComplexVec ref = oracles::lin_conv_scatter(a, b);
    CHECK(oracles::max_abs_diff(mine, ref) == 0.0);
    CHECK_THROWS_AS(lin_conv({}, a), std::invalid_argument);
}

TEST_CASE("perturbation transfer of a singleton is a constant vector") {
    const PerturbationSequence p({{1.0, 0.0}});
    const ComplexVec tf = perturbation_transfer(p, 8);
    for (const auto& z : tf) CHECK(std::abs(z - cplx(1, 0)) < 1e-12);

    const double phi = 1.234;
    const PerturbationSequence q({std::polar(1.0, phi)});
    const ComplexVec tfq = perturbation_transfer(q, 8);
    for (const auto& z : tfq) CHECK(std::abs(z - std::polar(1.0, phi)) < 1e-12);
}

TEST_CASE("perturbation transfer satisfies Parseval ||p||^2 = W") {
    Rng rng(12);
    ComplexVec taps = oracles::random_complex(4, rng);
    const PerturbationSequence p(taps);
    const ComplexVec tf = perturbation_transfer(p, 16);
    CHECK(oracles::norm2(tf) == doctest::Approx(16.0).epsilon(1e-9));
}

TEST_CASE("perturbation sequence normalizes and validates") {
    Rng rng(13);
    const PerturbationSequence p(oracles::random_complex(5, rng, 3.0));
    CHECK(std::abs(oracles::norm2(p.taps()) - 1.0) < 1e-9);
    CHECK_THROWS_AS(PerturbationSequence({}), std::invalid_argument);
    CHECK_THROWS_AS(PerturbationSequence({{0.0, 0.0}}), std::invalid_argument);
    CHECK_THROWS_AS(perturbation_transfer(p, 3), std::invalid_argument);
}

TEST_CASE("estimate_csi is exact with ±1 pilots") {
    Rng rng(14);
    const std::vector<int> pilot = make_pilot(16, 99);
    const ComplexVec h = oracles::random_complex(16, rng);
    ComplexVec y(16);
    for (std::size_t i = 0; i < 16; ++i) y[i] = h[i] * static_cast<double>(pilot[i]);
    const ComplexVec est = estimate_csi(y, pilot);
    CHECK(oracles::max_abs_diff(est, h) == 0.0);

    const std::vector<int> ones(16, 1);
    CHECK(oracles::max_abs_diff(estimate_csi(y, ones), y) == 0.0);

    std::vector<int> bad = pilot;
    bad[3] = 0;
    CHECK_THROWS_AS(estimate_csi(y, bad), std::invalid_argument);
}

TEST_CASE("estimate_csi error at 40 dB SNR stays below 3% over 100 draws") {
    Rng rng(15);
    const std::size_t w = 64;
    const std::vector<int> pilot = make_pilot(w, 7);
    const ComplexVec h = oracles::random_complex(w, rng);
    const PerturbationSequence p(oracles::random_complex(3, rng));
    const ComplexVec ptf = perturbation_transfer(p, w);
    ComplexVec hp(w);
    for (std::size_t i = 0; i < w; ++i) hp[i] = h[i] * ptf[i];

    const double sig_power = oracles::norm2(hp) / static_cast<double>(w);
    const double n0 = sig_power / 1e4;  // 40 dB
    const double sigma = std::sqrt(n0 / 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        ComplexVec y(w);
        for (std::size_t i = 0; i < w; ++i)
            y[i] = hp[i] * static_cast<double>(pilot[i]) +
                   cplx(sigma * rng.gaussian(), sigma * rng.gaussian());
        const ComplexVec est = estimate_csi(y, pilot);
        double err2 = 0.0;
        for (std::size_t i = 0; i < w; ++i) err2 += std::norm(est[i] - hp[i]);
        CHECK(std::sqrt(err2 / oracles::norm2(hp)) < 0.03);
    }
}

TEST_CASE("apply_perturbation identity and global phase") {
    Rng rng(16);
    OfdmConfig cfg;
    cfg.subcarriers = 8;
    cfg.cyclic_prefix = 4;
    cfg.channel_taps = 2;
    CsiMatrix h;
    h.rows = {oracles::random_complex(8, rng), oracles::random_complex(8, rng)};

    const CsiMatrix same = apply_perturbation(h, PerturbationSequence({{1, 0}}), cfg);
    for (std::size_t b = 0; b < 2; ++b)
        CHECK(oracles::max_abs_diff(same.rows[b], h.rows[b]) < 1e-12);

    const double phi = 0.77;
    const CsiMatrix rot = apply_perturbation(h, PerturbationSequence({std::polar(1.0, phi)}), cfg);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t i = 0; i < 8; ++i)
            CHECK(std::abs(rot.rows[b][i] - h.rows[b][i] * std::polar(1.0, phi)) < 1e-12);
}

TEST_CASE("apply_perturbation equals time-domain convolution route") {
    Rng rng(17);
    OfdmConfig cfg;
    cfg.subcarriers = 8;
    cfg.cyclic_prefix = 7;
    cfg.channel_taps = 3;
    const ComplexVec h0 = oracles::random_complex(3, rng);
    const ComplexVec h1 = oracles::random_complex(3, rng);
    CsiMatrix h;
    h.rows = {transfer_function(h0, 8), transfer_function(h1, 8)};
    const PerturbationSequence p(oracles::random_complex(4, rng));

    const CsiMatrix perturbed = apply_perturbation(h, p, cfg);
    const std::vector<ComplexVec> taps = {h0, h1};
    for (std::size_t b = 0; b < 2; ++b) {
        const ComplexVec combined = lin_conv(taps[b], p.taps());
        const ComplexVec expect = transfer_function(combined, 8);
        CHECK(oracles::max_abs_diff(perturbed.rows[b], expect) < 1e-10);
    }
}

TEST_CASE("apply_perturbation rejects CP violations") {
    Rng rng(18);
    OfdmConfig cfg;
    cfg.subcarriers = 8;
    cfg.cyclic_prefix = 4;
    cfg.channel_taps = 3;
    CsiMatrix h;
    h.rows = {oracles::random_complex(8, rng)};
    CHECK_THROWS_AS(apply_perturbation(h, PerturbationSequence(oracles::random_complex(3, rng)), cfg),
                    constraint_violation);
}

TEST_CASE("simulate_packet with identity channel returns the symbols") {
    Rng rng(19);
    OfdmConfig cfg;
    cfg.subcarriers = 16;
    cfg.cyclic_prefix = 4;
    cfg.channel_taps = 1;
    const ComplexVec s = oracles::random_complex(16, rng);
    const ComplexVec out = simulate_packet({{1, 0}}, nullptr, s, cfg, 0,
                                           std::numeric_limits<double>::infinity());
    CHECK(oracles::max_abs_diff(out, s) < 1e-12);
}

TEST_CASE("simulate_packet equals frequency-domain model (master check)") {
    Rng rng(20);
    OfdmConfig cfg;
    cfg.subcarriers = 32;
    cfg.cyclic_prefix = 8;
    cfg.channel_taps = 4;
    const ComplexVec taps = oracles::random_complex(4, rng);
    const PerturbationSequence p(oracles::random_complex(3, rng));
    const ComplexVec s = oracles::random_complex(32, rng);

    const ComplexVec sim = simulate_packet(taps, &p, s, cfg, 0,
                                           std::numeric_limits<double>::infinity());
    const ComplexVec h = transfer_function(taps, 32);
    const ComplexVec ptf = perturbation_transfer(p, 32);
    ComplexVec expect(32);
    for (std::size_t i = 0; i < 32; ++i) expect[i] = h[i] * ptf[i] * s[i];
    CHECK(oracles::max_abs_diff(sim, expect) < 1e-9);

    OfdmConfig tight = cfg;
    tight.cyclic_prefix = 5;
    CHECK_THROWS_AS(simulate_packet(taps, &p, s, tight, 0, 10.0), constraint_violation);
}

TEST_CASE("simulate_packet empirical SNR hits the target within 0.5 dB") {
    Rng rng(21);
    OfdmConfig cfg;
    cfg.subcarriers = 64;
    cfg.cyclic_prefix = 16;
    cfg.channel_taps = 4;
    const ComplexVec taps = oracles::random_complex(4, rng);
    const ComplexVec s = oracles::random_complex(64, rng);
    const ComplexVec clean = simulate_packet(taps, nullptr, s, cfg, 0,
                                             std::numeric_limits<double>::infinity());
    double sig = 0.0, noise = 0.0;
    for (std::uint64_t pkt = 0; pkt < 1000; ++pkt) {
        const ComplexVec noisy = simulate_packet(taps, nullptr, s, cfg, derive_seed(99, pkt), 10.0);
        for (std::size_t i = 0; i < 64; ++i) {
            sig += std::norm(clean[i]);
            noise += std::norm(noisy[i] - clean[i]);
        }
    }
    const double snr_db = 10.0 * std::log10(sig / noise);
    CHECK(snr_db == doctest::Approx(10.0).epsilon(0.05));
}

TEST_CASE("rate hand value, phase invariance, monotonicity") {
    // B=1, |h_w|^2 Es/N0 = 1 on every subcarrier -> R = 1 bit
    CsiMatrix h;
    h.rows = {ComplexVec(8, {1.0, 0.0})};
    RateParams params;
    params.symbol_power = 1.0;
    params.noise_power = 1.0;
    CHECK(rate(h, nullptr, params) == doctest::Approx(1.0).epsilon(1e-12));

    Rng rng(22);
    CsiMatrix m;
    m.rows = {oracles::random_complex(16, rng), oracles::random_complex(16, rng)};
    const double base = rate(m, nullptr, params);
    const PerturbationSequence phase({std::polar(1.0, 0.9)});
    CHECK(rate(m, &phase, params) == doctest::Approx(base).epsilon(1e-12));

    RateParams better = params;
    better.noise_power = 0.5;
    CHECK(rate(m, nullptr, better) > base);
}

TEST_CASE("rate with a random length-1 perturbation is invariant (scalar property)") {
    Rng rng(23);
    RateParams params;
    for (int trial = 0; trial < 20; ++trial) {
        CsiMatrix m;
        m.rows = {oracles::random_complex(12, rng)};
        Rng prng(derive_seed(50, static_cast<std::uint64_t>(trial)));
        const auto p = random_perturbation(1, prng);
        CHECK(rate(m, &p, params) == doctest::Approx(rate(m, nullptr, params)).epsilon(1e-12));
    }
}

TEST_CASE("rate restricted to a data subcarrier subset") {
    CsiMatrix h;
    h.rows = {ComplexVec{{1, 0}, {2, 0}, {0, 0}, {1, 0}}};
    RateParams params;
    params.symbol_power = 1.0;
    params.noise_power = 1.0;
    params.data_subcarriers = {0, 1};
    const double expect = 0.5 * (std::log2(2.0) + std::log2(5.0));
    CHECK(rate(h, nullptr, params) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("OfdmConfig invariants") {
    OfdmConfig cfg;
    cfg.channel_taps = 20;
    cfg.cyclic_prefix = 8;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    OfdmConfig ok;
    CHECK(ok.max_perturbation_length() == 9);  // C=16, L=8
}

TEST_CASE("random equivalence property: packet simulation vs frequency model") {
    // the module-level invariant, sampled more broadly than the master check
    for (std::uint64_t trial = 0; trial < 25; ++trial) {
        Rng rng(derive_seed(1234, trial));
        OfdmConfig cfg;
        cfg.subcarriers = 64;
        cfg.cyclic_prefix = 16;
        cfg.channel_taps = 5 + trial % 4;
        const std::size_t lp = 1 + trial % (cfg.cyclic_prefix + 1 - cfg.channel_taps);
        const ComplexVec taps = oracles::random_complex(cfg.channel_taps, rng);
        const PerturbationSequence p(oracles::random_complex(lp, rng));
        const ComplexVec s = oracles::random_complex(cfg.subcarriers, rng);
        const ComplexVec sim = simulate_packet(taps, &p, s, cfg, 0,
                                               std::numeric_limits<double>::infinity());
        const ComplexVec h = transfer_function(taps, cfg.subcarriers);
        const ComplexVec ptf = perturbation_transfer(p, cfg.subcarriers);
        double worst = 0.0;
        for (std::size_t i = 0; i < cfg.subcarriers; ++i)
            worst = std::max(worst, std::abs(sim[i] - h[i] * ptf[i] * s[i]));
        CHECK(worst < 1e-9);
    }
}
