#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace csilab {
class Rng;
}

namespace csilab::ofdm {

using cplx = std::complex<double>;
using ComplexVec = std::vector<cplx>;

bool all_finite(const ComplexVec& v);

/// OFDM numerology. W subcarriers, cyclic prefix of C samples, channel
/// impulse responses of L taps, data subcarriers Omega (0-based; empty
/// means all W carry data).
struct OfdmConfig {
    std::size_t subcarriers = 64;    // W
    std::size_t cyclic_prefix = 16;  // C
    std::size_t channel_taps = 8;    // L
    std::vector<std::size_t> data_subcarriers;  // Omega

    void validate() const;
    std::size_t omega_size() const {
        return data_subcarriers.empty() ? subcarriers : data_subcarriers.size();
    }
    // Longest perturbation that keeps subcarrier orthogonality: L + L_p <= C + 1.
    std::size_t max_perturbation_length() const {
        return cyclic_prefix + 1 >= channel_taps ? cyclic_prefix + 1 - channel_taps : 0;
    }
};

/// B x W matrix of per-antenna channel transfer functions.
struct CsiMatrix {
    std::vector<ComplexVec> rows;

    std::size_t antennas() const { return rows.size(); }
    std::size_t subcarriers() const { return rows.empty() ? 0 : rows.front().size(); }
    void validate() const;  // nonempty, rectangular, finite
    double frobenius_sq() const;
};

/// Unit-norm time-domain perturbation sequence (normalized on construction).
class PerturbationSequence {
public:
    explicit PerturbationSequence(ComplexVec taps);
    const ComplexVec& taps() const { return taps_; }
    std::size_t length() const { return taps_.size(); }

private:
    ComplexVec taps_;
};

struct RateParams {
    double symbol_power = 1.0;  // Es, linear
    double noise_power = 0.1;   // N0, linear
    std::vector<std::size_t> data_subcarriers;  // Omega; empty = all

    void validate() const;
};

// Unitary DFT/IDFT. Radix-2 when the length is a power of two, direct
// otherwise; idft(dft(x)) == x to machine precision.
ComplexVec dft(const ComplexVec& x);
ComplexVec idft(const ComplexVec& x);

// Circular convolution via the DFT; operands zero-padded to the longer length.
ComplexVec circ_conv(const ComplexVec& a, const ComplexVec& b);

// Linear convolution, direct O(La*Lb).
ComplexVec lin_conv(const ComplexVec& a, const ComplexVec& b);

// sqrt(W) * F * [taps^T, 0^T]^T — the transfer function of a short impulse
// response on a W-subcarrier system.
ComplexVec transfer_function(const ComplexVec& taps, std::size_t w);

// Same map applied to a unit-norm perturbation; Parseval gives ||p||^2 = W.
ComplexVec perturbation_transfer(const PerturbationSequence& pert, std::size_t w);

// Pilot-based least-squares estimate: h_hat = y ⊙ t with t in {-1,+1}^W.
ComplexVec estimate_csi(const ComplexVec& y, const std::vector<int>& pilot);

// Row-wise h_b ⊙ p. Throws constraint_violation when L + L_p > C + 1.
CsiMatrix apply_perturbation(const CsiMatrix& csi, const PerturbationSequence& pert,
                             const OfdmConfig& cfg);

// Deterministic ±1 pilot for a scene seed, shared by transmitter and receiver.
std::vector<int> make_pilot(std::size_t w, std::uint64_t seed);

// Entries amplitude ~ U[0,1], phase ~ U[0,2π), then normalized to unit norm.
// Shared by the random attack and adversarial training.
PerturbationSequence random_perturbation(std::size_t length, csilab::Rng& rng);

/// Full sample-stream round trip: IDFT, +CP, perturbation pre-convolution,
/// channel convolution, -CP, DFT, plus circularly-symmetric Gaussian noise at
/// snr_db (infinity = noiseless) relative to mean received per-subcarrier
/// power. The noiseless output equals (h ⊙ p) ⊙ s.
ComplexVec simulate_packet(const ComplexVec& channel_taps, const PerturbationSequence* pert,
                           const ComplexVec& symbols, const OfdmConfig& cfg,
                           std::uint64_t noise_seed, double snr_db);

// Per-subcarrier rate, multi-antenna form:
//   R = (1/|Omega|) sum_w log2(1 + |p_w|^2 (sum_b |H_bw|^2) Es/N0),
// p_w = 1 when pert is null.
double rate(const CsiMatrix& csi, const PerturbationSequence* pert, const RateParams& params);

} // namespace csilab::ofdm
