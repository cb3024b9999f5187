#include "csilab/ofdm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "csilab/errors.hpp"
#include "csilab/rng.hpp"

namespace csilab::ofdm {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey, no scaling. sign = -1 forward.
void fft_pow2(ComplexVec& a, int sign) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * kTwoPi / static_cast<double>(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cplx u = a[i + k];
                const cplx v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

ComplexVec dft_direct(const ComplexVec& x, int sign) {
    const std::size_t n = x.size();
    ComplexVec out(n);
    for (std::size_t k = 0; k < n; ++k) {
        cplx acc(0.0, 0.0);
        for (std::size_t m = 0; m < n; ++m) {
            const double ang = sign * kTwoPi * static_cast<double>(k) *
                               static_cast<double>(m) / static_cast<double>(n);
            acc += x[m] * cplx(std::cos(ang), std::sin(ang));
        }
        out[k] = acc;
    }
    return out;
}

ComplexVec transform(const ComplexVec& x, int sign) {
    if (x.empty()) throw std::invalid_argument("dft: empty input");
    ComplexVec out;
    if (is_pow2(x.size())) {
        out = x;
        fft_pow2(out, sign);
    } else {
        out = dft_direct(x, sign);
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(x.size()));
    for (auto& v : out) v *= scale;
    return out;
}

ComplexVec zero_pad(const ComplexVec& x, std::size_t n) {
    ComplexVec out(n, cplx(0.0, 0.0));
    std::copy(x.begin(), x.end(), out.begin());
    return out;
}

} // namespace

bool all_finite(const ComplexVec& v) {
    for (const auto& z : v) {
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    }
    return true;
}

void OfdmConfig::validate() const {
    if (subcarriers == 0) throw std::invalid_argument("OfdmConfig: W must be positive");
    if (channel_taps == 0) throw std::invalid_argument("OfdmConfig: L must be positive");
    if (channel_taps > cyclic_prefix + 1)
        throw std::invalid_argument("OfdmConfig: channel taps exceed cyclic prefix (L > C+1)");
    for (std::size_t w : data_subcarriers) {
        if (w >= subcarriers)
            throw std::invalid_argument("OfdmConfig: data subcarrier index out of range");
    }
}

void CsiMatrix::validate() const {
    if (rows.empty()) throw std::invalid_argument("CsiMatrix: no antenna rows");
    const std::size_t w = rows.front().size();
    if (w == 0) throw std::invalid_argument("CsiMatrix: empty rows");
    for (const auto& r : rows) {
        if (r.size() != w) throw std::invalid_argument("CsiMatrix: ragged rows");
        if (!all_finite(r)) throw std::invalid_argument("CsiMatrix: non-finite entry");
    }
}

double CsiMatrix::frobenius_sq() const {
    double acc = 0.0;
    for (const auto& r : rows)
        for (const auto& z : r) acc += std::norm(z);
    return acc;
}

PerturbationSequence::PerturbationSequence(ComplexVec taps) : taps_(std::move(taps)) {
    if (taps_.empty())
        throw std::invalid_argument("PerturbationSequence: empty taps");
    if (!all_finite(taps_))
        throw std::invalid_argument("PerturbationSequence: non-finite tap");
    double n2 = 0.0;
    for (const auto& z : taps_) n2 += std::norm(z);
    if (n2 <= 0.0)
        throw std::invalid_argument("PerturbationSequence: zero-norm taps");
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& z : taps_) z *= inv;
}

void RateParams::validate() const {
    if (!(symbol_power > 0.0)) throw std::invalid_argument("RateParams: Es must be > 0");
    if (!(noise_power > 0.0)) throw std::invalid_argument("RateParams: N0 must be > 0");
}

ComplexVec dft(const ComplexVec& x) { return transform(x, -1); }

ComplexVec idft(const ComplexVec& x) { return transform(x, +1); }

ComplexVec circ_conv(const ComplexVec& a, const ComplexVec& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("circ_conv: empty operand");
    const std::size_t w = std::max(a.size(), b.size());
    const ComplexVec fa = dft(zero_pad(a, w));
    const ComplexVec fb = dft(zero_pad(b, w));
    ComplexVec prod(w);
    const double scale = std::sqrt(static_cast<double>(w));  // unitary F: a⊛b = √W F^H(Fa ⊙ Fb)
    for (std::size_t i = 0; i < w; ++i) prod[i] = fa[i] * fb[i] * scale;
    return idft(prod);
}

ComplexVec lin_conv(const ComplexVec& a, const ComplexVec& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("lin_conv: empty operand");
    ComplexVec out(a.size() + b.size() - 1, cplx(0.0, 0.0));
    for (std::size_t n = 0; n < out.size(); ++n) {
        cplx acc(0.0, 0.0);
        const std::size_t m_lo = n >= b.size() - 1 ? n - (b.size() - 1) : 0;
        const std::size_t m_hi = std::min(n, a.size() - 1);
        for (std::size_t m = m_lo; m <= m_hi; ++m) acc += a[m] * b[n - m];
        out[n] = acc;
    }
    return out;
}

ComplexVec transfer_function(const ComplexVec& taps, std::size_t w) {
    if (taps.empty()) throw std::invalid_argument("transfer_function: empty taps");
    if (taps.size() > w)
        throw std::invalid_argument("transfer_function: more taps than subcarriers");
    ComplexVec out = dft(zero_pad(taps, w));
    const double scale = std::sqrt(static_cast<double>(w));
    for (auto& z : out) z *= scale;
    return out;
}

ComplexVec perturbation_transfer(const PerturbationSequence& pert, std::size_t w) {
    return transfer_function(pert.taps(), w);
}

ComplexVec estimate_csi(const ComplexVec& y, const std::vector<int>& pilot) {
    if (y.size() != pilot.size())
        throw std::invalid_argument("estimate_csi: pilot/receive length mismatch");
    ComplexVec h(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (pilot[i] != 1 && pilot[i] != -1)
            throw std::invalid_argument("estimate_csi: pilot entry not in {-1,+1}");
        h[i] = y[i] * static_cast<double>(pilot[i]);
    }
    return h;
}

CsiMatrix apply_perturbation(const CsiMatrix& csi, const PerturbationSequence& pert,
                             const OfdmConfig& cfg) {
    csi.validate();
    cfg.validate();
    if (cfg.channel_taps + pert.length() > cfg.cyclic_prefix + 1)
        throw constraint_violation("apply_perturbation: L + L_p > C + 1 breaks orthogonality");
    const ComplexVec p = perturbation_transfer(pert, csi.subcarriers());
    CsiMatrix out;
    out.rows.reserve(csi.antennas());
    for (const auto& row : csi.rows) {
        ComplexVec r(row.size());
        for (std::size_t w = 0; w < row.size(); ++w) r[w] = row[w] * p[w];
        out.rows.push_back(std::move(r));
    }
    return out;
}

std::vector<int> make_pilot(std::size_t w, std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x70696c6f74ull));  // "pilot"
    std::vector<int> t(w);
    for (auto& v : t) v = (rng.next_u64() & 1) ? 1 : -1;
    return t;
}

PerturbationSequence random_perturbation(std::size_t length, csilab::Rng& rng) {
    if (length == 0) throw std::invalid_argument("random_perturbation: L_p must be >= 1");
    ComplexVec taps(length);
    while (true) {
        double n2 = 0.0;
        for (auto& z : taps) {
            const double amp = rng.uniform();
            const double phase = rng.uniform(0.0, kTwoPi);
            z = std::polar(amp, phase);
            n2 += std::norm(z);
        }
        if (n2 > 0.0) break;  // all-zero draw has probability zero; resample anyway
    }
    return PerturbationSequence(std::move(taps));
}

ComplexVec simulate_packet(const ComplexVec& channel_taps, const PerturbationSequence* pert,
                           const ComplexVec& symbols, const OfdmConfig& cfg,
                           std::uint64_t noise_seed, double snr_db) {
    cfg.validate();
    const std::size_t w = cfg.subcarriers;
    if (symbols.size() != w)
        throw std::invalid_argument("simulate_packet: symbol count != W");
    if (channel_taps.empty() || channel_taps.size() > cfg.channel_taps)
        throw std::invalid_argument("simulate_packet: channel tap count out of range");
    const std::size_t lp = pert ? pert->length() : 1;
    if (cfg.channel_taps + lp > cfg.cyclic_prefix + 1)
        throw constraint_violation("simulate_packet: L + L_p > C + 1 breaks orthogonality");

    // Transmitter: IDFT, prepend CP, pre-convolve with the perturbation.
    const ComplexVec time_symbol = idft(symbols);
    const std::size_t c = cfg.cyclic_prefix;
    ComplexVec stream(c + w);
    for (std::size_t i = 0; i < c; ++i) stream[i] = time_symbol[w - c + i];
    std::copy(time_symbol.begin(), time_symbol.end(), stream.begin() + static_cast<long>(c));
    if (pert) stream = lin_conv(stream, pert->taps());

    // Channel.
    ComplexVec received = lin_conv(stream, channel_taps);

    // Receiver: drop CP, keep W samples.
    ComplexVec body(w);
    std::copy(received.begin() + static_cast<long>(c),
              received.begin() + static_cast<long>(c + w), body.begin());

    if (std::isfinite(snr_db)) {
        double sig_power = 0.0;
        for (const auto& z : body) sig_power += std::norm(z);
        sig_power /= static_cast<double>(w);
        const double n0 = sig_power / std::pow(10.0, snr_db / 10.0);
        const double sigma = std::sqrt(n0 / 2.0);
        Rng rng(noise_seed);
        for (auto& z : body) z += cplx(sigma * rng.gaussian(), sigma * rng.gaussian());
    }

    return dft(body);
}

double rate(const CsiMatrix& csi, const PerturbationSequence* pert, const RateParams& params) {
    csi.validate();
    params.validate();
    const std::size_t w = csi.subcarriers();
    ComplexVec p;
    if (pert) p = perturbation_transfer(*pert, w);

    std::vector<std::size_t> omega = params.data_subcarriers;
    if (omega.empty()) {
        omega.resize(w);
        for (std::size_t i = 0; i < w; ++i) omega[i] = i;
    }
    const double es_n0 = params.symbol_power / params.noise_power;
    double acc = 0.0;
    for (std::size_t idx : omega) {
        if (idx >= w) throw std::invalid_argument("rate: data subcarrier index out of range");
        double gain = 0.0;
        for (const auto& row : csi.rows) gain += std::norm(row[idx]);
        const double pw2 = pert ? std::norm(p[idx]) : 1.0;
        acc += std::log2(1.0 + pw2 * gain * es_n0);
    }
    return acc / static_cast<double>(omega.size());
}

} // namespace csilab::ofdm
