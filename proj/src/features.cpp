#include "csilab/features.hpp"

#include <cmath>
#include <stdexcept>

#include "csilab/errors.hpp"
#include "csilab/kernels.hpp"

namespace csilab::features {

namespace {

// Delay-domain rows: H̄ = H F^H applied row-wise, truncated to the first
// delay_taps taps.
Eigen::MatrixXcd delay_domain(const ofdm::CsiMatrix& csi, std::size_t delay_taps) {
    csi.validate();
    if (delay_taps == 0 || delay_taps > csi.subcarriers())
        throw std::invalid_argument("features: delay truncation T_d out of range");
    Eigen::MatrixXcd out(static_cast<long>(csi.antennas()), static_cast<long>(delay_taps));
    for (std::size_t b = 0; b < csi.antennas(); ++b) {
        const ofdm::ComplexVec bar = ofdm::idft(csi.rows[b]);
        for (std::size_t t = 0; t < delay_taps; ++t)
            out(static_cast<long>(b), static_cast<long>(t)) = bar[t];
    }
    return out;
}

} // namespace

std::string to_string(FeatureTag tag) { return tag == FeatureTag::F1 ? "F1" : "F2"; }

FeatureTag tag_from_string(const std::string& s) {
    if (s == "F1" || s == "f1") return FeatureTag::F1;
    if (s == "F2" || s == "f2") return FeatureTag::F2;
    throw std::invalid_argument("unknown feature tag: " + s);
}

std::size_t dimension(FeatureTag tag, std::size_t antennas, std::size_t delay_taps) {
    if (tag == FeatureTag::F1) return 2 * (2 * antennas - 1) * (2 * delay_taps - 1);
    return antennas * delay_taps;
}

FeatureVector extract_f1(const ofdm::CsiMatrix& csi, std::size_t delay_taps) {
    const Eigen::MatrixXcd bar = delay_domain(csi, delay_taps);
    const Eigen::VectorXd stacked = kernels::xcorr2d_stack(bar);
    return {kernels::normalize_guarded(stacked), FeatureTag::F1};
}

FeatureVector extract_f2(const ofdm::CsiMatrix& csi, std::size_t delay_taps) {
    const Eigen::MatrixXcd bar = delay_domain(csi, delay_taps);
    if (bar.cwiseAbs().maxCoeff() == 0.0)
        throw degenerate_input("extract_f2: all-zero CSI has no magnitude profile");
    // vec(H̄) row-major (antenna-major), entry-wise magnitudes.
    Eigen::VectorXd mags(bar.rows() * bar.cols());
    for (long b = 0; b < bar.rows(); ++b)
        for (long t = 0; t < bar.cols(); ++t)
            mags(b * bar.cols() + t) =
                std::sqrt(bar(b, t).real() * bar(b, t).real() + bar(b, t).imag() * bar(b, t).imag());
    return {kernels::normalize_guarded(mags), FeatureTag::F2};
}

FeatureVector extract(FeatureTag tag, const ofdm::CsiMatrix& csi, std::size_t delay_taps) {
    return tag == FeatureTag::F1 ? extract_f1(csi, delay_taps) : extract_f2(csi, delay_taps);
}

int build_feature_graph(diff::Tape& tape, FeatureTag tag,
                        const std::vector<diff::Tape::CVec>& csi_rows, std::size_t delay_taps) {
    if (csi_rows.empty()) throw std::invalid_argument("build_feature_graph: no CSI rows");
    const long w = tape.value(csi_rows.front().re).rows();
    if (delay_taps == 0 || static_cast<long>(delay_taps) > w)
        throw std::invalid_argument("features: delay truncation T_d out of range");

    std::vector<diff::Tape::CVec> delay_rows;
    delay_rows.reserve(csi_rows.size());
    for (const auto& row : csi_rows) {
        diff::Tape::CVec bar = tape.dft_map(row, static_cast<std::size_t>(w), true);
        delay_rows.push_back({tape.slice(bar.re, 0, 0, static_cast<long>(delay_taps), 1),
                              tape.slice(bar.im, 0, 0, static_cast<long>(delay_taps), 1)});
    }

    if (tag == FeatureTag::F1) {
        const int stacked = tape.xcorr2d(delay_rows);
        return tape.normalize(stacked);
    }

    std::vector<int> mags;
    mags.reserve(delay_rows.size());
    for (const auto& row : delay_rows) mags.push_back(tape.abs_c(row.re, row.im));
    return tape.normalize(tape.concat_rows(mags));
}

} // namespace csilab::features
