#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <vector>

#include "csilab/autodiff.hpp"
#include "csilab/ofdm.hpp"

namespace csilab::features {

enum class FeatureTag { F1, F2 };

std::string to_string(FeatureTag tag);
FeatureTag tag_from_string(const std::string& s);

/// Unit-norm real CSI feature. F1 is the vectorized 2-D delay-domain
/// autocorrelation (real parts stacked over imaginary parts); F2 the
/// entry-wise delay-domain magnitudes.
struct FeatureVector {
    Eigen::VectorXd values;
    FeatureTag tag;
};

// F1: 2*(2B-1)*(2T_d-1); F2: B*T_d.
std::size_t dimension(FeatureTag tag, std::size_t antennas, std::size_t delay_taps);

FeatureVector extract_f1(const ofdm::CsiMatrix& csi, std::size_t delay_taps);
FeatureVector extract_f2(const ofdm::CsiMatrix& csi, std::size_t delay_taps);
FeatureVector extract(FeatureTag tag, const ofdm::CsiMatrix& csi, std::size_t delay_taps);

/// Same pipelines as diffgraph subgraphs. csi_rows are per-antenna complex
/// node pairs of length W; the returned node is the unit-norm feature column.
/// Forward values are bit-identical to the plain functions.
int build_feature_graph(diff::Tape& tape, FeatureTag tag,
                        const std::vector<diff::Tape::CVec>& csi_rows, std::size_t delay_taps);

} // namespace csilab::features
