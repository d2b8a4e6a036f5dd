#pragma once

// Independent reference implementations for tests. Plain nested loops over
// std::vector, deliberately sharing no helpers with the library.

#include "iaeilm/backbone.hpp"
#include "iaeilm/melody.hpp"

#include <vector>

namespace oracle {

using Grid = std::vector<std::vector<double>>;  // [row][col]

Grid to_grid(const iaeilm::Matrix<double>& m);
iaeilm::Matrix<double> from_grid(const Grid& g);

/// y[t][o] = b[o] + sum_j sum_i x[t + j - k/2][i] * w[j][i][o], zero padded.
Grid conv1d(const Grid& x, const iaeilm::melody::ConvLayer<double>& layer);
Grid melody_encoder(const Grid& features, const iaeilm::melody::EncoderWeights<double>& w);

Grid affine(const Grid& x, const iaeilm::nn::Linear<double>& l);

/// Full denoiser forward for a (small) config, written from the block recipe.
Grid backbone_forward(const Grid& x, double t, int style, const Grid& m, const iaeilm::backbone::BackboneConfig& cfg,
                      const iaeilm::backbone::BackboneWeights<double>& w, bool use_melody);

/// Per-frame accuracy counts, straight from the textual definitions.
struct Accuracy {
  bool rpa_defined = false;
  double rpa = 0, rca = 0, oa = 0;
};
Accuracy brute_force_metrics(const std::vector<double>& ref_hz, const std::vector<double>& est_hz);

}  // namespace oracle
