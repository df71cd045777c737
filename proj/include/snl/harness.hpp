#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "snl/blocks.hpp"
#include "snl/graph.hpp"
#include "snl/linalg.hpp"

namespace snl {

inline constexpr std::size_t kGridSide = 8;

struct PairedSample {
  FeatureMap x;
  int label = 0;  // 1 iff both marked cells carry the same pattern
  std::size_t cell_a = 0;
  std::size_t cell_b = 0;
  std::size_t pattern_a = 0;
  std::size_t pattern_b = 0;
};

struct DatasetOptions {
  std::size_t samples = 512;
  std::size_t channels = 8;
  std::size_t patterns = 4;
  std::size_t min_separation = 5;
  double noise = 0.05;
};

struct PairedPatchDataset {
  std::vector<PairedSample> samples;
  std::size_t channels = 0;
  std::size_t patterns = 0;
  std::size_t min_separation = 0;
  Matrix pattern_vectors;  // P × C, orthonormal rows
};

// Chebyshev distance between two positions of the 8×8 grid.
std::size_t grid_distance(std::size_t a, std::size_t b);

PairedPatchDataset gen_dataset(std::uint64_t seed, const DatasetOptions& opts);

// features.bin stacks every sample's 64×C map; manifest.json carries
// labels, marked cells and pattern ids.
void save_dataset(const std::filesystem::path& dir, const PairedPatchDataset& data);

struct ToyNetParams {
  Matrix conv_w;  // 9C × C, row (dy*3 + dx)*C + c_in
  Matrix conv_b;  // 1 × C
  std::optional<BlockParams> block;
  Matrix head_w;  // C × 2
  Matrix head_b;  // 1 × 2

  std::vector<Matrix*> list();
  std::vector<const Matrix*> list() const;
};

inline constexpr double kConvCentreGain = 8.0;

// 3×3 convolution (zero padded) → optional nonlocal block → global average
// pool → linear map to two logits.
class ToyNet {
 public:
  ToyNet(std::size_t channels, std::optional<BlockConfig> block, std::uint64_t seed);

  std::size_t channels() const noexcept { return channels_; }
  const std::optional<BlockConfig>& block_config() const noexcept { return block_; }
  ToyNetParams& params() noexcept { return params_; }
  const ToyNetParams& params() const noexcept { return params_; }

  FeatureMap conv(const FeatureMap& x) const;
  // Per-position features fed to the pooling head: ReLU of the conv output,
  // or of the block output when a block is inserted.
  FeatureMap features(const FeatureMap& x) const;
  std::array<double, 2> logits(const FeatureMap& x) const;

  // Cross-entropy of one sample and its gradient over every parameter.
  double loss_and_grad(const FeatureMap& x, int label, ToyNetParams* grad) const;
  double loss(const FeatureMap& x, int label) const;

  ToyNetParams zero_grad() const;

 private:
  std::size_t channels_;
  std::optional<BlockConfig> block_;
  ToyNetParams params_;
};

struct TrainOptions {
  std::size_t steps = 2000;
  double lr = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 8;
  std::size_t eval_interval = 100;
  double clip_norm = 1.0;  // rescale the batch gradient to this global norm; 0 disables
};

struct MetricsPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

Evaluation evaluate(const ToyNet& net, const PairedPatchDataset& data);

// Minibatch SGD with momentum on the mean cross-entropy. Evaluates the whole
// training set at step 0, every eval_interval steps, and after the last
// step. A non-finite loss raises a divergence error naming the step.
std::vector<MetricsPoint> train(ToyNet& net, const PairedPatchDataset& data,
                                const TrainOptions& opts, std::uint64_t seed);

std::string metrics_csv(const std::vector<MetricsPoint>& history);

struct TrainConfig {
  std::optional<BlockConfig> block;
  DatasetOptions data;
  TrainOptions train;
};

// Keys: block (object or null), samples, channels, patterns, min_separation,
// noise, steps, lr, momentum, batch_size, eval_interval. Unknown keys are an
// error; a block's c_in defaults to channels.
TrainConfig train_config_from_json(std::string_view text);

struct TrainResult {
  std::vector<MetricsPoint> history;
  Evaluation final;
};

TrainResult run_training(const TrainConfig& cfg, std::uint64_t seed);

}  // namespace snl
