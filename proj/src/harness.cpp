#include "snl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "snl/error.hpp"
#include "snl/matrix_io.hpp"
#include "snl/parallel.hpp"
#include "snl/random.hpp"

namespace snl {

using json = nlohmann::json;

std::size_t grid_distance(std::size_t a, std::size_t b) {
  const auto ra = static_cast<long>(a / kGridSide), ca = static_cast<long>(a % kGridSide);
  const auto rb = static_cast<long>(b / kGridSide), cb = static_cast<long>(b % kGridSide);
  return static_cast<std::size_t>(std::max(std::labs(ra - rb), std::labs(ca - cb)));
}

namespace {

// Gram-Schmidt on random Gaussian rows.
Matrix orthonormal_rows(std::size_t count, std::size_t dim, Rng& rng) {
  Matrix q(count, dim);
  for (std::size_t i = 0; i < count; ++i) {
    double norm = 0.0;
    do {
      auto row = q.row(i);
      for (double& v : row) v = rng.normal();
      for (std::size_t j = 0; j < i; ++j) {
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += row[k] * q(j, k);
        for (std::size_t k = 0; k < dim; ++k) row[k] -= dot * q(j, k);
      }
      norm = 0.0;
      for (double v : row) norm += v * v;
      norm = std::sqrt(norm);
    } while (norm < 1e-6);
    for (double& v : q.row(i)) v /= norm;
  }
  return q;
}

}  // namespace

PairedPatchDataset gen_dataset(std::uint64_t seed, const DatasetOptions& opts) {
  if (opts.patterns < 2) fail(ErrorCode::Config, "dataset needs at least 2 patterns");
  if (opts.patterns > opts.channels) {
    fail(ErrorCode::Config, "orthogonal patterns need patterns <= channels");
  }
  if (opts.min_separation > kGridSide - 1) {
    fail(ErrorCode::Config, "min_separation " + std::to_string(opts.min_separation) +
                                " is impossible on an 8x8 grid");
  }
  if (opts.samples == 0) fail(ErrorCode::Config, "dataset needs at least one sample");

  Rng rng(seed);
  const std::size_t n = kGridSide * kGridSide;
  PairedPatchDataset data;
  data.channels = opts.channels;
  data.patterns = opts.patterns;
  data.min_separation = opts.min_separation;
  data.pattern_vectors = orthonormal_rows(opts.patterns, opts.channels, rng);

  for (std::size_t s = 0; s < opts.samples; ++s) {
    PairedSample sample;
    sample.label = s % 2 == 0 ? 1 : 0;
    sample.cell_a = rng.index(n);
    std::vector<std::size_t> far;
    for (std::size_t c = 0; c < n; ++c)
      if (grid_distance(sample.cell_a, c) >= opts.min_separation) far.push_back(c);
    while (far.empty()) {
      sample.cell_a = rng.index(n);
      for (std::size_t c = 0; c < n; ++c)
        if (grid_distance(sample.cell_a, c) >= opts.min_separation) far.push_back(c);
    }
    sample.cell_b = far[rng.index(far.size())];
    sample.pattern_a = rng.index(opts.patterns);
    if (sample.label == 1) {
      sample.pattern_b = sample.pattern_a;
    } else {
      sample.pattern_b = (sample.pattern_a + 1 + rng.index(opts.patterns - 1)) % opts.patterns;
    }

    Matrix values(n, opts.channels);
    for (double& v : values.data()) v = opts.noise * rng.normal();
    for (std::size_t c = 0; c < opts.channels; ++c) {
      values(sample.cell_a, c) = data.pattern_vectors(sample.pattern_a, c);
      values(sample.cell_b, c) = data.pattern_vectors(sample.pattern_b, c);
    }
    sample.x = FeatureMap(kGridSide, kGridSide, std::move(values));
    data.samples.push_back(std::move(sample));
  }
  return data;
}

void save_dataset(const std::filesystem::path& dir, const PairedPatchDataset& data) {
  std::filesystem::create_directories(dir);
  const std::size_t n = kGridSide * kGridSide;
  Matrix stacked(data.samples.size() * n, data.channels);
  json manifest = {{"samples", data.samples.size()}, {"height", kGridSide},
                   {"width", kGridSide},             {"channels", data.channels},
                   {"patterns", data.patterns},       {"min_separation", data.min_separation},
                   {"features", "features.bin"},      {"pattern_vectors", "patterns.bin"}};
  json labels = json::array(), cells = json::array(), ids = json::array();
  for (std::size_t s = 0; s < data.samples.size(); ++s) {
    const PairedSample& sample = data.samples[s];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < data.channels; ++c)
        stacked(s * n + i, c) = sample.x.values()(i, c);
    labels.push_back(sample.label);
    cells.push_back({sample.cell_a, sample.cell_b});
    ids.push_back({sample.pattern_a, sample.pattern_b});
  }
  manifest["labels"] = labels;
  manifest["marked_cells"] = cells;
  manifest["pattern_ids"] = ids;
  save_binary(dir / "features.bin", stacked);
  save_binary(dir / "patterns.bin", data.pattern_vectors);
  std::ofstream os(dir / "manifest.json", std::ios::binary);
  if (!os) fail(ErrorCode::Io, "cannot write dataset manifest");
  os << manifest.dump(2) << '\n';
}

std::vector<Matrix*> ToyNetParams::list() {
  std::vector<Matrix*> out = {&conv_w, &conv_b};
  if (block) {
    for (Matrix* m : param_list(*block)) out.push_back(m);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

std::vector<const Matrix*> ToyNetParams::list() const {
  std::vector<const Matrix*> out = {&conv_w, &conv_b};
  if (block) {
    for (const Matrix* m : param_list(*block)) out.push_back(m);
  }
  out.push_back(&head_w);
  out.push_back(&head_b);
  return out;
}

ToyNet::ToyNet(std::size_t channels, std::optional<BlockConfig> block, std::uint64_t seed)
    : channels_(channels), block_(std::move(block)) {
  if (channels_ == 0) fail(ErrorCode::Config, "ToyNet needs at least one channel");
  if (block_ && block_->c_in != channels_) {
    fail(ErrorCode::Config, "block c_in must equal the network channel count");
  }
  Rng rng(seed);
  const double conv_bound = 1.0 / std::sqrt(9.0 * static_cast<double>(channels_));
  params_.conv_w = Matrix(9 * channels_, channels_);
  for (double& v : params_.conv_w.data()) v = rng.uniform(-conv_bound, conv_bound);
  // Centre tap starts at kConvCentreGain·I so the two marked cells are not
  // drowned out by the average over all 64 positions.
  for (std::size_t c = 0; c < channels_; ++c) params_.conv_w(4 * channels_ + c, c) += kConvCentreGain;
  params_.conv_b = Matrix(1, channels_);
  if (block_) params_.block = init_params(*block_, rng.next());
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(channels_));
  params_.head_w = Matrix(channels_, 2);
  for (double& v : params_.head_w.data()) v = rng.uniform(-head_bound, head_bound);
  params_.head_b = Matrix(1, 2);
}

namespace {

// N × 9C patch matrix with zero padding.
Matrix im2col(const FeatureMap& x) {
  const std::size_t h = x.height(), w = x.width(), c = x.channels();
  Matrix cols(h * w, 9 * c);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t q = 0; q < w; ++q) {
      auto out = cols.row(r * w + q);
      for (int dy = 0; dy < 3; ++dy) {
        for (int dx = 0; dx < 3; ++dx) {
          const long rr = static_cast<long>(r) + dy - 1, qq = static_cast<long>(q) + dx - 1;
          if (rr < 0 || qq < 0 || rr >= static_cast<long>(h) || qq >= static_cast<long>(w)) continue;
          auto src = x.values().row(static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(qq));
          std::copy(src.begin(), src.end(), out.begin() + (dy * 3 + dx) * c);
        }
      }
    }
  }
  return cols;
}

Matrix add_row_bias(Matrix m, const Matrix& bias) {
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) += bias(0, j);
  return m;
}

Matrix relu(Matrix m) {
  for (double& v : m.data()) v = std::max(v, 0.0);
  return m;
}

Matrix mean_rows(const Matrix& m) {
  Matrix out(1, m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(0, j) += m(i, j);
  return out * (1.0 / static_cast<double>(m.rows()));
}

}  // namespace

FeatureMap ToyNet::conv(const FeatureMap& x) const {
  if (x.channels() != channels_) fail(ErrorCode::Shape, "ToyNet: channel mismatch");
  return FeatureMap(x.height(), x.width(),
                    add_row_bias(matmul(im2col(x), params_.conv_w), params_.conv_b));
}

FeatureMap ToyNet::features(const FeatureMap& x) const {
  FeatureMap h = conv(x);
  if (block_) h = block_forward(h, *block_, *params_.block);
  return FeatureMap(x.height(), x.width(), relu(h.values()));
}

std::array<double, 2> ToyNet::logits(const FeatureMap& x) const {
  const Matrix pooled = mean_rows(features(x).values());
  const Matrix out = matmul(pooled, params_.head_w) + params_.head_b;
  return {out(0, 0), out(0, 1)};
}

namespace {

// Numerically stable −log softmax(z)[label] and its gradient.
double cross_entropy(const std::array<double, 2>& z, int label, std::array<double, 2>* grad) {
  const double m = std::max(z[0], z[1]);
  const double e0 = std::exp(z[0] - m), e1 = std::exp(z[1] - m);
  const double log_sum = m + std::log(e0 + e1);
  if (grad) {
    (*grad)[0] = e0 / (e0 + e1) - (label == 0 ? 1.0 : 0.0);
    (*grad)[1] = e1 / (e0 + e1) - (label == 1 ? 1.0 : 0.0);
  }
  return log_sum - z[static_cast<std::size_t>(label)];
}

}  // namespace

double ToyNet::loss(const FeatureMap& x, int label) const {
  return cross_entropy(logits(x), label, nullptr);
}

ToyNetParams ToyNet::zero_grad() const {
  ToyNetParams g;
  g.conv_w = Matrix(params_.conv_w.rows(), params_.conv_w.cols());
  g.conv_b = Matrix(1, channels_);
  if (params_.block) g.block = zeros_like(*params_.block);
  g.head_w = Matrix(channels_, 2);
  g.head_b = Matrix(1, 2);
  return g;
}

double ToyNet::loss_and_grad(const FeatureMap& x, int label, ToyNetParams* grad) const {
  const Matrix cols = im2col(x);
  const FeatureMap h(x.height(), x.width(),
                     add_row_bias(matmul(cols, params_.conv_w), params_.conv_b));
  std::optional<BlockTape> tape;
  if (block_) tape = record_forward(h, *block_, *params_.block);
  const Matrix& y = tape ? tape->y.values() : h.values();
  const Matrix act = relu(y);
  const Matrix pooled = mean_rows(act);
  const Matrix out = matmul(pooled, params_.head_w) + params_.head_b;
  std::array<double, 2> d_logits{};
  const double loss = cross_entropy({out(0, 0), out(0, 1)}, label, &d_logits);
  if (!grad) return loss;

  *grad = zero_grad();
  const Matrix d_out{{d_logits[0], d_logits[1]}};
  grad->head_w = matmul_tn(pooled, d_out);
  grad->head_b = d_out;
  const Matrix d_pooled = matmul_nt(d_out, params_.head_w);
  Matrix d_y(y.rows(), channels_);
  const double inv_n = 1.0 / static_cast<double>(d_y.rows());
  for (std::size_t i = 0; i < d_y.rows(); ++i)
    for (std::size_t c = 0; c < channels_; ++c)
      d_y(i, c) = act(i, c) > 0.0 ? d_pooled(0, c) * inv_n : 0.0;

  Matrix d_h = d_y;
  if (block_) {
    BlockGradients bg = backward_from(*tape, d_y);
    d_h = std::move(bg.x);
    grad->block = std::move(bg.params);
  }
  grad->conv_w = matmul_tn(cols, d_h);
  for (std::size_t i = 0; i < d_h.rows(); ++i)
    for (std::size_t c = 0; c < channels_; ++c) grad->conv_b(0, c) += d_h(i, c);
  return loss;
}

Evaluation evaluate(const ToyNet& net, const PairedPatchDataset& data) {
  std::vector<double> losses(data.samples.size());
  std::vector<int> correct(data.samples.size());
  parallel_for(data.samples.size(), [&](std::size_t i) {
    const PairedSample& s = data.samples[i];
    const auto z = net.logits(s.x);
    losses[i] = cross_entropy(z, s.label, nullptr);
    const int predicted = z[1] > z[0] ? 1 : 0;
    correct[i] = predicted == s.label ? 1 : 0;
  });
  Evaluation e;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    e.loss += losses[i];
    e.accuracy += correct[i];
  }
  e.loss /= static_cast<double>(losses.size());
  e.accuracy /= static_cast<double>(losses.size());
  return e;
}

namespace {
std::vector<MetricsPoint> train_loop(ToyNet& net, const PairedPatchDataset& data,
                                     const TrainOptions& opts, std::uint64_t seed);
}  // namespace

std::vector<MetricsPoint> train(ToyNet& net, const PairedPatchDataset& data,
                                const TrainOptions& opts, std::uint64_t seed) {
  if (!(opts.lr >= 0.0)) fail(ErrorCode::Config, "learning rate must be nonnegative");
  if (opts.batch_size == 0) fail(ErrorCode::Config, "batch_size must be positive");
  if (opts.eval_interval == 0) fail(ErrorCode::Config, "eval_interval must be positive");
  if (data.samples.empty()) fail(ErrorCode::Config, "empty dataset");
  try {
    return train_loop(net, data, opts, seed);
  } catch (const Error& e) {
    // Non-finite activations or gradients mid-training are a divergence.
    if (e.code() == ErrorCode::Numeric) fail(ErrorCode::Divergence, e.what());
    throw;
  }
}

namespace {

std::vector<MetricsPoint> train_loop(ToyNet& net, const PairedPatchDataset& data,
                                     const TrainOptions& opts, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<MetricsPoint> history;
  auto record = [&](std::size_t step) {
    const Evaluation e = evaluate(net, data);
    if (!std::isfinite(e.loss)) {
      fail(ErrorCode::Divergence, "training diverged at step " + std::to_string(step));
    }
    history.push_back({step, e.loss, e.accuracy});
  };
  record(0);

  ToyNetParams velocity = net.zero_grad();
  std::vector<ToyNetParams> per_sample(opts.batch_size);
  std::vector<double> sample_loss(opts.batch_size);
  std::vector<std::size_t> batch(opts.batch_size);

  for (std::size_t step = 1; step <= opts.steps; ++step) {
    for (std::size_t& idx : batch) idx = rng.index(data.samples.size());
    parallel_for(opts.batch_size, [&](std::size_t b) {
      const PairedSample& s = data.samples[batch[b]];
      sample_loss[b] = net.loss_and_grad(s.x, s.label, &per_sample[b]);
    });
    for (double l : sample_loss) {
      if (!std::isfinite(l)) {
        fail(ErrorCode::Divergence, "training diverged at step " + std::to_string(step));
      }
    }
    // Fixed-order reduction keeps the update independent of thread timing.
    ToyNetParams total = net.zero_grad();
    auto total_list = total.list();
    for (const ToyNetParams& g : per_sample) {
      const auto gl = g.list();
      for (std::size_t k = 0; k < gl.size(); ++k) *total_list[k] += *gl[k];
    }
    double scale = 1.0 / static_cast<double>(opts.batch_size);
    if (opts.clip_norm > 0.0) {
      double sq = 0.0;
      for (const Matrix* g : total_list)
        for (double v : g->data()) sq += v * v;
      const double norm = std::sqrt(sq) * scale;
      if (norm > opts.clip_norm) scale *= opts.clip_norm / norm;
    }
    auto params = net.params().list();
    auto vel = velocity.list();
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto v = vel[k]->data();
      auto p = params[k]->data();
      auto g = total_list[k]->data();
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = opts.momentum * v[i] + g[i] * scale;
        p[i] -= opts.lr * v[i];
      }
    }
    if (step % opts.eval_interval == 0 || step == opts.steps) record(step);
  }
  return history;
}

}  // namespace

std::string metrics_csv(const std::vector<MetricsPoint>& history) {
  std::ostringstream os;
  os << "step,loss,accuracy\n";
  for (const MetricsPoint& m : history) {
    os << m.step << ',' << format_double(m.loss) << ',' << format_double(m.accuracy) << '\n';
  }
  return os.str();
}

TrainConfig train_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("train config: ") + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::Config, "train config must be a JSON object");
  static const std::set<std::string> known = {
      "block", "samples", "channels", "patterns",   "min_separation", "noise",
      "steps", "lr",      "momentum", "batch_size", "eval_interval", "clip_norm"};
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) fail(ErrorCode::Config, "train config: unknown key '" + key + "'");
  }
  TrainConfig cfg;
  try {
    auto take = [&](const char* key, auto& slot) {
      if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    take("samples", cfg.data.samples);
    take("channels", cfg.data.channels);
    take("patterns", cfg.data.patterns);
    take("min_separation", cfg.data.min_separation);
    take("noise", cfg.data.noise);
    take("steps", cfg.train.steps);
    take("lr", cfg.train.lr);
    take("momentum", cfg.train.momentum);
    take("batch_size", cfg.train.batch_size);
    take("eval_interval", cfg.train.eval_interval);
    take("clip_norm", cfg.train.clip_norm);
    if (j.contains("block") && !j.at("block").is_null()) {
      json block = j.at("block");
      if (!block.is_object()) fail(ErrorCode::Config, "train config: block must be an object");
      if (!block.contains("c_in")) block["c_in"] = cfg.data.channels;
      cfg.block = block_config_from_json(block.dump());
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("train config: ") + e.what());
  }
  if (!(cfg.train.lr >= 0.0)) fail(ErrorCode::Config, "train config: lr must be nonnegative");
  return cfg;
}

TrainResult run_training(const TrainConfig& cfg, std::uint64_t seed) {
  Rng seeds(seed);
  const std::uint64_t data_seed = seeds.next();
  const std::uint64_t net_seed = seeds.next();
  const std::uint64_t train_seed = seeds.next();
  const PairedPatchDataset data = gen_dataset(data_seed, cfg.data);
  ToyNet net(cfg.data.channels, cfg.block, net_seed);
  TrainResult result;
  result.history = train(net, data, cfg.train, train_seed);
  result.final = {result.history.back().loss, result.history.back().accuracy};
  return result;
}

}  // namespace snl
