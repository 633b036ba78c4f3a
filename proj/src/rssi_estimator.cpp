#include "prcara/rssi_estimator.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

#include "prcara/error.hpp"

namespace prcara {

std::array<double, 5> normalized_features(const ProactiveInput& input) {
  return {scaling::normalize_rssi(input.eps_o_dbm), input.hidden ? 1.0 : 0.0,
          (input.hidden ? input.hidden_distance_m : kAbsentDistanceM) / scaling::kDistanceScaleM,
          input.exposed ? 1.0 : 0.0,
          (input.exposed ? input.exposed_distance_m : kAbsentDistanceM) / scaling::kDistanceScaleM};
}

// ---------------------------------------------------------------------------
// Network

EstimatorNet::EstimatorNet(std::vector<int> layer_dims) : dims_(std::move(layer_dims)) {
  if (dims_.size() < 2) throw DimensionMismatch("estimator: need at least input and output dims");
  for (int d : dims_) {
    if (d < 1) throw DimensionMismatch("estimator: layer dims must be >= 1");
  }
  for (std::size_t i = 1; i < dims_.size(); ++i) {
    layers_.push_back({Eigen::MatrixXd::Zero(dims_[i], dims_[i - 1]), Eigen::VectorXd::Zero(dims_[i])});
  }
}

EstimatorNet EstimatorNet::initialized(Rng& rng, std::vector<int> layer_dims) {
  EstimatorNet net(std::move(layer_dims));
  for (auto& layer : net.layers_) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(layer.weight.cols())));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = dist(rng);
    }
  }
  return net;
}

std::size_t EstimatorNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += static_cast<std::size_t>(layer.weight.size() + layer.bias.size());
  return n;
}

bool EstimatorNet::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(),
                     [](const DenseLayer& l) { return l.weight.allFinite() && l.bias.allFinite(); });
}

Gradients EstimatorNet::zeros_like() const {
  Gradients g;
  g.reserve(layers_.size());
  for (const auto& layer : layers_) {
    g.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                 Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return g;
}

bool operator==(const EstimatorNet& a, const EstimatorNet& b) {
  if (a.dims_ != b.dims_) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (a.layers_[i].weight != b.layers_[i].weight || a.layers_[i].bias != b.layers_[i].bias) return false;
  }
  return true;
}

Eigen::VectorXd forward_batch(const EstimatorNet& net, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != net.layer_dims().front()) throw DimensionMismatch("estimator: input dimension mismatch");
  if (!inputs.allFinite()) throw DomainError("estimator: non-finite input");
  Eigen::MatrixXd a = inputs;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Eigen::MatrixXd z = layers[i].weight * a;
    z.colwise() += layers[i].bias;
    if (i + 1 < layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a.row(0).transpose();
}

double forward(const EstimatorNet& net, std::span<const double> features) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(features.size()), 1);
  for (std::size_t i = 0; i < features.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = features[i];
  return forward_batch(net, x)(0);
}

LossGradient loss_and_gradient(const EstimatorNet& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets) {
  const auto batch = inputs.cols();
  if (batch == 0) throw DomainError("loss_and_gradient: empty batch");
  if (targets.size() != batch) throw DimensionMismatch("loss_and_gradient: targets not aligned with inputs");
  if (inputs.rows() != net.layer_dims().front()) throw DimensionMismatch("estimator: input dimension mismatch");
  if (net.layer_dims().back() != 1) throw DimensionMismatch("loss_and_gradient: scalar output required");

  const auto& layers = net.layers();
  const std::size_t depth = layers.size();
  // activations[0] = inputs, activations[i+1] = output of layer i.
  std::vector<Eigen::MatrixXd> activations;
  activations.reserve(depth + 1);
  activations.push_back(inputs);
  for (std::size_t i = 0; i < depth; ++i) {
    Eigen::MatrixXd z = layers[i].weight * activations.back();
    z.colwise() += layers[i].bias;
    if (i + 1 < depth) z = z.cwiseMax(0.0);
    activations.push_back(std::move(z));
  }

  const Eigen::RowVectorXd residual = activations.back().row(0) - targets.transpose();
  LossGradient out;
  out.mse = residual.squaredNorm() / static_cast<double>(batch);
  out.gradients.resize(depth);

  Eigen::MatrixXd delta = (2.0 / static_cast<double>(batch)) * residual;
  for (std::size_t k = depth; k-- > 0;) {
    out.gradients[k].weight = delta * activations[k].transpose();
    out.gradients[k].bias = delta.rowwise().sum();
    if (k > 0) {
      Eigen::MatrixXd back = layers[k].weight.transpose() * delta;
      // ReLU derivative; activations[k] > 0 exactly where the pre-activation was.
      delta = back.cwiseProduct((activations[k].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

namespace {

Eigen::MatrixXd feature_matrix(std::span<const TrainingSample> samples) {
  Eigen::MatrixXd x(5, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const auto f = normalized_features(samples[j].input());
    for (int i = 0; i < 5; ++i) x(i, static_cast<Eigen::Index>(j)) = f[static_cast<std::size_t>(i)];
  }
  return x;
}

Eigen::VectorXd label_vector(std::span<const TrainingSample> samples) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t j = 0; j < samples.size(); ++j) {
    y(static_cast<Eigen::Index>(j)) = scaling::normalize_rssi(samples[j].eps_p_dbm);
  }
  return y;
}

}  // namespace

LossGradient loss_and_gradient(const EstimatorNet& net, std::span<const TrainingSample> batch) {
  return loss_and_gradient(net, feature_matrix(batch), label_vector(batch));
}

AdamState AdamState::for_net(const EstimatorNet& net, double alpha) {
  AdamState state;
  state.alpha = alpha;
  state.first_moment = net.zeros_like();
  state.second_moment = net.zeros_like();
  return state;
}

void adam_step(EstimatorNet& net, const Gradients& gradients, AdamState& state) {
  auto& layers = net.layers();
  if (gradients.size() != layers.size()) throw DimensionMismatch("adam: gradient depth mismatch");
  if (state.first_moment.empty()) {
    state.first_moment = net.zeros_like();
    state.second_moment = net.zeros_like();
  }
  ++state.step;
  const double correction1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  auto update = [&](auto& param, const auto& grad, auto& m, auto& v) {
    if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
      throw DimensionMismatch("adam: gradient shape mismatch");
    }
    m = state.beta1 * m + (1.0 - state.beta1) * grad;
    v = state.beta2 * v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
    param.array() -= state.alpha * (m.array() / correction1) / ((v.array() / correction2).sqrt() + state.epsilon);
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].weight, gradients[i].weight, state.first_moment[i].weight, state.second_moment[i].weight);
    update(layers[i].bias, gradients[i].bias, state.first_moment[i].bias, state.second_moment[i].bias);
  }
}

// ---------------------------------------------------------------------------
// Data generation

std::vector<TrainingSample> generate_dataset(Rng& rng, std::size_t n, const GeneratorConfig& config,
                                             std::vector<PowerTerms>* terms) {
  if (n < 1) throw DomainError("generate_dataset: n must be >= 1");
  if (config.max_original < 0 || config.max_hidden < 0 || config.max_exposed < 0) {
    throw ConfigError("generator: counts must be >= 0");
  }
  if (!(config.original_min_m > 0.0 && config.original_min_m <= config.original_max_m) ||
      !(config.near_min_m > 0.0 && config.near_min_m <= config.near_max_m)) {
    throw ConfigError("generator: invalid distance range");
  }
  const double noise_mw = dbm_to_mw(noise_power_dbm(config.budget));
  const double tx_mw = config.budget.effective_tx_mw();
  std::uniform_int_distribution<int> original_count(0, config.max_original);
  std::uniform_int_distribution<int> hidden_count(0, config.degenerate ? 0 : config.max_hidden);
  std::uniform_int_distribution<int> exposed_count(0, config.degenerate ? 0 : config.max_exposed);
  std::uniform_real_distribution<double> far(config.original_min_m, config.original_max_m);
  std::uniform_real_distribution<double> near(config.near_min_m, config.near_max_m);

  std::vector<TrainingSample> samples;
  samples.reserve(n);
  if (terms) {
    terms->clear();
    terms->reserve(n);
  }
  for (std::size_t k = 0; k < n; ++k) {
    double original_mw = 0.0;
    const int n_orig = original_count(rng);
    for (int i = 0; i < n_orig; ++i) original_mw += tx_mw * sample_channel_gain(rng, far(rng), config.channel);

    TrainingSample s;
    PowerTerms p;
    // Only the nearest hidden/exposed transmitter is exposed as a feature.
    const int n_hidden = hidden_count(rng);
    for (int i = 0; i < n_hidden; ++i) {
      const double d = near(rng);
      p.hidden_mw += tx_mw * sample_channel_gain(rng, d, config.channel);
      s.i_h = 1;
      s.d_h_m = i == 0 ? d : std::min(s.d_h_m, d);
    }
    const int n_exposed = exposed_count(rng);
    for (int i = 0; i < n_exposed; ++i) {
      const double d = near(rng);
      p.exposed_mw += tx_mw * sample_channel_gain(rng, d, config.channel);
      s.i_e = 1;
      s.d_e_m = i == 0 ? d : std::min(s.d_e_m, d);
    }
    // The exposed transmitter was active while sensing, so it is part of the
    // sensed RSSI and is removed from the proactive label.
    p.eps_o_mw = noise_mw + original_mw + p.exposed_mw;
    p.label_mw = p.eps_o_mw + p.hidden_mw - p.exposed_mw;
    s.eps_o_dbm = mw_to_dbm(p.eps_o_mw);
    s.eps_p_dbm = mw_to_dbm(std::max(p.label_mw, noise_mw));
    samples.push_back(s);
    if (terms) terms->push_back(p);
  }
  return samples;
}

// ---------------------------------------------------------------------------
// Training

double evaluate_mse_db2(const EstimatorNet& net, std::span<const TrainingSample> samples) {
  if (samples.empty()) throw DomainError("evaluate: empty sample set");
  const Eigen::VectorXd out = forward_batch(net, feature_matrix(samples));
  const Eigen::VectorXd y = label_vector(samples);
  return scaling::mse_to_db2((out - y).squaredNorm() / static_cast<double>(samples.size()));
}

TrainResult train_on(Rng& rng, std::vector<TrainingSample> samples, const TrainConfig& config) {
  if (samples.size() < 2) throw DomainError("train: need at least two samples");
  if (config.batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (config.epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0)) {
    throw ConfigError("train: holdout_fraction must be in (0, 1)");
  }
  if (!(config.learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");

  if (config.shuffle_labels) {
    std::vector<double> labels;
    labels.reserve(samples.size());
    for (const auto& s : samples) labels.push_back(s.eps_p_dbm);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].eps_p_dbm = labels[i];
  }

  auto holdout_size = static_cast<std::size_t>(std::llround(config.holdout_fraction * static_cast<double>(samples.size())));
  holdout_size = std::clamp<std::size_t>(holdout_size, 1, samples.size() - 1);
  const std::span<const TrainingSample> all(samples);
  const auto holdout = all.subspan(samples.size() - holdout_size);
  std::vector<TrainingSample> train_set(samples.begin(), samples.end() - static_cast<std::ptrdiff_t>(holdout_size));

  TrainResult result{EstimatorNet::initialized(rng), {}};
  auto& report = result.report;
  report.train_size = train_set.size();
  report.holdout_size = holdout_size;
  report.learning_rate = config.learning_rate;

  AdamState adam = AdamState::for_net(result.net, config.learning_rate);
  const Eigen::MatrixXd holdout_x = feature_matrix(holdout);
  const Eigen::VectorXd holdout_y = label_vector(holdout);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(train_set.begin(), train_set.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < train_set.size(); start += config.batch_size) {
      const auto count = std::min(config.batch_size, train_set.size() - start);
      const std::span<const TrainingSample> batch(train_set.data() + start, count);
      auto lg = loss_and_gradient(result.net, batch);
      if (!std::isfinite(lg.mse)) {
        throw TrainingDiverged("train: loss became non-finite at epoch " + std::to_string(epoch) + ", sample " +
                               std::to_string(start) + ", learning rate " + std::to_string(config.learning_rate));
      }
      adam_step(result.net, lg.gradients, adam);
      loss_sum += lg.mse * static_cast<double>(count);
      seen += count;
    }
    if (!result.net.all_finite()) {
      throw TrainingDiverged("train: parameters became non-finite at epoch " + std::to_string(epoch));
    }
    const Eigen::VectorXd out = forward_batch(result.net, holdout_x);
    const double holdout_mse = scaling::mse_to_db2((out - holdout_y).squaredNorm() / static_cast<double>(holdout_size));
    report.epochs.push_back({epoch, scaling::mse_to_db2(loss_sum / static_cast<double>(seen)), holdout_mse});
  }
  report.holdout_mse_db2 = report.epochs.back().holdout_mse_db2;

  double baseline = 0.0;
  double mean = 0.0;
  for (const auto& s : holdout) {
    baseline += (s.eps_p_dbm - s.eps_o_dbm) * (s.eps_p_dbm - s.eps_o_dbm);
    mean += s.eps_p_dbm;
  }
  mean /= static_cast<double>(holdout_size);
  double variance = 0.0;
  for (const auto& s : holdout) variance += (s.eps_p_dbm - mean) * (s.eps_p_dbm - mean);
  report.baseline_mse_db2 = baseline / static_cast<double>(holdout_size);
  report.holdout_label_variance_db2 = variance / static_cast<double>(holdout_size);
  return result;
}

TrainResult train(Rng& rng, const TrainConfig& config) {
  auto samples = generate_dataset(rng, config.n_samples, config.generator);
  return train_on(rng, std::move(samples), config);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[4] = {'P', 'R', 'C', 'W'};
constexpr std::uint32_t kWeightsVersion = 1;

template <typename T>
void write_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const char* what) {
  std::array<char, sizeof(T)> bytes{};
  if (!in.read(bytes.data(), sizeof(T))) throw FormatError(std::string("weights: truncated file while reading ") + what);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  return std::bit_cast<T>(bytes);
}

}  // namespace

void save_weights(const EstimatorNet& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("weights: cannot open " + path.string() + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_le<std::uint32_t>(out, kWeightsVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_dims().size()));
  for (int d : net.layer_dims()) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (const auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) write_le<double>(out, layer.weight(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) write_le<double>(out, layer.bias(r));
  }
  if (!out) throw Error("weights: write failed for " + path.string());
}

EstimatorNet load_weights(const std::filesystem::path& path, const std::vector<int>& expected_dims) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifact("weights: cannot open " + path.string());
  char magic[4] = {};
  if (!in.read(magic, sizeof(magic))) throw FormatError("weights: truncated header");
  if (!std::equal(std::begin(magic), std::end(magic), std::begin(kMagic))) throw FormatError("weights: bad magic");
  const auto version = read_le<std::uint32_t>(in, "version");
  if (version != kWeightsVersion) throw FormatError("weights: unsupported version " + std::to_string(version));
  const auto n_dims = read_le<std::uint32_t>(in, "layer count");
  if (n_dims < 2 || n_dims > 64) throw FormatError("weights: implausible layer count " + std::to_string(n_dims));
  std::vector<int> dims;
  for (std::uint32_t i = 0; i < n_dims; ++i) dims.push_back(static_cast<int>(read_le<std::uint32_t>(in, "layer dims")));
  if (!expected_dims.empty() && dims != expected_dims) {
    std::ostringstream msg;
    msg << "weights: layer dims [";
    for (std::size_t i = 0; i < dims.size(); ++i) msg << (i ? "," : "") << dims[i];
    msg << "] do not match the estimator layout";
    throw DimensionMismatch(msg.str());
  }
  EstimatorNet net(dims);
  for (auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) layer.weight(r, c) = read_le<double>(in, "weights");
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = read_le<double>(in, "biases");
  }
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("weights: trailing bytes after parameters");
  return net;
}

void write_dataset_csv(std::ostream& out, std::span<const TrainingSample> samples) {
  out << "eps_o_dbm,i_h,d_h_m,i_e,d_e_m,eps_p_dbm\n";
  out << std::setprecision(17);
  for (const auto& s : samples) {
    out << s.eps_o_dbm << ',' << s.i_h << ',' << s.d_h_m << ',' << s.i_e << ',' << s.d_e_m << ',' << s.eps_p_dbm
        << '\n';
  }
}

std::vector<TrainingSample> read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw FormatError("dataset: empty file", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "eps_o_dbm,i_h,d_h_m,i_e,d_e_m,eps_p_dbm") throw FormatError("dataset: unexpected header", 1);
  std::vector<TrainingSample> samples;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<double, 6> v{};
    std::size_t pos = 0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const auto next = line.find(',', pos);
      const bool last = i + 1 == v.size();
      if ((next == std::string::npos) != last) throw FormatError("dataset: expected 6 columns", line_no);
      const auto field = line.substr(pos, last ? std::string::npos : next - pos);
      std::size_t used = 0;
      try {
        v[i] = std::stod(field, &used);
      } catch (const std::exception&) {
        throw FormatError("dataset: bad number '" + field + "'", line_no);
      }
      if (used != field.size() || !std::isfinite(v[i])) throw FormatError("dataset: bad number '" + field + "'", line_no);
      pos = next + 1;
    }
    TrainingSample s{v[0], static_cast<int>(v[1]), v[2], static_cast<int>(v[3]), v[4], v[5]};
    if ((v[1] != 0.0 && v[1] != 1.0) || (v[3] != 0.0 && v[3] != 1.0)) {
      throw FormatError("dataset: indicators must be 0 or 1", line_no);
    }
    samples.push_back(s);
  }
  if (samples.empty()) throw FormatError("dataset: no samples", line_no);
  return samples;
}

// ---------------------------------------------------------------------------
// Estimators

void NeuralEstimator::estimate(std::span<const ProactiveInput> inputs, std::span<double> out_dbm) const {
  if (inputs.size() != out_dbm.size()) throw DimensionMismatch("estimator: output span size mismatch");
  if (inputs.empty()) return;
  Eigen::MatrixXd x(5, static_cast<Eigen::Index>(inputs.size()));
  for (std::size_t j = 0; j < inputs.size(); ++j) {
    const auto f = normalized_features(inputs[j]);
    for (int i = 0; i < 5; ++i) x(i, static_cast<Eigen::Index>(j)) = f[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd y = forward_batch(net_, x);
  for (std::size_t j = 0; j < inputs.size(); ++j) out_dbm[j] = scaling::denormalize_rssi(y(static_cast<Eigen::Index>(j)));
}

void IdentityEstimator::estimate(std::span<const ProactiveInput> inputs, std::span<double> out_dbm) const {
  if (inputs.size() != out_dbm.size()) throw DimensionMismatch("estimator: output span size mismatch");
  for (std::size_t j = 0; j < inputs.size(); ++j) out_dbm[j] = inputs[j].eps_o_dbm;
}

}  // namespace prcara
