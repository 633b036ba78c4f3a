#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "prcara/channel.hpp"
#include "prcara/units.hpp"

namespace prcara {

/// 5 inputs, five hidden ReLU layers of 64, one linear output.
inline const std::vector<int> kEstimatorLayerDims{5, 64, 64, 64, 64, 64, 1};

/// Distance fed to the estimator when the matching indicator is 0.
inline constexpr double kAbsentDistanceM = 1000.0;

/// Inputs of the proactive RSSI estimate for one cell.
struct ProactiveInput {
  double eps_o_dbm = 0.0;
  bool hidden = false;
  double hidden_distance_m = kAbsentDistanceM;
  bool exposed = false;
  double exposed_distance_m = kAbsentDistanceM;
};

struct TrainingSample {
  double eps_o_dbm = 0.0;
  int i_h = 0;
  double d_h_m = kAbsentDistanceM;
  int i_e = 0;
  double d_e_m = kAbsentDistanceM;
  double eps_p_dbm = 0.0;

  ProactiveInput input() const { return {eps_o_dbm, i_h != 0, d_h_m, i_e != 0, d_e_m}; }
};

// RSSI in [-120, -40] dBm maps to [-1, 1]; distances in [0, 1000] m to [0, 1].
// The output is trained on the same RSSI scale and mapped back to dBm.
namespace scaling {
inline constexpr double kRssiCenterDbm = -80.0;
inline constexpr double kRssiHalfRangeDb = 40.0;
inline constexpr double kDistanceScaleM = 1000.0;

constexpr double normalize_rssi(double dbm) { return (dbm - kRssiCenterDbm) / kRssiHalfRangeDb; }
constexpr double denormalize_rssi(double x) { return x * kRssiHalfRangeDb + kRssiCenterDbm; }
/// Normalized-unit MSE to dB^2.
constexpr double mse_to_db2(double mse) { return mse * kRssiHalfRangeDb * kRssiHalfRangeDb; }
}  // namespace scaling

std::array<double, 5> normalized_features(const ProactiveInput& input);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

/// Same shape as the network parameters.
using Gradients = std::vector<DenseLayer>;

class EstimatorNet {
 public:
  /// All parameters zero.
  explicit EstimatorNet(std::vector<int> layer_dims = kEstimatorLayerDims);
  /// He-normal weights, zero biases.
  static EstimatorNet initialized(Rng& rng, std::vector<int> layer_dims = kEstimatorLayerDims);

  const std::vector<int>& layer_dims() const { return dims_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::size_t parameter_count() const;
  bool all_finite() const;
  Gradients zeros_like() const;

  friend bool operator==(const EstimatorNet& a, const EstimatorNet& b);

 private:
  std::vector<int> dims_;
  std::vector<DenseLayer> layers_;
};

/// Affine + ReLU composition on normalized features; throws DomainError on
/// non-finite input.
double forward(const EstimatorNet& net, std::span<const double> features);
/// Column-per-sample batch forward.
Eigen::VectorXd forward_batch(const EstimatorNet& net, const Eigen::MatrixXd& inputs);

struct LossGradient {
  double mse = 0.0;
  Gradients gradients;
};

/// MSE over the batch and its gradient by backpropagation. `inputs` holds one
/// column per sample.
LossGradient loss_and_gradient(const EstimatorNet& net, const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets);
/// Same, on normalized features and normalized labels of the samples.
LossGradient loss_and_gradient(const EstimatorNet& net, std::span<const TrainingSample> batch);

struct AdamState {
  double alpha = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Gradients first_moment;
  Gradients second_moment;
  std::int64_t step = 0;

  static AdamState for_net(const EstimatorNet& net, double alpha = 0.05);
};

/// One bias-corrected Adam update, in place.
void adam_step(EstimatorNet& net, const Gradients& gradients, AdamState& state);

struct GeneratorConfig {
  ChannelParams channel;
  LinkBudget budget;
  int max_original = 6;
  double original_min_m = 150.0;
  double original_max_m = 1000.0;
  int max_hidden = 1;
  int max_exposed = 1;
  double near_min_m = 3.0;
  double near_max_m = 150.0;
  /// Never draw hidden or exposed transmitters.
  bool degenerate = false;
};

/// Linear-power terms of one generated sample, before the noise-floor clamp.
struct PowerTerms {
  double eps_o_mw = 0.0;
  double hidden_mw = 0.0;
  double exposed_mw = 0.0;
  double label_mw = 0.0;
};

/// Physics-based samples: original interferers far away, at most one hidden
/// and one exposed transmitter close by. The label adds the hidden power to
/// and removes the exposed power from the sensed RSSI, in mW.
std::vector<TrainingSample> generate_dataset(Rng& rng, std::size_t n, const GeneratorConfig& config,
                                             std::vector<PowerTerms>* terms = nullptr);

struct TrainConfig {
  std::size_t n_samples = 100000;
  std::size_t batch_size = 256;
  int epochs = 30;
  double holdout_fraction = 0.1;
  /// 0.05 collapses the ReLU stack to a constant on some data sets.
  double learning_rate = 0.005;
  GeneratorConfig generator;
  /// Permute labels across samples before splitting (no-signal baseline).
  bool shuffle_labels = false;
};

struct EpochReport {
  int epoch = 0;
  double train_mse_db2 = 0.0;
  double holdout_mse_db2 = 0.0;
};

struct TrainingReport {
  std::vector<EpochReport> epochs;
  double holdout_mse_db2 = 0.0;
  /// MSE of predicting the label by the sensed RSSI on the holdout.
  double baseline_mse_db2 = 0.0;
  double holdout_label_variance_db2 = 0.0;
  std::size_t train_size = 0;
  std::size_t holdout_size = 0;
  double learning_rate = 0.0;
};

struct TrainResult {
  EstimatorNet net;
  TrainingReport report;
};

TrainResult train(Rng& rng, const TrainConfig& config);
TrainResult train_on(Rng& rng, std::vector<TrainingSample> samples, const TrainConfig& config);

/// Mean squared error in dB^2 of the denormalized output against the labels.
double evaluate_mse_db2(const EstimatorNet& net, std::span<const TrainingSample> samples);

/// Versioned binary: "PRCW", u32 version, u32 n_dims, u32 dims[n], then per
/// layer the row-major weight followed by the bias, as little-endian f64.
void save_weights(const EstimatorNet& net, const std::filesystem::path& path);
EstimatorNet load_weights(const std::filesystem::path& path,
                          const std::vector<int>& expected_dims = kEstimatorLayerDims);

void write_dataset_csv(std::ostream& out, std::span<const TrainingSample> samples);
std::vector<TrainingSample> read_dataset_csv(std::istream& in);

/// Proactive RSSI estimate in dBm for a batch of cells.
class RssiEstimator {
 public:
  virtual ~RssiEstimator() = default;
  virtual void estimate(std::span<const ProactiveInput> inputs, std::span<double> out_dbm) const = 0;
};

class NeuralEstimator final : public RssiEstimator {
 public:
  explicit NeuralEstimator(EstimatorNet net) : net_(std::move(net)) {}
  void estimate(std::span<const ProactiveInput> inputs, std::span<double> out_dbm) const override;
  const EstimatorNet& net() const { return net_; }

 private:
  EstimatorNet net_;
};

/// Returns the sensed RSSI unchanged.
class IdentityEstimator final : public RssiEstimator {
 public:
  void estimate(std::span<const ProactiveInput> inputs, std::span<double> out_dbm) const override;
};

}  // namespace prcara
