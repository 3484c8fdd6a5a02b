#pragma once

// A small fully-connected network engine: enough to build, train, save and
// evaluate DeepONets G[u0](t, x) = sum_k b_k[u0] gamma_k(t, x).

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace forge {

enum class Activation : std::uint8_t { identity = 0, tanh = 1 };

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
  Activation activation = Activation::tanh;

  Eigen::Index inputs() const { return weight.cols(); }
  Eigen::Index outputs() const { return weight.rows(); }
};

/// Entries uniform on +-sqrt(6 / (fan_in + fan_out)).
Eigen::MatrixXd glorot_uniform(Eigen::Index fan_out, Eigen::Index fan_in, std::uint64_t seed);

class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(std::vector<DenseLayer> layers);

  /// Glorot-uniform weights, zero biases. `widths` lists input, hidden and
  /// output sizes; hidden layers use `hidden`, the last layer `output`.
  static Mlp glorot(const std::vector<Eigen::Index>& widths, Activation hidden, Activation output,
                    std::uint64_t seed);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }
  Eigen::Index inputs() const { return layers_.front().inputs(); }
  Eigen::Index outputs() const { return layers_.back().outputs(); }
  Eigen::Index parameter_count() const;

  /// One sample per column.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  /// Layer outputs (index 0 is the input) kept for backprop.
  struct Tape {
    std::vector<Eigen::MatrixXd> values;
  };
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape& tape) const;

  /// Accumulates parameter gradients into `grad` (flattened in the same order
  /// as flatten()) and returns the gradient with respect to the input.
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& grad_out,
                           Eigen::Ref<Eigen::VectorXd> grad) const;

  void flatten_into(Eigen::Ref<Eigen::VectorXd> out) const;
  void assign_from(const Eigen::Ref<const Eigen::VectorXd>& in);

 private:
  void validate() const;
  std::vector<DenseLayer> layers_;
};

struct DeepONetShape {
  Eigen::Index sensors = 128;
  Eigen::Index width = 128;
  int branch_depth = 2;
  int trunk_depth = 3;
};

/// Branch: sensors -> width (tanh hidden, identity output). Trunk: (t, x) ->
/// width with tanh on every layer, output included.
class DeepONet {
 public:
  DeepONet() = default;
  DeepONet(Mlp branch, Mlp trunk);

  static DeepONet glorot(const DeepONetShape& shape, std::uint64_t seed);

  const Mlp& branch() const { return branch_; }
  const Mlp& trunk() const { return trunk_; }
  Mlp& branch() { return branch_; }
  Mlp& trunk() { return trunk_; }
  Eigen::Index width() const { return branch_.outputs(); }
  Eigen::Index sensors() const { return branch_.inputs(); }

  /// Predictions for one initial condition at queries given as a 2 x Q
  /// matrix of (t, x) columns.
  Eigen::VectorXd forward(const Eigen::VectorXd& u0_sensors, const Eigen::MatrixXd& queries) const;

  /// Same, with the branch output supplied directly.
  Eigen::VectorXd combine(const Eigen::VectorXd& branch_out, const Eigen::MatrixXd& queries) const;

  /// Trunk functions gamma_k at the queries: width x Q.
  Eigen::MatrixXd trunk_values(const Eigen::MatrixXd& queries) const;

  Eigen::Index parameter_count() const;
  Eigen::VectorXd flatten() const;
  void assign(const Eigen::VectorXd& params);

 private:
  Mlp branch_;
  Mlp trunk_;
};

/// Branch inputs, (t, x) queries and targets. Each initial condition owns a
/// contiguous block of `queries_per_ic` queries.
struct TrainingSet {
  Eigen::MatrixXd branch_inputs;  // sensors x n_ic
  Eigen::MatrixXd queries;        // 2 x (n_ic * queries_per_ic)
  Eigen::VectorXd targets;        // n_ic * queries_per_ic
  Eigen::Index queries_per_ic = 0;

  Eigen::Index ic_count() const { return branch_inputs.cols(); }
  void validate() const;
};

/// Mean squared error over the listed initial conditions and, when `grad` is
/// non-null, its gradient with respect to flatten().
double mse_loss(const DeepONet& model, const TrainingSet& data, const std::vector<Eigen::Index>& ics,
                Eigen::VectorXd* grad);

/// MSE over the whole set.
double evaluate_mse(const DeepONet& model, const TrainingSet& data);

struct TrainConfig {
  int epochs = 2000;
  int batch_ics = 100;  // initial conditions per minibatch
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
};

struct TrainResult {
  DeepONet model;
  std::vector<double> loss_history;  // per-epoch mean training loss
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, int epoch) : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Adam on minibatches of initial conditions, reshuffled each epoch from
/// `config.seed`. Throws TrainingError on a non-finite loss.
TrainResult train(DeepONet model, const TrainingSet& data, const TrainConfig& config,
                  const std::function<void(int, double)>& on_epoch = {});

/// Model file: magic "FRGMODEL", u32 version, u64 width, u64 branch and trunk
/// layer counts, then per layer u64 rows, u64 cols, u8 activation, row-major
/// weights and the bias, and finally a length-prefixed metadata string.
/// Little-endian doubles.
void save_model(const DeepONet& model, std::ostream& out, const std::string& metadata = {});
DeepONet load_model(std::istream& in, std::string* metadata = nullptr);
void save_model(const DeepONet& model, const std::filesystem::path& path, const std::string& metadata = {});
DeepONet load_model(const std::filesystem::path& path, std::string* metadata = nullptr);

inline constexpr std::uint32_t kModelFormatVersion = 1;

}  // namespace forge
