#include "forge/operator_net.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <string>

#include "forge/binary_io.hpp"

namespace forge {

namespace {

void apply_activation(Eigen::MatrixXd& z, Activation a) {
  if (a == Activation::tanh) z = z.array().tanh();
}

}  // namespace

Eigen::MatrixXd glorot_uniform(Eigen::Index fan_out, Eigen::Index fan_in, std::uint64_t seed) {
  if (fan_out < 1 || fan_in < 1) throw std::invalid_argument("glorot_uniform: dimensions must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-limit, limit);
  Eigen::MatrixXd w(fan_out, fan_in);
  for (Eigen::Index j = 0; j < fan_in; ++j) {
    for (Eigen::Index i = 0; i < fan_out; ++i) w(i, j) = dist(rng);
  }
  return w;
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

void Mlp::validate() const {
  if (layers_.empty()) throw std::invalid_argument("Mlp: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.size() != layer.outputs()) throw std::invalid_argument("Mlp: bias size mismatch");
    if (l > 0 && layer.inputs() != layers_[l - 1].outputs()) {
      throw std::invalid_argument("Mlp: layer " + std::to_string(l) + " does not chain");
    }
  }
}

Mlp Mlp::glorot(const std::vector<Eigen::Index>& widths, Activation hidden, Activation output, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("Mlp::glorot: need input and output widths");
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    layer.weight = glorot_uniform(widths[l + 1], widths[l], seed + l);
    layer.bias = Eigen::VectorXd::Zero(widths[l + 1]);
    layer.activation = (l + 2 == widths.size()) ? output : hidden;
    layers.push_back(std::move(layer));
  }
  return Mlp(std::move(layers));
}

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  Eigen::MatrixXd a = x;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * a;
    z.colwise() += layer.bias;
    apply_activation(z, layer.activation);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x, Tape& tape) const {
  tape.values.clear();
  tape.values.push_back(x);
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * tape.values.back();
    z.colwise() += layer.bias;
    apply_activation(z, layer.activation);
    tape.values.push_back(std::move(z));
  }
  return tape.values.back();
}

Eigen::MatrixXd Mlp::backward(const Tape& tape, const Eigen::MatrixXd& grad_out,
                              Eigen::Ref<Eigen::VectorXd> grad) const {
  // Parameter offsets in flatten order.
  std::vector<Eigen::Index> offset(layers_.size());
  Eigen::Index pos = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offset[l] = pos;
    pos += layers_[l].weight.size() + layers_[l].bias.size();
  }

  Eigen::MatrixXd delta = grad_out;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    const Eigen::MatrixXd& out = tape.values[l + 1];
    if (layer.activation == Activation::tanh) delta.array() *= 1.0 - out.array().square();
    const Eigen::Index nw = layer.weight.size();
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + offset[l], layer.outputs(), layer.inputs());
    gw.noalias() += delta * tape.values[l].transpose();
    grad.segment(offset[l] + nw, layer.outputs()) += delta.rowwise().sum();
    delta = layer.weight.transpose() * delta;
  }
  return delta;
}

void Mlp::flatten_into(Eigen::Ref<Eigen::VectorXd> out) const {
  Eigen::Index pos = 0;
  for (const auto& l : layers_) {
    out.segment(pos, l.weight.size()) = Eigen::Map<const Eigen::VectorXd>(l.weight.data(), l.weight.size());
    pos += l.weight.size();
    out.segment(pos, l.bias.size()) = l.bias;
    pos += l.bias.size();
  }
}

void Mlp::assign_from(const Eigen::Ref<const Eigen::VectorXd>& in) {
  Eigen::Index pos = 0;
  for (auto& l : layers_) {
    Eigen::Map<Eigen::VectorXd>(l.weight.data(), l.weight.size()) = in.segment(pos, l.weight.size());
    pos += l.weight.size();
    l.bias = in.segment(pos, l.bias.size());
    pos += l.bias.size();
  }
}

DeepONet::DeepONet(Mlp branch, Mlp trunk) : branch_(std::move(branch)), trunk_(std::move(trunk)) {
  if (trunk_.inputs() != 2) throw std::invalid_argument("DeepONet: trunk takes (t, x)");
  if (branch_.outputs() != trunk_.outputs()) {
    throw std::invalid_argument("DeepONet: branch and trunk output widths differ");
  }
}

DeepONet DeepONet::glorot(const DeepONetShape& shape, std::uint64_t seed) {
  if (shape.branch_depth < 1 || shape.trunk_depth < 1) throw std::invalid_argument("DeepONet: depth must be >= 1");
  std::vector<Eigen::Index> bw{shape.sensors};
  for (int i = 0; i < shape.branch_depth; ++i) bw.push_back(shape.width);
  std::vector<Eigen::Index> tw{2};
  for (int i = 0; i < shape.trunk_depth; ++i) tw.push_back(shape.width);
  return DeepONet(Mlp::glorot(bw, Activation::tanh, Activation::identity, seed),
                  Mlp::glorot(tw, Activation::tanh, Activation::tanh, seed + 1000));
}

Eigen::VectorXd DeepONet::combine(const Eigen::VectorXd& branch_out, const Eigen::MatrixXd& queries) const {
  if (branch_out.size() != width()) throw std::invalid_argument("DeepONet::combine: branch width mismatch");
  return trunk_values(queries).transpose() * branch_out;
}

Eigen::VectorXd DeepONet::forward(const Eigen::VectorXd& u0_sensors, const Eigen::MatrixXd& queries) const {
  if (u0_sensors.size() != sensors()) {
    throw std::invalid_argument("DeepONet::forward: expected " + std::to_string(sensors()) + " sensor values, got " +
                                std::to_string(u0_sensors.size()));
  }
  return combine(branch_.forward(u0_sensors), queries);
}

Eigen::MatrixXd DeepONet::trunk_values(const Eigen::MatrixXd& queries) const {
  if (queries.rows() != 2) throw std::invalid_argument("DeepONet: queries must be 2 x Q");
  return trunk_.forward(queries);
}

Eigen::Index DeepONet::parameter_count() const { return branch_.parameter_count() + trunk_.parameter_count(); }

Eigen::VectorXd DeepONet::flatten() const {
  Eigen::VectorXd p(parameter_count());
  branch_.flatten_into(p.head(branch_.parameter_count()));
  trunk_.flatten_into(p.tail(trunk_.parameter_count()));
  return p;
}

void DeepONet::assign(const Eigen::VectorXd& params) {
  if (params.size() != parameter_count()) throw std::invalid_argument("DeepONet::assign: size mismatch");
  branch_.assign_from(params.head(branch_.parameter_count()));
  trunk_.assign_from(params.tail(trunk_.parameter_count()));
}

void TrainingSet::validate() const {
  if (ic_count() == 0 || queries_per_ic <= 0) throw std::invalid_argument("TrainingSet: empty");
  if (queries.rows() != 2 || queries.cols() != ic_count() * queries_per_ic ||
      targets.size() != queries.cols()) {
    throw std::invalid_argument("TrainingSet: sample counts are not aligned");
  }
}

double mse_loss(const DeepONet& model, const TrainingSet& data, const std::vector<Eigen::Index>& ics,
                Eigen::VectorXd* grad) {
  const Eigen::Index q = data.queries_per_ic;
  const auto n_ic = static_cast<Eigen::Index>(ics.size());
  const Eigen::Index n = n_ic * q;
  Eigen::MatrixXd xb(data.branch_inputs.rows(), n_ic);
  Eigen::MatrixXd xt(2, n);
  Eigen::VectorXd y(n);
  for (Eigen::Index s = 0; s < n_ic; ++s) {
    const Eigen::Index ic = ics[static_cast<std::size_t>(s)];
    xb.col(s) = data.branch_inputs.col(ic);
    xt.middleCols(s * q, q) = data.queries.middleCols(ic * q, q);
    y.segment(s * q, q) = data.targets.segment(ic * q, q);
  }

  Mlp::Tape btape;
  Mlp::Tape ttape;
  const Eigen::MatrixXd b = model.branch().forward(xb, btape);  // w x n_ic
  const Eigen::MatrixXd g = model.trunk().forward(xt, ttape);   // w x n
  Eigen::VectorXd resid(n);
  for (Eigen::Index s = 0; s < n_ic; ++s) {
    resid.segment(s * q, q) = g.middleCols(s * q, q).transpose() * b.col(s) - y.segment(s * q, q);
  }
  const double loss = resid.squaredNorm() / static_cast<double>(n);
  if (grad == nullptr) return loss;

  grad->setZero(model.parameter_count());
  const Eigen::VectorXd dpred = (2.0 / static_cast<double>(n)) * resid;
  Eigen::MatrixXd db(b.rows(), n_ic);
  Eigen::MatrixXd dg(g.rows(), n);
  for (Eigen::Index s = 0; s < n_ic; ++s) {
    db.col(s) = g.middleCols(s * q, q) * dpred.segment(s * q, q);
    dg.middleCols(s * q, q) = b.col(s) * dpred.segment(s * q, q).transpose();
  }
  const Eigen::Index nb = model.branch().parameter_count();
  model.branch().backward(btape, db, grad->head(nb));
  model.trunk().backward(ttape, dg, grad->tail(model.trunk().parameter_count()));
  return loss;
}

double evaluate_mse(const DeepONet& model, const TrainingSet& data) {
  data.validate();
  std::vector<Eigen::Index> all(static_cast<std::size_t>(data.ic_count()));
  std::iota(all.begin(), all.end(), Eigen::Index{0});
  return mse_loss(model, data, all, nullptr);
}

TrainResult train(DeepONet model, const TrainingSet& data, const TrainConfig& config,
                  const std::function<void(int, double)>& on_epoch) {
  data.validate();
  if (!(config.learning_rate >= 0.0)) throw std::invalid_argument("train: learning rate must be >= 0");
  if (config.batch_ics < 1) throw std::invalid_argument("train: batch size must be >= 1");
  if (data.branch_inputs.rows() != model.sensors()) throw std::invalid_argument("train: sensor count mismatch");

  Eigen::VectorXd params = model.flatten();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(params.size());
  Eigen::VectorXd grad;
  std::mt19937_64 rng(config.seed);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.ic_count()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  long step = 0;

  TrainResult result;
  result.loss_history.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_ics)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(config.batch_ics));
      const std::vector<Eigen::Index> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                            order.begin() + static_cast<std::ptrdiff_t>(stop));
      const double loss = mse_loss(model, data, batch, &grad);
      if (!std::isfinite(loss)) {
        throw TrainingError("train: non-finite loss at epoch " + std::to_string(epoch), epoch);
      }
      weighted += loss * static_cast<double>(stop - start);

      ++step;
      m = config.beta1 * m + (1.0 - config.beta1) * grad;
      v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
      params.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
      model.assign(params);
    }
    const double mean = weighted / static_cast<double>(order.size());
    result.loss_history.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  result.model = std::move(model);
  return result;
}

namespace {

constexpr std::string_view kModelMagic = "FRGMODEL";

void put_mlp(std::ostream& out, const Mlp& mlp) {
  for (const auto& l : mlp.layers()) {
    io::put<std::uint64_t>(out, static_cast<std::uint64_t>(l.outputs()));
    io::put<std::uint64_t>(out, static_cast<std::uint64_t>(l.inputs()));
    io::put<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
    io::put_matrix(out, l.weight);
    io::put_vector(out, l.bias);
  }
}

Mlp get_mlp(std::istream& in, std::uint64_t count, const char* which) {
  if (count == 0 || count > 1024) throw io::FormatError(std::string("model: bad ") + which + " layer count");
  std::vector<DenseLayer> layers;
  for (std::uint64_t l = 0; l < count; ++l) {
    DenseLayer layer;
    const auto rows = static_cast<Eigen::Index>(io::get_dim(in, "layer rows"));
    const auto cols = static_cast<Eigen::Index>(io::get_dim(in, "layer cols"));
    if (rows == 0 || cols == 0 || rows * cols > static_cast<Eigen::Index>(io::kMaxDim)) {
      throw io::FormatError("model: bad layer shape");
    }
    const auto tag = io::get<std::uint8_t>(in, "activation");
    if (tag > 1) throw io::FormatError("model: unknown activation tag " + std::to_string(tag));
    layer.activation = static_cast<Activation>(tag);
    layer.weight = io::get_matrix(in, rows, cols, "weights");
    layer.bias = io::get_vector(in, rows, "bias");
    layers.push_back(std::move(layer));
  }
  try {
    return Mlp(std::move(layers));
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(std::string("model: ") + e.what());
  }
}

}  // namespace

void save_model(const DeepONet& model, std::ostream& out, const std::string& metadata) {
  io::put_magic(out, kModelMagic);
  io::put<std::uint32_t>(out, kModelFormatVersion);
  io::put<std::uint64_t>(out, static_cast<std::uint64_t>(model.width()));
  io::put<std::uint64_t>(out, model.branch().layers().size());
  io::put<std::uint64_t>(out, model.trunk().layers().size());
  put_mlp(out, model.branch());
  put_mlp(out, model.trunk());
  io::put_string(out, metadata);
}

DeepONet load_model(std::istream& in, std::string* metadata) {
  io::expect_magic(in, kModelMagic, "model");
  const auto version = io::get<std::uint32_t>(in, "version");
  if (version != kModelFormatVersion) {
    throw io::FormatError("model: unsupported format version " + std::to_string(version));
  }
  const auto width = io::get_dim(in, "width");
  const auto nb = io::get_dim(in, "branch layer count");
  const auto nt = io::get_dim(in, "trunk layer count");
  Mlp branch = get_mlp(in, nb, "branch");
  Mlp trunk = get_mlp(in, nt, "trunk");
  std::string meta = io::get_string(in, "metadata");
  if (metadata != nullptr) *metadata = std::move(meta);
  if (static_cast<std::uint64_t>(branch.outputs()) != width || static_cast<std::uint64_t>(trunk.outputs()) != width) {
    throw io::FormatError("model: layer shapes disagree with the declared width");
  }
  try {
    return DeepONet(std::move(branch), std::move(trunk));
  } catch (const std::invalid_argument& e) {
    throw io::FormatError(std::string("model: ") + e.what());
  }
}

void save_model(const DeepONet& model, const std::filesystem::path& path, const std::string& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_model(model, out, metadata);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

DeepONet load_model(const std::filesystem::path& path, std::string* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return load_model(in, metadata);
}

}  // namespace forge
