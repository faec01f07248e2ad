#include "vlp/neural.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "vlp/error.hpp"
#include "vlp/random.hpp"

namespace vlp {

namespace {

constexpr int kGrid = 9;
constexpr char kMagic[8] = {'D', 'N', 'N', 'V', 'L', 'P', '0', '1'};

// kNeighbor[p][k]: input cell read by output cell p through kernel tap k, -1 for zero padding.
constexpr std::array<std::array<int, 9>, 9> make_neighbors() {
  std::array<std::array<int, 9>, 9> nb{};
  for (int p = 0; p < 9; ++p) {
    for (int k = 0; k < 9; ++k) {
      const int qy = p / 3 + k / 3 - 1;
      const int qx = p % 3 + k % 3 - 1;
      nb[p][k] = (qy >= 0 && qy < 3 && qx >= 0 && qx < 3) ? qy * 3 + qx : -1;
    }
  }
  return nb;
}
constexpr auto kNeighbor = make_neighbors();

std::string_view kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::concat: return "concat";
    case LayerKind::grid: return "grid";
    case LayerKind::flatten: return "flatten";
  }
  return "dense";
}

LayerKind parse_kind(std::string_view s) {
  for (LayerKind k : {LayerKind::dense, LayerKind::conv3x3, LayerKind::concat, LayerKind::grid, LayerKind::flatten}) {
    if (kind_name(k) == s) return k;
  }
  throw ParseError("unknown layer kind '" + std::string(s) + "'");
}

void append_dense_head(ModelSpec& spec, int from, const std::vector<int>& hidden) {
  for (int width : hidden) {
    spec.layers.push_back({LayerKind::dense, width, Activation::relu, {from}});
    from = static_cast<int>(spec.layers.size()) - 1;
  }
  spec.layers.push_back({LayerKind::dense, spec.output_dim, Activation::linear, {from}});
}

int last(const ModelSpec& spec) { return static_cast<int>(spec.layers.size()) - 1; }

void im2col(const Eigen::MatrixXd& in, Eigen::MatrixXd& cols) {
  const Eigen::Index c = in.rows();
  const Eigen::Index batch = in.cols() / kGrid;
  cols.resize(kGrid * c, in.cols());
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int p = 0; p < kGrid; ++p) {
      const Eigen::Index col = b * kGrid + p;
      for (int k = 0; k < kGrid; ++k) {
        const int q = kNeighbor[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)];
        if (q < 0) cols.block(k * c, col, c, 1).setZero();
        else cols.block(k * c, col, c, 1) = in.col(b * kGrid + q);
      }
    }
  }
}

void col2im_add(const Eigen::MatrixXd& dcols, Eigen::MatrixXd& din) {
  const Eigen::Index c = din.rows();
  const Eigen::Index batch = din.cols() / kGrid;
  for (Eigen::Index b = 0; b < batch; ++b) {
    for (int p = 0; p < kGrid; ++p) {
      for (int k = 0; k < kGrid; ++k) {
        const int q = kNeighbor[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)];
        if (q >= 0) din.col(b * kGrid + q) += dcols.block(k * c, b * kGrid + p, c, 1);
      }
    }
  }
}

// Activations and scratch buffers for one batch; reused across batches during training.
class Workspace {
 public:
  const Eigen::MatrixXd& forward(const ModelWeights& w, const Eigen::MatrixXd& x) {
    const auto& layers = w.spec.layers;
    if (layers.empty()) throw MisuseError("model has no layers");
    x_ = x;
    const std::size_t n = layers.size();
    out_.resize(n);
    pre_.resize(n);
    cols_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const LayerDesc& l = layers[i];
      switch (l.kind) {
        case LayerKind::grid: {
          const auto& in = input(l.inputs[0]);
          out_[i] = Eigen::Map<const Eigen::MatrixXd>(in.data(), 1, in.size());
          break;
        }
        case LayerKind::flatten: {
          const auto& in = input(l.inputs[0]);
          out_[i] = Eigen::Map<const Eigen::MatrixXd>(in.data(), in.rows() * kGrid, in.cols() / kGrid);
          break;
        }
        case LayerKind::concat: {
          Eigen::Index rows = 0;
          for (int src : l.inputs) rows += input(src).rows();
          out_[i].resize(rows, input(l.inputs[0]).cols());
          Eigen::Index r = 0;
          for (int src : l.inputs) {
            const auto& in = input(src);
            out_[i].middleRows(r, in.rows()) = in;
            r += in.rows();
          }
          break;
        }
        case LayerKind::dense:
        case LayerKind::conv3x3: {
          const Eigen::MatrixXd* src = &input(l.inputs[0]);
          if (l.kind == LayerKind::conv3x3) {
            im2col(*src, cols_[i]);
            src = &cols_[i];
          }
          pre_[i].noalias() = w.weight[i] * *src;
          pre_[i].colwise() += w.bias[i];
          if (l.activation == Activation::relu) out_[i] = pre_[i].cwiseMax(0.0);
          else out_[i] = pre_[i];
          break;
        }
      }
    }
    return out_.back();
  }

  void backward(const ModelWeights& w, const Eigen::MatrixXd& d_out, Gradients& g) {
    const auto& layers = w.spec.layers;
    const std::size_t n = layers.size();
    grad_.resize(n);
    for (std::size_t i = 0; i < n; ++i) grad_[i].setZero(out_[i].rows(), out_[i].cols());
    grad_.back() = d_out;
    g.weight.resize(n);
    g.bias.resize(n);

    for (std::size_t ii = n; ii-- > 0;) {
      const LayerDesc& l = layers[ii];
      Eigen::MatrixXd& d = grad_[ii];
      switch (l.kind) {
        case LayerKind::grid: {
          if (l.inputs[0] >= 0) {
            auto& din = grad_[static_cast<std::size_t>(l.inputs[0])];
            din += Eigen::Map<const Eigen::MatrixXd>(d.data(), din.rows(), din.cols());
          }
          break;
        }
        case LayerKind::flatten: {
          if (l.inputs[0] >= 0) {
            auto& din = grad_[static_cast<std::size_t>(l.inputs[0])];
            din += Eigen::Map<const Eigen::MatrixXd>(d.data(), din.rows(), din.cols());
          }
          break;
        }
        case LayerKind::concat: {
          Eigen::Index r = 0;
          for (int src : l.inputs) {
            const Eigen::Index rows = input(src).rows();
            if (src >= 0) grad_[static_cast<std::size_t>(src)] += d.middleRows(r, rows);
            r += rows;
          }
          break;
        }
        case LayerKind::dense:
        case LayerKind::conv3x3: {
          if (l.activation == Activation::relu) d = (pre_[ii].array() > 0.0).select(d, 0.0);
          const bool conv = l.kind == LayerKind::conv3x3;
          const Eigen::MatrixXd& src = conv ? cols_[ii] : input(l.inputs[0]);
          g.weight[ii].noalias() = d * src.transpose();
          g.bias[ii] = d.rowwise().sum();
          if (l.inputs[0] >= 0) {
            auto& din = grad_[static_cast<std::size_t>(l.inputs[0])];
            if (conv) {
              dcols_.noalias() = w.weight[ii].transpose() * d;
              col2im_add(dcols_, din);
            } else {
              din.noalias() += w.weight[ii].transpose() * d;
            }
          }
          break;
        }
      }
    }
  }

 private:
  const Eigen::MatrixXd& input(int idx) const { return idx < 0 ? x_ : out_[static_cast<std::size_t>(idx)]; }

  Eigen::MatrixXd x_;
  std::vector<Eigen::MatrixXd> out_, pre_, cols_, grad_;
  Eigen::MatrixXd dcols_;
};

double mae_and_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth, Eigen::MatrixXd& d_pred) {
  const Eigen::ArrayXXd diff = (pred - truth).array();
  const double scale = 1.0 / static_cast<double>(pred.size());
  d_pred = diff.sign().matrix() * scale;
  return diff.abs().sum() * scale;
}

// ---- little-endian binary helpers ----

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u(std::istream& in, int bytes) {
  unsigned char b[8] = {};
  if (!in.read(reinterpret_cast<char*>(b), bytes)) throw ParseError("weight file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

struct RawTensor {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> data;
};

void put_tensor(std::ostream& out, const RawTensor& t) {
  put_u32(out, static_cast<std::uint32_t>(t.name.size()));
  out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
  put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) put_u64(out, d);
  for (double v : t.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

RawTensor matrix_tensor(const std::string& name, const Eigen::MatrixXd& m, std::vector<std::uint64_t> shape) {
  RawTensor t{name, std::move(shape), {}};
  t.data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) t.data.push_back(m(r, c));
  }
  return t;
}

RawTensor vector_tensor(const std::string& name, const double* data, std::size_t n) {
  return {name, {n}, std::vector<double>(data, data + n)};
}

nlohmann::json train_config_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size}, {"epochs", c.epochs},
          {"beta1", c.beta1},                 {"beta2", c.beta2},           {"epsilon", c.epsilon},
          {"shuffle_seed", c.shuffle_seed},   {"loss", "mae"},              {"optimizer", "adam"}};
}

}  // namespace

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::mlp: return "mlp";
    case Architecture::cnn: return "cnn";
    case Architecture::unet: return "unet";
    case Architecture::dense: return "dense";
  }
  return "dense";
}

Architecture parse_architecture(std::string_view s) {
  for (Architecture a : {Architecture::mlp, Architecture::cnn, Architecture::unet, Architecture::dense}) {
    if (to_string(a) == s) return a;
  }
  throw ConfigError("unknown architecture '" + std::string(s) + "'");
}

ModelSpec ModelSpec::mlp(const std::vector<int>& hidden) {
  ModelSpec s = dense_stack(hidden);
  s.architecture = Architecture::mlp;
  return s;
}

ModelSpec ModelSpec::dense_stack(const std::vector<int>& hidden) {
  ModelSpec s;
  s.architecture = Architecture::dense;
  append_dense_head(s, -1, hidden);
  return s;
}

ModelSpec ModelSpec::cnn(const std::vector<int>& filters, const std::vector<int>& hidden) {
  ModelSpec s;
  s.architecture = Architecture::cnn;
  s.layers.push_back({LayerKind::grid, 0, Activation::linear, {-1}});
  for (int f : filters) s.layers.push_back({LayerKind::conv3x3, f, Activation::relu, {last(s)}});
  s.layers.push_back({LayerKind::flatten, 0, Activation::linear, {last(s)}});
  append_dense_head(s, last(s), hidden);
  return s;
}

ModelSpec ModelSpec::unet(const std::vector<int>& encoder, const std::vector<int>& decoder,
                          const std::vector<int>& hidden) {
  if (encoder.empty() || decoder.empty()) throw ConfigError("u-net needs at least one encoder and decoder stage");
  ModelSpec s;
  s.architecture = Architecture::unet;
  s.layers.push_back({LayerKind::grid, 0, Activation::linear, {-1}});
  std::vector<int> enc_out;
  for (int f : encoder) {
    s.layers.push_back({LayerKind::conv3x3, f, Activation::relu, {last(s)}});
    enc_out.push_back(last(s));
  }
  for (std::size_t i = 0; i < decoder.size(); ++i) {
    if (i > 0 && i < enc_out.size()) {
      const int skip = enc_out[enc_out.size() - 1 - i];
      s.layers.push_back({LayerKind::concat, 0, Activation::linear, {last(s), skip}});
    }
    s.layers.push_back({LayerKind::conv3x3, decoder[i], Activation::relu, {last(s)}});
  }
  s.layers.push_back({LayerKind::flatten, 0, Activation::linear, {last(s)}});
  append_dense_head(s, last(s), hidden);
  return s;
}

ModelSpec ModelSpec::for_architecture(Architecture a) {
  switch (a) {
    case Architecture::mlp: return mlp();
    case Architecture::cnn: return cnn();
    case Architecture::unet: return unet();
    case Architecture::dense: return dense_stack({64, 256});
  }
  return mlp();
}

std::vector<std::array<int, 2>> ModelSpec::shapes() const {
  std::vector<std::array<int, 2>> out;
  const auto shape_of = [&](int idx) -> std::array<int, 2> {
    if (idx < 0) return {input_dim, 1};
    if (idx >= static_cast<int>(out.size())) throw ConfigError("layer input refers to a later layer");
    return out[static_cast<std::size_t>(idx)];
  };
  for (const LayerDesc& l : layers) {
    if (l.inputs.empty()) throw ConfigError("layer without inputs");
    const auto in = shape_of(l.inputs[0]);
    const bool single = l.inputs.size() == 1;
    switch (l.kind) {
      case LayerKind::grid:
        if (!single || in[1] != 1 || in[0] != kGrid) throw ConfigError("grid reshape needs a 9-vector input");
        out.push_back({1, kGrid});
        break;
      case LayerKind::flatten:
        if (!single || in[1] != kGrid) throw ConfigError("flatten needs a grid input");
        out.push_back({in[0] * kGrid, 1});
        break;
      case LayerKind::concat: {
        int channels = 0;
        for (int src : l.inputs) {
          const auto s = shape_of(src);
          if (s[1] != kGrid) throw ConfigError("concat needs grid inputs");
          channels += s[0];
        }
        out.push_back({channels, kGrid});
        break;
      }
      case LayerKind::conv3x3:
        if (!single || in[1] != kGrid || l.units < 1) throw ConfigError("conv3x3 needs a grid input and filters >= 1");
        out.push_back({l.units, kGrid});
        break;
      case LayerKind::dense:
        if (!single || in[1] != 1 || l.units < 1) throw ConfigError("dense needs a vector input and units >= 1");
        out.push_back({l.units, 1});
        break;
    }
  }
  if (!out.empty() && (out.back()[0] != output_dim || out.back()[1] != 1)) {
    throw ConfigError("model output must be a vector of " + std::to_string(output_dim));
  }
  return out;
}

nlohmann::json ModelSpec::to_json() const {
  nlohmann::json ls = nlohmann::json::array();
  for (const auto& l : layers) {
    ls.push_back({{"kind", kind_name(l.kind)},
                  {"units", l.units},
                  {"activation", l.activation == Activation::relu ? "relu" : "linear"},
                  {"inputs", l.inputs}});
  }
  return {{"architecture", to_string(architecture)}, {"input_dim", input_dim}, {"output_dim", output_dim},
          {"layers", ls}};
}

ModelSpec ModelSpec::from_json(const nlohmann::json& j) {
  try {
    ModelSpec s;
    s.architecture = parse_architecture(j.at("architecture").get<std::string>());
    s.input_dim = j.at("input_dim").get<int>();
    s.output_dim = j.at("output_dim").get<int>();
    for (const auto& l : j.at("layers")) {
      LayerDesc d;
      d.kind = parse_kind(l.at("kind").get<std::string>());
      d.units = l.at("units").get<int>();
      d.activation = l.at("activation").get<std::string>() == "relu" ? Activation::relu : Activation::linear;
      d.inputs = l.at("inputs").get<std::vector<int>>();
      s.layers.push_back(d);
    }
    s.shapes();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed model descriptor: ") + e.what());
  } catch (const ConfigError& e) {
    throw ParseError(std::string("inconsistent model descriptor: ") + e.what());
  }
}

ModelWeights build_model(const ModelSpec& spec, std::uint64_t seed) {
  const auto shapes = spec.shapes();
  ModelWeights w;
  w.spec = spec;
  w.init_seed = seed;
  w.weight.resize(spec.layers.size());
  w.bias.resize(spec.layers.size());
  Rng rng(seed);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerDesc& l = spec.layers[i];
    if (l.kind != LayerKind::dense && l.kind != LayerKind::conv3x3) continue;
    const int idx = l.inputs[0];
    const int in_ch = idx < 0 ? spec.input_dim : shapes[static_cast<std::size_t>(idx)][0];
    const bool conv = l.kind == LayerKind::conv3x3;
    const int fan_in = conv ? kGrid * in_ch : in_ch;
    const int fan_out = conv ? kGrid * l.units : l.units;
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Eigen::MatrixXd m(l.units, fan_in);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = uniform(rng, -limit, limit);
    }
    w.weight[i] = std::move(m);
    w.bias[i] = Eigen::VectorXd::Zero(l.units);
  }
  return w;
}

std::size_t param_count(const ModelWeights& weights) {
  std::size_t n = 0;
  for (const auto& m : weights.weight) n += static_cast<std::size_t>(m.size());
  for (const auto& b : weights.bias) n += static_cast<std::size_t>(b.size());
  return n;
}

Eigen::MatrixXd forward_batch(const ModelWeights& weights, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != weights.spec.input_dim) throw MisuseError("input has the wrong number of features");
  Workspace ws;
  return ws.forward(weights, inputs);
}

std::array<double, 2> forward(const ModelWeights& weights, const DetectorVector& normalized) {
  Eigen::MatrixXd x(kDetectorCount, 1);
  for (int j = 0; j < kDetectorCount; ++j) {
    const double v = normalized[static_cast<std::size_t>(j)];
    if (!std::isfinite(v)) throw MisuseError("non-finite model input");
    x(j, 0) = v;
  }
  const Eigen::MatrixXd y = forward_batch(weights, x);
  return {y(0, 0), y(1, 0)};
}

double mae_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
  if (pred.rows() != truth.rows() || pred.cols() != truth.cols() || pred.size() == 0) {
    throw MisuseError("mae_loss needs equally shaped, non-empty inputs");
  }
  return (pred - truth).array().abs().sum() / static_cast<double>(pred.size());
}

double loss_and_gradient(const ModelWeights& weights, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                         Gradients& grads) {
  Workspace ws;
  const Eigen::MatrixXd& pred = ws.forward(weights, inputs);
  Eigen::MatrixXd d;
  const double loss = mae_and_grad(pred, targets, d);
  ws.backward(weights, d, grads);
  return loss;
}

TrainData make_train_data(const std::vector<const FingerprintRow*>& rows, const Normalization& norm) {
  TrainData d;
  d.inputs.resize(kDetectorCount, static_cast<Eigen::Index>(rows.size()));
  d.targets.resize(2, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto z = norm.apply(rows[i]->drss);
    const auto c = static_cast<Eigen::Index>(i);
    for (int j = 0; j < kDetectorCount; ++j) d.inputs(j, c) = z[static_cast<std::size_t>(j)];
    d.targets(0, c) = rows[i]->x;
    d.targets(1, c) = rows[i]->y;
  }
  return d;
}

ModelWeights train(const ModelSpec& spec, const TrainData& train_rows, const TrainData& val_rows,
                   const TrainConfig& config, std::uint64_t init_seed, const EpochCallback& on_epoch) {
  if (train_rows.size() == 0) throw MisuseError("training needs at least one row");
  if (config.batch_size < 1 || config.epochs < 0 || !(config.learning_rate > 0)) {
    throw ConfigError("invalid training configuration");
  }
  ModelWeights w = build_model(spec, init_seed);
  w.train_config = config;
  const std::size_t layers = spec.layers.size();
  std::vector<Eigen::ArrayXXd> m_w(layers), v_w(layers);
  std::vector<Eigen::ArrayXd> m_b(layers), v_b(layers);
  for (std::size_t i = 0; i < layers; ++i) {
    m_w[i] = v_w[i] = Eigen::ArrayXXd::Zero(w.weight[i].rows(), w.weight[i].cols());
    m_b[i] = v_b[i] = Eigen::ArrayXd::Zero(w.bias[i].size());
  }

  Rng rng(config.shuffle_seed);
  const std::size_t n = train_rows.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Workspace ws;
  Gradients g;
  Eigen::MatrixXd xb, yb, d;
  std::uint64_t step = 0;
  const double b1 = config.beta1, b2 = config.beta2;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double total = 0;
    int batch_index = 0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(config.batch_size), ++batch_index) {
      const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n - start);
      xb.resize(train_rows.inputs.rows(), static_cast<Eigen::Index>(bs));
      yb.resize(2, static_cast<Eigen::Index>(bs));
      for (std::size_t k = 0; k < bs; ++k) {
        xb.col(static_cast<Eigen::Index>(k)) = train_rows.inputs.col(static_cast<Eigen::Index>(order[start + k]));
        yb.col(static_cast<Eigen::Index>(k)) = train_rows.targets.col(static_cast<Eigen::Index>(order[start + k]));
      }
      const double loss = mae_and_grad(ws.forward(w, xb), yb, d);
      if (!std::isfinite(loss)) {
        throw RuntimeFailure("non-finite training loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                             std::to_string(batch_index + 1));
      }
      ws.backward(w, d, g);
      ++step;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
      const double lr = config.learning_rate;
      for (std::size_t i = 0; i < layers; ++i) {
        if (w.weight[i].size() == 0) continue;
        m_w[i] = b1 * m_w[i] + (1 - b1) * g.weight[i].array();
        v_w[i] = b2 * v_w[i] + (1 - b2) * g.weight[i].array().square();
        w.weight[i].array() -= lr * (m_w[i] / c1) / ((v_w[i] / c2).sqrt() + config.epsilon);
        m_b[i] = b1 * m_b[i] + (1 - b1) * g.bias[i].array();
        v_b[i] = b2 * v_b[i] + (1 - b2) * g.bias[i].array().square();
        w.bias[i].array() -= lr * (m_b[i] / c1) / ((v_b[i] / c2).sqrt() + config.epsilon);
      }
      total += loss * static_cast<double>(bs);
    }
    const double train_mae = total / static_cast<double>(n);
    const double val_mae = val_rows.size() > 0 ? mae_loss(ws.forward(w, val_rows.inputs), val_rows.targets)
                                               : std::numeric_limits<double>::quiet_NaN();
    w.train_mae.push_back(train_mae);
    w.val_mae.push_back(val_mae);
    if (on_epoch) on_epoch(epoch + 1, train_mae, val_mae);
  }
  return w;
}

void write_weights(const std::filesystem::path& path, const ModelWeights& w) {
  const auto shapes = w.spec.shapes();
  nlohmann::json desc{{"format_version", 1},
                      {"spec", w.spec.to_json()},
                      {"init_seed", w.init_seed},
                      {"param_count", param_count(w)},
                      {"epochs_trained", w.train_mae.size()},
                      {"manifest", w.manifest}};
  if (w.train_config) desc["train_config"] = train_config_json(*w.train_config);

  std::vector<RawTensor> tensors;
  for (std::size_t i = 0; i < w.spec.layers.size(); ++i) {
    const LayerDesc& l = w.spec.layers[i];
    if (l.kind != LayerKind::dense && l.kind != LayerKind::conv3x3) continue;
    const std::string name = "layer" + std::to_string(i);
    std::vector<std::uint64_t> shape;
    if (l.kind == LayerKind::conv3x3) {
      shape = {static_cast<std::uint64_t>(l.units), 3, 3, static_cast<std::uint64_t>(w.weight[i].cols() / kGrid)};
    } else {
      shape = {static_cast<std::uint64_t>(w.weight[i].rows()), static_cast<std::uint64_t>(w.weight[i].cols())};
    }
    tensors.push_back(matrix_tensor(name + ".weight", w.weight[i], shape));
    tensors.push_back(vector_tensor(name + ".bias", w.bias[i].data(), static_cast<std::size_t>(w.bias[i].size())));
  }
  if (w.norm) {
    tensors.push_back(vector_tensor("norm.mean", w.norm->mean.data(), w.norm->mean.size()));
    tensors.push_back(vector_tensor("norm.std", w.norm->std.data(), w.norm->std.size()));
  }
  tensors.push_back(vector_tensor("history.train_mae", w.train_mae.data(), w.train_mae.size()));
  tensors.push_back(vector_tensor("history.val_mae", w.val_mae.data(), w.val_mae.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write weight file '" + path.string() + "'");
  out.write(kMagic, sizeof kMagic);
  const std::string text = desc.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) put_tensor(out, t);
  if (!out) throw RuntimeFailure("failed writing weight file '" + path.string() + "'");
}

ModelWeights read_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open weight file '" + path.string() + "'");
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError("'" + path.string() + "' is not a DNNVLP01 weight file");
  }
  const auto desc_len = get_u(in, 4);
  std::string text(desc_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(desc_len))) throw ParseError("weight file truncated");
  nlohmann::json desc;
  try {
    desc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("weight descriptor is not valid JSON: ") + e.what());
  }
  ModelWeights w;
  w.spec = ModelSpec::from_json(desc.at("spec"));
  w.init_seed = desc.value("init_seed", std::uint64_t{0});
  w.manifest = desc.value("manifest", std::string{});
  if (desc.contains("train_config")) {
    const auto& c = desc["train_config"];
    TrainConfig tc;
    tc.learning_rate = c.at("learning_rate").get<double>();
    tc.batch_size = c.at("batch_size").get<int>();
    tc.epochs = c.at("epochs").get<int>();
    tc.beta1 = c.at("beta1").get<double>();
    tc.beta2 = c.at("beta2").get<double>();
    tc.epsilon = c.at("epsilon").get<double>();
    tc.shuffle_seed = c.at("shuffle_seed").get<std::uint64_t>();
    w.train_config = tc;
  }

  ModelWeights shaped = build_model(w.spec, 0);
  w.weight = std::move(shaped.weight);
  w.bias = std::move(shaped.bias);
  std::optional<DetectorVector> mean, sd;
  const auto count = get_u(in, 4);
  for (std::uint64_t t = 0; t < count; ++t) {
    RawTensor raw;
    raw.name.resize(get_u(in, 4));
    if (!in.read(raw.name.data(), static_cast<std::streamsize>(raw.name.size()))) throw ParseError("weight file truncated");
    const auto rank = get_u(in, 4);
    std::uint64_t total = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      raw.shape.push_back(get_u(in, 8));
      total *= raw.shape.back();
    }
    if (total > (1ULL << 32)) throw ParseError("implausible tensor size in weight file");
    raw.data.resize(total);
    for (auto& v : raw.data) v = std::bit_cast<double>(get_u(in, 8));

    const auto fits = [&](Eigen::Index n) {
      if (static_cast<std::uint64_t>(n) != total) throw ParseError("tensor '" + raw.name + "' has the wrong size");
    };
    if (raw.name.rfind("layer", 0) == 0) {
      const auto dot = raw.name.find('.');
      const std::size_t idx = std::stoul(raw.name.substr(5, dot - 5));
      if (idx >= w.weight.size()) throw ParseError("tensor '" + raw.name + "' refers to a missing layer");
      if (raw.name.substr(dot + 1) == "weight") {
        auto& m = w.weight[idx];
        fits(m.size());
        std::size_t k = 0;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
          for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = raw.data[k++];
        }
      } else {
        fits(w.bias[idx].size());
        for (Eigen::Index r = 0; r < w.bias[idx].size(); ++r) w.bias[idx][r] = raw.data[static_cast<std::size_t>(r)];
      }
    } else if (raw.name == "norm.mean" || raw.name == "norm.std") {
      fits(kDetectorCount);
      DetectorVector v{};
      std::copy(raw.data.begin(), raw.data.end(), v.begin());
      (raw.name == "norm.mean" ? mean : sd) = v;
    } else if (raw.name == "history.train_mae") {
      w.train_mae = raw.data;
    } else if (raw.name == "history.val_mae") {
      w.val_mae = raw.data;
    }
  }
  if (mean && sd) w.norm = Normalization{*mean, *sd};
  return w;
}

}  // namespace vlp
