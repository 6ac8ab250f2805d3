#include "sylcount/sylnet.hpp"

#include <cmath>
#include <string>

#include "sylcount/error.hpp"

namespace sylcount {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

void SylNetConfig::validate() const {
  if (input_dim < 1) throw UsageError("sylnet: input_dim must be >= 1");
  if (n_layers < 1) throw UsageError("sylnet: n_layers must be >= 1");
  if (n_channels < 1) throw UsageError("sylnet: n_channels must be >= 1");
  if (kernel_len < 1 || kernel_len % 2 == 0) throw UsageError("sylnet: kernel_len must be odd");
  if (accumulator_width < 1) throw UsageError("sylnet: accumulator_width must be >= 1");
  if (head == HeadKind::kOrdinal && rank < 2) throw UsageError("sylnet: ordinal head needs rank >= 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw UsageError("sylnet: dropout_rate must lie in [0, 1)");
  if (!dilations.empty()) {
    if (static_cast<int>(dilations.size()) != n_layers)
      throw UsageError("sylnet: dilations must list one entry per layer");
    for (int d : dilations)
      if (d < 1) throw UsageError("sylnet: dilations must be >= 1");
  }
}

json SylNetConfig::to_json() const {
  return json{{"input_dim", input_dim},         {"n_layers", n_layers},
              {"n_channels", n_channels},       {"kernel_len", kernel_len},
              {"accumulator_width", accumulator_width},
              {"head", to_string(head)},        {"rank", rank},
              {"dropout_rate", dropout_rate},   {"dilations", dilations}};
}

SylNetConfig SylNetConfig::from_json(const json& j) {
  SylNetConfig c;
  try {
    c.input_dim = j.at("input_dim").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_channels = j.at("n_channels").get<int>();
    c.kernel_len = j.at("kernel_len").get<int>();
    c.accumulator_width = j.at("accumulator_width").get<int>();
    c.head = head_from_string(j.at("head").get<std::string>());
    c.rank = j.at("rank").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.dilations = j.value("dilations", std::vector<int>{});
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed SylNet configuration: ") + e.what());
  }
  c.validate();
  return c;
}

int receptive_field(const SylNetConfig& config) {
  config.validate();
  int span = 1 + 1;  // input convolution and PostNet convolution
  for (int l = 0; l < config.n_layers; ++l) span += config.dilation(l);
  return 1 + span * (config.kernel_len - 1);
}

struct SylNet::StackCache {
  nn::GatedConvCache input;
  std::vector<MatrixXd> layer_inputs;  // a_{l-1}
  std::vector<nn::GatedConvCache> gated;
};

struct SylNet::PostNetCache {
  MatrixXd skip_sum;
  MatrixXd conv_out;  // pre-ReLU
  MatrixXd relu;      // after ReLU and dropout
  MatrixXd relu_mask;
  nn::LstmCache lstm;
  MatrixXd hidden;    // after dropout
  MatrixXd hidden_mask;
  MatrixXd head_out;  // T x head_width (sigmoid applied for ordinal)
};

SylNet::SylNet(const SylNetConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int d = config_.input_dim, k = config_.n_channels, w = config_.kernel_len;
  const int a = config_.accumulator_width, out = config_.head_width();

  input_.filter_w = params_.add("input.filter.weight", w * d, k);
  input_.filter_b = params_.add("input.filter.bias", 1, k);
  input_.gate_w = params_.add("input.gate.weight", w * d, k);
  input_.gate_b = params_.add("input.gate.bias", 1, k);
  for (int l = 0; l < config_.n_layers; ++l) {
    const std::string p = "layer." + std::to_string(l) + ".";
    LayerIndex idx{};
    idx.filter_w = params_.add(p + "filter.weight", w * k, k);
    idx.filter_b = params_.add(p + "filter.bias", 1, k);
    idx.gate_w = params_.add(p + "gate.weight", w * k, k);
    idx.gate_b = params_.add(p + "gate.bias", 1, k);
    idx.residual_w = params_.add(p + "residual.weight", k, k);
    idx.residual_b = params_.add(p + "residual.bias", 1, k);
    idx.skip_w = params_.add(p + "skip.weight", k, k);
    idx.skip_b = params_.add(p + "skip.bias", 1, k);
    layers_.push_back(idx);
  }
  post_conv_w_ = params_.add("postnet.conv.weight", w * k, k);
  post_conv_b_ = params_.add("postnet.conv.bias", 1, k);
  lstm_wx_ = params_.add("postnet.lstm.wx", k, 4 * a);
  lstm_wh_ = params_.add("postnet.lstm.wh", a, 4 * a);
  lstm_b_ = params_.add("postnet.lstm.bias", 1, 4 * a);
  head_w_ = params_.add("head.weight", a, out);
  head_b_ = params_.add("head.bias", 1, out);

  Rng rng(derive_seed(seed, "sylnet/init"));
  init_uniform_fan_in(params_[input_.filter_w], w * d, rng);
  init_uniform_fan_in(params_[input_.gate_w], w * d, rng);
  for (const auto& idx : layers_) {
    init_uniform_fan_in(params_[idx.filter_w], w * k, rng);
    init_uniform_fan_in(params_[idx.gate_w], w * k, rng);
    init_uniform_fan_in(params_[idx.residual_w], k, rng);
    init_uniform_fan_in(params_[idx.skip_w], k, rng);
  }
  init_uniform_fan_in(params_[post_conv_w_], w * k, rng);
  init_uniform_fan_in(params_[lstm_wx_], k, rng);
  init_uniform_fan_in(params_[lstm_wh_], a, rng);
  init_uniform_fan_in(params_[head_w_], a, rng);
}

ParamPartition SylNet::partition() const {
  ParamPartition p;
  for (const auto& name : params_.names()) {
    const bool postnet = name.rfind("postnet.", 0) == 0 || name.rfind("head.", 0) == 0 ||
                         name.find(".skip.") != std::string::npos;
    (postnet ? p.tunable : p.frozen).push_back(name);
  }
  return p;
}

nn::GatedConvWeights SylNet::gated_weights(const LayerIndex& idx, int dilation) const {
  return {params_[idx.filter_w], params_[idx.filter_b], params_[idx.gate_w],
          params_[idx.gate_b],   config_.kernel_len,    dilation};
}

nn::GatedConvGrads SylNet::gated_grads(const LayerIndex& idx, ParamSet& grads) {
  return {grads[idx.filter_w], grads[idx.filter_b], grads[idx.gate_w], grads[idx.gate_b]};
}

void SylNet::validate_input(const MatrixXd& features) const {
  if (features.cols() != config_.input_dim)
    throw DataError("sylnet: feature width " + std::to_string(features.cols()) +
                    " does not match model input width " + std::to_string(config_.input_dim));
  if (features.rows() < 1) throw DataError("sylnet: input has no frames");
}

namespace {

void check_finite(const MatrixXd& m, const std::string& where) {
  if (!m.allFinite()) throw NumericError("non-finite activation in " + where);
}

}  // namespace

void SylNet::run_stack(const MatrixXd& features, nn::Dropout dropout, StackCache& cache) const {
  cache.input = nn::gated_conv(features, gated_weights(input_, 1), dropout);
  check_finite(cache.input.output, "input gated convolution");
  MatrixXd a = cache.input.output;
  cache.layer_inputs.clear();
  cache.gated.clear();
  for (int l = 0; l < config_.n_layers; ++l) {
    const LayerIndex& idx = layers_[l];
    cache.gated.push_back(nn::gated_conv(a, gated_weights(idx, config_.dilation(l)), dropout));
    const MatrixXd& z = cache.gated.back().output;
    check_finite(z, "layer " + std::to_string(l));
    cache.layer_inputs.push_back(std::move(a));
    if (l + 1 < config_.n_layers)
      a = cache.layer_inputs.back() + nn::affine(z, params_[idx.residual_w], params_[idx.residual_b]);
  }
}

void SylNet::run_postnet(const FrozenEncoding& skips_in, nn::Dropout dropout,
                         PostNetCache& cache) const {
  if (static_cast<int>(skips_in.size()) != config_.n_layers)
    throw DataError("sylnet: frozen encoding has wrong layer count");
  const Eigen::Index frames = skips_in.front().rows();
  cache.skip_sum = MatrixXd::Zero(frames, config_.n_channels);
  for (int l = 0; l < config_.n_layers; ++l) {
    if (skips_in[l].rows() != frames || skips_in[l].cols() != config_.n_channels)
      throw DataError("sylnet: frozen encoding has wrong shape");
    cache.skip_sum.noalias() += skips_in[l] * params_[layers_[l].skip_w];
    cache.skip_sum.rowwise() += params_[layers_[l].skip_b].row(0);
  }
  cache.conv_out = nn::conv1d(cache.skip_sum, params_[post_conv_w_], params_[post_conv_b_],
                              config_.kernel_len, 1);
  check_finite(cache.conv_out, "PostNet convolution");
  cache.relu = cache.conv_out.cwiseMax(0.0);
  cache.relu_mask = nn::apply_dropout(cache.relu, dropout);
  cache.lstm = nn::lstm(cache.relu, params_[lstm_wx_], params_[lstm_wh_], params_[lstm_b_], false);
  check_finite(cache.lstm.hidden, "PostNet LSTM");
  cache.hidden = cache.lstm.hidden;
  cache.hidden_mask = nn::apply_dropout(cache.hidden, dropout);
  cache.head_out = nn::affine(cache.hidden, params_[head_w_], params_[head_b_]);
  if (config_.head == HeadKind::kOrdinal)
    cache.head_out = cache.head_out.unaryExpr([](double v) { return nn::sigmoid(v); });
  check_finite(cache.head_out, "head");
}

ForwardTrace SylNet::trace_from(const PostNetCache& cache) const {
  ForwardTrace trace;
  trace.per_frame_head = cache.head_out;
  trace.final_estimate = cache.head_out.row(cache.head_out.rows() - 1);
  return trace;
}

ForwardTrace SylNet::forward(const MatrixXd& features, nn::Dropout dropout) const {
  validate_input(features);
  StackCache stack;
  run_stack(features, dropout, stack);
  FrozenEncoding skips;
  skips.reserve(stack.gated.size());
  for (auto& g : stack.gated) skips.push_back(std::move(g.output));
  PostNetCache post;
  run_postnet(skips, dropout, post);
  return trace_from(post);
}

FrozenEncoding SylNet::encode_frozen(const MatrixXd& features) const {
  validate_input(features);
  StackCache stack;
  run_stack(features, {}, stack);
  FrozenEncoding skips;
  for (auto& g : stack.gated) skips.push_back(std::move(g.output));
  return skips;
}

ForwardTrace SylNet::forward_from_frozen(const FrozenEncoding& encoding, nn::Dropout dropout) const {
  PostNetCache post;
  run_postnet(encoding, dropout, post);
  return trace_from(post);
}

MatrixXd SylNet::pre_accumulator(const MatrixXd& features) const {
  const FrozenEncoding skips = encode_frozen(features);
  PostNetCache post;
  run_postnet(skips, {}, post);
  return post.relu;
}

std::vector<MatrixXd> SylNet::backward_postnet(const FrozenEncoding& skips_in,
                                               const PostNetCache& cache,
                                               const HeadGradient& head_grad,
                                               VectorXd& final_output, ParamSet& grads) const {
  const Eigen::Index frames = cache.head_out.rows();
  const Eigen::Index last = frames - 1;
  final_output = cache.head_out.row(last).transpose();
  const VectorXd d_final = head_grad(final_output);
  if (d_final.size() != config_.head_width())
    throw UsageError("sylnet: head gradient has wrong width");

  // Only the last frame enters the loss.
  Eigen::RowVectorXd d_pre = d_final.transpose();
  if (config_.head == HeadKind::kOrdinal)
    d_pre = d_pre.cwiseProduct(
        (final_output.array() * (1.0 - final_output.array())).matrix().transpose());
  grads[head_w_].noalias() += cache.hidden.row(last).transpose() * d_pre;
  grads[head_b_].row(0) += d_pre;
  MatrixXd d_hidden = MatrixXd::Zero(frames, config_.accumulator_width);
  d_hidden.row(last) = d_pre * params_[head_w_].transpose();
  nn::apply_mask(d_hidden, cache.hidden_mask);

  MatrixXd d_relu = nn::lstm_backward(cache.relu, params_[lstm_wx_], params_[lstm_wh_], cache.lstm,
                                      d_hidden, grads[lstm_wx_], grads[lstm_wh_], grads[lstm_b_],
                                      true);
  nn::apply_mask(d_relu, cache.relu_mask);
  const MatrixXd d_conv = (cache.conv_out.array() > 0.0).select(d_relu, 0.0);
  const MatrixXd d_sum = nn::conv1d_backward(cache.skip_sum, params_[post_conv_w_],
                                             config_.kernel_len, 1, d_conv, grads[post_conv_w_],
                                             grads[post_conv_b_], true);
  std::vector<MatrixXd> d_skips;
  d_skips.reserve(skips_in.size());
  for (int l = 0; l < config_.n_layers; ++l) {
    const LayerIndex& idx = layers_[l];
    d_skips.push_back(
        nn::affine_backward(skips_in[l], params_[idx.skip_w], d_sum, grads[idx.skip_w], grads[idx.skip_b]));
  }
  return d_skips;
}

VectorXd SylNet::forward_backward(const MatrixXd& features, nn::Dropout dropout,
                                  const HeadGradient& head_grad, ParamSet& grads) const {
  validate_input(features);
  StackCache stack;
  run_stack(features, dropout, stack);
  FrozenEncoding skips;
  skips.reserve(stack.gated.size());
  for (const auto& g : stack.gated) skips.push_back(g.output);
  PostNetCache post;
  run_postnet(skips, dropout, post);

  VectorXd final_output;
  std::vector<MatrixXd> d_skips = backward_postnet(skips, post, head_grad, final_output, grads);

  MatrixXd d_a;  // gradient w.r.t. the current layer's residual output
  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const LayerIndex& idx = layers_[l];
    MatrixXd d_z = std::move(d_skips[l]);
    if (d_a.size() != 0)
      d_z += nn::affine_backward(skips[l], params_[idx.residual_w], d_a, grads[idx.residual_w],
                                 grads[idx.residual_b]);
    MatrixXd d_in = nn::gated_conv_backward(stack.layer_inputs[l],
                                            gated_weights(idx, config_.dilation(l)),
                                            stack.gated[l], d_z, gated_grads(idx, grads), true);
    if (d_a.size() != 0) d_in += d_a;
    d_a = std::move(d_in);
  }
  nn::gated_conv_backward(features, gated_weights(input_, 1), stack.input, d_a,
                          gated_grads(input_, grads), false);
  return final_output;
}

VectorXd SylNet::forward_backward_from_frozen(const FrozenEncoding& encoding, nn::Dropout dropout,
                                              const HeadGradient& head_grad,
                                              ParamSet& grads) const {
  PostNetCache post;
  run_postnet(encoding, dropout, post);
  VectorXd final_output;
  backward_postnet(encoding, post, head_grad, final_output, grads);
  return final_output;
}

}  // namespace sylcount
