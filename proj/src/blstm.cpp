#include "sylcount/blstm.hpp"

#include <string>

#include "sylcount/error.hpp"

namespace sylcount {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

void BlstmCountConfig::validate() const {
  if (input_dim < 1) throw UsageError("blstm_count: input_dim must be >= 1");
  if (cells_per_direction < 1) throw UsageError("blstm_count: cells_per_direction must be >= 1");
  if (n_bidirectional_layers < 1)
    throw UsageError("blstm_count: n_bidirectional_layers must be >= 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw UsageError("blstm_count: dropout_rate must lie in [0, 1)");
}

json BlstmCountConfig::to_json() const {
  return json{{"input_dim", input_dim},
              {"cells_per_direction", cells_per_direction},
              {"n_bidirectional_layers", n_bidirectional_layers},
              {"dropout_rate", dropout_rate}};
}

BlstmCountConfig BlstmCountConfig::from_json(const json& j) {
  BlstmCountConfig c;
  try {
    c.input_dim = j.at("input_dim").get<int>();
    c.cells_per_direction = j.at("cells_per_direction").get<int>();
    c.n_bidirectional_layers = j.at("n_bidirectional_layers").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed BLSTM-count configuration: ") + e.what());
  }
  c.validate();
  return c;
}

BlstmCount::BlstmCount(const BlstmCountConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const int h = config_.cells_per_direction;
  Rng rng(derive_seed(seed, "blstm_count/init"));
  auto add_lstm = [&](const std::string& prefix, int in) {
    LstmIndex idx{};
    idx.wx = params_.add(prefix + ".wx", in, 4 * h);
    idx.wh = params_.add(prefix + ".wh", h, 4 * h);
    idx.b = params_.add(prefix + ".bias", 1, 4 * h);
    init_uniform_fan_in(params_[idx.wx], in, rng);
    init_uniform_fan_in(params_[idx.wh], h, rng);
    return idx;
  };
  int in = config_.input_dim;
  for (int l = 0; l < config_.n_bidirectional_layers; ++l) {
    const std::string p = "blstm." + std::to_string(l);
    LstmIndex fwd = add_lstm(p + ".fwd", in);
    LstmIndex bwd = add_lstm(p + ".bwd", in);
    bi_layers_.emplace_back(fwd, bwd);
    in = 2 * h;
  }
  out_lstm_ = add_lstm("output.lstm", in);
  out_w_ = params_.add("output.weight", h, 1);
  out_b_ = params_.add("output.bias", 1, 1);
  init_uniform_fan_in(params_[out_w_], h, rng);
}

ParamPartition BlstmCount::partition() const {
  ParamPartition p;
  for (const auto& name : params_.names())
    (name.rfind("output.", 0) == 0 ? p.tunable : p.frozen).push_back(name);
  return p;
}

void BlstmCount::validate_input(const MatrixXd& features) const {
  if (features.cols() != config_.input_dim)
    throw DataError("blstm_count: feature width " + std::to_string(features.cols()) +
                    " does not match model input width " + std::to_string(config_.input_dim));
  if (features.rows() < 1) throw DataError("blstm_count: input has no frames");
}

MatrixXd BlstmCount::run_stack(const MatrixXd& features, nn::Dropout dropout,
                               std::vector<BiLayerCache>& caches) const {
  const int h = config_.cells_per_direction;
  MatrixXd x = features;
  caches.clear();
  for (std::size_t l = 0; l < bi_layers_.size(); ++l) {
    const auto& [f, b] = bi_layers_[l];
    BiLayerCache c;
    c.fwd = nn::lstm(x, params_[f.wx], params_[f.wh], params_[f.b], false);
    c.bwd = nn::lstm(x, params_[b.wx], params_[b.wh], params_[b.b], true);
    MatrixXd out(x.rows(), 2 * h);
    out.leftCols(h) = c.fwd.hidden;
    out.rightCols(h) = c.bwd.hidden;
    if (!out.allFinite())
      throw NumericError("non-finite activation in bidirectional layer " + std::to_string(l));
    c.mask = nn::apply_dropout(out, dropout);
    c.input = std::move(x);
    caches.push_back(std::move(c));
    x = std::move(out);
  }
  return x;
}

void BlstmCount::run_output(const MatrixXd& stack_out, nn::Dropout dropout,
                            OutputCache& cache) const {
  if (stack_out.cols() != 2 * config_.cells_per_direction)
    throw DataError("blstm_count: frozen encoding has wrong width");
  cache.lstm = nn::lstm(stack_out, params_[out_lstm_.wx], params_[out_lstm_.wh],
                        params_[out_lstm_.b], false);
  cache.hidden = cache.lstm.hidden;
  cache.mask = nn::apply_dropout(cache.hidden, dropout);
  cache.head_out = nn::affine(cache.hidden, params_[out_w_], params_[out_b_]);
  if (!cache.head_out.allFinite()) throw NumericError("non-finite activation in output layer");
}

ForwardTrace BlstmCount::forward(const MatrixXd& features, nn::Dropout dropout) const {
  validate_input(features);
  std::vector<BiLayerCache> caches;
  const MatrixXd stack_out = run_stack(features, dropout, caches);
  return forward_from_frozen({stack_out}, dropout);
}

FrozenEncoding BlstmCount::encode_frozen(const MatrixXd& features) const {
  validate_input(features);
  std::vector<BiLayerCache> caches;
  return {run_stack(features, {}, caches)};
}

ForwardTrace BlstmCount::forward_from_frozen(const FrozenEncoding& encoding,
                                             nn::Dropout dropout) const {
  if (encoding.size() != 1) throw DataError("blstm_count: frozen encoding must hold one matrix");
  OutputCache cache;
  run_output(encoding[0], dropout, cache);
  ForwardTrace trace;
  trace.per_frame_head = cache.head_out;
  trace.final_estimate = cache.head_out.row(cache.head_out.rows() - 1);
  return trace;
}

MatrixXd BlstmCount::backward_output(const MatrixXd& stack_out, const OutputCache& cache,
                                     const HeadGradient& head_grad, VectorXd& final_output,
                                     ParamSet& grads, bool want_dx) const {
  const Eigen::Index frames = cache.head_out.rows();
  const Eigen::Index last = frames - 1;
  final_output = cache.head_out.row(last).transpose();
  const VectorXd d_final = head_grad(final_output);
  if (d_final.size() != 1) throw UsageError("blstm_count: head gradient has wrong width");
  const Eigen::RowVectorXd d_out = d_final.transpose();
  grads[out_w_].noalias() += cache.hidden.row(last).transpose() * d_out;
  grads[out_b_].row(0) += d_out;
  MatrixXd d_hidden = MatrixXd::Zero(frames, config_.cells_per_direction);
  d_hidden.row(last) = d_out * params_[out_w_].transpose();
  nn::apply_mask(d_hidden, cache.mask);
  return nn::lstm_backward(stack_out, params_[out_lstm_.wx], params_[out_lstm_.wh], cache.lstm,
                           d_hidden, grads[out_lstm_.wx], grads[out_lstm_.wh],
                           grads[out_lstm_.b], want_dx);
}

VectorXd BlstmCount::forward_backward(const MatrixXd& features, nn::Dropout dropout,
                                      const HeadGradient& head_grad, ParamSet& grads) const {
  validate_input(features);
  const int h = config_.cells_per_direction;
  std::vector<BiLayerCache> caches;
  const MatrixXd stack_out = run_stack(features, dropout, caches);
  OutputCache out;
  run_output(stack_out, dropout, out);
  VectorXd final_output;
  MatrixXd d_x = backward_output(stack_out, out, head_grad, final_output, grads, true);
  for (int l = static_cast<int>(caches.size()) - 1; l >= 0; --l) {
    const auto& [f, b] = bi_layers_[l];
    const BiLayerCache& c = caches[l];
    nn::apply_mask(d_x, c.mask);
    const MatrixXd d_fwd = d_x.leftCols(h);
    const MatrixXd d_bwd = d_x.rightCols(h);
    const bool want_dx = l > 0;
    MatrixXd d_in = nn::lstm_backward(c.input, params_[f.wx], params_[f.wh], c.fwd, d_fwd,
                                      grads[f.wx], grads[f.wh], grads[f.b], want_dx);
    MatrixXd d_in_b = nn::lstm_backward(c.input, params_[b.wx], params_[b.wh], c.bwd, d_bwd,
                                        grads[b.wx], grads[b.wh], grads[b.b], want_dx);
    if (want_dx) d_x = d_in + d_in_b;
  }
  return final_output;
}

VectorXd BlstmCount::forward_backward_from_frozen(const FrozenEncoding& encoding,
                                                  nn::Dropout dropout,
                                                  const HeadGradient& head_grad,
                                                  ParamSet& grads) const {
  if (encoding.size() != 1) throw DataError("blstm_count: frozen encoding must hold one matrix");
  OutputCache out;
  run_output(encoding[0], dropout, out);
  VectorXd final_output;
  backward_output(encoding[0], out, head_grad, final_output, grads, false);
  return final_output;
}

}  // namespace sylcount
