#include "exactk/gattn/model.hpp"

#include <algorithm>
#include <cmath>

#include "exactk/errors.hpp"
#include "exactk/kv.hpp"
#include "exactk/numcore/ops.hpp"

namespace exactk::gattn {

namespace nc = numcore;
using numcore::Init;

void ModelConfig::validate() const {
  const std::size_t dims[] = {d_x, d_h, d_k, heads, layers, k, n, beam_size, rnn_units, features.item_dim, features.user_dim};
  for (auto d : dims) {
    if (d == 0) throw ConfigError("model config: all sizes must be positive");
  }
  if (k > n) throw ConfigError("model config: K must not exceed N");
}

bool ModelConfig::apply(const std::string& key, const std::string& value) {
  if (key == "d_x") d_x = kv::to_size(key, value);
  else if (key == "d_h") d_h = kv::to_size(key, value);
  else if (key == "d_k") d_k = kv::to_size(key, value);
  else if (key == "heads") heads = kv::to_size(key, value);
  else if (key == "layers") layers = kv::to_size(key, value);
  else if (key == "k") k = kv::to_size(key, value);
  else if (key == "n") n = kv::to_size(key, value);
  else if (key == "beam_size") beam_size = kv::to_size(key, value);
  else if (key == "rnn_units") rnn_units = kv::to_size(key, value);
  else if (key == "feature_mode") features.mode = dataio::parse_feature_mode(value);
  else if (key == "item_dim") features.item_dim = kv::to_size(key, value);
  else if (key == "user_dim") features.user_dim = kv::to_size(key, value);
  else if (key == "item_vocab") features.item_vocab = kv::to_size(key, value);
  else if (key == "user_vocab") features.user_vocab = kv::to_size(key, value);
  else return false;
  return true;
}

std::vector<std::pair<std::string, std::string>> ModelConfig::entries() const {
  return {{"d_x", kv::format(d_x)},
          {"d_h", kv::format(d_h)},
          {"d_k", kv::format(d_k)},
          {"heads", kv::format(heads)},
          {"layers", kv::format(layers)},
          {"k", kv::format(k)},
          {"n", kv::format(n)},
          {"beam_size", kv::format(beam_size)},
          {"rnn_units", kv::format(rnn_units)},
          {"feature_mode", dataio::feature_mode_name(features.mode)},
          {"item_dim", kv::format(features.item_dim)},
          {"user_dim", kv::format(features.user_dim)},
          {"item_vocab", kv::format(features.item_vocab)},
          {"user_vocab", kv::format(features.user_vocab)}};
}

bool DecodeState::has_feasible() const { return std::find(masked.begin(), masked.end(), false) != masked.end(); }

PolicyModel::PolicyModel(ModelConfig config, nc::Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  features_ = dataio::FeatureEncoder(c.features, params_, "input.", rng);
  w_in_ = params_.add("input.W_I", {c.features.item_dim + c.features.user_dim, c.d_x}, Init::glorot_uniform, rng);
  b_in_ = params_.add("input.b_I", {c.d_x}, Init::zeros, rng);
  w_emb_ = params_.add("encoder.W_E", {c.d_x, c.d_h}, Init::glorot_uniform, rng);
  b_emb_ = params_.add("encoder.b_E", {c.d_h}, Init::zeros, rng);
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "encoder.layer" + std::to_string(l) + ".";
    EncoderLayer layer;
    for (std::size_t h = 0; h < c.heads; ++h) {
      layer.head_proj.push_back(params_.add(p + "W_h" + std::to_string(h), {c.d_h, c.d_k}, Init::glorot_uniform, rng));
    }
    layer.out_proj = params_.add(p + "W_O", {c.heads * c.d_k, c.d_h}, Init::glorot_uniform, rng);
    layer.ln1_gain = params_.add(p + "ln1.gain", {c.d_h}, Init::ones, rng);
    layer.ln1_bias = params_.add(p + "ln1.bias", {c.d_h}, Init::zeros, rng);
    layer.ff1_w = params_.add(p + "W_F1", {c.d_h, c.d_h}, Init::glorot_uniform, rng);
    layer.ff1_b = params_.add(p + "b_F1", {c.d_h}, Init::zeros, rng);
    layer.ff2_w = params_.add(p + "W_F2", {c.d_h, c.d_h}, Init::glorot_uniform, rng);
    layer.ff2_b = params_.add(p + "b_F2", {c.d_h}, Init::zeros, rng);
    layer.ln2_gain = params_.add(p + "ln2.gain", {c.d_h}, Init::ones, rng);
    layer.ln2_bias = params_.add(p + "ln2.bias", {c.d_h}, Init::zeros, rng);
    encoder_.push_back(std::move(layer));
  }
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::string p = "decoder.cell" + std::to_string(l) + ".";
    const std::size_t in = (l == 0 ? c.d_h : c.rnn_units) + c.rnn_units;
    CellLayer cell;
    cell.w_i = params_.add(p + "W_i", {in, c.rnn_units}, Init::glorot_uniform, rng);
    cell.w_f = params_.add(p + "W_f", {in, c.rnn_units}, Init::glorot_uniform, rng);
    cell.w_o = params_.add(p + "W_o", {in, c.rnn_units}, Init::glorot_uniform, rng);
    cell.w_g = params_.add(p + "W_g", {in, c.rnn_units}, Init::glorot_uniform, rng);
    cell.b_i = params_.add(p + "b_i", {c.rnn_units}, Init::zeros, rng);
    cell.b_f = params_.add(p + "b_f", {c.rnn_units}, Init::zeros, rng);
    cell.b_o = params_.add(p + "b_o", {c.rnn_units}, Init::zeros, rng);
    cell.b_g = params_.add(p + "b_g", {c.rnn_units}, Init::zeros, rng);
    cells_.push_back(std::move(cell));
  }
  glimpse_q_ = params_.add("decoder.glimpse.W_D1", {c.rnn_units, c.rnn_units}, Init::glorot_uniform, rng);
  glimpse_k_ = params_.add("decoder.glimpse.W_D2", {c.d_h, c.rnn_units}, Init::glorot_uniform, rng);
  glimpse_v_ = params_.add("decoder.glimpse.v_D1", {c.rnn_units, 1}, Init::glorot_uniform, rng);
  pointer_q_ = params_.add("decoder.pointer.W_D3", {c.rnn_units + c.d_h, c.rnn_units}, Init::glorot_uniform, rng);
  pointer_k_ = params_.add("decoder.pointer.W_D4", {c.d_h, c.rnn_units}, Init::glorot_uniform, rng);
  pointer_v_ = params_.add("decoder.pointer.v_D2", {c.rnn_units, 1}, Init::glorot_uniform, rng);
}

Tensor PolicyModel::embed_input(const Tensor& item_features, const Tensor& user_features) const {
  const auto& f = config_.features;
  if (item_features.rank() != 2 || item_features.cols() != f.item_dim || user_features.size() != f.user_dim) {
    throw ContractViolation("embed_input: features " + nc::shape_string(item_features.shape()) + " / " +
                            nc::shape_string(user_features.shape()) + " do not match W_I " +
                            nc::shape_string(w_in_.shape()));
  }
  const std::vector<std::size_t> repeat(item_features.rows(), 0);
  const Tensor user_rows = nc::gather_rows(user_features, repeat);
  const Tensor joined[] = {item_features, user_rows};
  return nc::relu(nc::add(nc::matmul(nc::concat(joined, 1), w_in_), b_in_));
}

Encoding PolicyModel::encode(const Tensor& inputs) const {
  if (inputs.rank() != 2 || inputs.cols() != config_.d_x) {
    throw ContractViolation("encode: inputs " + nc::shape_string(inputs.shape()) + " do not have d_x columns");
  }
  Encoding enc;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(config_.d_k));
  Tensor h = nc::add(nc::matmul(inputs, w_emb_), b_emb_);
  for (const auto& layer : encoder_) {
    std::vector<Tensor> heads;
    for (const auto& proj : layer.head_proj) {
      const Tensor e = nc::matmul(h, proj);
      const Tensor weights = nc::softmax_lastdim(nc::scale(nc::matmul(e, nc::transpose(e)), inv_sqrt_dk));
      enc.attention.push_back(weights);
      heads.push_back(nc::matmul(weights, e));
    }
    const Tensor attended = nc::matmul(nc::concat(heads, 1), layer.out_proj);
    h = nc::layer_norm(nc::add(h, attended), layer.ln1_gain, layer.ln1_bias);
    const Tensor hidden = nc::relu(nc::add(nc::matmul(h, layer.ff1_w), layer.ff1_b));
    const Tensor ff = nc::add(nc::matmul(hidden, layer.ff2_w), layer.ff2_b);
    h = nc::layer_norm(nc::add(h, ff), layer.ln2_gain, layer.ln2_bias);
  }
  enc.nodes = h;
  enc.glimpse_keys = nc::matmul(h, glimpse_k_);
  enc.pointer_keys = nc::matmul(h, pointer_k_);
  return enc;
}

Encoding PolicyModel::encode_sample(const dataio::Sample& sample) const {
  return encode(embed_input(features_.items(sample.candidates), features_.user(sample.user)));
}

RecurrentState PolicyModel::cell_step(const RecurrentState& prev, const Tensor& input) const {
  RecurrentState next;
  Tensor x = input;
  for (std::size_t l = 0; l < cells_.size(); ++l) {
    const auto& cell = cells_[l];
    const Tensor joined_parts[] = {x, prev.hidden[l]};
    const Tensor joined = nc::concat(joined_parts, 1);
    const Tensor i = nc::sigmoid(nc::add(nc::matmul(joined, cell.w_i), cell.b_i));
    const Tensor f = nc::sigmoid(nc::add(nc::matmul(joined, cell.w_f), cell.b_f));
    const Tensor o = nc::sigmoid(nc::add(nc::matmul(joined, cell.w_o), cell.b_o));
    const Tensor g = nc::tanh(nc::add(nc::matmul(joined, cell.w_g), cell.b_g));
    const Tensor c = nc::add(nc::elementwise_mul(f, prev.cell[l]), nc::elementwise_mul(i, g));
    const Tensor h = nc::elementwise_mul(o, nc::tanh(c));
    next.hidden.push_back(h);
    next.cell.push_back(c);
    x = h;
  }
  return next;
}

DecodeState PolicyModel::initial_state(const Encoding& enc) const {
  RecurrentState zero;
  for (std::size_t l = 0; l < config_.layers; ++l) {
    zero.hidden.push_back(Tensor::zeros({1, config_.rnn_units}));
    zero.cell.push_back(Tensor::zeros({1, config_.rnn_units}));
  }
  DecodeState state;
  state.rnn = cell_step(zero, Tensor::zeros({1, config_.d_h}));
  state.masked.assign(enc.size(), false);
  return state;
}

Tensor PolicyModel::pointer_logits(const DecodeState& state, const Encoding& enc) const {
  const std::size_t n = enc.size();
  const Tensor& d = state.top();
  const Tensor glimpse_scores = nc::matmul(nc::tanh(nc::add(enc.glimpse_keys, nc::matmul(d, glimpse_q_))), glimpse_v_);
  const Tensor glimpse = nc::softmax_lastdim(nc::reshape(glimpse_scores, {1, n}));
  const Tensor context = nc::matmul(glimpse, enc.nodes);
  const Tensor query_parts[] = {d, context};
  const Tensor query = nc::matmul(nc::concat(query_parts, 1), pointer_q_);
  const Tensor scores = nc::matmul(nc::tanh(nc::add(enc.pointer_keys, query)), pointer_v_);
  return nc::reshape(scores, {1, n});
}

Tensor PolicyModel::step_log_probs(const DecodeState& state, const Encoding& enc) const {
  if (!state.has_feasible()) throw InfeasibleError("decode_step: every node is masked");
  return nc::log_softmax_lastdim(nc::masked_fill(pointer_logits(state, enc), state.masked, nc::kMaskedLogit));
}

Tensor PolicyModel::decode_step(const DecodeState& state, const Encoding& enc) const {
  if (!state.has_feasible()) throw InfeasibleError("decode_step: every node is masked");
  return nc::softmax_lastdim(nc::masked_fill(pointer_logits(state, enc), state.masked, nc::kMaskedLogit));
}

DecodeState PolicyModel::advance_state(const DecodeState& state, graph::Node chosen, const graph::ConstraintGraph& graph,
                                       const Encoding& enc, std::optional<double> step_log_prob) const {
  if (chosen >= state.masked.size()) throw ContractViolation("advance_state: node out of range");
  if (state.masked[chosen]) throw ContractViolation("advance_state: node " + std::to_string(chosen) + " is masked");
  if (graph.size() != state.masked.size()) throw ContractViolation("advance_state: graph size differs from encoding");
  const double lp = step_log_prob ? *step_log_prob : step_log_probs(state, enc)[chosen];
  DecodeState next;
  const std::size_t row = chosen;
  next.rnn = cell_step(state.rnn, nc::gather_rows(enc.nodes, std::span<const std::size_t>(&row, 1)));
  next.prefix = state.prefix;
  next.prefix.push_back(chosen);
  next.masked = state.masked;
  for (graph::Node j = 0; j < next.masked.size(); ++j) {
    if (j == chosen || !graph.adjacent(chosen, j)) next.masked[j] = true;
  }
  next.log_prob = state.log_prob + lp;
  return next;
}

nc::Archive PolicyModel::to_archive() const {
  nc::Archive a;
  a.set("kind", "policy");
  for (const auto& [k, v] : config_.entries()) a.set(k, v);
  params_.save_to(a);
  return a;
}

PolicyModel PolicyModel::from_archive(const nc::Archive& archive) {
  if (archive.get("kind") != "policy") throw DataError("archive does not hold a policy checkpoint");
  ModelConfig config;
  for (const auto& [k, v] : archive.manifest) {
    if (k != "kind" && !config.apply(k, v)) throw DataError("policy checkpoint: unknown manifest key '" + k + "'");
  }
  nc::Rng rng(0);
  PolicyModel model(config, rng);
  model.params_.load_from(archive);
  return model;
}

}  // namespace exactk::gattn
