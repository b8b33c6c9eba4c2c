#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "exactk/dataio/features.hpp"
#include "exactk/graph/graph.hpp"
#include "exactk/numcore/archive.hpp"
#include "exactk/numcore/parameters.hpp"

namespace exactk::gattn {

using numcore::Tensor;

struct ModelConfig {
  std::size_t d_x = 32;        // node input width after embed_input
  std::size_t d_h = 32;        // node embedding width
  std::size_t d_k = 16;        // per-head width
  std::size_t heads = 2;       // M
  std::size_t layers = 2;      // L, encoder layers and stacked decoder cells
  std::size_t k = 4;           // card size
  std::size_t n = 20;          // candidate count
  std::size_t beam_size = 3;
  std::size_t rnn_units = 32;
  dataio::FeatureSpec features{dataio::FeatureMode::id_embedding, 16, 16, 0, 0};

  void validate() const;
  // Returns false for keys this struct does not own.
  bool apply(const std::string& key, const std::string& value);
  std::vector<std::pair<std::string, std::string>> entries() const;
};

struct Encoding {
  Tensor nodes;                    // H^(L), [N, d_h]
  Tensor glimpse_keys;             // H^(L) W_D2, [N, rnn_units]
  Tensor pointer_keys;             // H^(L) W_D4, [N, rnn_units]
  std::vector<Tensor> attention;   // layers * heads row-stochastic [N, N] maps, layer-major

  std::size_t size() const { return nodes.rows(); }
};

struct RecurrentState {
  std::vector<Tensor> hidden;  // per stacked layer, [1, rnn_units]
  std::vector<Tensor> cell;
};

struct DecodeState {
  RecurrentState rnn;                // top-layer hidden is d_t
  std::vector<graph::Node> prefix;   // a_1 .. a_{t-1}
  std::vector<bool> masked;          // true: node cannot be pointed to
  double log_prob = 0.0;

  bool has_feasible() const;
  const Tensor& top() const { return rnn.hidden.back(); }
};

// Encoder-decoder pointer policy over the nodes of a constraint graph.
class PolicyModel {
 public:
  PolicyModel(ModelConfig config, numcore::Rng& rng);

  const ModelConfig& config() const { return config_; }
  numcore::ParameterStore& parameters() { return params_; }
  const numcore::ParameterStore& parameters() const { return params_; }
  dataio::FeatureEncoder& features() { return features_; }
  const dataio::FeatureEncoder& features() const { return features_; }

  // x_i = ReLU(W_I [x_s; x_u] + b_I) for every candidate row.
  Tensor embed_input(const Tensor& item_features, const Tensor& user_features) const;
  Encoding encode(const Tensor& inputs) const;
  Encoding encode_sample(const dataio::Sample& sample) const;

  // d_1 = g(0, 0); nothing masked yet.
  DecodeState initial_state(const Encoding& enc) const;
  // Pointer scores u_t before masking, [1, N].
  Tensor pointer_logits(const DecodeState& state, const Encoding& enc) const;
  // Masked log-softmax of the pointer scores, [1, N].
  Tensor step_log_probs(const DecodeState& state, const Encoding& enc) const;
  // Pointing distribution p(a_t | d_t, H), [1, N].
  Tensor decode_step(const DecodeState& state, const Encoding& enc) const;
  // Feeds h_{a_t} to the recurrent cell and masks a_t plus every node that is
  // not adjacent to it. `step_log_prob` is recomputed when omitted.
  DecodeState advance_state(const DecodeState& state, graph::Node chosen, const graph::ConstraintGraph& graph,
                            const Encoding& enc, std::optional<double> step_log_prob = std::nullopt) const;

  numcore::Archive to_archive() const;
  static PolicyModel from_archive(const numcore::Archive& archive);

 private:
  struct EncoderLayer {
    std::vector<Tensor> head_proj;  // W_hi, [d_h, d_k]
    Tensor out_proj;                // W_O, [M d_k, d_h]
    Tensor ln1_gain, ln1_bias;
    Tensor ff1_w, ff1_b, ff2_w, ff2_b;
    Tensor ln2_gain, ln2_bias;
  };
  struct CellLayer {
    Tensor w_i, w_f, w_o, w_g;  // [(in + units), units]
    Tensor b_i, b_f, b_o, b_g;
  };

  RecurrentState cell_step(const RecurrentState& prev, const Tensor& input) const;

  ModelConfig config_;
  numcore::ParameterStore params_;
  dataio::FeatureEncoder features_;
  Tensor w_in_, b_in_;
  Tensor w_emb_, b_emb_;
  std::vector<EncoderLayer> encoder_;
  std::vector<CellLayer> cells_;
  Tensor glimpse_q_, glimpse_k_, glimpse_v_;
  Tensor pointer_q_, pointer_k_, pointer_v_;
};

}  // namespace exactk::gattn
