#pragma once

#include <memory>
#include <span>
#include <string>

#include "exactk/dataio/oracle.hpp"
#include "exactk/numcore/parameters.hpp"

namespace exactk::dataio {

enum class FeatureMode { dense, id_embedding };

const char* feature_mode_name(FeatureMode mode);
FeatureMode parse_feature_mode(const std::string& name);

struct FeatureSpec {
  FeatureMode mode = FeatureMode::dense;
  std::size_t item_dim = 8;
  std::size_t user_dim = 8;
  // id_embedding only: ids must lie in [0, vocab).
  std::size_t item_vocab = 0;
  std::size_t user_vocab = 0;
};

// Feature vectors x_s / x_u for items and users. Dense mode reads fixed
// vectors from an oracle world; id_embedding mode looks rows up in trainable
// tables that live in the owning model's ParameterStore.
class FeatureEncoder {
 public:
  FeatureEncoder() = default;
  FeatureEncoder(FeatureSpec spec, numcore::ParameterStore& params, const std::string& prefix, numcore::Rng& rng);

  const FeatureSpec& spec() const { return spec_; }
  void attach(std::shared_ptr<const OracleWorld> world);
  bool ready() const;

  numcore::Tensor items(std::span<const ItemId> ids) const;  // [n, item_dim]
  numcore::Tensor user(UserId id) const;                     // [1, user_dim]

 private:
  FeatureSpec spec_;
  numcore::Tensor item_table_;
  numcore::Tensor user_table_;
  std::shared_ptr<const OracleWorld> world_;
};

FeatureSpec dense_spec_for(const OracleWorld& world);

}  // namespace exactk::dataio
