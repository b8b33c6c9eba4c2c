#include "exactk/dataio/features.hpp"

#include "exactk/errors.hpp"
#include "exactk/numcore/ops.hpp"

namespace exactk::dataio {

const char* feature_mode_name(FeatureMode mode) {
  return mode == FeatureMode::dense ? "dense" : "id_embedding";
}

FeatureMode parse_feature_mode(const std::string& name) {
  if (name == "dense") return FeatureMode::dense;
  if (name == "id_embedding") return FeatureMode::id_embedding;
  throw ConfigError("unknown feature mode '" + name + "' (expected dense or id_embedding)");
}

FeatureEncoder::FeatureEncoder(FeatureSpec spec, numcore::ParameterStore& params, const std::string& prefix,
                               numcore::Rng& rng)
    : spec_(spec) {
  if (spec_.mode == FeatureMode::id_embedding) {
    if (spec_.item_vocab == 0 || spec_.user_vocab == 0) throw ConfigError("id embeddings need non-zero vocabularies");
    item_table_ = params.add(prefix + "item_embedding", {spec_.item_vocab, spec_.item_dim}, numcore::Init::glorot_uniform, rng);
    user_table_ = params.add(prefix + "user_embedding", {spec_.user_vocab, spec_.user_dim}, numcore::Init::glorot_uniform, rng);
  }
}

void FeatureEncoder::attach(std::shared_ptr<const OracleWorld> world) {
  if (spec_.mode != FeatureMode::dense) throw ConfigError("feature encoder: world attached to an id-embedding encoder");
  if (world->dim != spec_.item_dim || world->dim != spec_.user_dim) {
    throw ConfigError("feature encoder: world dimension " + std::to_string(world->dim) + " does not match model features");
  }
  world_ = std::move(world);
}

bool FeatureEncoder::ready() const { return spec_.mode == FeatureMode::id_embedding || world_ != nullptr; }

numcore::Tensor FeatureEncoder::items(std::span<const ItemId> ids) const {
  if (spec_.mode == FeatureMode::dense) {
    if (!world_) throw ConfigError("feature encoder: dense features need an oracle world");
    std::vector<double> values;
    values.reserve(ids.size() * spec_.item_dim);
    for (auto id : ids) {
      auto v = world_->item(id);
      values.insert(values.end(), v.begin(), v.end());
    }
    return numcore::Tensor({ids.size(), spec_.item_dim}, std::move(values));
  }
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (auto id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= spec_.item_vocab) {
      throw DataError("item id " + std::to_string(id) + " outside embedding vocabulary of " + std::to_string(spec_.item_vocab));
    }
    rows.push_back(static_cast<std::size_t>(id));
  }
  return numcore::gather_rows(item_table_, rows);
}

numcore::Tensor FeatureEncoder::user(UserId id) const {
  if (spec_.mode == FeatureMode::dense) {
    if (!world_) throw ConfigError("feature encoder: dense features need an oracle world");
    auto v = world_->user(id);
    return numcore::Tensor::row({v.begin(), v.end()});
  }
  if (id < 0 || static_cast<std::size_t>(id) >= spec_.user_vocab) {
    throw DataError("user id " + std::to_string(id) + " outside embedding vocabulary of " + std::to_string(spec_.user_vocab));
  }
  const std::size_t row = static_cast<std::size_t>(id);
  return numcore::gather_rows(user_table_, std::span<const std::size_t>(&row, 1));
}

FeatureSpec dense_spec_for(const OracleWorld& world) {
  return FeatureSpec{FeatureMode::dense, world.dim, world.dim, 0, 0};
}

}  // namespace exactk::dataio
