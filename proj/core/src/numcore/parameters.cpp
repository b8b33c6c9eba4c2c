#include "exactk/numcore/parameters.hpp"

#include <cmath>

#include "exactk/errors.hpp"

namespace exactk::numcore {

std::vector<double> glorot_uniform(const Shape& shape, Rng& rng) {
  const std::size_t fan_out = shape.back();
  const std::size_t fan_in = shape.size() > 1 ? shape_size(shape) / fan_out : 1;
  const double r = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> values(shape_size(shape));
  for (auto& v : values) v = uniform(rng, -r, r);
  return values;
}

Tensor& ParameterStore::add(const std::string& name, Shape shape, Init init, Rng& rng) {
  std::vector<double> values;
  switch (init) {
    case Init::glorot_uniform: values = glorot_uniform(shape, rng); break;
    case Init::zeros: values.assign(shape_size(shape), 0.0); break;
    case Init::ones: values.assign(shape_size(shape), 1.0); break;
  }
  return add(name, Tensor::parameter(std::move(shape), std::move(values)));
}

Tensor& ParameterStore::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw ContractViolation("parameters: duplicate name '" + name + "'");
  if (!tensor.requires_grad()) tensor = Tensor::parameter(tensor.shape(), std::vector<double>(tensor.data().begin(), tensor.data().end()));
  index_[name] = tensors_.size();
  names_.push_back(name);
  tensors_.push_back(std::move(tensor));
  return tensors_.back();
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("parameters: unknown name '" + name + "'");
  return tensors_[it->second];
}

std::vector<Tensor> ParameterStore::tensors() const { return tensors_; }

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& t : tensors_) t.zero_grad();
}

void ParameterStore::fill(double value) {
  for (auto& t : tensors_) {
    auto d = t.mutable_data();
    std::fill(d.begin(), d.end(), value);
  }
}

void ParameterStore::save_to(Archive& archive) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& t = tensors_[i];
    archive.records.push_back({names_[i], t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
  }
}

void ParameterStore::load_from(const Archive& archive) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const auto& rec = archive.record(names_[i]);
    auto& t = tensors_[i];
    if (rec.shape != t.shape()) {
      throw DataError("parameters: '" + names_[i] + "' has shape " + shape_string(rec.shape) + " in archive, expected " +
                      shape_string(t.shape()));
    }
    std::copy(rec.data.begin(), rec.data.end(), t.mutable_data().begin());
  }
}

}  // namespace exactk::numcore
