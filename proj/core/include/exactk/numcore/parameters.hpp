#pragma once

#include <map>
#include <string>
#include <vector>

#include "exactk/numcore/archive.hpp"
#include "exactk/numcore/random.hpp"
#include "exactk/numcore/tensor.hpp"

namespace exactk::numcore {

enum class Init { glorot_uniform, zeros, ones };

// Named, insertion-ordered collection of trainable tensors.
class ParameterStore {
 public:
  Tensor& add(const std::string& name, Shape shape, Init init, Rng& rng);
  Tensor& add(const std::string& name, Tensor tensor);

  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return names_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  void fill(double value);

  // Appends one record per parameter, in insertion order.
  void save_to(Archive& archive) const;
  // Copies values from matching records; names and shapes must agree exactly.
  void load_from(const Archive& archive);

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::map<std::string, std::size_t> index_;
};

// uniform(-r, r), r = sqrt(6 / (fan_in + fan_out)); fan_out is the last extent.
std::vector<double> glorot_uniform(const Shape& shape, Rng& rng);

}  // namespace exactk::numcore
