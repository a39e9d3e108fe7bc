#pragma once

#include <algorithm>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "aegis/tensor.hpp"

namespace aegis {

// One named weight tensor. Values are kept in f64 for compute; checkpoints
// store f32, and save() snaps the in-memory copy to f32 so the forward pass
// after a save matches the forward pass after a reload bit for bit.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter(std::string n, Tensor v, bool train = true)
      : name(std::move(n)), value(std::move(v)), grad(value.shape), trainable(train) {}

  void zero_grad() { std::fill(grad.v.begin(), grad.v.end(), 0.0); }
};

class ParamStore {
 public:
  // Registers a new parameter; the name must be unique within the store.
  Parameter& create(const std::string& name, Tensor init, bool trainable = true);

  Parameter& get(const std::string& name);
  const Parameter& get(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  // Registration order, which is also the checkpoint order.
  std::vector<Parameter*> all();
  std::vector<const Parameter*> all() const;
  // Parameters whose names start with the given prefix.
  std::vector<Parameter*> with_prefix(const std::string& prefix);

  size_t size() const { return items_.size(); }
  void zero_grads();

  // Writes every parameter to an AEGW file and snaps in-memory values to f32.
  void save(const std::string& path);
  // Replaces values of already-registered parameters from an AEGW file.
  // Every parameter in the file must exist here with a matching shape, and
  // every registered parameter must be present in the file.
  void load(const std::string& path);

 private:
  std::vector<std::unique_ptr<Parameter>> items_;
  std::unordered_map<std::string, size_t> index_;
};

// Fills a tensor with scaled uniform noise for weight init (He-style fan-in
// scaling, uniform in ±sqrt(6/fan_in)).
Tensor he_uniform(const Shape& shape, int fan_in, Rng& rng);

}  // namespace aegis
