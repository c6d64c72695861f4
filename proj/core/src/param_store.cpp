#include "medcore/param_store.hpp"

#include "medcore/error.hpp"

namespace medcore {

ParamRole role_of(const std::string& name) {
  if (name.rfind("enc.", 0) == 0) return ParamRole::encoder;
  if (name.rfind("dec.", 0) == 0) return ParamRole::decoder;
  if (name.rfind("prompt.", 0) == 0) return ParamRole::prompt;
  throw ArgumentError("tensor name '" + name + "' has no role prefix (enc./dec./prompt.)");
}

const char* role_name(ParamRole role) {
  switch (role) {
    case ParamRole::encoder: return "encoder";
    case ParamRole::decoder: return "decoder";
    case ParamRole::prompt: return "prompt";
  }
  return "?";
}

void ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw ArgumentError("ParamStore: duplicate tensor '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

void ParamStore::set(const std::string& name, Tensor value) {
  if (contains(name)) {
    at(name) = std::move(value);
  } else {
    add(name, std::move(value));
  }
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("ParamStore: no tensor named '" + name + "'");
  return entries_[it->second].second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ArgumentError("ParamStore: no tensor named '" + name + "'");
  return entries_[it->second].second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::int64_t ParamStore::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [_, t] : entries_) n += static_cast<std::int64_t>(t.size());
  return n;
}

std::int64_t ParamStore::parameter_count(ParamRole role) const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries_) {
    if (role_of(name) == role) n += static_cast<std::int64_t>(t.size());
  }
  return n;
}

bool ParamStore::aligned_with(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].first != other.entries_[i].first) return false;
    if (entries_[i].second.dims() != other.entries_[i].second.dims()) return false;
  }
  return true;
}

void ParamStore::require_aligned(const ParamStore& other, const std::string& context) const {
  if (entries_.size() != other.entries_.size()) {
    throw ArgumentError(context + ": parameter stores hold " + std::to_string(entries_.size()) + " vs " +
                        std::to_string(other.entries_.size()) + " tensors");
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, ta] = entries_[i];
    const auto& [nb, tb] = other.entries_[i];
    if (na != nb) throw ArgumentError(context + ": tensor " + std::to_string(i) + " is '" + na + "' vs '" + nb + "'");
    if (ta.dims() != tb.dims()) {
      throw ArgumentError(context + ": tensor '" + na + "' has shape " + shape_string(ta.dims()) + " vs " +
                          shape_string(tb.dims()));
    }
  }
}

}  // namespace medcore
