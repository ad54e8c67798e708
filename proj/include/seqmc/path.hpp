#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seqmc/errors.hpp"

namespace seqmc {

enum class StorageMode { path, marginal };

/// One time step of a particle system: the new coordinate of every path plus
/// the index of the path it extends in the previous generation.
template <class State>
struct Generation {
  std::vector<State> states;
  std::vector<std::size_t> parents;   // empty at time 1
  std::vector<double> log_potential;  // log G_n per path, filled once known

  std::size_t size() const { return states.size(); }
};

template <class State>
class Genealogy;

/// Read-only view of a path x_{1:n}. Either backed by a genealogy (terminal
/// state plus parent index in generation n-1) or by a contiguous span.
/// Only the coordinates still retained by the genealogy are reachable.
template <class State>
class PathView {
 public:
  PathView() = default;

  PathView(const Genealogy<State>& genealogy, std::size_t length, std::size_t parent,
           const State& terminal)
      : genealogy_(&genealogy), terminal_(&terminal), length_(length), parent_(parent) {}

  static PathView from_span(std::span<const State> coords) {
    PathView v;
    v.coords_ = coords;
    v.length_ = coords.size();
    return v;
  }

  std::size_t length() const { return length_; }
  bool empty() const { return length_ == 0; }

  /// x_{n-lag}
  const State& back(std::size_t lag = 0) const {
    if (lag >= length_) throw std::out_of_range("path lag beyond path start");
    if (genealogy_ == nullptr) return coords_[length_ - 1 - lag];
    if (lag == 0) return *terminal_;
    std::size_t t = length_ - 1;
    std::size_t idx = parent_;
    for (std::size_t k = 1; k < lag; ++k) {
      idx = genealogy_->generation(t).parents[idx];
      --t;
    }
    return genealogy_->generation(t).states[idx];
  }

  /// 1-based coordinate access, x_k.
  const State& operator[](std::size_t k) const {
    if (k == 0 || k > length_) throw std::out_of_range("path coordinate out of range");
    return back(length_ - k);
  }

  /// The path x_{1:n-1}.
  PathView prefix() const {
    if (length_ <= 1) return {};
    if (genealogy_ == nullptr) return from_span(coords_.first(length_ - 1));
    const auto& gen = genealogy_->generation(length_ - 1);
    const std::size_t grand = length_ > 2 ? gen.parents[parent_] : 0;
    return PathView(*genealogy_, length_ - 1, grand, gen.states[parent_]);
  }

  std::vector<State> to_vector() const {
    std::vector<State> out(length_);
    for (std::size_t k = 1; k <= length_; ++k) out[k - 1] = (*this)[k];
    return out;
  }

 private:
  const Genealogy<State>* genealogy_ = nullptr;
  const State* terminal_ = nullptr;
  std::span<const State> coords_;
  std::size_t length_ = 0;
  std::size_t parent_ = 0;
};

/// Chain state of an MCMC kernel at step n: an ancestor index into the
/// previous generation plus the new coordinate.
template <class State>
struct PathParticle {
  std::size_t ancestor = 0;
  State state{};

  friend bool operator==(const PathParticle&, const PathParticle&) = default;
};

/// Generations of a particle system. With a retention depth r > 0 only the
/// last r generations are kept (marginal storage); r == 0 keeps everything.
template <class State>
class Genealogy {
 public:
  explicit Genealogy(std::size_t retain = 0) : retain_(retain) {}

  void push(Generation<State> gen) {
    if (time_ > 0 && gen.parents.size() != gen.states.size()) {
      throw ConfigError("generation is missing parent indices");
    }
    gens_.push_back(std::move(gen));
    ++time_;
    if (retain_ > 0) {
      while (gens_.size() > retain_) gens_.pop_front();
    }
  }

  std::size_t time() const { return time_; }
  std::size_t retain() const { return retain_; }
  std::size_t first_retained() const { return time_ - gens_.size() + 1; }

  bool holds(std::size_t t) const { return t >= 1 && t <= time_ && t >= first_retained(); }

  const Generation<State>& generation(std::size_t t) const {
    if (!holds(t)) {
      throw std::out_of_range("generation " + std::to_string(t) + " is not retained");
    }
    return gens_[t - first_retained()];
  }

  Generation<State>& mutable_generation(std::size_t t) {
    return const_cast<Generation<State>&>(std::as_const(*this).generation(t));
  }

  PathView<State> path(std::size_t t, std::size_t i) const {
    const auto& gen = generation(t);
    const std::size_t parent = t > 1 ? gen.parents[i] : 0;
    return PathView<State>(*this, t, parent, gen.states[i]);
  }

  /// Path of length t+1 formed by extending path i of generation t with x.
  PathView<State> extension(std::size_t t, std::size_t i, const State& x) const {
    return PathView<State>(*this, t + 1, i, x);
  }

  std::size_t stored_states() const {
    std::size_t total = 0;
    for (const auto& g : gens_) total += g.states.size();
    return total;
  }

 private:
  std::deque<Generation<State>> gens_;
  std::size_t time_ = 0;
  std::size_t retain_ = 0;
};

}  // namespace seqmc
