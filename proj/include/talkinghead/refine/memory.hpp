#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "talkinghead/nn/graph.hpp"

namespace th::refine {

struct MemorySlot {
  Eigen::VectorXd key;    // spatial feature, unit norm
  Eigen::VectorXd value;  // identity feature, unit norm
  long age = 0;
};

/// Key-value store of (spatial, identity) feature pairs with cosine lookup.
/// Ages stay distinct: the touched slot gets age 0 and every other slot ages by one.
class MemoryBank {
 public:
  MemoryBank(int capacity, int key_dim, int value_dim);

  struct UpdateResult {
    int slot = -1;
    enum class Kind { Inserted, Updated, Replaced } kind = Kind::Inserted;
  };

  /// Nearest key k*; if cos(value(k*), v) >= tau the key moves towards q, otherwise
  /// (q, v) goes into a free slot or, when full, over the oldest slot.
  UpdateResult update(const Eigen::VectorXd& q, const Eigen::VectorXd& v, double tau);

  /// Slot whose key has maximal cosine to q; ties go to the lowest index.
  [[nodiscard]] int nearest_key(const Eigen::VectorXd& q) const;
  [[nodiscard]] const Eigen::VectorXd& retrieve(const Eigen::VectorXd& q) const;

  [[nodiscard]] int size() const { return static_cast<int>(slots_.size()); }
  [[nodiscard]] int capacity() const { return capacity_; }
  [[nodiscard]] int key_dim() const { return key_dim_; }
  [[nodiscard]] int value_dim() const { return value_dim_; }
  [[nodiscard]] bool empty() const { return slots_.empty(); }
  [[nodiscard]] const std::vector<MemorySlot>& slots() const { return slots_; }
  void clear() { slots_.clear(); }

  /// Throws ValidationError if a norm, capacity or age invariant is broken.
  void validate(double tol = 1e-6) const;

  void save(const std::string& path) const;
  static MemoryBank load(const std::string& path);

 private:
  int capacity_;
  int key_dim_;
  int value_dim_;
  std::vector<MemorySlot> slots_;
};

struct TripletSelection {
  int positive = -1;  // nearest key whose value matches v (cos >= tau)
  int negative = -1;  // nearest key whose value does not
  [[nodiscard]] bool valid() const { return positive >= 0 && negative >= 0; }
};

TripletSelection select_triplet(const MemoryBank& bank, const Eigen::VectorXd& q, const Eigen::VectorXd& v, double tau);

/// max(0, cos(q, k_neg) - cos(q, k_pos) + margin); 0 when either candidate is missing.
double threshold_triplet_loss(const MemoryBank& bank, const Eigen::VectorXd& q, const Eigen::VectorXd& v, double tau,
                              double margin);
/// Differentiable in q (a unit vector produced by the spatial encoder).
nn::Var threshold_triplet_loss(const MemoryBank& bank, const nn::Var& q, const Eigen::VectorXd& v, double tau,
                               double margin);

/// Trailing moving average over `window` frames, renormalized. A zero average
/// reuses the previous smoothed feature.
std::vector<Eigen::VectorXd> smooth_retrieved(std::span<const Eigen::VectorXd> features, int window);

}  // namespace th::refine
