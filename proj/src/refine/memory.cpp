#include "talkinghead/refine/memory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "talkinghead/error.hpp"
#include "talkinghead/io/container.hpp"
#include "talkinghead/nn/ops.hpp"

namespace th::refine {

namespace {

void require_dim(const Eigen::VectorXd& x, int dim, const char* what) {
  if (x.size() != dim) throw ConfigError(std::string("memory bank: ") + what + " has wrong dimension");
}

}  // namespace

MemoryBank::MemoryBank(int capacity, int key_dim, int value_dim)
    : capacity_(capacity), key_dim_(key_dim), value_dim_(value_dim) {
  if (capacity <= 0 || key_dim <= 0 || value_dim <= 0) throw ConfigError("memory bank: sizes must be positive");
}

int MemoryBank::nearest_key(const Eigen::VectorXd& q) const {
  if (slots_.empty()) throw PreconditionError("memory bank is empty");
  require_dim(q, key_dim_, "query");
  int best = 0;
  double best_cos = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < slots_.size(); ++i) {
    const double c = slots_[i].key.dot(q);
    if (c > best_cos) {
      best_cos = c;
      best = static_cast<int>(i);
    }
  }
  return best;
}

const Eigen::VectorXd& MemoryBank::retrieve(const Eigen::VectorXd& q) const {
  return slots_[static_cast<std::size_t>(nearest_key(q))].value;
}

MemoryBank::UpdateResult MemoryBank::update(const Eigen::VectorXd& q, const Eigen::VectorXd& v, double tau) {
  require_dim(q, key_dim_, "query");
  require_dim(v, value_dim_, "value");
  for (auto& s : slots_) ++s.age;
  UpdateResult r;
  if (slots_.empty()) {
    slots_.push_back({q, v, 0});
    r.slot = 0;
    return r;
  }
  const int k = nearest_key(q);
  auto& nearest = slots_[static_cast<std::size_t>(k)];
  if (nearest.value.dot(v) >= tau) {
    Eigen::VectorXd moved = nearest.key + q;
    const double n = moved.norm();
    nearest.key = n > 1e-12 ? Eigen::VectorXd(moved / n) : q;
    nearest.age = 0;
    r.slot = k;
    r.kind = UpdateResult::Kind::Updated;
    return r;
  }
  if (size() < capacity_) {
    slots_.push_back({q, v, 0});
    r.slot = size() - 1;
    return r;
  }
  int oldest = 0;
  for (int i = 1; i < size(); ++i)
    if (slots_[static_cast<std::size_t>(i)].age > slots_[static_cast<std::size_t>(oldest)].age) oldest = i;
  slots_[static_cast<std::size_t>(oldest)] = {q, v, 0};
  r.slot = oldest;
  r.kind = UpdateResult::Kind::Replaced;
  return r;
}

void MemoryBank::validate(double tol) const {
  if (size() > capacity_) throw ValidationError("memory bank over capacity");
  std::vector<long> ages;
  for (const auto& s : slots_) {
    if (s.key.size() != key_dim_ || s.value.size() != value_dim_) throw ValidationError("memory slot has wrong size");
    if (std::abs(s.key.norm() - 1.0) > tol || std::abs(s.value.norm() - 1.0) > tol)
      throw ValidationError("memory slot is not unit norm");
    if (s.age < 0) throw ValidationError("negative memory slot age");
    ages.push_back(s.age);
  }
  std::sort(ages.begin(), ages.end());
  if (std::adjacent_find(ages.begin(), ages.end()) != ages.end()) throw ValidationError("memory slot ages collide");
}

void MemoryBank::save(const std::string& path) const {
  io::Container c;
  c.meta() = {{"kind", "memory_bank"}, {"capacity", capacity_}, {"key_dim", key_dim_}, {"value_dim", value_dim_}};
  Eigen::MatrixXd keys(size(), key_dim_), values(size(), value_dim_);
  std::vector<std::int32_t> ages;
  for (int i = 0; i < size(); ++i) {
    keys.row(i) = slots_[static_cast<std::size_t>(i)].key.transpose();
    values.row(i) = slots_[static_cast<std::size_t>(i)].value.transpose();
    ages.push_back(static_cast<std::int32_t>(slots_[static_cast<std::size_t>(i)].age));
  }
  c.add_matrix("keys", keys);
  c.add_matrix("values", values);
  c.add_i32("ages", {static_cast<std::int64_t>(ages.size())}, ages);
  c.write(path);
}

MemoryBank MemoryBank::load(const std::string& path) {
  const auto c = io::Container::read(path);
  if (c.meta().value("kind", "") != "memory_bank") throw IoError("not a memory_bank container: " + path);
  MemoryBank bank(c.meta().at("capacity"), c.meta().at("key_dim"), c.meta().at("value_dim"));
  const Eigen::MatrixXd keys = c.matrix("keys"), values = c.matrix("values");
  const auto& ages = c.array("ages").i32;
  for (Eigen::Index i = 0; i < keys.rows(); ++i) {
    // Stored as f32; renormalize to restore the unit-norm invariant.
    bank.slots_.push_back({keys.row(i).transpose().normalized(), values.row(i).transpose().normalized(),
                           static_cast<long>(ages[static_cast<std::size_t>(i)])});
  }
  bank.validate(1e-6);
  return bank;
}

TripletSelection select_triplet(const MemoryBank& bank, const Eigen::VectorXd& q, const Eigen::VectorXd& v,
                                double tau) {
  TripletSelection sel;
  double best_pos = -std::numeric_limits<double>::infinity(), best_neg = best_pos;
  for (int i = 0; i < bank.size(); ++i) {
    const auto& s = bank.slots()[static_cast<std::size_t>(i)];
    const double c = s.key.dot(q);
    if (s.value.dot(v) >= tau) {
      if (c > best_pos) {
        best_pos = c;
        sel.positive = i;
      }
    } else if (c > best_neg) {
      best_neg = c;
      sel.negative = i;
    }
  }
  return sel;
}

double threshold_triplet_loss(const MemoryBank& bank, const Eigen::VectorXd& q, const Eigen::VectorXd& v, double tau,
                              double margin) {
  const auto sel = select_triplet(bank, q, v, tau);
  if (!sel.valid()) return 0.0;
  const double pos = bank.slots()[static_cast<std::size_t>(sel.positive)].key.dot(q);
  const double neg = bank.slots()[static_cast<std::size_t>(sel.negative)].key.dot(q);
  return std::max(0.0, neg - pos + margin);
}

nn::Var threshold_triplet_loss(const MemoryBank& bank, const nn::Var& q, const Eigen::VectorXd& v, double tau,
                               double margin) {
  const Eigen::VectorXd qv = Eigen::Map<const Eigen::VectorXd>(q->value.data(), static_cast<Eigen::Index>(q->value.size()));
  const auto sel = select_triplet(bank, qv, v, tau);
  if (!sel.valid()) return nn::constant(nn::Tensor::scalar(0.0));
  const Eigen::VectorXd diff =
      bank.slots()[static_cast<std::size_t>(sel.negative)].key - bank.slots()[static_cast<std::size_t>(sel.positive)].key;
  nn::Tensor d({static_cast<int>(diff.size())});
  for (Eigen::Index i = 0; i < diff.size(); ++i) d[static_cast<std::size_t>(i)] = diff[i];
  return nn::relu(nn::add_scalar(nn::dot(nn::reshape(q, {static_cast<int>(diff.size())}), nn::constant(d)), margin));
}

std::vector<Eigen::VectorXd> smooth_retrieved(std::span<const Eigen::VectorXd> features, int window) {
  if (features.empty()) throw PreconditionError("smooth_retrieved: no frames");
  if (window < 1) throw ConfigError("smooth_retrieved: window must be positive");
  std::vector<Eigen::VectorXd> out;
  out.reserve(features.size());
  for (std::size_t t = 0; t < features.size(); ++t) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(features[t].size());
    const std::size_t lo = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - static_cast<std::size_t>(window) : 0;
    for (std::size_t k = lo; k <= t; ++k) acc += features[k];
    acc /= static_cast<double>(t - lo + 1);
    const double n = acc.norm();
    if (n > 1e-9)
      out.push_back(acc / n);
    else
      out.push_back(t > 0 ? out.back() : Eigen::VectorXd(features[0].normalized()));
  }
  return out;
}

}  // namespace th::refine
