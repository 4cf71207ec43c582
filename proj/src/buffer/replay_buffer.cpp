#include <algorithm>
#include <cmath>
#include <numeric>

#include "dmrac/buffer.hpp"

namespace dmrac::buffer {

double sigma_min_without(const Matrix& features, const Matrix& gram, Eigen::Index skip) {
  const Eigen::Index rows = features.rows();
  const Eigen::Index k = features.cols();
  if (rows - 1 < 2 * k) {
    Matrix reduced(rows - 1, k);
    for (Eigen::Index r = 0, out = 0; r < rows; ++r)
      if (r != skip) reduced.row(out++) = features.row(r);
    return min_singular_value(reduced);
  }
  const Vector row = features.row(skip).transpose();
  const Matrix downdated = gram - row * row.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(downdated, Eigen::EigenvaluesOnly);
  return std::sqrt(std::max(0.0, eig.eigenvalues()(0)));
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, double zeta_tol) : capacity_(capacity), zeta_tol_(zeta_tol) {
  if (capacity_ < 1) throw Error(Errc::InvalidArgument, "ReplayBuffer: capacity must be positive");
  if (!(zeta_tol_ >= 0.0)) throw Error(Errc::InvalidArgument, "ReplayBuffer: zeta_tol must be non-negative");
}

double ReplayBuffer::gamma(const Vector& phi) const {
  if (entries_.empty()) return std::numeric_limits<double>::infinity();
  const double denom = std::max(phi.norm(), kDenominatorFloor);
  const double nearest = (features_.rowwise() - phi.transpose()).rowwise().norm().minCoeff();
  return nearest / denom;
}

bool ReplayBuffer::insert_if_novel(const Vector& x, const Vector& y, const Vector& phi, std::uint64_t tick) {
  if (!entries_.empty()) {
    const Entry& first = entries_.front();
    if (x.size() != first.x.size() || y.size() != first.y.size() || phi.size() != first.phi.size()) {
      throw Error(Errc::ShapeMismatch, "ReplayBuffer: entry shape differs from stored entries");
    }
  }
  if (!x.allFinite() || !y.allFinite() || !phi.allFinite()) return false;
  if (gamma(phi) < zeta_tol_) return false;
  if (entries_.size() >= capacity_) evict_svd_max();
  entries_.push_back(Entry{x, y, phi, tick});
  features_.conservativeResize(static_cast<Eigen::Index>(entries_.size()), phi.size());
  features_.row(features_.rows() - 1) = phi.transpose();
  return true;
}

std::size_t ReplayBuffer::evict_svd_max() {
  if (entries_.size() != capacity_) throw Error(Errc::InvalidArgument, "evict_svd_max: buffer is not full");
  std::size_t victim = 0;
  if (entries_.size() > 1) {
    const Matrix gram = features_.transpose() * features_;
    std::vector<double> scores(entries_.size());
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      scores[i] = sigma_min_without(features_, gram, static_cast<Eigen::Index>(i));
    }
    const double best = *std::max_element(scores.begin(), scores.end());
    const double tie = 1e-12 * std::max(1.0, best);
    bool found = false;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (scores[i] < best - tie) continue;
      if (!found || entries_[i].tick < entries_[victim].tick) victim = i;
      found = true;
    }
  }
  entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(victim));
  rebuild_features();
  return victim;
}

void ReplayBuffer::rebuild_features() {
  if (entries_.empty()) {
    features_.resize(0, 0);
    return;
  }
  features_.resize(static_cast<Eigen::Index>(entries_.size()), entries_.front().phi.size());
  for (std::size_t i = 0; i < entries_.size(); ++i)
    features_.row(static_cast<Eigen::Index>(i)) = entries_[i].phi.transpose();
}

ReplayBuffer::Sample ReplayBuffer::sample_minibatch(std::size_t m, std::mt19937_64& rng) const {
  if (m < 1 || m > entries_.size()) throw Error(Errc::InsufficientData, "sample_minibatch: not enough entries");
  std::vector<std::size_t> order(entries_.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
    std::swap(order[i], order[pick(rng)]);
  }
  order.resize(m);

  Sample out;
  const auto n = entries_.front().x.size();
  const auto outputs = entries_.front().y.size();
  out.inputs.resize(n, static_cast<Eigen::Index>(m));
  out.targets.resize(outputs, static_cast<Eigen::Index>(m));
  for (std::size_t c = 0; c < m; ++c) {
    out.inputs.col(static_cast<Eigen::Index>(c)) = entries_[order[c]].x;
    out.targets.col(static_cast<Eigen::Index>(c)) = entries_[order[c]].y;
  }
  out.indices = std::move(order);
  return out;
}

void ReplayBuffer::write_csv(std::ostream& out) const {
  if (entries_.empty()) {
    out << "tick\n";
    return;
  }
  const Entry& first = entries_.front();
  out << "tick";
  for (Eigen::Index i = 0; i < first.x.size(); ++i) out << ",x" << i;
  for (Eigen::Index i = 0; i < first.y.size(); ++i) out << ",y" << i;
  for (Eigen::Index i = 0; i < first.phi.size(); ++i) out << ",phi" << i;
  out << '\n';
  out.precision(17);
  for (const Entry& e : entries_) {
    out << e.tick;
    for (Eigen::Index i = 0; i < e.x.size(); ++i) out << ',' << e.x(i);
    for (Eigen::Index i = 0; i < e.y.size(); ++i) out << ',' << e.y(i);
    for (Eigen::Index i = 0; i < e.phi.size(); ++i) out << ',' << e.phi(i);
    out << '\n';
  }
}

}  // namespace dmrac::buffer
