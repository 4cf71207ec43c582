#include <algorithm>
#include <limits>
#include <map>

#include "dmrac/harness.hpp"

namespace dmrac::harness {

Matrix sample_states(const ScenarioConfig& cfg, int stride) {
  if (stride < 1) throw Error(Errc::InvalidArgument, "sample_states: stride must be positive");
  ScenarioConfig run = cfg;
  run.record_trajectory = false;
  std::vector<Vector> states;
  const RunResult result = run_scenario(run, [&](const TickView& v) {
    if (v.tick % stride == 0) states.push_back(v.x);
  });
  if (states.empty()) throw Error(Errc::InsufficientData, "sample_states: scenario produced no ticks");
  Matrix out(static_cast<Eigen::Index>(states.size()), states.front().size());
  for (std::size_t i = 0; i < states.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = states[i].transpose();
  return out;
}

double silhouette_score(const Matrix& points, const std::vector<std::string>& labels) {
  const auto n = points.rows();
  if (static_cast<std::size_t>(n) != labels.size()) throw Error(Errc::InvalidArgument, "silhouette: label count");
  std::map<std::string, int> ids;
  std::vector<int> cluster(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    cluster[i] = ids.emplace(labels[i], static_cast<int>(ids.size())).first->second;
  }
  const int k = static_cast<int>(ids.size());
  if (k < 2) return 0.0;
  std::vector<int> sizes(k, 0);
  for (int c : cluster) ++sizes[c];

  double total = 0.0;
  std::vector<double> sums(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::fill(sums.begin(), sums.end(), 0.0);
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j) sums[cluster[j]] += (points.row(i) - points.row(j)).norm();
    }
    const int own = cluster[i];
    if (sizes[own] < 2) continue;
    const double a = sums[own] / (sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c != own) b = std::min(b, sums[c] / sizes[c]);
    }
    const double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

FeatureExport export_features(const std::vector<std::pair<std::string, Matrix>>& states, const nn::MlpSpec& spec,
                              const nn::MlpParams& network, int dims) {
  if (!network.matches(spec)) throw Error(Errc::ShapeMismatch, "export_features: network does not match spec");
  FeatureExport out;
  Eigen::Index total = 0;
  for (const auto& [label, x] : states) total += x.rows();
  out.features.resize(total, spec.feature_dim());
  Eigen::Index row = 0;
  for (const auto& [label, x] : states) {
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out.features.row(row++) = nn::features(spec, network, x.row(i).transpose()).transpose();
      out.labels.push_back(label);
    }
  }
  const PcaResult pca = pca_project(out.features, std::min<int>(dims, spec.feature_dim()));
  out.projected = pca.projected;
  out.explained = pca.explained_ratio;
  out.silhouette = silhouette_score(out.projected, out.labels);
  return out;
}

void write_features_csv(std::ostream& out, const std::vector<std::string>& labels, const Matrix& values,
                        const std::string& prefix) {
  out << "label";
  for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << prefix << c;
  out << '\n';
  out.precision(17);
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    out << labels[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < values.cols(); ++c) out << ',' << values(r, c);
    out << '\n';
  }
}

}  // namespace dmrac::harness
