#include <cmath>
#include <fstream>
#include <sstream>

#include "dmrac/harness.hpp"

namespace dmrac::harness {
namespace {

void put(std::ostream& out, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) out << ',' << v(i);
}

void header(std::ostream& out, const char* name, Eigen::Index count) {
  for (Eigen::Index i = 0; i < count; ++i) out << ',' << name << i;
}

}  // namespace

void save_snapshot(const std::filesystem::path& path, const nn::MlpParams& params) {
  const auto bytes = nn::encode_snapshot(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write snapshot " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::Io, "short write to " + path.string());
}

nn::MlpParams load_snapshot(const std::filesystem::path& path, const nn::MlpSpec& spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::Io, "cannot read snapshot " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nn::MlpParams params = nn::decode_snapshot(bytes);
  if (!params.matches(spec)) throw Error(Errc::ShapeMismatch, "snapshot " + path.string() + " does not fit the network");
  return params;
}

void write_trajectory_csv(std::ostream& out, const std::vector<TrajectoryRow>& rows) {
  if (rows.empty()) {
    out << "tick,t\n";
    return;
  }
  const TrajectoryRow& f = rows.front();
  out << "tick,t";
  header(out, "x", f.x.size());
  header(out, "x_rm", f.x_rm.size());
  header(out, "r", f.r.size());
  header(out, "u", f.u.size());
  header(out, "nu_ad", f.nu_ad.size());
  header(out, "delta", f.delta.size());
  out << ",e_norm,W_fro,feat_version\n";
  out.precision(17);
  for (const TrajectoryRow& row : rows) {
    out << row.tick << ',' << row.t;
    put(out, row.x);
    put(out, row.x_rm);
    put(out, row.r);
    put(out, row.u);
    put(out, row.nu_ad);
    put(out, row.delta);
    out << ',' << row.e_norm << ',' << row.w_fro << ',' << row.feat_version << '\n';
  }
}

void write_campaign_csv(std::ostream& out, const CampaignResult& result) {
  out << "run,crashed,crash_time,rmse,rmse_final,e_rms_final,peak_e,max_w_norm,swaps,publishes\n";
  out.precision(10);
  for (std::size_t i = 0; i < result.runs.size(); ++i) {
    const RunMetrics& m = result.runs[i];
    out << i << ',' << (m.crashed ? 1 : 0) << ',' << m.crash_time << ',' << m.rmse << ',' << m.rmse_final << ','
        << m.e_rms_final << ',' << m.peak_e << ',' << m.max_w_norm << ',' << m.swaps << ',' << m.publishes << '\n';
  }
}

RunMetrics replay_metrics(std::istream& in, int r_dim, double final_window) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::BadFormat, "replay: empty log");
  std::vector<std::string> names;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  auto column = [&](const std::string& name) -> std::size_t {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw Error(Errc::BadFormat, "replay: missing column " + name);
  };
  const std::size_t t_col = column("t");
  const std::size_t e_col = column("e_norm");
  const std::size_t w_col = column("W_fro");
  std::vector<std::size_t> x_cols, rm_cols;
  for (int i = 0; i < r_dim; ++i) {
    x_cols.push_back(column("x" + std::to_string(i)));
    rm_cols.push_back(column("x_rm" + std::to_string(i)));
  }

  struct Row {
    double t, e_norm;
    Vector err;
  };
  std::vector<Row> rows;
  RunMetrics m;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != names.size()) throw Error(Errc::BadFormat, "replay: ragged row");
    Row row{v[t_col], v[e_col], Vector(r_dim)};
    for (int i = 0; i < r_dim; ++i) row.err(i) = v[rm_cols[i]] - v[x_cols[i]];
    m.max_w_norm = std::max(m.max_w_norm, v[w_col]);
    rows.push_back(std::move(row));
  }
  m.ticks = static_cast<std::int64_t>(rows.size());
  m.rmse_axis = Vector::Zero(r_dim);
  m.rmse_axis_final = Vector::Zero(r_dim);
  if (rows.empty()) return m;

  const double end = rows.back().t;
  const double start = end - final_window;
  std::int64_t count_final = 0;
  double sq_e_final = 0.0;
  for (const Row& row : rows) {
    m.peak_e = std::max(m.peak_e, row.e_norm);
    m.rmse_axis += row.err.cwiseAbs2();
    if (row.t > start + 1e-12) {
      m.rmse_axis_final += row.err.cwiseAbs2();
      sq_e_final += row.e_norm * row.e_norm;
      ++count_final;
    }
  }
  const double r = static_cast<double>(r_dim);
  m.rmse = std::sqrt(m.rmse_axis.sum() / (r * static_cast<double>(rows.size())));
  m.rmse_axis = (m.rmse_axis / static_cast<double>(rows.size())).cwiseSqrt();
  if (count_final > 0) {
    m.rmse_final = std::sqrt(m.rmse_axis_final.sum() / (r * static_cast<double>(count_final)));
    m.rmse_axis_final = (m.rmse_axis_final / static_cast<double>(count_final)).cwiseSqrt();
    m.e_rms_final = std::sqrt(sq_e_final / static_cast<double>(count_final));
  }
  return m;
}

}  // namespace dmrac::harness
