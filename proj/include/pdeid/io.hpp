#pragma once

#include "pdeid/caslr.hpp"
#include "pdeid/dictionary.hpp"
#include "pdeid/grid.hpp"
#include "pdeid/spectral.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace pdeid {

using Json = nlohmann::json;

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Json grid_to_json(const SpaceTimeGrid& g) {
  Json j;
  j["space_points"] = g.space_points();
  Json ext = Json::array();
  for (int a = 0; a < g.dim(); ++a)
    ext.push_back({g.space_extent(a).lo, g.space_extent(a).hi});
  j["space_extent"] = ext;
  Json per = Json::array();
  for (int a = 0; a < g.dim(); ++a) per.push_back(g.periodic(a));
  j["periodic"] = per;
  j["time_points"] = g.time_points();
  j["time_extent"] = {g.time_extent().lo, g.time_extent().hi};
  return j;
}

inline SpaceTimeGrid grid_from_json(const Json& j) {
  std::vector<int> sp = j.at("space_points").get<std::vector<int>>();
  std::vector<Interval> ext;
  for (const auto& e : j.at("space_extent")) ext.push_back({e.at(0), e.at(1)});
  std::vector<bool> per = j.at("periodic").get<std::vector<bool>>();
  Interval text{j.at("time_extent").at(0), j.at("time_extent").at(1)};
  return SpaceTimeGrid(sp, ext, per, j.at("time_points").get<int>(), text);
}

/// Binary trajectory container: magic, little-endian u32 header length, JSON
/// header (grid, field names, provenance), then one row-major float64 array
/// per field with dims (space..., time).
inline void save_trajectory(const std::filesystem::path& path, const TrajectoryField& traj,
                            const Json& provenance = Json::object()) {
  Json header;
  header["grid"] = grid_to_json(traj.grid());
  header["fields"] = traj.field_names();
  header["provenance"] = provenance;
  const std::string htext = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("save_trajectory: cannot open " + path.string());
  out.write("PDETRAJ1", 8);
  const std::uint32_t len = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(htext.data(), htext.size());
  for (int f = 0; f < traj.field_count(); ++f) {
    const Matrix& m = traj.field(f);
    // Row-major (space, time): each spatial row's time series is contiguous.
    std::vector<double> row(m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) row[c] = m(r, c);
      out.write(reinterpret_cast<const char*>(row.data()), row.size() * sizeof(double));
    }
  }
  if (!out) throw DataError("save_trajectory: write failed for " + path.string());
}

inline TrajectoryField load_trajectory(const std::filesystem::path& path,
                                       Json* provenance = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("load_trajectory: cannot open " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (std::string(magic, 8) != "PDETRAJ1")
    throw DataError("load_trajectory: bad magic in " + path.string());
  std::uint32_t len = 0;
  in.read(reinterpret_cast<char*>(&len), 4);
  std::string htext(len, '\0');
  in.read(htext.data(), len);
  const Json header = Json::parse(htext);
  if (provenance) *provenance = header.value("provenance", Json::object());
  SpaceTimeGrid grid = grid_from_json(header.at("grid"));
  TrajectoryField traj(grid);
  for (const auto& name : header.at("fields")) {
    Matrix m(grid.flat_space_size(), grid.time_points());
    std::vector<double> row(m.cols());
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      in.read(reinterpret_cast<char*>(row.data()), row.size() * sizeof(double));
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[c];
    }
    if (!in) throw DataError("load_trajectory: truncated data in " + path.string());
    traj.add_field(name.get<std::string>(), std::move(m));
  }
  return traj;
}

/// Wide CSV for 1D fields: header row of times, then one row per space point.
inline void write_csv_1d(const std::filesystem::path& path, const TrajectoryField& traj,
                         int field = 0) {
  const SpaceTimeGrid& g = traj.grid();
  if (g.dim() != 1) throw ConfigError("write_csv_1d: 1D trajectories only");
  std::ofstream out(path);
  if (!out) throw DataError("write_csv_1d: cannot open " + path.string());
  out << "# pdeid trajectory field=" << traj.field_names()[field]
      << " generated=" << timestamp_utc() << "\n";
  out << "x/t";
  for (int k = 0; k < g.time_points(); ++k) out << ',' << format_double(g.t(k));
  out << '\n';
  const Matrix& m = traj.field(field);
  for (int i = 0; i < g.space_points(0); ++i) {
    out << format_double(g.x(0, i));
    for (int k = 0; k < g.time_points(); ++k) out << ',' << format_double(m(i, k));
    out << '\n';
  }
}

inline void write_svd_csv(const std::filesystem::path& path, const SvdReport& rep) {
  std::ofstream out(path);
  if (!out) throw DataError("write_svd_csv: cannot open " + path.string());
  out << "# pdeid svd-report window=[" << format_double(rep.t_start) << ','
      << format_double(rep.t_end) << "] generated=" << timestamp_utc() << "\n";
  out << "index,singular_value,cumulative_energy\n";
  const double total = rep.singular_values.squaredNorm();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < rep.singular_values.size(); ++i) {
    acc += rep.singular_values[i] * rep.singular_values[i];
    out << i << ',' << format_double(rep.singular_values[i]) << ','
        << format_double(total > 0 ? acc / total : 0.0) << '\n';
  }
}

struct PatchReportRow {
  int patch_id = 0;
  std::vector<double> center;  // x..., t
  double beta = 0.0;
  bool kept_by_sobolev = true;
  bool kept_by_variation = true;
  double condition_ratio = 0.0;
};

inline void write_patch_report_csv(const std::filesystem::path& path,
                                   const std::vector<PatchReportRow>& rows, int dim) {
  std::ofstream out(path);
  if (!out) throw DataError("write_patch_report_csv: cannot open " + path.string());
  out << "# pdeid patch-report generated=" << timestamp_utc() << "\n";
  out << "patch_id,center_x";
  if (dim > 1) out << ",center_y";
  out << ",center_t,beta,kept_by_sobolev,kept_by_variation,condition_ratio\n";
  for (const auto& r : rows) {
    out << r.patch_id;
    for (double c : r.center) out << ',' << format_double(c);
    out << ',' << format_double(r.beta) << ',' << (r.kept_by_sobolev ? 1 : 0) << ','
        << (r.kept_by_variation ? 1 : 0) << ',' << format_double(r.condition_ratio)
        << '\n';
  }
}

/// JSON report of an identification run: chosen support as descriptor
/// strings, the per-level trace, and per-patch coefficients.
inline Json identification_to_json(const IdentificationResult& res, const Dictionary& dict) {
  Json j;
  j["chosen_level"] = res.chosen_level;
  Json sup = Json::array();
  for (int k : res.support) sup.push_back(dict.entry_string(k));
  j["support"] = sup;
  j["support_indices"] = res.support;
  j["rho"] = res.rho;
  j["rank_deficient"] = res.rank_deficient;
  Json trace = Json::array();
  for (const auto& t : res.trace)
    trace.push_back({{"level", t.level}, {"error", t.error}, {"score", t.score}});
  j["trace"] = trace;
  return j;
}

/// CSV coefficient table: one row per patch center with the recovered
/// coefficient of every support feature.
inline void write_coefficient_csv(const std::filesystem::path& path,
                                  const IdentificationResult& res, const Dictionary& dict,
                                  const std::vector<PatchRegressionSystem>& systems) {
  std::ofstream out(path);
  if (!out) throw DataError("write_coefficient_csv: cannot open " + path.string());
  out << "# pdeid coefficients generated=" << timestamp_utc() << "\n";
  const int d = systems.empty() ? 1 : static_cast<int>(systems[0].points.cols()) - 1;
  out << "patch_id,center_x";
  if (d > 1) out << ",center_y";
  out << ",center_t";
  for (int k : res.support) out << ",\"" << dict.entry_string(k) << "\"";
  out << '\n';
  for (std::size_t j = 0; j < systems.size(); ++j) {
    const auto& p = systems[j].patch;
    out << p.id;
    for (int a = 0; a < d; ++a)
      out << ',' << format_double(systems[j].points(systems[j].size() / 2, a));
    out << ',' << format_double(systems[j].points(systems[j].size() / 2, d));
    for (int c = 0; c < res.coefficients.cols(); ++c)
      out << ',' << format_double(res.coefficients(static_cast<int>(j), c));
    out << '\n';
  }
}

}  // namespace pdeid
