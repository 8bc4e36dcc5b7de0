#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dissipham/ensemble.hpp"
#include "dissipham/substitute.hpp"
#include "dissipham/verify.hpp"

namespace dissipham {

/// 17 significant digits: round-trips any double, and identical inputs
/// yield byte-identical files.
inline std::string format17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// Write-temp-then-rename so readers never observe a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

/// t, q_1..q_n, p_1..p_n, H, W, hatH at the trajectory nodes.
inline std::string trajectory_csv(const SubstitutingSystem& sub) {
  const Trajectory& traj = sub.curve();
  const int n = traj.dof();
  std::ostringstream os;
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",q_" << i;
  for (int i = 1; i <= n; ++i) os << ",p_" << i;
  os << ",H,W,hatH\n";
  for (int j = 0; j < traj.size(); ++j) {
    const double t = traj.node_time(j);
    const Vec& y = traj.node_state(j);
    os << format17(t);
    for (int i = 0; i < 2 * n; ++i) os << "," << format17(y(i));
    const double h = mechanical_energy(sub.system(), PhaseState::from_flat(y, t));
    const double w = sub.work(t);
    os << "," << format17(h) << "," << format17(w) << "," << format17(h + w) << "\n";
  }
  return os.str();
}

/// One row per monotone segment.
inline std::string segments_csv(const SubstitutingSystem& sub) {
  std::ostringstream os;
  os << "coord,segment,direction,frozen,t_begin,t_end,q_min,q_max,samples\n";
  for (int i = 0; i < sub.system().dof(); ++i) {
    const auto& segs = sub.segments(i);
    for (size_t s = 0; s < segs.size(); ++s) {
      const auto& seg = segs[s];
      os << (i + 1) << "," << s << "," << seg.direction() << "," << (seg.frozen() ? 1 : 0)
         << "," << format17(seg.t_begin()) << "," << format17(seg.t_end()) << ","
         << format17(seg.q_min()) << "," << format17(seg.q_max()) << ","
         << (seg.frozen() ? 0 : seg.table().size()) << "\n";
    }
  }
  return os.str();
}

/// Downsampled per-segment force tables (plot-ready).
inline std::string segment_tables_csv(const SubstitutingSystem& sub, int max_rows_per_segment = 512) {
  std::ostringstream os;
  os << "coord,segment,q,G\n";
  for (int i = 0; i < sub.system().dof(); ++i) {
    const auto& segs = sub.segments(i);
    for (size_t s = 0; s < segs.size(); ++s) {
      const auto& seg = segs[s];
      if (seg.frozen()) continue;
      const auto& xs = seg.table().abscissae();
      const auto& ys = seg.table().values();
      const size_t stride = std::max<size_t>(1, xs.size() / static_cast<size_t>(max_rows_per_segment));
      for (size_t r = 0; r < xs.size(); r += stride) {
        os << (i + 1) << "," << s << "," << format17(xs[r]) << "," << format17(ys[r]) << "\n";
      }
      if ((xs.size() - 1) % stride != 0) {
        os << (i + 1) << "," << s << "," << format17(xs.back()) << "," << format17(ys.back())
           << "\n";
      }
    }
  }
  return os.str();
}

/// t, W_1..W_n, W at uniform sample times.
inline std::string work_csv(const SubstitutingSystem& sub, int samples = 1000) {
  const Trajectory& traj = sub.curve();
  const int n = traj.dof();
  std::ostringstream os;
  os << "t";
  for (int i = 1; i <= n; ++i) os << ",W_" << i;
  os << ",W\n";
  for (int j = 0; j < samples; ++j) {
    const double t = traj.t_begin() + (traj.t_end() - traj.t_begin()) * j / (samples - 1);
    os << format17(t);
    for (int i = 0; i < n; ++i) os << "," << format17(sub.work_coordinate(i, t));
    os << "," << format17(sub.work(t)) << "\n";
  }
  return os.str();
}

inline std::string grid_csv(const QuadratureGrid& grid) {
  std::ostringstream os;
  os << "node";
  for (int d = 0; d < 2 * grid.dof(); ++d) os << ",a_" << (d + 1);
  os << ",weight\n";
  for (int k = 0; k < grid.size(); ++k) {
    os << k;
    for (int d = 0; d < grid.nodes[static_cast<size_t>(k)].size(); ++d) {
      os << "," << format17(grid.nodes[static_cast<size_t>(k)](d));
    }
    os << "," << format17(grid.weights[static_cast<size_t>(k)]) << "\n";
  }
  return os.str();
}

/// t, K_hat, drift over uniform sample times.
inline std::string khat_csv(const EnsembleField& field, int samples = 400) {
  std::ostringstream os;
  os << "t,K_hat,drift\n";
  const double t0 = field.t_begin(), t1 = field.t_end();
  const double k0 = functional_K(field, t0);
  for (int j = 0; j < samples; ++j) {
    const double t = t0 + (t1 - t0) * j / (samples - 1);
    const double k = functional_K(field, t);
    os << format17(t) << "," << format17(k) << "," << format17(k - k0) << "\n";
  }
  return os.str();
}

/// Bracket-equation residual series at uniform interior times.
inline std::string ensemble_residuals_csv(const EnsembleField& field, int samples = 25) {
  std::ostringstream os;
  os << "t,pi_residual,q_residual,method\n";
  const double t0 = field.t_begin(), t1 = field.t_end();
  for (int j = 0; j < samples; ++j) {
    const double t = t0 + (t1 - t0) * (j + 0.5) / samples;
    const HamiltonResidual r = hamilton_residual(field, t);
    os << format17(t) << "," << format17(r.pi_residual) << "," << format17(r.q_residual) << ","
       << r.method << "\n";
  }
  return os.str();
}

/// JSON report: deterministic field order, no volatile entries (runtimes
/// stay on the console).
inline std::string report_json(const VerificationReport& report) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& e : report.entries) {
    nlohmann::ordered_json item;
    item["check"] = e.check;
    item["scenario"] = e.scenario;
    item["residual"] = e.residual;
    item["tolerance"] = e.tolerance;
    item["pass"] = e.pass();
    if (!e.note.empty()) item["note"] = e.note;
    arr.push_back(std::move(item));
  }
  return arr.dump(2) + "\n";
}

inline std::string report_table(const VerificationReport& report) {
  std::ostringstream os;
  size_t wc = 5, ws = 8;
  for (const auto& e : report.entries) {
    wc = std::max(wc, e.check.size());
    ws = std::max(ws, e.scenario.size());
  }
  auto pad = [](const std::string& s, size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  os << pad("check", wc) << "  " << pad("scenario", ws) << "  " << pad("residual", 13) << "  "
     << pad("tolerance", 13) << "  result\n";
  for (const auto& e : report.entries) {
    char res[32], tol[32];
    std::snprintf(res, sizeof(res), "%13.6e", e.residual);
    std::snprintf(tol, sizeof(tol), "%13.6e", e.tolerance);
    os << pad(e.check, wc) << "  " << pad(e.scenario, ws) << "  " << res << "  " << tol << "  "
       << (e.pass() ? "PASS" : "FAIL") << "\n";
  }
  return os.str();
}

}  // namespace dissipham
