#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dissipwave/cli.hpp"

#ifndef DISSIPWAVE_VERSION
#define DISSIPWAVE_VERSION "unknown"
#endif

namespace dissipwave {

std::string version_string() { return DISSIPWAVE_VERSION; }

namespace {

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.16e", v);
  return buf;
}

nlohmann::json witness_json(const DampingWitness& w) {
  return {{"t", w.t}, {"x", {w.x[0], w.x[1], w.x[2]}}, {"eigenvalue", w.eigenvalue}};
}

}  // namespace

std::string series_csv_header() {
  return "t,E,Z0,Z1,Z2,Z_total,G,G_tilde,boundary_flux,support_radius,comp_ratio,H_running";
}

void write_series_csv(const DiagnosticsSeries& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << series_csv_header() << '\n';
  for (std::size_t k = 0; k < series.records.size(); ++k) {
    const auto& r = series.records[k];
    const auto z = [&](std::size_t m) { return m < r.Z.size() ? r.Z[m] : 0.0; };
    const double cols[] = {r.t,
                           r.E,
                           z(0),
                           z(1),
                           z(2),
                           r.Z_total,
                           r.G,
                           r.G_tilde,
                           r.boundary_flux,
                           series.support_radius[k],
                           r.comparability_ratio,
                           series.H_running[k]};
    std::string line;
    for (std::size_t c = 0; c < std::size(cols); ++c) {
      if (c) line += ',';
      line += sci(cols[c]);
    }
    out << line << '\n';
  }
}

std::vector<double> CsvSeries::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  if (it == columns.end()) throw std::runtime_error("no column " + name);
  const auto c = static_cast<std::size_t>(it - columns.begin());
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.at(c));
  return out;
}

CsvSeries read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  CsvSeries s;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + " is empty");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) s.columns.push_back(cell);
  }
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (row.size() != s.columns.size()) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) + ": wrong column count");
    }
    s.rows.push_back(std::move(row));
  }
  return s;
}

void write_decay_svg(const DiagnosticsSeries& series, const std::filesystem::path& path) {
  constexpr double W = 640, Hh = 420, L = 70, Rm = 20, T = 20, B = 50;
  const auto times = record_times(series);
  const auto l2z = functional_values(series, "L2_plus_Z");
  const auto energy = functional_values(series, "E");

  std::vector<std::pair<double, double>> pts_a, pts_b;
  double xmax = 1.0, ymin = 1e300, ymax = -1e300;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double x = 1.0 + times[k];
    xmax = std::max(xmax, x);
    for (double y : {l2z[k], energy[k]}) {
      if (y > 0.0) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
    if (l2z[k] > 0.0) pts_a.emplace_back(x, l2z[k]);
    if (energy[k] > 0.0) pts_b.emplace_back(x, energy[k]);
  }
  if (ymin > ymax) {
    ymin = 1e-3;
    ymax = 1.0;
  }
  const double lx0 = 0.0, lx1 = std::max(std::log10(xmax), 0.5);
  double ly0 = std::floor(std::log10(ymin)), ly1 = std::ceil(std::log10(ymax));
  if (ly1 <= ly0) ly1 = ly0 + 1;
  const auto px = [&](double x) { return L + (std::log10(x) - lx0) / (lx1 - lx0) * (W - L - Rm); };
  const auto py = [&](double y) { return Hh - B - (std::log10(y) - ly0) / (ly1 - ly0) * (Hh - T - B); };

  const auto polyline = [&](const std::vector<std::pair<double, double>>& pts, const char* colour,
                            const char* dash) {
    std::ostringstream os;
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\"";
    if (dash) os << " stroke-dasharray=\"" << dash << "\"";
    os << " points=\"";
    for (const auto& [x, y] : pts) {
      const double yy = std::clamp(y, std::pow(10.0, ly0), std::pow(10.0, ly1));
      os << px(x) << ',' << py(yy) << ' ';
    }
    os << "\"/>\n";
    return os.str();
  };

  // Envelopes anchored at the first positive value of each curve.
  const auto envelope = [&](const std::vector<std::pair<double, double>>& pts, double power) {
    std::vector<std::pair<double, double>> env;
    if (pts.empty()) return env;
    const double c = pts.front().second * std::pow(pts.front().first, -power);
    for (int k = 0; k <= 64; ++k) {
      const double x = std::pow(10.0, lx0 + (lx1 - lx0) * k / 64.0);
      env.emplace_back(x, c * std::pow(x, power));
    }
    return env;
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << Hh
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - Rm << "\" height=\"" << Hh - T - B
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int e = static_cast<int>(ly0); e <= static_cast<int>(ly1); ++e) {
    const double y = py(std::pow(10.0, e));
    out << "<line x1=\"" << L << "\" x2=\"" << W - Rm << "\" y1=\"" << y << "\" y2=\"" << y
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">1e" << e << "</text>\n";
  }
  for (int e = 0; e <= static_cast<int>(std::floor(lx1)); ++e) {
    const double x = px(std::pow(10.0, e));
    out << "<line x1=\"" << x << "\" x2=\"" << x << "\" y1=\"" << T << "\" y2=\"" << Hh - B
        << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << x << "\" y=\"" << Hh - B + 16 << "\" text-anchor=\"middle\">1e" << e << "</text>\n";
  }
  out << "<text x=\"" << (L + W - Rm) / 2 << "\" y=\"" << Hh - 12 << "\" text-anchor=\"middle\">1 + t</text>\n";

  out << polyline(envelope(pts_a, -1.0), "#1f77b4", "4 3");
  out << polyline(envelope(pts_b, -2.0), "#d62728", "4 3");
  out << polyline(pts_a, "#1f77b4", nullptr);
  out << polyline(pts_b, "#d62728", nullptr);

  out << "<text x=\"" << W - Rm - 8 << "\" y=\"" << T + 16
      << "\" text-anchor=\"end\" fill=\"#1f77b4\">||v||^2 + Z  (dashed: (1+t)^-1)</text>\n";
  out << "<text x=\"" << W - Rm - 8 << "\" y=\"" << T + 32
      << "\" text-anchor=\"end\" fill=\"#d62728\">E  (dashed: (1+t)^-2)</text>\n";
  out << "</svg>\n";
}

nlohmann::json to_json(const DampingAudit& a) {
  nlohmann::json b4 = nlohmann::json::array();
  for (const auto& e : a.B4_table) b4.push_back({{"multi_index", e.multi_index}, {"order", e.order}, {"ratio", e.ratio}});
  return {{"lambda", a.lambda},
          {"B1_pass", a.B1_pass},
          {"B2_pass", a.B2_pass},
          {"B3_pass", a.B3_pass},
          {"B4_pass", a.B4_pass},
          {"B1_witness", witness_json(a.B1_witness)},
          {"B2_witness", witness_json(a.B2_witness)},
          {"B3_witness", witness_json(a.B3_witness)},
          {"B4_table", b4}};
}

nlohmann::json to_json(const ExponentFit& f) {
  return {{"alpha", f.alpha}, {"ci_lo", f.ci_lo},   {"ci_hi", f.ci_hi},
          {"points", f.points}, {"t_lo", f.t_lo}, {"t_hi", f.t_hi}};
}

}  // namespace dissipwave
