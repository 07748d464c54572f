#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "dissipwave/cli.hpp"

namespace dissipwave {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::optional<double> to_double(const std::string& s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <typename T>
std::optional<T> to_integer(const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  const auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

std::optional<bool> to_bool(const std::string& s) {
  if (s == "true" || s == "yes" || s == "on" || s == "1") return true;
  if (s == "false" || s == "no" || s == "off" || s == "0") return false;
  return std::nullopt;
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

/// Setter returns an error message or "".
struct KeyDef {
  std::string key;
  std::function<std::string(ExperimentConfig&, const std::string&)> set;
  /// nullopt when the value is unset and must not be echoed.
  std::function<std::optional<std::string>(const ExperimentConfig&)> get;
};

KeyDef real(std::string key, double ExperimentConfig::*m) {
  return {key,
          [m](ExperimentConfig& c, const std::string& s) -> std::string {
            const auto v = to_double(s);
            if (!v) return "expected a real number, got '" + s + "'";
            c.*m = *v;
            return {};
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> { return format_double(c.*m); }};
}

KeyDef optional_real(std::string key, std::optional<double> ExperimentConfig::*m) {
  return {key,
          [m](ExperimentConfig& c, const std::string& s) -> std::string {
            if (s == "auto") {
              (c.*m).reset();
              return {};
            }
            const auto v = to_double(s);
            if (!v) return "expected a real number or 'auto', got '" + s + "'";
            c.*m = *v;
            return {};
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> {
            if (!(c.*m)) return std::nullopt;
            return format_double(*(c.*m));
          }};
}

KeyDef integer(std::string key, int ExperimentConfig::*m) {
  return {key,
          [m](ExperimentConfig& c, const std::string& s) -> std::string {
            const auto v = to_integer<int>(s);
            if (!v) return "expected an integer, got '" + s + "'";
            c.*m = *v;
            return {};
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> { return std::to_string(c.*m); }};
}

KeyDef unsigned64(std::string key, std::uint64_t ExperimentConfig::*m) {
  return {key,
          [m](ExperimentConfig& c, const std::string& s) -> std::string {
            const auto v = to_integer<std::uint64_t>(s);
            if (!v) return "expected an unsigned integer, got '" + s + "'";
            c.*m = *v;
            return {};
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> { return std::to_string(c.*m); }};
}

KeyDef boolean(std::string key, bool ExperimentConfig::*m) {
  return {key,
          [m](ExperimentConfig& c, const std::string& s) -> std::string {
            const auto v = to_bool(s);
            if (!v) return "expected true or false, got '" + s + "'";
            c.*m = *v;
            return {};
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> {
            return std::string(c.*m ? "true" : "false");
          }};
}

KeyDef text(std::string key, std::string ExperimentConfig::*m) {
  return {key,
          [m](ExperimentConfig& c, const std::string& s) -> std::string {
            c.*m = unquote(s);
            return {};
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> { return c.*m; }};
}

KeyDef real_list(std::string key, std::vector<double> ExperimentConfig::*m) {
  return {key,
          [m](ExperimentConfig& c, const std::string& s) -> std::string {
            std::vector<double> out;
            std::stringstream ss(s);
            std::string item;
            while (std::getline(ss, item, ',')) {
              const auto v = to_double(trim(item));
              if (!v) return "expected a comma-separated list of reals, got '" + s + "'";
              out.push_back(*v);
            }
            c.*m = out;
            return {};
          },
          [m](const ExperimentConfig& c) -> std::optional<std::string> {
            std::string out;
            for (std::size_t k = 0; k < (c.*m).size(); ++k) {
              if (k) out += ", ";
              out += format_double((c.*m)[k]);
            }
            return out;
          }};
}

const std::vector<KeyDef>& key_table() {
  using C = ExperimentConfig;
  static const std::vector<KeyDef> table{
      integer("geometry.dim", &C::dim),
      real("geometry.dx", &C::dx),
      real("geometry.extent", &C::extent),
      text("geometry.obstacle", &C::obstacle),
      real("geometry.radius", &C::radius),
      integer("geometry.star_points", &C::star_points),
      real("geometry.star_outer", &C::star_outer),
      real("geometry.star_inner", &C::star_inner),
      real("geometry.bite_x", &C::bite_x),
      real("geometry.bite_radius", &C::bite_radius),
      real("damping.b0", &C::b0),
      real("damping.R", &C::R),
      optional_real("damping.cutoff_inner", &C::cutoff_inner),
      text("damping.profile", &C::profile),
      text("damping.matrix_mode", &C::matrix_mode),
      real("damping.anisotropy", &C::anisotropy),
      real("damping.sign", &C::sign),
      text("nonlinearity.form", &C::form),
      real("nonlinearity.kappa", &C::kappa),
      real("nonlinearity.gamma", &C::gamma),
      real("data.delta", &C::delta),
      real("data.M", &C::M),
      text("data.shape", &C::shape),
      real("data.center_x", &C::center_x),
      real("data.center_y", &C::center_y),
      real("data.center_z", &C::center_z),
      real("data.bump_radius", &C::bump_radius),
      real("data.ring_width", &C::ring_width),
      real("data.velocity_ratio", &C::velocity_ratio),
      unsigned64("data.seed", &C::seed),
      optional_real("run.dt", &C::dt),
      real("run.t_final", &C::t_final),
      integer("run.record_stride", &C::record_stride),
      integer("run.mu_max", &C::mu_max),
      real("rescale.lambda", &C::lambda),
      boolean("monitor.lyapunov", &C::lyapunov),
      real("monitor.c_tol", &C::c_tol),
      boolean("monitor.comparability", &C::comparability),
      real("monitor.band", &C::band),
      boolean("monitor.rates", &C::rates),
      real("monitor.fit_t_lo", &C::fit_t_lo),
      real("monitor.fit_t_hi", &C::fit_t_hi),
      real("monitor.alpha_L2Z", &C::alpha_L2Z),
      real("monitor.alpha_E", &C::alpha_E),
      boolean("monitor.bootstrap", &C::bootstrap),
      boolean("monitor.flux", &C::flux),
      real("monitor.support_threshold", &C::support_threshold),
      real("monitor.eps_speed", &C::eps_speed),
      real("monitor.C1", &C::C1),
      boolean("monitor.require_audits", &C::require_audits),
      real_list("monitor.audit_times", &C::audit_times),
      integer("monitor.poincare_trials", &C::poincare_trials),
      boolean("monitor.track_w", &C::track_w),
      optional_real("weight.A", &C::weight_A),
      text("output.csv", &C::csv),
      text("output.summary", &C::summary),
      text("output.plot", &C::plot),
  };
  return table;
}

void validate(ExperimentConfig& c, const std::map<std::string, int>& lines, std::vector<ConfigIssue>& issues) {
  const auto fail = [&](const std::string& key, const std::string& msg) {
    const auto it = lines.find(key);
    issues.push_back({it == lines.end() ? 0 : it->second, key, msg});
  };

  if (c.dim != 2 && c.dim != 3) fail("geometry.dim", "dim must be 2 or 3");
  if (!(c.dx > 0.0)) fail("geometry.dx", "dx must be positive");
  if (!(c.extent > 0.0)) fail("geometry.extent", "extent must be positive");
  bool obstacle_ok = true;
  if (c.obstacle == "ball" || c.obstacle == "crescent") {
    if (!(c.radius > 0.0)) {
      fail("geometry.radius", "radius must be positive");
      obstacle_ok = false;
    }
    if (c.obstacle == "crescent" && !(c.bite_radius > 0.0)) {
      fail("geometry.bite_radius", "bite_radius must be positive");
      obstacle_ok = false;
    }
  } else if (c.obstacle == "star") {
    if (c.star_points < 3) {
      fail("geometry.star_points", "star_points must be at least 3");
      obstacle_ok = false;
    }
    if (!(c.star_inner > 0.0 && c.star_inner < c.star_outer)) {
      fail("geometry.star_inner", "star radii must satisfy 0 < star_inner < star_outer");
      obstacle_ok = false;
    }
  } else {
    fail("geometry.obstacle", "obstacle must be ball, star or crescent, got '" + c.obstacle + "'");
    obstacle_ok = false;
  }
  const bool geometry_ok = obstacle_ok && (c.dim == 2 || c.dim == 3) && c.dx > 0.0 && c.extent > 0.0;
  if (geometry_ok && make_obstacle(c).bounding_radius() >= c.extent) {
    fail("geometry.extent", "the obstacle does not fit in the box");
  }

  if (!(c.b0 > 0.0)) fail("damping.b0", "b0 must be positive");
  if (!(c.R > 0.0)) fail("damping.R", "R must be positive");
  if (c.cutoff_inner && !(*c.cutoff_inner >= 0.0 && *c.cutoff_inner < c.R)) {
    fail("damping.cutoff_inner", "cutoff_inner must lie in [0, R)");
  }
  try {
    parse_time_profile(c.profile);
  } catch (const std::exception& e) {
    fail("damping.profile", e.what());
  }
  try {
    parse_matrix_mode(c.matrix_mode);
  } catch (const std::exception& e) {
    fail("damping.matrix_mode", e.what());
  }
  if (c.anisotropy < 0.0) fail("damping.anisotropy", "anisotropy must be nonnegative");
  if (c.sign != 1.0 && c.sign != -1.0) fail("damping.sign", "sign must be 1 or -1");

  if (c.form != "zero" && c.form != "semilinear" && c.form != "quasilinear") {
    fail("nonlinearity.form", "form must be zero, semilinear or quasilinear, got '" + c.form + "'");
  }
  if (c.gamma < 0.0) fail("nonlinearity.gamma", "gamma must be nonnegative");

  if (c.delta < 0.0) fail("data.delta", "delta must be nonnegative");
  if (!(c.M > 0.0)) fail("data.M", "M must be positive");
  if (c.extent > 0.0 && c.M >= c.extent) fail("data.M", "M must be smaller than the box extent");
  try {
    parse_data_shape(c.shape);
  } catch (const std::exception& e) {
    fail("data.shape", e.what());
  }
  if (!(c.bump_radius > 0.0)) fail("data.bump_radius", "bump_radius must be positive");
  if (!(c.ring_width > 0.0)) fail("data.ring_width", "ring_width must be positive");

  if (!(c.t_final >= 0.0)) fail("run.t_final", "t_final must be nonnegative");
  if (c.record_stride < 1) fail("run.record_stride", "record_stride must be at least 1");
  if (c.mu_max < 0 || c.mu_max > 4) fail("run.mu_max", "mu_max must lie in [0, 4]");

  if (!is_power_of_two(c.lambda)) fail("rescale.lambda", "lambda must be a power of two");

  if (!(c.c_tol >= 0.0)) fail("monitor.c_tol", "c_tol must be nonnegative");
  if (!(c.band >= 1.0)) fail("monitor.band", "band must be at least 1");
  if (!(c.fit_t_lo < c.fit_t_hi)) fail("monitor.fit_t_lo", "fit_t_lo must be below fit_t_hi");
  if (!(c.support_threshold > 0.0 && c.support_threshold < 1.0)) {
    fail("monitor.support_threshold", "support_threshold must lie in (0, 1)");
  }
  if (!(c.eps_speed >= 0.0)) fail("monitor.eps_speed", "eps_speed must be nonnegative");
  if (!(c.C1 > 0.0)) fail("monitor.C1", "C1 must be positive");
  if (c.audit_times.empty()) fail("monitor.audit_times", "audit_times must list at least one time");
  for (double t : c.audit_times) {
    if (t < 0.0) {
      fail("monitor.audit_times", "audit_times must be nonnegative");
      break;
    }
  }
  if (c.poincare_trials < 0) fail("monitor.poincare_trials", "poincare_trials must be nonnegative");

  if (c.weight_A) {
    if (!(*c.weight_A > 0.0)) {
      fail("weight.A", "weight.A must be positive");
    } else if (c.dim == 2 && geometry_ok && is_power_of_two(c.lambda)) {
      const double r_min = domain_inner_radius(make_obstacle(c).rescaled(c.lambda), 2);
      if (*c.weight_A * r_min < 2.0) {
        std::ostringstream os;
        os << "weight.A = " << format_double(*c.weight_A)
           << " violates the side condition inf over the domain of A|x| >= 2 for the 2D weight |x| log(A|x|)"
           << " (inf |x| = " << r_min << ", so A must be at least " << 2.0 / r_min << ")";
        fail("weight.A", os.str());
      }
    }
  }

  const double cfl = c.dx > 0.0 && (c.dim == 2 || c.dim == 3) ? 0.9 * c.dx / std::sqrt(c.dim) : 0.0;
  if (c.dt) {
    if (!(*c.dt > 0.0)) {
      fail("run.dt", "dt must be positive");
    } else if (cfl > 0.0 && *c.dt > cfl * (1.0 + 1e-12)) {
      fail("run.dt", "dt = " + format_double(*c.dt) + " exceeds the CFL limit " + format_double(cfl));
    }
  } else if (cfl > 0.0) {
    c.dt = cfl;
  }
}

}  // namespace

ConfigParseError::ConfigParseError(std::vector<ConfigIssue> issues)
    : ConfigError([&] {
        std::ostringstream os;
        for (std::size_t k = 0; k < issues.size(); ++k) {
          if (k) os << '\n';
          if (issues[k].line > 0) os << "line " << issues[k].line << ": ";
          os << issues[k].key << ": " << issues[k].message;
        }
        return os.str();
      }()),
      issues_(std::move(issues)) {}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : key_table()) out.push_back(k.key);
  return out;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig c;
  std::vector<ConfigIssue> issues;
  std::map<std::string, int> lines;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      issues.push_back({line_no, line, "expected 'key = value'"});
      continue;
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto& table = key_table();
    const auto it = std::find_if(table.begin(), table.end(), [&](const KeyDef& k) { return k.key == key; });
    if (it == table.end()) {
      issues.push_back({line_no, key, "unknown key"});
      continue;
    }
    if (lines.count(key)) {
      issues.push_back({line_no, key, "duplicate key (first set on line " + std::to_string(lines[key]) + ")"});
      continue;
    }
    lines[key] = line_no;
    if (const std::string err = it->set(c, value); !err.empty()) issues.push_back({line_no, key, err});
  }
  validate(c, lines, issues);
  if (!issues.empty()) {
    std::stable_sort(issues.begin(), issues.end(),
                     [](const ConfigIssue& a, const ConfigIssue& b) { return a.line < b.line; });
    throw ConfigParseError(std::move(issues));
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_text(const ExperimentConfig& config) {
  std::string out;
  std::string section;
  for (const auto& k : key_table()) {
    const auto value = k.get(config);
    if (!value) continue;
    const std::string sec = k.key.substr(0, k.key.find('.'));
    if (sec != section) {
      if (!section.empty()) out += '\n';
      section = sec;
    }
    out += k.key + " = " + *value + '\n';
  }
  return out;
}

Obstacle make_obstacle(const ExperimentConfig& c) {
  if (c.obstacle == "star") {
    return Obstacle(StarPolygon{c.star_points, c.star_outer, c.star_inner, 0.0});
  }
  if (c.obstacle == "crescent") {
    return Obstacle(Crescent{c.radius, Point{c.bite_x, 0.0, 0.0}, c.bite_radius});
  }
  return Obstacle(Ball{c.radius});
}

double domain_inner_radius(const Obstacle& obstacle, int dim) {
  if (!obstacle.contains(Point{0.0, 0.0, 0.0})) return 0.0;
  const double r_max = obstacle.bounding_radius() * 1.01 + 1e-12;
  const double step = r_max / 2000.0;
  // First exit radius along a ray from the origin: march, then bisect.
  const auto exit_radius = [&](const Point& dir) {
    const auto inside = [&](double r) { return obstacle.contains(Point{r * dir[0], r * dir[1], r * dir[2]}); };
    double lo = 0.0;
    double hi = step;
    while (hi < r_max && inside(hi)) {
      lo = hi;
      hi += step;
    }
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      (inside(mid) ? lo : hi) = mid;
    }
    return hi;
  };

  if (dim == 2) {
    const int rays = 3600;
    const double da = 2.0 * std::numbers::pi / rays;
    const auto at = [&](double a) { return exit_radius(Point{std::cos(a), std::sin(a), 0.0}); };
    double best = r_max;
    double best_a = 0.0;
    for (int k = 0; k < rays; ++k) {
      const double r = at(k * da);
      if (r < best) {
        best = r;
        best_a = k * da;
      }
    }
    // Ternary search around the best ray resolves notch vertices.
    double lo = best_a - da, hi = best_a + da;
    for (int it = 0; it < 80; ++it) {
      const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
      if (at(m1) < at(m2)) {
        hi = m2;
      } else {
        lo = m1;
      }
    }
    return std::min(best, at(0.5 * (lo + hi)));
  }

  const int rays = 4000;
  double best = r_max;
  for (int k = 0; k < rays; ++k) {
    // Fibonacci sphere.
    const double z = 1.0 - 2.0 * (k + 0.5) / rays;
    const double a = std::numbers::pi * (3.0 - std::sqrt(5.0)) * k;
    const double s = std::sqrt(1.0 - z * z);
    best = std::min(best, exit_radius(Point{s * std::cos(a), s * std::sin(a), z}));
  }
  return best;
}

DampingModel make_damping_model(const ExperimentConfig& c) {
  DampingModel m;
  m.b0 = c.b0;
  m.R = c.R;
  m.cutoff_inner = c.cutoff_inner ? *c.cutoff_inner
                                  : DampingModel::default_cutoff_inner(make_obstacle(c).bounding_radius(), c.R);
  m.time_profile = parse_time_profile(c.profile);
  m.matrix_mode = parse_matrix_mode(c.matrix_mode);
  m.anisotropy = c.anisotropy;
  m.sign = c.sign;
  return m;
}

NonlinearForm make_form(const ExperimentConfig& c) {
  if (c.form == "semilinear") return catalog::semilinear(c.kappa);
  if (c.form == "quasilinear") return catalog::quasilinear(c.gamma);
  return catalog::zero();
}

InitialDataSpec make_data_spec(const ExperimentConfig& c) {
  InitialDataSpec s;
  s.amplitude = c.delta;
  s.support_radius = c.M;
  s.shape = parse_data_shape(c.shape);
  s.center = {c.center_x, c.center_y, c.dim == 3 ? c.center_z : 0.0};
  s.bump_radius = c.bump_radius;
  s.ring_width = c.ring_width;
  s.velocity_ratio = c.velocity_ratio;
  return s;
}

Problem build_problem(const ExperimentConfig& c) {
  const GridSpec grid{c.dim, c.dx, c.extent, make_obstacle(c)};
  const double dt = c.dt ? *c.dt : 0.0;
  Problem base = make_problem(grid, make_damping_model(c), make_form(c), make_data_spec(c), dt, c.mu_max,
                              c.audit_times);
  if (c.lambda == 1.0) return base;
  return rescale_problem(base, c.lambda, c.audit_times, false);
}

RunOptions make_run_options(const ExperimentConfig& c) {
  RunOptions o;
  o.t_final = c.t_final / c.lambda;
  o.record_stride = c.record_stride;
  o.support_threshold_rel = c.support_threshold;
  o.eps_speed = c.eps_speed;
  o.C1 = c.C1;
  o.track_w = c.track_w;
  o.weight_A = c.weight_A ? *c.weight_A : 0.0;
  return o;
}

}  // namespace dissipwave
