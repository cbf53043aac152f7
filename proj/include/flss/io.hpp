// File formats: CSV and binary matrices, spectrum tables, JSON run
// configuration, and JSON/CSV report emission. All writers are byte-stable:
// doubles are printed with shortest round-trip formatting and object keys
// are emitted in sorted order.
#pragma once

#include <Eigen/Dense>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "common.hpp"
#include "contour.hpp"
#include "inference.hpp"
#include "measures.hpp"
#include "montecarlo.hpp"

namespace flss::io {

using json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Number formatting.
// ---------------------------------------------------------------------------

inline std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw io_error("number formatting failed");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  // from_chars rejects leading whitespace and '+'; trim both
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string_view::npos) throw io_error("empty numeric field in " + where);
  s = s.substr(b, e - b + 1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw io_error("bad numeric field '" + std::string(s) + "' in " + where);
  return v;
}

namespace detail {

inline bool parses_as_double(std::string_view s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  std::size_t e = s.find_last_not_of(" \t\r");
  if (b == std::string_view::npos) return false;
  s = s.substr(b, e - b + 1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline std::ifstream open_in(const std::string& path, bool binary) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) throw io_error("cannot open '" + path + "' for reading");
  return f;
}

inline std::ofstream open_out(const std::string& path, bool binary) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw io_error("cannot open '" + path + "' for writing");
  return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CSV matrices: rows are variables, columns are observations. A first line
// with any non-numeric cell is treated as a header and skipped.
// ---------------------------------------------------------------------------

inline Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream f = detail::open_in(path, false);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto cells = detail::split_csv_line(line);
    if (first) {
      first = false;
      bool header = false;
      for (const auto& c : cells)
        if (!detail::parses_as_double(c)) header = true;
      if (header) continue;
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells)
      row.push_back(parse_double(c, path + ":" + std::to_string(lineno)));
    if (!rows.empty() && row.size() != rows.front().size())
      throw io_error("ragged row at " + path + ":" + std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error("no data rows in '" + path + "'");
  Eigen::MatrixXd M(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j) M(i, j) = rows[i][j];
  return M;
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M) {
  std::ofstream f = detail::open_out(path, false);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      if (j) f << ',';
      f << fmt_double(M(i, j));
    }
    f << '\n';
  }
  if (!f) throw io_error("write failed on '" + path + "'");
}

// ---------------------------------------------------------------------------
// Binary matrices: 16-byte header (magic "FLSS", u32 rows, u32 cols, u32
// dtype tag; 1 = float64), then the column-major payload, native-endian.
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDtypeF64 = 1;

inline void write_matrix_bin(const std::string& path, const Eigen::MatrixXd& M) {
  std::ofstream f = detail::open_out(path, true);
  char magic[4] = {'F', 'L', 'S', 'S'};
  std::uint32_t rows = std::uint32_t(M.rows()), cols = std::uint32_t(M.cols());
  std::uint32_t dtype = kDtypeF64;
  f.write(magic, 4);
  f.write(reinterpret_cast<const char*>(&rows), 4);
  f.write(reinterpret_cast<const char*>(&cols), 4);
  f.write(reinterpret_cast<const char*>(&dtype), 4);
  f.write(reinterpret_cast<const char*>(M.data()),
          std::streamsize(sizeof(double)) * M.size());
  if (!f) throw io_error("write failed on '" + path + "'");
}

inline Eigen::MatrixXd read_matrix_bin(const std::string& path) {
  std::ifstream f = detail::open_in(path, true);
  char magic[4];
  std::uint32_t rows = 0, cols = 0, dtype = 0;
  f.read(magic, 4);
  f.read(reinterpret_cast<char*>(&rows), 4);
  f.read(reinterpret_cast<char*>(&cols), 4);
  f.read(reinterpret_cast<char*>(&dtype), 4);
  if (!f || std::memcmp(magic, "FLSS", 4) != 0)
    throw io_error("'" + path + "' is not a FLSS binary matrix");
  if (dtype != kDtypeF64)
    throw io_error("unsupported dtype tag " + std::to_string(dtype) + " in '" + path + "'");
  if (rows == 0 || cols == 0 || double(rows) * double(cols) > 5e8)
    throw io_error("implausible dimensions in '" + path + "'");
  Eigen::MatrixXd M(rows, cols);
  f.read(reinterpret_cast<char*>(M.data()), std::streamsize(sizeof(double)) * M.size());
  if (!f) throw io_error("truncated payload in '" + path + "'");
  return M;
}

// Dispatch on extension: .bin uses the binary container, anything else CSV.
inline Eigen::MatrixXd read_matrix(const std::string& path) {
  if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0)
    return read_matrix_bin(path);
  return read_matrix_csv(path);
}

// ---------------------------------------------------------------------------
// Spectrum tables: CSV with header `value,weight`.
// ---------------------------------------------------------------------------

inline SpectralMeasure read_spectrum_csv(const std::string& path) {
  Eigen::MatrixXd M = read_matrix_csv(path);
  if (M.cols() != 2) throw io_error("'" + path + "' must have two columns: value,weight");
  std::vector<Atom> atoms;
  atoms.reserve(std::size_t(M.rows()));
  for (Eigen::Index i = 0; i < M.rows(); ++i) atoms.push_back({M(i, 0), M(i, 1)});
  return SpectralMeasure(std::move(atoms));
}

inline void write_spectrum_csv(const std::string& path, const SpectralMeasure& H) {
  std::ofstream f = detail::open_out(path, false);
  f << "value,weight\n";
  for (const auto& a : H.atoms()) f << fmt_double(a.value) << ',' << fmt_double(a.weight) << '\n';
  if (!f) throw io_error("write failed on '" + path + "'");
}

// ---------------------------------------------------------------------------
// Run configuration. Defaults follow the documented reference settings:
// contour eps = zeta = 1e-3 with m1 = m2 = 1000 nodes per side, density mesh
// m = 10^4 at offset 1e-3, theta grid m = 10^4, threshold 1.64.
// ---------------------------------------------------------------------------

struct FunctionalSpec {
  std::string kind = "log";  // log | power | log_linear | lrt
  int k = 1;                 // power exponent
  double a = 0.0, b = 0.0;   // log_linear coefficients

  SpectralFunctional build(double yn1, double yn2) const {
    if (kind == "log") return SpectralFunctional::log_f();
    if (kind == "power") return SpectralFunctional::power(k);
    if (kind == "log_linear") return SpectralFunctional::log_linear(a, b);
    if (kind == "lrt") return SpectralFunctional::lrt(yn1, yn2);
    throw config_error("unknown functional kind '" + kind + "'");
  }
};

struct RunConfig {
  unsigned threads = 1;
  std::uint64_t seed = 1;
  std::string output_dir = ".";

  // population ratio spectrum: explicit atoms, or a CSV path
  std::string spectrum_file;
  std::vector<Atom> spectrum_atoms{{1.0, 1.0}};

  // dimension ratios: either limits (y1, y2) or sample dims (p, n1, n2)
  std::optional<double> y1, y2;
  std::optional<int> p, n1, n2;

  MomentParams moments{};
  SolverConfig solver{};
  DensityConfig density{};
  ContourConfig contour{};
  bool include_bx_cov = true;

  std::vector<FunctionalSpec> functionals{FunctionalSpec{}};

  // test / ci inputs (both samples are mean-centered by the test convention)
  std::string x_file, y_file;

  // ci scan
  std::string ci_family = "scale";  // scale | two_atom
  double ci_w1 = 0.5;
  double theta_min = 0.5, theta_max = 2.0;
  int theta_m = 10000;
  double threshold = 1.64;
  bool two_sided = false;

  // power alternative
  std::string alt_spectrum_file;
  std::vector<Atom> alt_spectrum_atoms;

  // simulate block
  std::string sim_law = "gaussian_real";  // gaussian_real | gaussian_complex | two_point | student
  double sim_beta = 0.0;
  int sim_df = 12;
  int sim_reps = 200;
  bool sim_centered = false;
  std::string sim_experiment = "clt";  // clt | size_power
  std::optional<std::uint64_t> rotation_seed;

  SpectralMeasure spectrum() const {
    if (!spectrum_file.empty()) return read_spectrum_csv(spectrum_file);
    return SpectralMeasure(spectrum_atoms);
  }
  SpectralMeasure alt_spectrum() const {
    if (!alt_spectrum_file.empty()) return read_spectrum_csv(alt_spectrum_file);
    if (alt_spectrum_atoms.empty())
      throw config_error("power requires an alternative spectrum");
    return SpectralMeasure(alt_spectrum_atoms);
  }
  bool has_dims() const { return p && n1 && n2; }
  AspectRatios ratios() const {
    if (has_dims()) return AspectRatios::from_dims(*p, *n1, *n2);
    if (y1 && y2) return AspectRatios(*y1, *y2);
    throw config_error("config needs either (y1, y2) or (p, n1, n2)");
  }
  LawSpec law() const {
    LawSpec l;
    if (sim_law == "gaussian_real") l.law = EntryLaw::GaussianReal;
    else if (sim_law == "gaussian_complex") l.law = EntryLaw::GaussianComplex;
    else if (sim_law == "two_point") { l.law = EntryLaw::TwoPoint; l.beta = sim_beta; }
    else if (sim_law == "student") { l.law = EntryLaw::ScaledStudent; l.df = sim_df; }
    else throw config_error("unknown entry law '" + sim_law + "'");
    l.validate();
    return l;
  }
  CLTConfig clt_config() const {
    CLTConfig c;
    c.density = density;
    c.density.solver = solver;
    c.contour = contour;
    c.contour.solver = solver;
    c.threads = threads;
    c.include_bx_cov = include_bx_cov;
    return c;
  }

  // reset every tunable to the documented reference values
  void apply_reference_defaults() {
    solver = SolverConfig{};
    density = DensityConfig{};
    contour = ContourConfig{};
    theta_m = 10000;
    threshold = 1.64;
    two_sided = false;
  }
};

inline json atoms_to_json(const std::vector<Atom>& atoms) {
  json a = json::array();
  for (const auto& at : atoms) a.push_back(json::array({at.value, at.weight}));
  return a;
}

inline std::vector<Atom> atoms_from_json(const json& a, const std::string& where) {
  std::vector<Atom> out;
  for (const auto& e : a) {
    if (!e.is_array() || e.size() != 2)
      throw config_error(where + ": each atom must be [value, weight]");
    out.push_back({e[0].get<double>(), e[1].get<double>()});
  }
  return out;
}

inline json config_to_json(const RunConfig& c) {
  json j;
  j["threads"] = c.threads;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  if (!c.spectrum_file.empty())
    j["spectrum"] = json{{"file", c.spectrum_file}};
  else
    j["spectrum"] = json{{"atoms", atoms_to_json(c.spectrum_atoms)}};
  json r;
  if (c.has_dims()) {
    r["p"] = *c.p;
    r["n1"] = *c.n1;
    r["n2"] = *c.n2;
  } else if (c.y1 && c.y2) {
    r["y1"] = *c.y1;
    r["y2"] = *c.y2;
  }
  j["ratios"] = r;
  j["moments"] = json{{"kappa", c.moments.kappa},
                      {"beta_x", c.moments.beta_x},
                      {"beta_y", c.moments.beta_y}};
  j["solver"] = json{{"tol", c.solver.tol},
                     {"max_iter", c.solver.max_iter},
                     {"damping", c.solver.damping}};
  j["density"] = json{{"m", c.density.m}, {"epsilon", c.density.epsilon}};
  j["contour"] = json{{"eps", c.contour.eps},
                      {"zeta", c.contour.zeta},
                      {"m1", c.contour.m1},
                      {"m2", c.contour.m2}};
  j["include_bx_cov"] = c.include_bx_cov;
  json fl = json::array();
  for (const auto& f : c.functionals) {
    json e{{"kind", f.kind}};
    if (f.kind == "power") e["k"] = f.k;
    if (f.kind == "log_linear") {
      e["a"] = f.a;
      e["b"] = f.b;
    }
    fl.push_back(e);
  }
  j["functionals"] = fl;
  j["test"] = json{{"x_file", c.x_file}, {"y_file", c.y_file}};
  j["ci"] = json{{"family", c.ci_family},
                 {"w1", c.ci_w1},
                 {"theta_min", c.theta_min},
                 {"theta_max", c.theta_max},
                 {"m", c.theta_m},
                 {"threshold", c.threshold},
                 {"two_sided", c.two_sided}};
  json pw;
  if (!c.alt_spectrum_file.empty())
    pw["alternative"] = json{{"file", c.alt_spectrum_file}};
  else
    pw["alternative"] = json{{"atoms", atoms_to_json(c.alt_spectrum_atoms)}};
  j["power"] = pw;
  json sm{{"law", c.sim_law},    {"beta", c.sim_beta},         {"df", c.sim_df},
          {"reps", c.sim_reps},  {"centered", c.sim_centered}, {"experiment", c.sim_experiment}};
  if (c.rotation_seed) sm["rotation_seed"] = *c.rotation_seed;
  j["simulate"] = sm;
  return j;
}

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.functionals.clear();
  try {
    if (j.contains("threads")) c.threads = j["threads"].get<unsigned>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
    if (j.contains("spectrum")) {
      const auto& s = j["spectrum"];
      if (s.contains("file")) c.spectrum_file = s["file"].get<std::string>();
      if (s.contains("atoms")) c.spectrum_atoms = atoms_from_json(s["atoms"], "spectrum");
    }
    if (j.contains("ratios")) {
      const auto& r = j["ratios"];
      if (r.contains("p")) c.p = r["p"].get<int>();
      if (r.contains("n1")) c.n1 = r["n1"].get<int>();
      if (r.contains("n2")) c.n2 = r["n2"].get<int>();
      if (r.contains("y1")) c.y1 = r["y1"].get<double>();
      if (r.contains("y2")) c.y2 = r["y2"].get<double>();
    }
    if (j.contains("moments")) {
      const auto& m = j["moments"];
      double kappa = m.value("kappa", 2.0);
      double bx = m.value("beta_x", 0.0);
      double by = m.value("beta_y", 0.0);
      c.moments = MomentParams(kappa, bx, by);
    }
    if (j.contains("solver")) {
      const auto& s = j["solver"];
      c.solver.tol = s.value("tol", c.solver.tol);
      c.solver.max_iter = s.value("max_iter", c.solver.max_iter);
      c.solver.damping = s.value("damping", c.solver.damping);
    }
    if (j.contains("density")) {
      const auto& d = j["density"];
      c.density.m = d.value("m", c.density.m);
      c.density.epsilon = d.value("epsilon", c.density.epsilon);
    }
    if (j.contains("contour")) {
      const auto& k = j["contour"];
      c.contour.eps = k.value("eps", c.contour.eps);
      c.contour.zeta = k.value("zeta", c.contour.zeta);
      c.contour.m1 = k.value("m1", c.contour.m1);
      c.contour.m2 = k.value("m2", c.contour.m2);
    }
    if (j.contains("include_bx_cov")) c.include_bx_cov = j["include_bx_cov"].get<bool>();
    if (j.contains("functionals")) {
      for (const auto& e : j["functionals"]) {
        FunctionalSpec f;
        f.kind = e.value("kind", std::string("log"));
        f.k = e.value("k", 1);
        f.a = e.value("a", 0.0);
        f.b = e.value("b", 0.0);
        c.functionals.push_back(f);
      }
    }
    if (c.functionals.empty()) c.functionals.push_back(FunctionalSpec{});
    if (j.contains("test")) {
      const auto& t = j["test"];
      c.x_file = t.value("x_file", std::string());
      c.y_file = t.value("y_file", std::string());
    }
    if (j.contains("ci")) {
      const auto& t = j["ci"];
      c.ci_family = t.value("family", std::string("scale"));
      c.ci_w1 = t.value("w1", 0.5);
      c.theta_min = t.value("theta_min", 0.5);
      c.theta_max = t.value("theta_max", 2.0);
      c.theta_m = t.value("m", 10000);
      c.threshold = t.value("threshold", 1.64);
      c.two_sided = t.value("two_sided", false);
    }
    if (j.contains("power") && j["power"].contains("alternative")) {
      const auto& a = j["power"]["alternative"];
      if (a.contains("file")) c.alt_spectrum_file = a["file"].get<std::string>();
      if (a.contains("atoms"))
        c.alt_spectrum_atoms = atoms_from_json(a["atoms"], "power.alternative");
    }
    if (j.contains("simulate")) {
      const auto& s = j["simulate"];
      c.sim_law = s.value("law", std::string("gaussian_real"));
      c.sim_beta = s.value("beta", 0.0);
      c.sim_df = s.value("df", 12);
      c.sim_reps = s.value("reps", 200);
      c.sim_centered = s.value("centered", false);
      c.sim_experiment = s.value("experiment", std::string("clt"));
      if (s.contains("rotation_seed"))
        c.rotation_seed = s["rotation_seed"].get<std::uint64_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config parse: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f = detail::open_in(path, false);
  json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("'" + path + "': " + e.what());
  }
  return config_from_json(j);
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream f = detail::open_out(path, false);
  f << j.dump(2) << '\n';
  if (!f) throw io_error("write failed on '" + path + "'");
}

// ---------------------------------------------------------------------------
// Report serialization.
// ---------------------------------------------------------------------------

inline json matrix_to_json(const Eigen::MatrixXd& M) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < M.cols(); ++j) r.push_back(M(i, j));
    rows.push_back(r);
  }
  return rows;
}

inline void write_density_csv(const std::string& path, const DensityCurve& c) {
  std::ofstream f = detail::open_out(path, false);
  f << "x,u\n";
  for (std::size_t i = 0; i < c.x.size(); ++i)
    f << fmt_double(c.x[i]) << ',' << fmt_double(c.u[i]) << '\n';
  if (!f) throw io_error("write failed on '" + path + "'");
}

inline json support_report(const DensityCurve& c) {
  return json{{"c1", c.c1},
              {"c2", c.c2},
              {"mass", c.mass},
              {"point_mass_at_zero", c.point_mass_at_zero},
              {"epsilon", c.epsilon},
              {"mesh_points", c.x.size()},
              {"edge_ok", c.edge_ok}};
}

inline json grid_report(const ContourGrid& g) {
  return json{{"c1", g.c1},   {"c2", g.c2}, {"eps", g.eps}, {"zeta", g.zeta},
              {"m1", g.m1},   {"m2", g.m2}, {"nodes", g.nodes.size()},
              {"orientation", g.orientation}};
}

inline json clt_report(const CLTSummary& s, const MomentParams& mom) {
  json j;
  j["functionals"] = s.functional_names;
  j["mean"] = s.mean;
  j["cov"] = matrix_to_json(s.cov);
  j["centering"] = s.centering;
  j["support"] = json{{"c1", s.support.c1}, {"c2", s.support.c2}};
  j["moments"] =
      json{{"kappa", mom.kappa}, {"beta_x", mom.beta_x}, {"beta_y", mom.beta_y}};
  j["outer_grid"] = grid_report(s.outer_grid);
  j["inner_grid"] = grid_report(s.inner_grid);
  j["density"] = support_report(s.curve);
  j["bx_cov_included"] = s.bx_cov_included;
  j["orientation"] = s.orientation;
  json parts = json::array();
  for (const auto& m : s.mean_detail)
    parts.push_back(json{{"kappa_part", m.part_k},
                         {"beta_x_part", m.part_bx},
                         {"beta_y_part", m.part_by},
                         {"imag_residue", m.imag_residue}});
  j["mean_parts"] = parts;
  j["solver"] =
      json{{"max_residual", s.max_residual}, {"total_iterations", s.total_iterations}};
  return j;
}

inline json test_report(const TestReport& t) {
  return json{{"t_stat", t.t_stat},
              {"z", t.z},
              {"p_value", t.p_value},
              {"reject_at_5pct", t.reject_at_5pct},
              {"threshold", t.threshold},
              {"null_centering", t.null_centering},
              {"sd", t.sd},
              {"p", t.p},
              {"n1", t.n1},
              {"n2", t.n2},
              {"zero_eigenvalues", t.zero_eigenvalues}};
}

inline json power_report(const PowerResult& p) {
  return json{{"power", p.power}, {"shift", p.shift}, {"z_alpha", p.z_alpha}};
}

inline json interval_report(const ThetaInterval& ci) {
  json j{{"lo", ci.lo},
         {"hi", ci.hi},
         {"empty", ci.empty},
         {"contiguous", ci.contiguous},
         {"accepted", ci.accepted},
         {"threshold", ci.threshold},
         {"two_sided", ci.two_sided},
         {"t_stat", ci.t_stat}};
  if (ci.empty) {
    j["lo"] = nullptr;
    j["hi"] = nullptr;
  }
  return j;
}

inline void write_ci_grid_csv(const std::string& path, const ThetaInterval& ci) {
  std::ofstream f = detail::open_out(path, false);
  f << "theta,z,accept,ok\n";
  for (std::size_t i = 0; i < ci.theta.size(); ++i)
    f << fmt_double(ci.theta[i]) << ',' << fmt_double(ci.z[i]) << ','
      << int(ci.accept[i]) << ',' << int(ci.ok[i]) << '\n';
  if (!f) throw io_error("write failed on '" + path + "'");
}

// one row per successful replication, one column per functional
inline void write_replications_csv(const std::string& path,
                                   const CLTExperimentResult& r) {
  std::ofstream f = detail::open_out(path, false);
  f << "rep";
  for (const auto& n : r.functional_names) f << ',' << n;
  f << '\n';
  std::size_t rows = r.samples.empty() ? 0 : r.samples.front().size();
  for (std::size_t i = 0; i < rows; ++i) {
    f << i;
    for (const auto& col : r.samples) f << ',' << fmt_double(col[i]);
    f << '\n';
  }
  if (!f) throw io_error("write failed on '" + path + "'");
}

inline json clt_experiment_report(const CLTExperimentResult& r) {
  json j;
  j["functionals"] = r.functional_names;
  j["predicted_mean"] = r.predicted_mean;
  j["predicted_cov"] = matrix_to_json(r.predicted_cov);
  j["empirical_mean"] = r.empirical_mean;
  j["empirical_var"] = r.empirical_var;
  j["se"] = r.empirical_se;
  j["reps"] = r.reps;
  j["failed_reps"] = r.failed_reps;
  j["entry_kurtosis"] = r.entry_kurtosis;
  json ks = json::array();
  for (const auto& k : r.ks)
    ks.push_back(json{{"stat", k.stat}, {"pvalue", k.pvalue}});
  j["ks"] = ks;
  return j;
}

inline json size_power_report(const SizePowerResult& r) {
  return json{{"reject_rate", r.reject_rate},
              {"predicted_power", r.predicted_power},
              {"threshold", r.threshold},
              {"reps", r.reps},
              {"failed_reps", r.failed_reps}};
}

inline json size_power_pair_report(const SizePowerPair& r) {
  return json{{"size", r.size},
              {"power", r.power},
              {"predicted_power", r.predicted_power},
              {"null", size_power_report(r.null_run)},
              {"alternative", size_power_report(r.alt_run)}};
}

}  // namespace flss::io
