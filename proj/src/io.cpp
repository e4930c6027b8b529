#include "qbstab/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace qbstab::io {

namespace {

// JSON has no infinity; encode non-finite values as strings.
Json number(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

double to_double(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw Error("json: expected a number");
}

Json vector_to_json(const Vector& v) {
  Json a = Json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number(v(i)));
  return a;
}

Vector vector_from_json(const Json& j) {
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Index>(i)) = to_double(j[i]);
  return v;
}

std::ofstream open_out(const std::string& path, bool binary = false) {
  std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
  if (!f) throw Error("cannot open '" + path + "' for writing");
  f << std::setprecision(17);
  return f;
}

std::ifstream open_in(const std::string& path, bool binary = false) {
  std::ifstream f(path, binary ? std::ios::binary : std::ios::in);
  if (!f) throw Error("cannot open '" + path + "' for reading");
  return f;
}

}  // namespace

Json matrix_to_json(const Matrix& M) {
  Json data = Json::array();
  for (Index i = 0; i < M.rows(); ++i)
    for (Index k = 0; k < M.cols(); ++k) data.push_back(number(M(i, k)));
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"data", std::move(data)}};
}

Json sparse_to_json(const SparseMatrix& M) {
  Json I = Json::array(), J = Json::array(), V = Json::array();
  for (Index k = 0; k < M.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(M, k); it; ++it) {
      I.push_back(it.row());
      J.push_back(it.col());
      V.push_back(it.value());
    }
  return {{"rows", M.rows()}, {"cols", M.cols()}, {"format", "triplets"},
          {"i", std::move(I)}, {"j", std::move(J)}, {"v", std::move(V)}};
}

SparseMatrix sparse_from_json(const Json& j) {
  const Index r = j.at("rows").get<Index>(), c = j.at("cols").get<Index>();
  if (j.value("format", std::string()) != "triplets") return matrix_from_json(j).sparseView();
  const auto& I = j.at("i");
  const auto& J = j.at("j");
  const auto& V = j.at("v");
  if (I.size() != J.size() || I.size() != V.size()) throw Error("json: triplet arrays differ in length");
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(I.size());
  for (std::size_t k = 0; k < I.size(); ++k) {
    const Index a = I[k].get<Index>(), b = J[k].get<Index>();
    if (a < 0 || a >= r || b < 0 || b >= c) throw Error("json: triplet index out of range");
    t.emplace_back(a, b, to_double(V[k]));
  }
  SparseMatrix M(r, c);
  M.setFromTriplets(t.begin(), t.end());
  return M;
}

Matrix matrix_from_json(const Json& j) {
  if (j.value("format", std::string()) == "triplets") return Matrix(sparse_from_json(j));
  const Index r = j.at("rows").get<Index>(), c = j.at("cols").get<Index>();
  const auto& d = j.at("data");
  if (static_cast<Index>(d.size()) != r * c) throw Error("json: matrix data has the wrong length");
  Matrix M(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index k = 0; k < c; ++k) M(i, k) = to_double(d[static_cast<std::size_t>(i * c + k)]);
  return M;
}

Json system_to_json(const QBSystem& sys) {
  Json N = Json::array();
  for (const auto& Ni : sys.N()) N.push_back(matrix_to_json(Ni));
  Json j = {{"n", sys.n()},
            {"m", sys.m()},
            {"E", matrix_to_json(sys.E())},
            {"A", matrix_to_json(sys.A())},
            {"H", sparse_to_json(sys.H())},
            {"N", std::move(N)},
            {"B", matrix_to_json(sys.B())}};
  if (sys.C()) j["C"] = matrix_to_json(*sys.C());
  return j;
}

QBSystem system_from_json(const Json& j) {
  std::vector<Matrix> N;
  if (j.contains("N"))
    for (const auto& Ni : j.at("N")) N.push_back(matrix_from_json(Ni));
  Matrix A = matrix_from_json(j.at("A"));
  const Index n = A.rows();
  Matrix E = j.contains("E") ? matrix_from_json(j.at("E")) : Matrix(Matrix::Identity(n, n));
  Matrix B = j.contains("B") ? matrix_from_json(j.at("B")) : Matrix(Matrix::Zero(n, 0));
  std::optional<Matrix> C;
  if (j.contains("C")) C = matrix_from_json(j.at("C"));
  return QBSystem(std::move(E), std::move(A), sparse_from_json(j.at("H")), std::move(N),
                  std::move(B), std::move(C));
}

Json rom_to_json(const ROMArtifact& rom) {
  return {{"method", rom.method},
          {"system", system_to_json(rom.system)},
          {"right", matrix_to_json(rom.right)},
          {"left", matrix_to_json(rom.left)},
          {"singular_values", matrix_to_json(rom.singular_values)},
          {"sigma", vector_to_json(rom.sigma)},
          {"riccati_residual_filter", number(rom.riccati_residual_filter)},
          {"riccati_residual_control", number(rom.riccati_residual_control)},
          {"reconstruction_error", number(rom.reconstruction_error)},
          {"unstable", rom.unstable},
          {"warnings", rom.warnings}};
}

ROMArtifact rom_from_json(const Json& j) {
  ROMArtifact r{j.at("method").get<std::string>(),
                system_from_json(j.at("system")),
                matrix_from_json(j.at("right")),
                matrix_from_json(j.at("left")),
                matrix_from_json(j.at("singular_values")),
                vector_from_json(j.at("sigma")),
                to_double(j.value("riccati_residual_filter", Json(0.0))),
                to_double(j.value("riccati_residual_control", Json(0.0))),
                to_double(j.value("reconstruction_error", Json(-1.0))),
                j.value("unstable", false),
                j.value("warnings", std::vector<std::string>{})};
  return r;
}

Json estimate_to_json(const StabilityEstimate& est) {
  return {{"rho_analytic", number(est.rho_analytic)},
          {"rho_star", number(est.rho_star)},
          {"alpha_star", number(est.alpha_star)},
          {"mu_star", vector_to_json(est.mu_star)},
          {"restarts_used", est.restarts_used},
          {"restart_alphas", est.restart_alphas},
          {"iterations", est.iterations},
          {"certificate_source", est.certificate.source},
          {"certificate_residual", number(est.certificate_residual)},
          {"ball_radius", number(est.ball_radius)},
          {"rigorous_radius", number(est.rigorous_radius)},
          {"wall_time_ms", est.wall_time_ms},
          {"warnings", est.warnings}};
}

Json validation_to_json(const ValidationReport& rep) {
  Json recs = Json::array();
  for (const auto& r : rep.records)
    recs.push_back({{"x0", vector_to_json(r.x0)},
                    {"outcome", to_string(r.outcome)},
                    {"final_time", r.final_time},
                    {"v_growth", number(r.v_growth)},
                    {"note", r.note}});
  return {{"rho_tested", number(rep.rho_tested)},
          {"samples", rep.samples},
          {"converged", rep.converged},
          {"diverged", rep.diverged},
          {"undecided", rep.undecided},
          {"worst_v_growth", number(rep.worst_v_growth)},
          {"horizon", rep.horizon},
          {"records", std::move(recs)}};
}

Json read_json(const std::string& path) {
  auto f = open_in(path);
  try {
    return Json::parse(f);
  } catch (const Json::exception& e) {
    throw Error("cannot parse '" + path + "': " + e.what());
  }
}

void write_json(const std::string& path, const Json& j) {
  auto f = open_out(path);
  f << j.dump(1) << '\n';
}

void save_system(const std::string& path, const QBSystem& sys) { write_json(path, system_to_json(sys)); }
QBSystem load_system(const std::string& path) {
  const Json j = read_json(path);
  // a ROM file works wherever a model file does
  return j.contains("system") ? system_from_json(j.at("system")) : system_from_json(j);
}
void save_rom(const std::string& path, const ROMArtifact& rom) { write_json(path, rom_to_json(rom)); }
ROMArtifact load_rom(const std::string& path) { return rom_from_json(read_json(path)); }

namespace {

constexpr char kMagic[8] = {'Q', 'B', 'S', 'N', 'A', 'P', '0', '1'};

void put_i64(std::ostream& f, std::int64_t v) { f.write(reinterpret_cast<const char*>(&v), sizeof v); }
std::int64_t get_i64(std::istream& f) {
  std::int64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  return v;
}
void put_doubles(std::ostream& f, const double* p, Index count) {
  f.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
}
void get_doubles(std::istream& f, double* p, Index count) {
  f.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(count * sizeof(double)));
}

}  // namespace

void save_snapshots(const std::string& path, const SnapshotSet& snap) {
  const Index K = snap.size(), N = snap.X.rows(), m = snap.U.rows();
  detail::require(snap.X.cols() == K && (m == 0 || snap.U.cols() == K),
                  "save_snapshots: inconsistent snapshot set");
  const bool has_xdot = snap.Xdot.size() > 0;
  auto f = open_out(path, true);
  f.write(kMagic, sizeof kMagic);
  put_i64(f, N);
  put_i64(f, K);
  put_i64(f, m);
  put_i64(f, has_xdot ? 1 : 0);
  put_doubles(f, snap.t.data(), K);
  put_doubles(f, snap.X.data(), N * K);
  if (m > 0) put_doubles(f, snap.U.data(), m * K);
  if (has_xdot) put_doubles(f, snap.Xdot.data(), N * K);
  if (!f) throw Error("write to '" + path + "' failed");
}

SnapshotSet load_snapshots(const std::string& path) {
  auto f = open_in(path, true);
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw Error("'" + path + "' is not a snapshot file");
  const Index N = get_i64(f), K = get_i64(f), m = get_i64(f), has_xdot = get_i64(f);
  if (!f || N < 0 || K < 0 || m < 0) throw Error("'" + path + "': corrupt header");
  SnapshotSet s;
  s.t.resize(static_cast<std::size_t>(K));
  s.X.resize(N, K);
  s.U.resize(m, K);
  get_doubles(f, s.t.data(), K);
  get_doubles(f, s.X.data(), N * K);
  if (m > 0) get_doubles(f, s.U.data(), m * K);
  if (has_xdot) {
    s.Xdot.resize(N, K);
    get_doubles(f, s.Xdot.data(), N * K);
  }
  if (!f) throw Error("'" + path + "': truncated snapshot file");
  return s;
}

void save_snapshots_csv(const std::string& path, const SnapshotSet& snap) {
  auto f = open_out(path);
  f << "t";
  for (Index i = 0; i < snap.X.rows(); ++i) f << ",x" << i + 1;
  for (Index i = 0; i < snap.U.rows(); ++i) f << ",u" << i + 1;
  f << '\n';
  for (Index k = 0; k < snap.size(); ++k) {
    f << snap.t[static_cast<std::size_t>(k)];
    for (Index i = 0; i < snap.X.rows(); ++i) f << ',' << snap.X(i, k);
    for (Index i = 0; i < snap.U.rows(); ++i) f << ',' << snap.U(i, k);
    f << '\n';
  }
}

SnapshotSet load_snapshots_csv(const std::string& path, Index state_dim) {
  auto f = open_in(path);
  std::string line;
  std::getline(f, line);  // header
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (!rows.empty() && row.size() != rows.front().size())
      throw Error("'" + path + "': ragged CSV");
    rows.push_back(std::move(row));
  }
  SnapshotSet s;
  if (rows.empty()) return s;
  const auto cols = static_cast<Index>(rows.front().size());
  if (cols < 1 + state_dim) throw Error("'" + path + "': fewer columns than the state dimension");
  const Index K = static_cast<Index>(rows.size()), m = cols - 1 - state_dim;
  s.X.resize(state_dim, K);
  s.U.resize(m, K);
  for (Index k = 0; k < K; ++k) {
    const auto& r = rows[static_cast<std::size_t>(k)];
    s.t.push_back(r[0]);
    for (Index i = 0; i < state_dim; ++i) s.X(i, k) = r[static_cast<std::size_t>(1 + i)];
    for (Index i = 0; i < m; ++i) s.U(i, k) = r[static_cast<std::size_t>(1 + state_dim + i)];
  }
  return s;
}

void write_trajectory_csv(const std::string& path, const Trajectory& tr) {
  auto f = open_out(path);
  f << "t";
  for (Index i = 0; i < tr.X.rows(); ++i) f << ",x" << i + 1;
  f << '\n';
  for (std::size_t k = 0; k < tr.t.size(); ++k) {
    f << tr.t[k];
    for (Index i = 0; i < tr.X.rows(); ++i) f << ',' << tr.X(i, static_cast<Index>(k));
    f << '\n';
  }
}

void write_matrix_csv(const std::string& path, const Matrix& M) {
  auto f = open_out(path);
  for (Index i = 0; i < M.rows(); ++i) {
    for (Index k = 0; k < M.cols(); ++k) f << (k ? "," : "") << M(i, k);
    f << '\n';
  }
}

void write_validation_csv(const std::string& path, const std::vector<ValidationReport>& reps) {
  auto f = open_out(path);
  f << "rho_tested,samples,converged,diverged,undecided,worst_v_growth\n";
  for (const auto& r : reps)
    f << r.rho_tested << ',' << r.samples << ',' << r.converged << ',' << r.diverged << ','
      << r.undecided << ',' << r.worst_v_growth << '\n';
}

}  // namespace qbstab::io
