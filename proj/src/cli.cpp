#include "qbstab/cli.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <random>
#include <sstream>

#include "qbstab/io.hpp"

namespace qbstab {

namespace {

bool is_method(const std::string& s) { return s == "lqgbt" || s == "pod" || s == "opinf"; }

}  // namespace

Pipeline::Pipeline(BuiltModel model, std::string method)
    : Pipeline(std::move(model), std::move(method), Options{}) {}

Pipeline::Pipeline(BuiltModel model, std::string method, Options opts)
    : model_(std::move(model)), method_(std::move(method)), opts_(opts), input_(model_.input) {
  if (!is_method(method_))
    throw Error("unknown reduction method '" + method_ + "' (expected lqgbt, pod or opinf)");
  if (method_ == "lqgbt" && !model_.sys.C())
    throw Error("lqgbt needs a model with an output matrix (e.g. burgers-fem)");
  if (method_ == "opinf" && model_.sys.m() > 0) {
    // uniform random input on [0, 1], held constant between snapshots
    const Index K = 10000;
    std::mt19937_64 rng(opts_.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Matrix values(model_.sys.m(), K + 1);
    for (Index k = 0; k <= K; ++k)
      for (Index i = 0; i < values.rows(); ++i) values(i, k) = unif(rng);
    input_ = piecewise_constant(values, 1e-4);
  }
}

std::vector<Index> Pipeline::blocks() const {
  if (model_.name == "fhn" && model_.sys.n() % 3 == 0) {
    const Index g = model_.sys.n() / 3;
    return {g, g, g};
  }
  return {model_.sys.n()};
}

Index Pipeline::reduced_dimension(Index n) const {
  return method_ == "pod" ? n * static_cast<Index>(blocks().size()) : n;
}

CertificateKind Pipeline::default_certificate() const {
  return method_ == "lqgbt" ? CertificateKind::LqgSigma : CertificateKind::LyapunovIdentity;
}

const SnapshotSet& Pipeline::snapshots() {
  if (snap_) return *snap_;
  double tf = 1.0, every = 0.01;
  if (model_.name == "fhn") {
    tf = 12.0;
    every = 0.1;
  } else if (method_ == "opinf") {
    every = 1e-4;
  }
  IntegrateOptions io;
  io.rtol = opts_.rtol;
  io.atol = opts_.atol;
  const Index K = static_cast<Index>(std::llround(tf / every));
  for (Index k = 0; k <= K; ++k) io.output_times.push_back(k * every);
  if (method_ == "opinf") io.breakpoints = io.output_times;
  const Trajectory tr = integrate(model_.sys, model_.x0, input_, 0.0, tf, io);
  if (tr.status == TerminalStatus::Diverged)
    throw ConvergenceError("training simulation of '" + model_.name + "' diverged");
  SnapshotSet s;
  s.t = tr.t;
  s.X = tr.X;
  s.Xdot = tr.Xdot;
  const Index m = model_.sys.m();
  s.U.resize(m, s.size());
  for (Index k = 0; k < s.size() && m > 0; ++k) {
    // the value held on [t_k, t_k+1)
    const double tk = s.t[static_cast<std::size_t>(k)];
    s.U.col(k) = input_ ? input_(tk + 1e-9 * every) : Vector(Vector::Zero(m));
  }
  snap_ = std::move(s);
  return *snap_;
}

ROMArtifact Pipeline::reduce(Index n) {
  if (method_ == "lqgbt") return lqg_balanced_truncation(model_.sys, n);

  const SnapshotSet& snap = snapshots();
  ROMArtifact art{method_, model_.sys, Matrix(), Matrix(), Matrix(), Vector(), 0.0, 0.0, -1.0,
                  false, {}};
  if (method_ == "pod") {
    const auto b = blocks();
    Matrix block_sv;
    const PODBasis pb = pod_blockwise(snap.X, b, n, &block_sv);
    art.right = pb.V;
    art.left = pb.V.transpose();
    art.singular_values = block_sv;
    art.system = galerkin_reduce(model_.sys, pb.V);
  } else {
    const PODBasis pb = pod_basis(snap.X, n);
    art.right = pb.V;
    art.left = pb.V.transpose();
    art.singular_values = pb.singular_values;
    OpInfOptions oo;
    oo.regularization = opts_.opinf_regularization;
    art.system = operator_inference(interval_differences(snap), pb.V, oo);
    bool diverged = false;
    IntegrateOptions io;
    io.rtol = opts_.rtol;
    io.atol = opts_.atol;
    art.reconstruction_error = reconstruction_error(art.system, pb.V, snap, input_, io, &diverged);
    double abscissa = 0.0;
    try {
      abscissa = la::spectral_abscissa(art.system.A());
    } catch (const Error&) {
      abscissa = std::numeric_limits<double>::infinity();
    }
    if (!(abscissa < 0.0)) {
      art.unstable = true;
      std::ostringstream os;
      os << "learned linear part is not Hurwitz (spectral abscissa " << abscissa << ")";
      art.warnings.push_back(os.str());
    }
    if (diverged) {
      art.unstable = true;
      art.warnings.push_back("reduced simulation diverged");
    }
  }
  return art;
}

BuiltModel load_model(const std::string& name_or_path, Index N) {
  if (name_or_path == "burgers-fem" || name_or_path == "fhn" || name_or_path == "burgers-fd" ||
      name_or_path == "scalar")
    return build_model(name_or_path, N);
  if (!std::filesystem::exists(name_or_path))
    throw Error("'" + name_or_path +
                "' is neither a built-in model (burgers-fem, fhn, burgers-fd, scalar) nor a file");
  QBSystem sys = io::load_system(name_or_path);
  const Index n = sys.n(), m = sys.m();
  return {std::filesystem::path(name_or_path).stem().string(), std::move(sys), Vector::Zero(n),
          [m](double) { return Vector(Vector::Zero(m)); }};
}

LyapunovCertificate certificate_for(const QBSystem& sys, CertificateKind kind,
                                    const Vector& sigma) {
  if (kind != CertificateKind::LqgSigma || sigma.size() > 0)
    return make_certificate(sys, kind, sigma);
  if (!sys.C()) throw InvalidCertificate("lqg-sigma needs Sigma from LQG balancing or an output C");
  const Matrix At = sys.solve_mass(sys.A());
  const Matrix Bt = sys.solve_mass(sys.B());
  const la::LQGRiccati ric = la::solve_riccati_lqg(At, Bt, *sys.C());
  const Matrix Einv = sys.solve_mass(Matrix(Matrix::Identity(sys.n(), sys.n())));
  LyapunovCertificate cert;
  cert.P = Einv.transpose() * ric.Q * Einv;
  cert.P = 0.5 * (cert.P + cert.P.transpose());
  cert.P_f = la::psd_factor(cert.P).transpose();
  cert.Q_f = *sys.C();
  cert.Q = cert.Q_f.transpose() * cert.Q_f;
  cert.source = "lqg-sigma";
  cert.residual = certificate_residual(sys, cert);
  return cert;
}

std::vector<SweepRow> run_sweep(Pipeline& pipe, const std::vector<Index>& orders,
                                std::optional<CertificateKind> cert,
                                const OptimizeOptions& opts) {
  std::vector<SweepRow> rows;
  const CertificateKind kind = cert.value_or(pipe.default_certificate());
  for (Index n : orders) {
    SweepRow row;
    row.n = pipe.reduced_dimension(n);
    const auto start = std::chrono::steady_clock::now();
    try {
      const ROMArtifact rom = pipe.reduce(n);
      const QBSystem aut = autonomous_part(rom.system);
      const LyapunovCertificate c = certificate_for(rom.system, kind, rom.sigma);
      OptimizeOptions o = opts;
      o.check.allow_inexact = o.check.allow_inexact || kind == CertificateKind::LqgSigma;
      const StabilityEstimate est = optimize_radius(aut, c, o);
      row.rho_analytic = est.rho_analytic;
      row.rho_star = est.rho_star;
      row.alpha_star = est.alpha_star;
      row.status = rom.unstable ? "ok (unstable rom)" : "ok";
    } catch (const UnstableLinearPart& e) {
      row.status = std::string("inapplicable: ") + e.what();
    } catch (const InvalidCertificate& e) {
      row.status = std::string("inapplicable: ") + e.what();
    } catch (const Error& e) {
      row.status = std::string("error: ") + e.what();
    }
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << std::setprecision(10);
  os << "n,rho_analytic,rho_star,alpha_star,wall_ms,status\n";
  for (const auto& r : rows) {
    std::string status = r.status;
    for (char& c : status)
      if (c == ',' || c == '\n') c = ';';
    os << r.n << ',' << r.rho_analytic << ',' << r.rho_star << ',' << r.alpha_star << ','
       << std::setprecision(6) << r.wall_ms << std::setprecision(10) << ',' << status << '\n';
  }
  return os.str();
}

std::vector<Index> parse_orders(const std::string& spec) {
  std::vector<Index> out;
  auto to_index = [&](const std::string& s) -> Index {
    try {
      std::size_t pos = 0;
      const long v = std::stol(s, &pos);
      if (pos != s.size() || v < 1) throw Error("");
      return v;
    } catch (const std::exception&) {
      throw Error("invalid order '" + s + "' in '" + spec + "'");
    }
  };
  std::string s = spec;
  if (const auto p = s.find(".."); p != std::string::npos) s.replace(p, 2, ":");
  if (s.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
    if (parts.size() < 2 || parts.size() > 3) throw Error("invalid order range '" + spec + "'");
    const Index a = to_index(parts[0]), b = to_index(parts[1]);
    const Index step = parts.size() == 3 ? to_index(parts[2]) : 1;
    for (Index k = a; k <= b; k += step) out.push_back(k);
  } else {
    std::stringstream ss(s);
    for (std::string part; std::getline(ss, part, ',');) out.push_back(to_index(part));
  }
  if (out.empty()) throw Error("no orders in '" + spec + "'");
  return out;
}

namespace {

struct RunConfig {
  std::string model;
  Index N = 0;
  std::string rom;
  std::string n_spec;
  std::string cert;
  std::uint64_t seed = 20240901;
  std::string out;
  OptimizeOptions opt;
  double reg = 0.0;
  double rho = 0.0;
  int samples = 200;
  bool probe = false;
};

std::filesystem::path output_dir(const RunConfig& cfg) {
  std::string dir = cfg.out;
  if (dir.empty()) {
    const char* env = std::getenv("QBSTAB_OUT");
    dir = env && *env ? env : ".";
  }
  std::filesystem::create_directories(dir);
  return dir;
}

Index single_order(const RunConfig& cfg) {
  if (cfg.n_spec.empty()) throw Error("--n is required");
  const auto v = parse_orders(cfg.n_spec);
  if (v.size() != 1) throw Error("--n must be a single order for this command");
  return v.front();
}

Pipeline make_pipeline(const RunConfig& cfg) {
  Pipeline::Options po;
  po.seed = cfg.seed;
  po.opinf_regularization = cfg.reg;
  return Pipeline(load_model(cfg.model, cfg.N), cfg.rom, po);
}

// The system under study: a ROM (method name with --model, or a ROM file) or a full model.
struct Target {
  std::string label;
  QBSystem sys;
  Vector sigma;
  CertificateKind default_kind = CertificateKind::LyapunovIdentity;
  Matrix lyapunov_weight = Matrix();
};

// Uses the full system: lqg-sigma on a full-order model needs B for the control Riccati equation.
LyapunovCertificate target_certificate(const Target& t, CertificateKind kind) {
  if (kind == CertificateKind::LyapunovIdentity && t.lyapunov_weight.size() > 0)
    return lyapunov_certificate(t.sys, t.lyapunov_weight);
  return certificate_for(t.sys, kind, t.sigma);
}

Target resolve_target(const RunConfig& cfg) {
  if (!cfg.rom.empty() && is_method(cfg.rom)) {
    if (cfg.model.empty()) throw Error("--rom " + cfg.rom + " needs --model");
    Pipeline pipe = make_pipeline(cfg);
    const Index n = single_order(cfg);
    ROMArtifact art = pipe.reduce(n);
    for (const auto& w : art.warnings) std::cerr << "warning: " << w << '\n';
    return {pipe.model().name + "_" + cfg.rom + "_n" + std::to_string(n), std::move(art.system),
            art.sigma, pipe.default_certificate()};
  }
  if (!cfg.rom.empty()) {
    ROMArtifact art = io::load_rom(cfg.rom);
    return {std::filesystem::path(cfg.rom).stem().string(), std::move(art.system), art.sigma,
            art.method == "lqgbt" ? CertificateKind::LqgSigma : CertificateKind::LyapunovIdentity};
  }
  if (cfg.model.empty()) throw Error("need --model or --rom");
  BuiltModel m = load_model(cfg.model, cfg.N);
  return {m.name, std::move(m.sys), Vector(), CertificateKind::LyapunovIdentity,
          std::move(m.lyapunov_weight)};
}

StabilityEstimate estimate_target(const Target& t, const RunConfig& cfg,
                                  LyapunovCertificate* cert_out) {
  const CertificateKind kind = cfg.cert.empty() ? t.default_kind : parse_certificate_kind(cfg.cert);
  const QBSystem aut = autonomous_part(t.sys);
  LyapunovCertificate cert = target_certificate(t, kind);
  OptimizeOptions o = cfg.opt;
  o.seed = cfg.seed;
  o.check.allow_inexact = kind == CertificateKind::LqgSigma;
  StabilityEstimate est = optimize_radius(aut, cert, o);
  if (cert_out) *cert_out = cert;
  return est;
}

void print_estimate(const std::string& label, const StabilityEstimate& e) {
  std::cout << std::setprecision(8) << label << ": rho_analytic = " << e.rho_analytic
            << ", rho_star = " << e.rho_star << ", alpha_star = " << e.alpha_star
            << " (certificate " << e.certificate.source << ", residual "
            << e.certificate_residual << ", " << e.restarts_used << " restarts, "
            << std::setprecision(4) << e.wall_time_ms << " ms)\n";
  for (const auto& w : e.warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_model_build(const RunConfig& cfg) {
  const BuiltModel m = load_model(cfg.model, cfg.N);
  const auto path = output_dir(cfg) / (m.name + ".json");
  io::save_system(path.string(), m.sys);
  std::cout << m.name << ": n = " << m.sys.n() << ", m = " << m.sys.m()
            << ", nnz(H) = " << m.sys.H().nonZeros() << ", ||H||_2 = " << la::spectral_norm(m.sys.H());
  try {
    std::cout << ", spectral abscissa of E^-1 A = "
              << la::spectral_abscissa(m.sys.solve_mass(m.sys.A()));
  } catch (const Error&) {
  }
  std::cout << "\nwrote " << path.string() << '\n';
  return 0;
}

int cmd_reduce(const RunConfig& cfg) {
  if (cfg.model.empty() || cfg.rom.empty()) throw Error("reduce needs --model and --rom");
  Pipeline pipe = make_pipeline(cfg);
  const Index n = single_order(cfg);
  const ROMArtifact art = pipe.reduce(n);
  const auto dir = output_dir(cfg);
  const std::string stem = pipe.model().name + "_" + cfg.rom;
  const auto rom_path = dir / (stem + "_n" + std::to_string(n) + ".json");
  const auto sv_path = dir / (stem + "_singular_values.csv");
  io::save_rom(rom_path.string(), art);
  io::write_matrix_csv(sv_path.string(), art.singular_values);
  std::cout << std::setprecision(6) << cfg.rom << " on " << pipe.model().name
            << ": reduced dimension " << art.system.n();
  if (cfg.rom == "lqgbt")
    std::cout << ", reduced Riccati residuals " << art.riccati_residual_filter << " (filter), "
              << art.riccati_residual_control << " (control)";
  if (cfg.rom == "opinf") std::cout << ", reconstruction error " << art.reconstruction_error;
  std::cout << '\n';
  for (const auto& w : art.warnings) std::cerr << "warning: " << w << '\n';
  if (art.unstable) std::cerr << "warning: unstable reduced model\n";
  std::cout << "wrote " << rom_path.string() << " and " << sv_path.string() << '\n';
  return 0;
}

int cmd_estimate(const RunConfig& cfg) {
  const Target t = resolve_target(cfg);
  const StabilityEstimate est = estimate_target(t, cfg, nullptr);
  print_estimate(t.label, est);
  const auto path = output_dir(cfg) / (t.label + "_estimate.json");
  io::write_json(path.string(), io::estimate_to_json(est));
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_validate(const RunConfig& cfg) {
  const Target t = resolve_target(cfg);
  LyapunovCertificate cert;
  double rho = cfg.rho;
  if (rho <= 0.0) {
    const StabilityEstimate est = estimate_target(t, cfg, &cert);
    print_estimate(t.label, est);
    rho = est.rho_star;
  } else {
    const CertificateKind kind =
        cfg.cert.empty() ? t.default_kind : parse_certificate_kind(cfg.cert);
    cert = target_certificate(t, kind);
  }
  ValidateOptions vo;
  vo.count = cfg.samples;
  vo.seed = cfg.seed;
  const ValidationReport r = validate_estimate(t.sys, cert, rho, vo);
  std::vector<ValidationReport> reps{r};
  std::cout << std::setprecision(8) << "validation at " << r.rho_tested << ": " << r.converged
            << " converged, " << r.diverged << " diverged, " << r.undecided
            << " undecided (worst v growth " << r.worst_v_growth << ")\n";
  io::Json j = {{"validation", io::validation_to_json(r)}};
  if (cfg.probe && std::isfinite(rho)) {
    const TightnessReport tr = probe_tightness(t.sys, cert, rho, {1.5, 2.0, 5.0, 10.0}, vo);
    io::Json probes = io::Json::array();
    for (std::size_t k = 0; k < tr.reports.size(); ++k) {
      std::cout << "  factor " << tr.factors[k] << ": " << tr.reports[k].diverged << " diverged\n";
      probes.push_back(io::validation_to_json(tr.reports[k]));
      reps.push_back(tr.reports[k]);
    }
    j["probe"] = probes;
    j["first_divergence_factor"] = tr.first_divergence_factor;
  }
  const auto dir = output_dir(cfg);
  io::write_json((dir / (t.label + "_validation.json")).string(), j);
  io::write_validation_csv((dir / (t.label + "_validation.csv")).string(), reps);
  std::cout << "wrote " << (dir / (t.label + "_validation.json")).string() << '\n';
  return r.diverged == 0 ? 0 : 1;
}

int cmd_sweep(const RunConfig& cfg) {
  if (cfg.model.empty() || cfg.rom.empty()) throw Error("sweep needs --model and --rom");
  if (cfg.n_spec.empty()) throw Error("sweep needs --n (e.g. 3:21:2)");
  Pipeline pipe = make_pipeline(cfg);
  std::optional<CertificateKind> kind;
  if (!cfg.cert.empty()) kind = parse_certificate_kind(cfg.cert);
  OptimizeOptions o = cfg.opt;
  o.seed = cfg.seed;
  const auto rows = run_sweep(pipe, parse_orders(cfg.n_spec), kind, o);
  const std::string csv = sweep_csv(rows);
  std::cout << csv;
  const auto path = output_dir(cfg) / ("sweep_" + pipe.model().name + "_" + cfg.rom + ".csv");
  std::ofstream(path) << csv;
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"qbstab: stability domain estimates for quadratic-bilinear models"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--N", cfg.N, "full-order grid size override");
    c->add_option("--seed", cfg.seed, "random seed");
    c->add_option("--out", cfg.out, "output directory (default $QBSTAB_OUT or .)");
  };
  auto add_optimizer = [&](CLI::App* c) {
    c->add_option("--cert", cfg.cert, "lyapunov-identity | lqg-sigma | riccati-implied");
    c->add_option("--restarts", cfg.opt.restarts, "random restarts")->check(CLI::PositiveNumber);
    c->add_option("--mu-bound", cfg.opt.mu_bound, "box bound on mu")->check(CLI::PositiveNumber);
    c->add_option("--tolx", cfg.opt.tol_x, "relative step tolerance");
    c->add_option("--tolfun", cfg.opt.tol_fun, "relative objective tolerance");
    c->add_option("--maxiter", cfg.opt.max_iter, "iteration budget per restart");
  };
  auto add_target = [&](CLI::App* c) {
    c->add_option("--model", cfg.model, "built-in model name or model JSON file");
    c->add_option("--rom", cfg.rom, "lqgbt | pod | opinf, or a ROM JSON file");
    c->add_option("--n", cfg.n_spec, "reduced order (modes per variable for pod)");
    c->add_option("--reg", cfg.reg, "ridge regularization for opinf");
  };

  auto* model = app.add_subcommand("model", "full-order models");
  model->require_subcommand(1);
  auto* build = model->add_subcommand("build", "build and save a full-order model");
  build->add_option("name", cfg.model, "burgers-fem | fhn | burgers-fd | scalar")->required();
  add_common(build);

  auto* reduce = app.add_subcommand("reduce", "build a reduced model");
  add_target(reduce);
  add_common(reduce);

  auto* estimate = app.add_subcommand("estimate", "analytic and optimized stability radius");
  add_target(estimate);
  add_common(estimate);
  add_optimizer(estimate);

  auto* validate = app.add_subcommand("validate", "Monte-Carlo check of a stability radius");
  add_target(validate);
  add_common(validate);
  add_optimizer(validate);
  validate->add_option("--rho", cfg.rho, "radius to check (default: rho_star)");
  validate->add_option("--samples", cfg.samples, "shell samples")->check(CLI::PositiveNumber);
  validate->add_flag("--probe", cfg.probe, "also probe 1.5, 2, 5 and 10 times the radius");

  auto* sweep = app.add_subcommand("sweep", "radii over a range of reduced orders");
  add_target(sweep);
  add_common(sweep);
  add_optimizer(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*build) return cmd_model_build(cfg);
    if (*reduce) return cmd_reduce(cfg);
    if (*estimate) return cmd_estimate(cfg);
    if (*validate) return cmd_validate(cfg);
    if (*sweep) return cmd_sweep(cfg);
  } catch (const UnstableLinearPart& e) {
    std::cerr << "certificate not applicable: " << e.what() << '\n';
    return 2;
  } catch (const InvalidCertificate& e) {
    std::cerr << "certificate not applicable: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace qbstab
