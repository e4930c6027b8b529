#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qbstab/estimates.hpp"
#include "qbstab/models.hpp"
#include "qbstab/rom.hpp"
#include "qbstab/sim.hpp"
#include "qbstab/validate.hpp"

namespace qbstab {

/// Reduction pipelines as run by the command line tool. Training data are simulated
/// on first use and reused for every order.
///
///   lqgbt  LQG balanced truncation, needs C (burgers-fem).
///   pod    Galerkin projection on a POD basis; fhn uses one block per variable and n
///          modes per block.
///   opinf  operator inference on POD coordinates of simulated data.
class Pipeline {
 public:
  struct Options {
    std::uint64_t seed = 20240901;
    double opinf_regularization = 0.0;
    /// Tolerances for the full-order training simulations.
    double rtol = 1e-8;
    double atol = 1e-10;
  };

  Pipeline(BuiltModel model, std::string method, Options opts);
  Pipeline(BuiltModel model, std::string method);

  const BuiltModel& model() const { return model_; }
  const std::string& method() const { return method_; }

  /// Per-block POD sizes (one entry per variable block).
  std::vector<Index> blocks() const;
  /// Reduced dimension produced by reduce(n).
  Index reduced_dimension(Index n) const;

  ROMArtifact reduce(Index n);
  /// Certificate used by default for ROMs of this pipeline.
  CertificateKind default_certificate() const;

  /// Training snapshots (pod/opinf); simulated on first call.
  const SnapshotSet& snapshots();
  const InputSignal& training_input() const { return input_; }

 private:
  BuiltModel model_;
  std::string method_;
  Options opts_;
  InputSignal input_;
  std::optional<SnapshotSet> snap_;
};

/// Built-in model name, or path to a model/ROM JSON file.
BuiltModel load_model(const std::string& name_or_path, Index N = 0);

/// Certificate for a (reduced or full) system; Sigma is used by the LQG choices.
/// lqg-sigma without Sigma (a full-order model with output C) takes P from the LQG
/// control Riccati equation of (E^{-1}A, E^{-1}B, C), so that E^T P E = X, and Q_f = C.
LyapunovCertificate certificate_for(const QBSystem& sys, CertificateKind kind,
                                    const Vector& sigma = Vector());

struct SweepRow {
  Index n = 0;  // reduced dimension
  double rho_analytic = 0.0;
  double rho_star = 0.0;
  double alpha_star = 0.0;
  double wall_ms = 0.0;
  std::string status;  // "ok", "inapplicable: ...", "error: ..."
};

/// One row per order; certificate failures are recorded, not thrown.
std::vector<SweepRow> run_sweep(Pipeline& pipe, const std::vector<Index>& orders,
                                std::optional<CertificateKind> cert,
                                const OptimizeOptions& opts);

std::string sweep_csv(const std::vector<SweepRow>& rows);

/// Parses "3:21:2", "3..21" or "3,5,7".
std::vector<Index> parse_orders(const std::string& spec);

/// Entry point of the qbstab executable. Returns the process exit code:
/// 0 success, 2 certificate not applicable, 1 any other error.
int run_cli(int argc, char** argv);

}  // namespace qbstab
