#pragma once

#include <string>

#include "json.hpp"

#include "qbstab/estimates.hpp"
#include "qbstab/qbsys.hpp"
#include "qbstab/rom.hpp"
#include "qbstab/sim.hpp"
#include "qbstab/validate.hpp"

namespace qbstab::io {

using Json = nlohmann::json;

// Dense matrices: {"rows", "cols", "data": row-major}.
// Sparse matrices: {"rows", "cols", "format": "triplets", "i", "j", "v"}.
Json matrix_to_json(const Matrix& M);
Json sparse_to_json(const SparseMatrix& M);
/// Accepts either layout.
Matrix matrix_from_json(const Json& j);
SparseMatrix sparse_from_json(const Json& j);

/// {"n", "m", "E", "A", "H" (triplets), "N": [...], "B", "C"?}
Json system_to_json(const QBSystem& sys);
QBSystem system_from_json(const Json& j);

Json rom_to_json(const ROMArtifact& rom);
ROMArtifact rom_from_json(const Json& j);

Json estimate_to_json(const StabilityEstimate& est);
Json validation_to_json(const ValidationReport& rep);

Json read_json(const std::string& path);
void write_json(const std::string& path, const Json& j);

void save_system(const std::string& path, const QBSystem& sys);
QBSystem load_system(const std::string& path);
void save_rom(const std::string& path, const ROMArtifact& rom);
ROMArtifact load_rom(const std::string& path);

/// Binary snapshot file: magic "QBSNAP01", int64 N, K, m, has_xdot, then t (K doubles),
/// X, U and optionally Xdot column-major.
void save_snapshots(const std::string& path, const SnapshotSet& snap);
SnapshotSet load_snapshots(const std::string& path);
/// One row per snapshot: t, x_1..x_N, u_1..u_m.
void save_snapshots_csv(const std::string& path, const SnapshotSet& snap);
SnapshotSet load_snapshots_csv(const std::string& path, Index state_dim);

/// t, x_1..x_n per stored point.
void write_trajectory_csv(const std::string& path, const Trajectory& tr);
/// Plain numeric CSV, one matrix row per line.
void write_matrix_csv(const std::string& path, const Matrix& M);
/// Summary header + one row per report.
void write_validation_csv(const std::string& path, const std::vector<ValidationReport>& reps);

}  // namespace qbstab::io
