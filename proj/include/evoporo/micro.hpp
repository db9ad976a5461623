#pragma once

#include "evoporo/fem.hpp"
#include "evoporo/geometry.hpp"
#include "evoporo/kinetics.hpp"
#include "evoporo/mesh.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace evoporo {

struct MicroState {
    double t = 0.0;
    std::vector<double> u;      // nodal concentration
    std::vector<double> R;      // per-cell radii, length units, in [eps r_lo, eps r_hi]
    std::vector<double> J_prev; // Jacobian snapshot at volume quadrature points
};

// Quadrature-point coefficient arrays for one Rothe step.
struct StepCoefficients {
    std::vector<Vec2> S;     // mapped quadrature points
    std::vector<Mat2> F;
    std::vector<double> J;
    std::vector<Mat2> D;     // J F^-1 D(S) F^-T
    std::vector<Vec2> V;     // J F^-T (dR/dt) chi nu
    std::vector<double> f;   // source at mapped points
    std::vector<double> G;   // per-cell surface-averaged rate at the old level
    std::vector<double> J_surf; // J at hole-edge quadrature points (2 per boundary edge)
    double j_min = 0.0, j_max = 0.0;
    double v_max = 0.0;
    double d_floor = 0.0;    // min eigenvalue of D over quadrature points
};

struct MicroStepLog {
    double t = 0.0;
    double u_l2 = 0.0;
    double u_max = 0.0;
    double grad_sq = 0.0;    // ||grad u||^2 at this step
    double mass_Ju = 0.0;    // int J u dx
    double min_R = 0.0, max_R = 0.0;
    double G_max = 0.0;
    double coercivity_dt_limit = 0.0;
    int solver_iterations = 0;
};

struct MicroRunResult {
    MicroState initial;
    MicroState final_state;
    std::vector<MicroStepLog> log;
    // Discrete energy monitor max_j ||u^j||_L2 + dt sum_j ||grad u^j||^2.
    double energy_estimate = 0.0;
};

class MicroSolver {
public:
    MicroSolver(const HanzawaGeometry& geom, const MicroMesh& micro, const Kinetics& kinetics,
                const ProblemData& data, double solver_tol = 1e-10);

    // Override the interface rate (negative controls in tests); the default
    // is the windowed kinetics rate.
    void set_rate(std::function<double(double, double)> rate) { rate_ = std::move(rate); }

    MicroState initial_state() const;

    // Surface-averaged interface rate of cell k at the previous time level:
    // eps times the edge-quadrature average of g(u, R_k/eps) over the cell's
    // hole boundary.
    double surface_average_G(const std::vector<double>& u, const std::vector<double>& R, int cell) const;
    std::vector<double> surface_average_G_all(const std::vector<double>& u,
                                              const std::vector<double>& R) const;

    // Explicit radius update R^j = R^(j-1) + dt G^(j-1); enforces the step
    // guard and the admissible bounds.
    std::vector<double> radius_step(const MicroState& state, double dt,
                                    const std::vector<double>* G_precomputed = nullptr) const;

    StepCoefficients build_step_coefficients(const std::vector<double>& R_new,
                                             const std::vector<double>& R_old, double dt,
                                             const std::vector<double>& G_old, double t_new) const;

    // One semi-implicit step: explicit radius with lagged rate, implicit
    // concentration with lagged boundary data.
    MicroState rothe_step(const MicroState& state, double dt, MicroStepLog* log = nullptr) const;

    MicroRunResult run(double T, double dt,
                       const std::function<void(const MicroState&, const MicroStepLog&)>& on_step = {}) const;

    // Weak residual of (J^j - J^(j-1))/dt = div V^j tested against all P1
    // basis functions, in the lumped-mass dual norm.
    double piola_residual(const MicroState& before, const MicroState& after, double dt) const;

    const Mesh& mesh() const { return micro_.mesh; }
    const CellIndexer& indexer() const { return micro_.indexer; }
    const SparseMatrix& unit_mass() const { return unit_mass_; }
    const SparseMatrix& unit_stiffness() const { return unit_stiffness_; }
    double mass_Ju(const std::vector<double>& J_qp, const std::vector<double>& u) const;

private:
    const HanzawaGeometry& geom_;
    const MicroMesh& micro_;
    Kinetics kinetics_;
    ProblemData data_;
    double solver_tol_;
    std::function<double(double, double)> rate_;
    std::vector<std::vector<int>> cell_hole_edges_; // boundary-edge indices per cell
    SparseMatrix unit_mass_;
    SparseMatrix unit_stiffness_;
};

} // namespace evoporo
