#pragma once

#include "evoporo/linalg.hpp"
#include "evoporo/mesh.hpp"

#include <functional>
#include <string>
#include <vector>

namespace evoporo {

// Nodal P1 field bound to a mesh.
struct FieldP1 {
    const Mesh* mesh = nullptr;
    std::vector<double> values;

    FieldP1() = default;
    explicit FieldP1(const Mesh& m, double fill = 0.0)
        : mesh(&m), values(static_cast<std::size_t>(m.num_vertices()), fill) {}

    // Barycentric evaluation on element e at a point inside it.
    double eval_on(int e, const Vec2& p) const;
};

// Compressed row storage; rows sorted, no explicit zeros from assembly merges.
class SparseMatrix {
public:
    static SparseMatrix from_triplets(int rows, int cols,
                                      std::vector<std::tuple<int, int, double>> triplets,
                                      bool symmetric_hint = false);

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    bool symmetric_hint() const { return symmetric_; }

    void multiply(const std::vector<double>& x, std::vector<double>& y) const;
    std::vector<double> multiply(const std::vector<double>& x) const;
    std::vector<double> diagonal() const;
    double entry(int i, int j) const;
    double max_abs() const;
    double max_asymmetry() const;
    double total() const; // sum of all entries

    std::string to_matrix_market() const;

    const std::vector<int>& row_ptr() const { return row_ptr_; }
    const std::vector<int>& col_idx() const { return col_idx_; }
    const std::vector<double>& values() const { return vals_; }

private:
    int rows_ = 0;
    int cols_ = 0;
    bool symmetric_ = false;
    std::vector<int> row_ptr_;
    std::vector<int> col_idx_;
    std::vector<double> vals_;
};

// Quadrature-point coefficient data: scalar, vector or tensor callables of
// (element, quadrature point index). Tensors flagged SPD are verified during
// assembly.
using ScalarCoefficient = std::function<double(int, int)>;
using VectorCoefficient = std::function<Vec2(int, int)>;

struct TensorCoefficient {
    std::function<Mat2(int, int)> eval;
    bool spd = true;
};

// Degree-2 triangle rule (edge midpoints) used for all variable-coefficient
// assembly; a degree-4 rule is kept for error measurement.
struct VolumeQuadrature {
    std::array<Vec2, 3> points_reference;
    std::array<double, 3> weights; // relative to element area
};
const VolumeQuadrature& degree2_rule();

Vec2 quad_point(const Mesh& mesh, int e, int q); // physical coordinates
int num_volume_qp(const Mesh& mesh);

// Surface (edge) 2-point Gauss rule positions for a tagged edge.
std::array<Vec2, 2> edge_quad_points(const Mesh& mesh, const BoundaryEdge& be);

SparseMatrix assemble_stiffness(const Mesh& mesh, const TensorCoefficient& tensor);
SparseMatrix assemble_mass(const Mesh& mesh, const ScalarCoefficient& scalar);
SparseMatrix assemble_convection(const Mesh& mesh, const VectorCoefficient& vector);
// Surface mass over edges with the given tag; cell >= 0 restricts to one
// micro cell. Throws MissingSurface when the restriction selects nothing.
SparseMatrix assemble_surface_mass(const Mesh& mesh, EdgeTag tag, const ScalarCoefficient& scalar,
                                   int cell = -1);
std::vector<double> assemble_load(const Mesh& mesh, const ScalarCoefficient& scalar);

// Convenience constant coefficients.
ScalarCoefficient constant_scalar(double c);
TensorCoefficient constant_tensor(const Mat2& D, bool spd = true);
VectorCoefficient constant_vector(const Vec2& v);

struct SolveStats {
    int iterations = 0;
    double residual = 0.0;
    bool used_fallback = false;
};

// Jacobi-preconditioned CG; relative residual <= tol or NoConvergence after
// max_iter (default 20 * dim).
std::vector<double> solve_spd(const SparseMatrix& A, const std::vector<double>& b,
                              double tol = 1e-10, int max_iter = 0, SolveStats* stats = nullptr,
                              const std::vector<double>* x0 = nullptr);

// Jacobi-preconditioned BiCGStab with restarted GMRES(30) fallback on
// breakdown; same residual contract.
std::vector<double> solve_general(const SparseMatrix& A, const std::vector<double>& b,
                                  double tol = 1e-10, int max_iter = 0, SolveStats* stats = nullptr,
                                  const std::vector<double>* x0 = nullptr);

// Periodic master/slave elimination plus optional mean-zero Lagrange
// multiplier row built from the coefficient-1 mass vector.
class ConstrainedSystem {
public:
    static ConstrainedSystem build(const SparseMatrix& A, const std::vector<double>& b,
                                   const std::vector<std::pair<int, int>>& periodic_pairs,
                                   bool mean_zero, const std::vector<double>* mass_vector = nullptr);

    const SparseMatrix& matrix() const { return A_; }
    const std::vector<double>& rhs() const { return b_; }
    bool has_multiplier() const { return has_multiplier_; }

    // Restore a full nodal vector (slaves copy masters; multiplier dropped).
    std::vector<double> expand(const std::vector<double>& reduced) const;
    std::vector<double> reduce(const std::vector<double>& full) const;

private:
    SparseMatrix A_;
    std::vector<double> b_;
    std::vector<int> full_to_reduced_;
    int n_full = 0;
    int n_reduced = 0;
    bool has_multiplier_ = false;
};

// Norm helpers.
double l2_norm(const SparseMatrix& unit_mass, const std::vector<double>& u);
double h1_seminorm(const SparseMatrix& unit_stiffness, const std::vector<double>& u);
double max_norm(const std::vector<double>& u);

// Quadrature error norms against a manufactured solution (degree-4 rule).
struct ErrorNorms {
    double l2 = 0.0;
    double h1 = 0.0;
};
ErrorNorms error_norms(const Mesh& mesh, const std::vector<double>& u,
                       const std::function<double(Vec2)>& exact,
                       const std::function<Vec2(Vec2)>& exact_grad);

} // namespace evoporo
