#pragma once

#include "evoporo/fem.hpp"
#include "evoporo/geometry.hpp"
#include "evoporo/mesh.hpp"

#include <map>
#include <string>
#include <vector>

namespace evoporo {

// Transformed cell tensor D0(y;R) = J0 F^-1 D F^-T from the closed-form
// transform data; SPD whenever D is.
Mat2 transformed_tensor(const HanzawaGeometry& geom, const Vec2& y, double R, const Mat2& D);

struct CellSolution {
    double R = 0.0;
    std::vector<double> w1, w2; // correctors on the reference mesh
    Mat2 D_star;
    double residual1 = 0.0, residual2 = 0.0;
};

// Periodic cell problems on the fixed reference mesh with the transformed
// tensor; mean-zero via one Lagrange multiplier.
CellSolution solve_cell_problems(const HanzawaGeometry& geom, double R, const Mesh& mesh,
                                 const Mat2& D, double tol = 1e-12);

// Homogenized tensor from converged correctors:
// (D*)_ij = int D0 (grad w_i + e_i) . (grad w_j + e_j) dy.
Mat2 effective_tensor(const HanzawaGeometry& geom, const Mesh& mesh, const CellSolution& sol,
                      const Mat2& D);

struct AveragedQuantities {
    double Jbar = 0.0;    // volume of the deformed cell, int J0 dy
    double q = 0.0;       // int div V0 dy, by surface quadrature over the hole
    double surface = 0.0; // |Gamma(R)| = 2 pi R (closed form)
    double surface_quadrature = 0.0; // int_Gamma J0 dsigma cross-check
};
AveragedQuantities averaged_quantities(const HanzawaGeometry& geom, const Mesh& mesh,
                                       double R, double dR_dt);

struct EffectiveTable {
    std::vector<double> radii;      // uniform grid over [r_lo, r_hi]
    std::vector<Mat2> D_star;       // per radius
    std::vector<double> Jbar;       // volume quadrature
    std::vector<double> dJbar_dR;   // derivative of the monotone Jbar interpolant
    std::vector<double> surface;    // 2 pi R
    double mesh_h = 0.0;
    std::uint64_t mesh_hash = 0;
    double solver_tol = 0.0;

    struct Entry {
        Mat2 D_star;
        double Jbar;
        double dJbar_dR;
        double surface;
    };
    Entry at(double R) const; // monotone cubic interpolation; TableRangeError outside

    std::string to_json() const;
    static EffectiveTable from_json(const std::string& text);
};

EffectiveTable build_effective_table(const HanzawaGeometry& geom, const Mesh& mesh,
                                     const Mat2& D, int grid_size = 64, double tol = 1e-12);

// Validation path: the untransformed cell problem on a physically deformed
// cell meshed at hole radius R.
Mat2 moving_cell_tensor(const Mesh& mesh_moving, const Mat2& D, double tol = 1e-12);

// Per-point effective tensors for x-dependent base tensors: cell solves
// cached by (x-tile, nearest table radius). Off the default code path.
class PointwiseEffective {
public:
    PointwiseEffective(const HanzawaGeometry& geom, const Mesh& reference_mesh,
                       std::function<Mat2(Vec2)> D_of_x, int tiles, const std::vector<double>& radius_grid);

    Mat2 tensor_at(const Vec2& x, double R);
    std::size_t cache_size() const { return cache_.size(); }

private:
    const HanzawaGeometry& geom_;
    const Mesh& mesh_;
    std::function<Mat2(Vec2)> D_of_x_;
    int tiles_;
    std::vector<double> radius_grid_;
    std::map<std::pair<int, int>, Mat2> cache_; // (tile, radius index) -> D*
};

// Monotone (Fritsch-Carlson) cubic interpolant used for all table columns.
class MonotoneCubic {
public:
    MonotoneCubic() = default;
    MonotoneCubic(std::vector<double> x, std::vector<double> y);
    double value(double xq) const;
    double derivative(double xq) const;

private:
    std::vector<double> x_, y_, d_; // knots, values, knot slopes
};

} // namespace evoporo
