#include "evoporo/fem.hpp"

#include "evoporo/errors.hpp"
#include "evoporo/geometry.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace evoporo;

namespace {

constexpr double kPi = 3.14159265358979323846;

Mesh single_reference_triangle() {
    Mesh m;
    m.vertices = {{0.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
    m.triangles = {{0, 1, 2}};
    m.h = 1.0;
    return m;
}

int find_node(const Mesh& mesh, const Vec2& p, double tol = 1e-12) {
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        if ((mesh.vertices[static_cast<std::size_t>(i)] - p).norm() <= tol) return i;
    }
    return -1;
}

bool is_boundary_node(const Mesh& mesh, int i) {
    const Vec2& p = mesh.vertices[static_cast<std::size_t>(i)];
    return p.x == 0.0 || p.y == 0.0 || p.x == 1.0 || p.y == 1.0;
}

} // namespace

TEST_CASE("element stiffness matches the hand-integrated reference triangle") {
    const Mesh m = single_reference_triangle();
    const SparseMatrix K = assemble_stiffness(m, constant_tensor(Mat2::identity()));
    // Classical P1 element matrix: 0.5 * [[2,-1,-1],[-1,1,0],[-1,0,1]].
    const double expected[3][3] = {{1.0, -0.5, -0.5}, {-0.5, 0.5, 0.0}, {-0.5, 0.0, 0.5}};
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(K.entry(i, j) == doctest::Approx(expected[i][j]).epsilon(1e-14));
        }
    }
}

TEST_CASE("patch test: affine fields give vanishing interior residuals") {
    const Mesh mesh = build_square_mesh(1, 1, 1.0 / 8.0, false);
    const SparseMatrix K = assemble_stiffness(mesh, constant_tensor(Mat2::identity()));
    CHECK(K.max_asymmetry() <= 1e-14);

    std::vector<double> u(static_cast<std::size_t>(mesh.num_vertices()));
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        const Vec2& p = mesh.vertices[static_cast<std::size_t>(i)];
        u[static_cast<std::size_t>(i)] = 0.7 + 1.3 * p.x - 0.4 * p.y;
    }
    const std::vector<double> r = K.multiply(u);
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        if (!is_boundary_node(mesh, i)) {
            CHECK(std::fabs(r[static_cast<std::size_t>(i)]) <= 1e-12);
        }
    }
}

TEST_CASE("mass matrix: partition of unity, linearity, quadrature total") {
    const Mesh mesh = build_square_mesh(1, 1, 1.0 / 8.0, false);
    const SparseMatrix M1 = assemble_mass(mesh, constant_scalar(1.0));
    CHECK(M1.total() == doctest::Approx(mesh.total_area()).epsilon(1e-12));

    const SparseMatrix Mc = assemble_mass(mesh, constant_scalar(3.75));
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        for (int k = M1.row_ptr()[static_cast<std::size_t>(i)]; k < M1.row_ptr()[static_cast<std::size_t>(i) + 1]; ++k) {
            const int j = M1.col_idx()[static_cast<std::size_t>(k)];
            CHECK(Mc.entry(i, j) == doctest::Approx(3.75 * M1.entry(i, j)).epsilon(1e-14));
        }
    }

    // Random positive field: independent quadrature total equals the matrix total.
    oracles::Rng rng(31);
    std::vector<double> field(static_cast<std::size_t>(num_volume_qp(mesh)));
    for (double& v : field) v = rng.uniform(0.1, 2.0);
    auto coeff = [&](int e, int q) { return field[static_cast<std::size_t>(3 * e + q)]; };
    const SparseMatrix Mf = assemble_mass(mesh, coeff);
    double direct = 0.0;
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        for (int q = 0; q < 3; ++q) direct += mesh.triangle_area(e) / 3.0 * coeff(e, q);
    }
    CHECK(Mf.total() == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("convection: zero field, constant field closed form, divergence theorem") {
    const Mesh mesh = build_square_mesh(1, 1, 1.0 / 8.0, false);

    const SparseMatrix C0 = assemble_convection(mesh, constant_vector({0.0, 0.0}));
    CHECK(C0.max_abs() == 0.0);

    // Constant V, linear u: (C u)_i = -(V . grad u) int phi_i.
    const Vec2 V{0.8, -0.3};
    const SparseMatrix C = assemble_convection(mesh, constant_vector(V));
    std::vector<double> u(static_cast<std::size_t>(mesh.num_vertices()));
    const Vec2 grad_u{1.1, 0.6};
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        const Vec2& p = mesh.vertices[static_cast<std::size_t>(i)];
        u[static_cast<std::size_t>(i)] = grad_u.x * p.x + grad_u.y * p.y;
    }
    const std::vector<double> cu = C.multiply(u);
    const std::vector<double> phi_int = assemble_load(mesh, constant_scalar(1.0));
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        CHECK(cu[static_cast<std::size_t>(i)] ==
              doctest::Approx(-V.dot(grad_u) * phi_int[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }

    // Divergence-free interpolated V: sum_i (C u)_i = -boundary flux of u V.
    auto Vfield = [&](int e, int q) {
        const Vec2 p = quad_point(mesh, e, q);
        return Vec2{p.y, p.x}; // divergence-free, linear
    };
    const SparseMatrix Cdf = assemble_convection(mesh, Vfield);
    const std::vector<double> cu2 = Cdf.multiply(u);
    double total = 0.0;
    for (double v : cu2) total += v;
    // Oracle: -\oint u (V . n) ds over the unit square by 2-point Gauss.
    double flux = 0.0;
    for (const auto& be : mesh.boundary_edges) {
        const Vec2& a = mesh.vertices[static_cast<std::size_t>(be.a)];
        const Vec2& b = mesh.vertices[static_cast<std::size_t>(be.b)];
        const double len = (b - a).norm();
        Vec2 n{0.0, 0.0};
        if (a.x == 1.0 && b.x == 1.0) n = {1.0, 0.0};
        if (a.x == 0.0 && b.x == 0.0) n = {-1.0, 0.0};
        if (a.y == 1.0 && b.y == 1.0) n = {0.0, 1.0};
        if (a.y == 0.0 && b.y == 0.0) n = {0.0, -1.0};
        for (const Vec2& p : edge_quad_points(mesh, be)) {
            const double uv = grad_u.x * p.x + grad_u.y * p.y;
            flux += 0.5 * len * uv * Vec2{p.y, p.x}.dot(n);
        }
    }
    CHECK(total == doctest::Approx(-flux).epsilon(1e-10));
}

TEST_CASE("surface mass: perimeter, empty tag, transformed measure limit") {
    const HanzawaGeometry geom;
    double prev_err = 0.0;
    for (int level = 0; level < 2; ++level) {
        const double h = (level == 0) ? 1.0 / 12.0 : 1.0 / 24.0;
        const Mesh mesh = build_reference_cell_mesh(0.35, h);

        const SparseMatrix Ms = assemble_surface_mass(mesh, EdgeTag::GammaHole, constant_scalar(1.0));
        double polygon = 0.0;
        for (const auto& be : mesh.boundary_edges) {
            if (be.tag == EdgeTag::GammaHole) {
                polygon += (mesh.vertices[static_cast<std::size_t>(be.b)] -
                            mesh.vertices[static_cast<std::size_t>(be.a)]).norm();
            }
        }
        CHECK(Ms.total() == doctest::Approx(polygon).epsilon(1e-12));

        const SparseMatrix Mo = assemble_surface_mass(mesh, EdgeTag::OuterBoundary, constant_scalar(1.0));
        CHECK(Mo.total() == 0.0);

        // Coefficient J0 at radius R: total approximates the moving surface
        // measure 2 pi R at second order.
        const double R = 0.22;
        std::vector<const BoundaryEdge*> edges;
        for (const auto& be : mesh.boundary_edges) edges.push_back(&be);
        auto J0_on_edge = [&](int be_idx, int gq) {
            const BoundaryEdge& be = *edges[static_cast<std::size_t>(be_idx)];
            const Vec2 p = edge_quad_points(mesh, be)[static_cast<std::size_t>(gq)];
            return geom.det(p, R);
        };
        const SparseMatrix Mj = assemble_surface_mass(mesh, EdgeTag::GammaHole, J0_on_edge);
        const double err = std::fabs(Mj.total() - 2.0 * kPi * R);
        if (level == 1) {
            CHECK(prev_err / err >= 3.0);
        } else {
            CHECK(err <= 5e-3);
        }
        prev_err = err;
    }
}

TEST_CASE("solve_spd: identity, dense oracle, zero rhs") {
    // A = I solves in one iteration.
    std::vector<std::tuple<int, int, double>> trip;
    for (int i = 0; i < 6; ++i) trip.emplace_back(i, i, 1.0);
    const SparseMatrix I6 = SparseMatrix::from_triplets(6, 6, trip, true);
    std::vector<double> b{1.0, -2.0, 3.0, 0.5, 0.0, 4.0};
    SolveStats stats;
    const auto x = solve_spd(I6, b, 1e-12, 0, &stats);
    CHECK(stats.iterations == 1);
    for (int i = 0; i < 6; ++i) CHECK(x[static_cast<std::size_t>(i)] == doctest::Approx(b[static_cast<std::size_t>(i)]).epsilon(1e-14));

    // 5x5 SPD system against the dense LU oracle.
    std::vector<std::vector<double>> dense = {{4, 1, 0, 0, 1},
                                              {1, 5, 2, 0, 0},
                                              {0, 2, 6, 1, 0},
                                              {0, 0, 1, 3, 1},
                                              {1, 0, 0, 1, 4}};
    std::vector<std::tuple<int, int, double>> t5;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            if (dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != 0.0) {
                t5.emplace_back(i, j, dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
            }
        }
    }
    const SparseMatrix A5 = SparseMatrix::from_triplets(5, 5, t5, true);
    std::vector<double> b5{1, 2, 3, 4, 5};
    const auto x5 = solve_spd(A5, b5, 1e-12);
    const auto ref = oracles::dense_lu_solve(dense, b5);
    for (int i = 0; i < 5; ++i) {
        CHECK(x5[static_cast<std::size_t>(i)] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-10));
    }

    const auto x0 = solve_spd(A5, std::vector<double>(5, 0.0));
    for (double v : x0) CHECK(v == 0.0);
}

TEST_CASE("solve_general: identity, dense oracle, zero rhs") {
    std::vector<std::vector<double>> dense = {{4, 1, 0, 0, 1},
                                              {-1, 5, 2, 0, 0},
                                              {0, 1, 6, 1, 0},
                                              {0, 0, -1, 3, 1},
                                              {2, 0, 0, 1, 4}};
    std::vector<std::tuple<int, int, double>> t5;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            if (dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] != 0.0) {
                t5.emplace_back(i, j, dense[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)]);
            }
        }
    }
    const SparseMatrix A5 = SparseMatrix::from_triplets(5, 5, t5, false);
    std::vector<double> b5{5, 4, 3, 2, 1};
    const auto x5 = solve_general(A5, b5, 1e-12);
    const auto ref = oracles::dense_lu_solve(dense, b5);
    for (int i = 0; i < 5; ++i) {
        CHECK(x5[static_cast<std::size_t>(i)] == doctest::Approx(ref[static_cast<std::size_t>(i)]).epsilon(1e-9));
    }
    const auto x0 = solve_general(A5, std::vector<double>(5, 0.0));
    for (double v : x0) CHECK(v == 0.0);
}

TEST_CASE("solver determinism: identical inputs give identical iterates") {
    const Mesh mesh = build_square_mesh(1, 1, 1.0 / 10.0, false);
    const SparseMatrix K = assemble_stiffness(mesh, constant_tensor(Mat2::identity()));
    const SparseMatrix M = assemble_mass(mesh, constant_scalar(1.0));
    std::vector<std::tuple<int, int, double>> trip;
    for (int i = 0; i < K.rows(); ++i) {
        for (int k = K.row_ptr()[static_cast<std::size_t>(i)]; k < K.row_ptr()[static_cast<std::size_t>(i) + 1]; ++k) {
            trip.emplace_back(i, K.col_idx()[static_cast<std::size_t>(k)], K.values()[static_cast<std::size_t>(k)]);
        }
        trip.emplace_back(i, i, 1.0);
    }
    const SparseMatrix A = SparseMatrix::from_triplets(K.rows(), K.rows(), trip, true);
    std::vector<double> b(static_cast<std::size_t>(A.rows()));
    oracles::Rng rng(41);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);
    const auto x1 = solve_spd(A, b);
    const auto x2 = solve_spd(A, b);
    CHECK(x1 == x2);
    const auto y1 = solve_general(A, b);
    const auto y2 = solve_general(A, b);
    CHECK(y1 == y2);
    (void)M;
}

TEST_CASE("constraints: identity reduction without pairs") {
    std::vector<std::tuple<int, int, double>> trip;
    for (int i = 0; i < 4; ++i) trip.emplace_back(i, i, 2.0);
    const SparseMatrix A = SparseMatrix::from_triplets(4, 4, trip, true);
    std::vector<double> b{1, 2, 3, 4};
    const auto sys = ConstrainedSystem::build(A, b, {}, false);
    CHECK(sys.matrix().rows() == 4);
    const auto x = solve_spd(sys.matrix(), sys.rhs());
    const auto full = sys.expand(x);
    for (int i = 0; i < 4; ++i) CHECK(full[static_cast<std::size_t>(i)] == doctest::Approx(b[static_cast<std::size_t>(i)] / 2.0));
}

TEST_CASE("constraints: pure-Neumann Laplace with mean-zero multiplier") {
    const Mesh mesh = build_square_mesh(1, 1, 1.0 / 12.0, false);
    const SparseMatrix K = assemble_stiffness(mesh, constant_tensor(Mat2::identity()));
    const std::vector<double> mass_vec = assemble_load(mesh, constant_scalar(1.0));

    // Consistent RHS with zero total.
    auto source = [](int, int) { return 0.0; };
    (void)source;
    std::vector<double> b = assemble_load(mesh, [&mesh](int e, int q) {
        const Vec2 p = quad_point(mesh, e, q);
        return std::sin(2.0 * kPi * p.x) * std::cos(2.0 * kPi * p.y);
    });

    const auto sys = ConstrainedSystem::build(K, b, {}, true, &mass_vec);
    const auto xr = solve_general(sys.matrix(), sys.rhs(), 1e-12);
    const auto u = sys.expand(xr);
    double mean = 0.0;
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        mean += mass_vec[static_cast<std::size_t>(i)] * u[static_cast<std::size_t>(i)];
    }
    CHECK(std::fabs(mean) <= 1e-12);
}

TEST_CASE("constraints: periodic Poisson matches the doubled-domain oracle") {
    auto solve_periodic = [](const Mesh& mesh) {
        const SparseMatrix K = assemble_stiffness(mesh, constant_tensor(Mat2::identity()));
        const std::vector<double> mass_vec = assemble_load(mesh, constant_scalar(1.0));
        std::vector<double> b = assemble_load(mesh, [&mesh](int e, int q) {
            const Vec2 p = quad_point(mesh, e, q);
            return 8.0 * kPi * kPi * std::sin(2.0 * kPi * p.x) * std::cos(2.0 * kPi * p.y);
        });
        const auto sys = ConstrainedSystem::build(K, b, mesh.periodic_pairs, true, &mass_vec);
        return sys.expand(solve_general(sys.matrix(), sys.rhs(), 1e-12));
    };

    const Mesh unit = build_square_mesh(1, 1, 1.0 / 8.0, true);
    const Mesh doubled = build_square_mesh(2, 1, 1.0 / 8.0, true);
    const auto u1 = solve_periodic(unit);
    const auto u2 = solve_periodic(doubled);

    for (int i = 0; i < unit.num_vertices(); ++i) {
        const Vec2& p = unit.vertices[static_cast<std::size_t>(i)];
        const int j = find_node(doubled, p);
        REQUIRE(j >= 0);
        CHECK(u1[static_cast<std::size_t>(i)] == doctest::Approx(u2[static_cast<std::size_t>(j)]).epsilon(5e-9));
    }
}

TEST_CASE("inconsistent periodic pairs are rejected") {
    std::vector<std::tuple<int, int, double>> trip;
    for (int i = 0; i < 3; ++i) trip.emplace_back(i, i, 1.0);
    const SparseMatrix A = SparseMatrix::from_triplets(3, 3, trip, true);
    std::vector<double> b{1, 2, 3};
    CHECK_THROWS_AS(ConstrainedSystem::build(A, b, {{0, 0}}, false), InconsistentPairs);
    CHECK_THROWS_AS(ConstrainedSystem::build(A, b, {{0, 7}}, false), InconsistentPairs);
    CHECK_THROWS_AS(ConstrainedSystem::build(A, b, {}, true, nullptr), InconsistentPairs);
}

TEST_CASE("non-SPD tensors are rejected when flagged") {
    const Mesh mesh = build_square_mesh(1, 1, 0.25, false);
    TensorCoefficient bad{[](int, int) { return Mat2{1.0, 0.0, 0.0, -0.5}; }, true};
    CHECK_THROWS_AS(assemble_stiffness(mesh, bad), NonSPDCoefficient);
    TensorCoefficient tolerated{[](int, int) { return Mat2{1.0, 0.0, 0.0, -0.5}; }, false};
    CHECK_NOTHROW(assemble_stiffness(mesh, tolerated));
}

TEST_CASE("manufactured solution convergence on the periodic cell") {
    // -div(grad u) = f, u = sin(2 pi x) cos(2 pi y), periodic with zero mean.
    auto exact = [](Vec2 p) { return std::sin(2.0 * kPi * p.x) * std::cos(2.0 * kPi * p.y); };
    auto exact_grad = [](Vec2 p) {
        return Vec2{2.0 * kPi * std::cos(2.0 * kPi * p.x) * std::cos(2.0 * kPi * p.y),
                    -2.0 * kPi * std::sin(2.0 * kPi * p.x) * std::sin(2.0 * kPi * p.y)};
    };

    std::vector<double> l2_errors, h1_errors, hs;
    for (const double h : {1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0}) {
        const Mesh mesh = build_square_mesh(1, 1, h, true);
        const SparseMatrix K = assemble_stiffness(mesh, constant_tensor(Mat2::identity()));
        const std::vector<double> mass_vec = assemble_load(mesh, constant_scalar(1.0));
        std::vector<double> b = assemble_load(mesh, [&mesh, &exact](int e, int q) {
            return 8.0 * kPi * kPi * exact(quad_point(mesh, e, q));
        });
        const auto sys = ConstrainedSystem::build(K, b, mesh.periodic_pairs, true, &mass_vec);
        const auto u = sys.expand(solve_general(sys.matrix(), sys.rhs(), 1e-12));
        const ErrorNorms err = error_norms(mesh, u, exact, exact_grad);
        l2_errors.push_back(err.l2);
        h1_errors.push_back(err.h1);
        hs.push_back(mesh.h);
    }
    for (std::size_t i = 1; i < l2_errors.size(); ++i) {
        const double rate_l2 = std::log(l2_errors[i - 1] / l2_errors[i]) / std::log(hs[i - 1] / hs[i]);
        const double rate_h1 = std::log(h1_errors[i - 1] / h1_errors[i]) / std::log(hs[i - 1] / hs[i]);
        CHECK(rate_l2 >= 1.9);
        CHECK(rate_h1 >= 0.9);
    }
}

TEST_CASE("matrix market dump is well-formed") {
    std::vector<std::tuple<int, int, double>> trip{{0, 0, 1.5}, {1, 0, -2.0}, {1, 1, 3.0}};
    const SparseMatrix A = SparseMatrix::from_triplets(2, 2, trip, false);
    const std::string mm = A.to_matrix_market();
    CHECK(mm.find("%%MatrixMarket matrix coordinate real general") == 0);
    CHECK(mm.find("2 2 3") != std::string::npos);
}
