#include "evoporo/effective.hpp"

#include "evoporo/errors.hpp"
#include "evoporo/util.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace evoporo {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Stiffness coefficient and cell-problem right-hand sides share the
// quadrature-point tensor values; build them once per radius.
struct CellAssembly {
    SparseMatrix K;
    std::vector<double> b1, b2;
    std::vector<Mat2> D0; // per volume quadrature point
};

CellAssembly assemble_cell_problem(const HanzawaGeometry& geom, double R, const Mesh& mesh,
                                   const Mat2& D) {
    CellAssembly out;
    out.D0.resize(static_cast<std::size_t>(num_volume_qp(mesh)));
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        for (int q = 0; q < 3; ++q) {
            out.D0[static_cast<std::size_t>(3 * e + q)] =
                transformed_tensor(geom, quad_point(mesh, e, q), R, D);
        }
    }
    TensorCoefficient coeff{[&out](int e, int q) { return out.D0[static_cast<std::size_t>(3 * e + q)]; }, true};
    out.K = assemble_stiffness(mesh, coeff);

    // RHS_i[row] = -int D0 e_i . grad phi_row
    auto rhs = [&](const Vec2& ei) {
        std::vector<double> b(static_cast<std::size_t>(mesh.num_vertices()), 0.0);
        for (int e = 0; e < mesh.num_triangles(); ++e) {
            const auto& t = mesh.triangles[static_cast<std::size_t>(e)];
            const Vec2& a = mesh.vertices[static_cast<std::size_t>(t[0])];
            const Vec2& bb = mesh.vertices[static_cast<std::size_t>(t[1])];
            const Vec2& c = mesh.vertices[static_cast<std::size_t>(t[2])];
            const double two_area = (bb.x - a.x) * (c.y - a.y) - (bb.y - a.y) * (c.x - a.x);
            const Vec2 grads[3] = {{(bb.y - c.y) / two_area, (c.x - bb.x) / two_area},
                                   {(c.y - a.y) / two_area, (a.x - c.x) / two_area},
                                   {(a.y - bb.y) / two_area, (bb.x - a.x) / two_area}};
            const double area = 0.5 * two_area;
            for (int q = 0; q < 3; ++q) {
                const Vec2 De = out.D0[static_cast<std::size_t>(3 * e + q)] * ei;
                const double w = area / 3.0;
                for (int i = 0; i < 3; ++i) {
                    b[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])] -= w * De.dot(grads[i]);
                }
            }
        }
        return b;
    };
    out.b1 = rhs({1.0, 0.0});
    out.b2 = rhs({0.0, 1.0});
    return out;
}

Mat2 effective_from_correctors(const Mesh& mesh, const std::vector<Mat2>& D0,
                               const std::vector<double>& w1, const std::vector<double>& w2) {
    CompensatedSum acc[3]; // 00, 01, 11
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const auto& t = mesh.triangles[static_cast<std::size_t>(e)];
        const Vec2& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec2& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec2& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        const double two_area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        const Vec2 grads[3] = {{(b.y - c.y) / two_area, (c.x - b.x) / two_area},
                               {(c.y - a.y) / two_area, (a.x - c.x) / two_area},
                               {(a.y - b.y) / two_area, (b.x - a.x) / two_area}};
        Vec2 g1{0.0, 0.0}, g2{0.0, 0.0};
        for (int i = 0; i < 3; ++i) {
            g1 += grads[i] * w1[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])];
            g2 += grads[i] * w2[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])];
        }
        const Vec2 f1 = g1 + Vec2{1.0, 0.0};
        const Vec2 f2 = g2 + Vec2{0.0, 1.0};
        const double w = 0.5 * two_area / 3.0;
        for (int q = 0; q < 3; ++q) {
            const Mat2& D = D0[static_cast<std::size_t>(3 * e + q)];
            acc[0].add(w * (D * f1).dot(f1));
            acc[1].add(w * (D * f1).dot(f2));
            acc[2].add(w * (D * f2).dot(f2));
        }
    }
    return Mat2{acc[0].value(), acc[1].value(), acc[1].value(), acc[2].value()};
}

// Outward normal (w.r.t. the hole) at a hole edge midpoint. Edge vertices lie
// on the circle; the perpendicular pointing away from the center is exact up
// to the polygonal chord defect.
Vec2 hole_edge_normal(const Vec2& a, const Vec2& b, const Vec2& center) {
    const Vec2 tangent = b - a;
    Vec2 n{tangent.y, -tangent.x};
    const Vec2 mid = (a + b) * 0.5;
    if (n.dot(mid - center) < 0.0) n = -n;
    const double len = n.norm();
    return {n.x / len, n.y / len};
}

} // namespace

Mat2 transformed_tensor(const HanzawaGeometry& geom, const Vec2& y, double R, const Mat2& D) {
    geom.require_admissible(R);
    const double J = geom.det(y, R);
    const Mat2 Finv = geom.grad(y, R).inverse();
    // F is symmetric, so F^-T = F^-1.
    return J * (Finv * D * Finv);
}

CellSolution solve_cell_problems(const HanzawaGeometry& geom, double R, const Mesh& mesh,
                                 const Mat2& D, double tol) {
    geom.require_admissible(R);
    const CellAssembly asmb = assemble_cell_problem(geom, R, mesh, D);
    const std::vector<double> mass_vec = assemble_load(mesh, constant_scalar(1.0));

    CellSolution sol;
    sol.R = R;
    auto solve_one = [&](const std::vector<double>& b, double& residual) {
        const auto sys = ConstrainedSystem::build(asmb.K, b, mesh.periodic_pairs, true, &mass_vec);
        SolveStats stats;
        const auto xr = solve_general(sys.matrix(), sys.rhs(), tol, 0, &stats);
        residual = stats.residual;
        return sys.expand(xr);
    };
    sol.w1 = solve_one(asmb.b1, sol.residual1);
    sol.w2 = solve_one(asmb.b2, sol.residual2);
    sol.D_star = effective_from_correctors(mesh, asmb.D0, sol.w1, sol.w2);
    return sol;
}

Mat2 effective_tensor(const HanzawaGeometry& geom, const Mesh& mesh, const CellSolution& sol,
                      const Mat2& D) {
    std::vector<Mat2> D0(static_cast<std::size_t>(num_volume_qp(mesh)));
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        for (int q = 0; q < 3; ++q) {
            D0[static_cast<std::size_t>(3 * e + q)] = transformed_tensor(geom, quad_point(mesh, e, q), sol.R, D);
        }
    }
    return effective_from_correctors(mesh, D0, sol.w1, sol.w2);
}

AveragedQuantities averaged_quantities(const HanzawaGeometry& geom, const Mesh& mesh,
                                       double R, double dR_dt) {
    geom.require_admissible(R);
    AveragedQuantities out;
    CompensatedSum jbar;
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const double w = mesh.triangle_area(e) / 3.0;
        for (int q = 0; q < 3; ++q) {
            jbar.add(w * geom.det(quad_point(mesh, e, q), R));
        }
    }
    out.Jbar = jbar.value();

    // q = int div V0 dy = int_{boundary} V0 . n ds; the cutoff support kills
    // the outer square, so only the hole contributes (outward normal of the
    // perforated cell points toward the hole center).
    CompensatedSum qacc, sacc;
    for (const auto& be : mesh.boundary_edges) {
        if (be.tag != EdgeTag::GammaHole) continue;
        const Vec2& a = mesh.vertices[static_cast<std::size_t>(be.a)];
        const Vec2& b = mesh.vertices[static_cast<std::size_t>(be.b)];
        const double len = (b - a).norm();
        const Vec2 n = -1.0 * hole_edge_normal(a, b, geom.frame().center);
        for (const Vec2& p : edge_quad_points(mesh, be)) {
            qacc.add(0.5 * len * geom.velocity(p, R, dR_dt).dot(n));
            sacc.add(0.5 * len * geom.det(p, R));
        }
    }
    out.q = qacc.value();
    out.surface_quadrature = sacc.value();
    out.surface = kTwoPi * R;
    return out;
}

MonotoneCubic::MonotoneCubic(std::vector<double> x, std::vector<double> y)
    : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    d_.assign(n, 0.0);
    if (n < 2) return;
    std::vector<double> delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        delta[i] = (y_[i + 1] - y_[i]) / (x_[i + 1] - x_[i]);
    }
    d_[0] = delta[0];
    d_[n - 1] = delta[n - 2];
    for (std::size_t i = 1; i + 1 < n; ++i) {
        if (delta[i - 1] * delta[i] <= 0.0) {
            d_[i] = 0.0;
        } else {
            // Fritsch-Carlson harmonic mean keeps the interpolant monotone.
            const double w1 = 2.0 * (x_[i + 1] - x_[i]) + (x_[i] - x_[i - 1]);
            const double w2 = (x_[i + 1] - x_[i]) + 2.0 * (x_[i] - x_[i - 1]);
            d_[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
        }
    }
    // Endpoint slopes limited to three times the adjacent secant.
    auto limit = [](double d, double delta0) {
        if (delta0 == 0.0) return 0.0;
        if (d * delta0 < 0.0) return 0.0;
        return (std::fabs(d) > 3.0 * std::fabs(delta0)) ? 3.0 * delta0 : d;
    };
    d_[0] = limit(d_[0], delta[0]);
    d_[n - 1] = limit(d_[n - 1], delta[n - 2]);
}

double MonotoneCubic::value(double xq) const {
    const std::size_t n = x_.size();
    if (xq <= x_.front()) return y_.front();
    if (xq >= x_.back()) return y_.back();
    const auto it = std::upper_bound(x_.begin(), x_.end(), xq);
    const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    const double h = x_[i + 1] - x_[i];
    const double t = (xq - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1;
    const double h10 = t3 - 2 * t2 + t;
    const double h01 = -2 * t3 + 3 * t2;
    const double h11 = t3 - t2;
    (void)n;
    return h00 * y_[i] + h10 * h * d_[i] + h01 * y_[i + 1] + h11 * h * d_[i + 1];
}

double MonotoneCubic::derivative(double xq) const {
    if (xq <= x_.front()) return d_.front();
    if (xq >= x_.back()) return d_.back();
    const auto it = std::upper_bound(x_.begin(), x_.end(), xq);
    const std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    const double h = x_[i + 1] - x_[i];
    const double t = (xq - x_[i]) / h;
    const double t2 = t * t;
    const double dh00 = (6 * t2 - 6 * t) / h;
    const double dh10 = 3 * t2 - 4 * t + 1;
    const double dh01 = (-6 * t2 + 6 * t) / h;
    const double dh11 = 3 * t2 - 2 * t;
    return dh00 * y_[i] + dh10 * d_[i] + dh01 * y_[i + 1] + dh11 * d_[i + 1];
}

namespace {

struct TableInterpolants {
    MonotoneCubic d00, d01, d11, jbar, surface;
};

TableInterpolants build_interpolants(const EffectiveTable& t) {
    std::vector<double> d00, d01, d11;
    for (const Mat2& m : t.D_star) {
        d00.push_back(m(0, 0));
        d01.push_back(0.5 * (m(0, 1) + m(1, 0)));
        d11.push_back(m(1, 1));
    }
    return {MonotoneCubic(t.radii, d00), MonotoneCubic(t.radii, d01), MonotoneCubic(t.radii, d11),
            MonotoneCubic(t.radii, t.Jbar), MonotoneCubic(t.radii, t.surface)};
}

} // namespace

EffectiveTable::Entry EffectiveTable::at(double R) const {
    if (R < radii.front() - 1e-12 || R > radii.back() + 1e-12) {
        throw TableRangeError("radius " + std::to_string(R) + " outside the table range");
    }
    R = std::clamp(R, radii.front(), radii.back());
    // Rebuilding small interpolants per call would be wasteful; cache once.
    static thread_local const EffectiveTable* cached = nullptr;
    static thread_local TableInterpolants interp;
    if (cached != this) {
        interp = build_interpolants(*this);
        cached = this;
    }
    Entry e;
    const double off = interp.d01.value(R);
    e.D_star = Mat2{interp.d00.value(R), off, off, interp.d11.value(R)};
    e.Jbar = interp.jbar.value(R);
    e.dJbar_dR = interp.jbar.derivative(R);
    e.surface = interp.surface.value(R);
    return e;
}

EffectiveTable build_effective_table(const HanzawaGeometry& geom, const Mesh& mesh,
                                     const Mat2& D, int grid_size, double tol) {
    if (grid_size < 8) throw ConfigError("effective table needs at least 8 radii");
    EffectiveTable t;
    t.mesh_h = mesh.h;
    t.solver_tol = tol;
    t.mesh_hash = fnv1a(mesh.vertices.data(), mesh.vertices.size() * sizeof(Vec2));

    const double lo = geom.bounds().r_lo, hi = geom.bounds().r_hi;
    for (int i = 0; i < grid_size; ++i) {
        const double R = lo + (hi - lo) * i / (grid_size - 1.0);
        const CellSolution sol = solve_cell_problems(geom, R, mesh, D, tol);
        const AveragedQuantities avg = averaged_quantities(geom, mesh, R, 1.0);
        t.radii.push_back(R);
        t.D_star.push_back(sol.D_star);
        t.Jbar.push_back(avg.Jbar);
        t.surface.push_back(avg.surface);
    }
    // dJbar/dR from the monotone interpolant of the Jbar column; the surface
    // quadrature of div V0 is the independent route checked in tests.
    const MonotoneCubic jbar(t.radii, t.Jbar);
    for (double R : t.radii) t.dJbar_dR.push_back(jbar.derivative(R));
    return t;
}

Mat2 moving_cell_tensor(const Mesh& mesh_moving, const Mat2& D, double tol) {
    // Untransformed periodic cell problems on the deformed cell.
    const SparseMatrix K = assemble_stiffness(mesh_moving, constant_tensor(D));
    const std::vector<double> mass_vec = assemble_load(mesh_moving, constant_scalar(1.0));
    std::vector<Mat2> D0(static_cast<std::size_t>(num_volume_qp(mesh_moving)), D);

    auto rhs = [&](const Vec2& ei) {
        std::vector<double> b(static_cast<std::size_t>(mesh_moving.num_vertices()), 0.0);
        for (int e = 0; e < mesh_moving.num_triangles(); ++e) {
            const auto& t = mesh_moving.triangles[static_cast<std::size_t>(e)];
            const Vec2& a = mesh_moving.vertices[static_cast<std::size_t>(t[0])];
            const Vec2& bb = mesh_moving.vertices[static_cast<std::size_t>(t[1])];
            const Vec2& c = mesh_moving.vertices[static_cast<std::size_t>(t[2])];
            const double two_area = (bb.x - a.x) * (c.y - a.y) - (bb.y - a.y) * (c.x - a.x);
            const Vec2 grads[3] = {{(bb.y - c.y) / two_area, (c.x - bb.x) / two_area},
                                   {(c.y - a.y) / two_area, (a.x - c.x) / two_area},
                                   {(a.y - bb.y) / two_area, (bb.x - a.x) / two_area}};
            const Vec2 De = D * ei;
            const double w = 0.5 * two_area;
            for (int i = 0; i < 3; ++i) {
                b[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])] -= w * De.dot(grads[i]);
            }
        }
        return b;
    };

    std::vector<double> w1, w2;
    for (int comp = 0; comp < 2; ++comp) {
        const auto b = rhs(comp == 0 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0});
        const auto sys = ConstrainedSystem::build(K, b, mesh_moving.periodic_pairs, true, &mass_vec);
        auto x = sys.expand(solve_general(sys.matrix(), sys.rhs(), tol));
        (comp == 0 ? w1 : w2) = std::move(x);
    }
    return effective_from_correctors(mesh_moving, D0, w1, w2);
}

PointwiseEffective::PointwiseEffective(const HanzawaGeometry& geom, const Mesh& reference_mesh,
                                       std::function<Mat2(Vec2)> D_of_x, int tiles,
                                       const std::vector<double>& radius_grid)
    : geom_(geom), mesh_(reference_mesh), D_of_x_(std::move(D_of_x)), tiles_(tiles),
      radius_grid_(radius_grid) {}

Mat2 PointwiseEffective::tensor_at(const Vec2& x, double R) {
    const int tx = std::clamp(static_cast<int>(x.x * tiles_), 0, tiles_ - 1);
    const int ty = std::clamp(static_cast<int>(x.y * tiles_), 0, tiles_ - 1);
    const int tile = ty * tiles_ + tx;
    int ri = 0;
    double best = 1e300;
    for (std::size_t i = 0; i < radius_grid_.size(); ++i) {
        const double d = std::fabs(radius_grid_[i] - R);
        if (d < best) {
            best = d;
            ri = static_cast<int>(i);
        }
    }
    const auto key = std::make_pair(tile, ri);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    const Vec2 tile_center{(tx + 0.5) / tiles_, (ty + 0.5) / tiles_};
    const CellSolution sol = solve_cell_problems(geom_, radius_grid_[static_cast<std::size_t>(ri)],
                                                 mesh_, D_of_x_(tile_center), 1e-10);
    cache_.emplace(key, sol.D_star);
    return sol.D_star;
}

std::string EffectiveTable::to_json() const {
    nlohmann::json j;
    j["schema"] = "effective-table-v1";
    j["radii"] = radii;
    std::vector<std::array<double, 4>> rows;
    for (const Mat2& m : D_star) rows.push_back(m.a);
    j["D_star_row_major"] = rows;
    j["Jbar"] = Jbar;
    j["dJbar_dR"] = dJbar_dR;
    j["surface"] = surface;
    j["metadata"] = {{"mesh_h", mesh_h}, {"mesh_hash", mesh_hash}, {"solver_tol", solver_tol}};
    return j.dump(2);
}

EffectiveTable EffectiveTable::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("schema").get<std::string>() != "effective-table-v1") {
        throw ConfigError("unknown effective-table schema");
    }
    EffectiveTable t;
    t.radii = j.at("radii").get<std::vector<double>>();
    for (const auto& row : j.at("D_star_row_major")) {
        const auto a = row.get<std::array<double, 4>>();
        t.D_star.push_back(Mat2{a[0], a[1], a[2], a[3]});
    }
    t.Jbar = j.at("Jbar").get<std::vector<double>>();
    t.dJbar_dR = j.at("dJbar_dR").get<std::vector<double>>();
    t.surface = j.at("surface").get<std::vector<double>>();
    t.mesh_h = j.at("metadata").at("mesh_h").get<double>();
    t.mesh_hash = j.at("metadata").at("mesh_hash").get<std::uint64_t>();
    t.solver_tol = j.at("metadata").at("solver_tol").get<double>();
    return t;
}

} // namespace evoporo
