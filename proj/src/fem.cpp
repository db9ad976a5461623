#include "evoporo/fem.hpp"

#include "evoporo/errors.hpp"
#include "evoporo/util.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace evoporo {

namespace {

struct ElementGeometry {
    double area;
    std::array<Vec2, 3> grad; // constant P1 basis gradients
    std::array<int, 3> nodes;
};

ElementGeometry element_geometry(const Mesh& mesh, int e) {
    const auto& t = mesh.triangles[static_cast<std::size_t>(e)];
    const Vec2& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec2& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec2& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    const double two_area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    ElementGeometry g;
    g.area = 0.5 * two_area;
    g.grad = {Vec2{(b.y - c.y) / two_area, (c.x - b.x) / two_area},
              Vec2{(c.y - a.y) / two_area, (a.x - c.x) / two_area},
              Vec2{(a.y - b.y) / two_area, (b.x - a.x) / two_area}};
    g.nodes = t;
    return g;
}

// Edge-midpoint rule: degree-2 exact, basis values at point q are 1/2 for the
// two adjacent nodes and 0 for the opposite one.
constexpr double kMidpointBasis[3][3] = {
    {0.5, 0.5, 0.0},
    {0.0, 0.5, 0.5},
    {0.5, 0.0, 0.5},
};

std::vector<std::tuple<int, int, double>> reserve_triplets(const Mesh& mesh) {
    std::vector<std::tuple<int, int, double>> t;
    t.reserve(static_cast<std::size_t>(mesh.num_triangles()) * 9);
    return t;
}

constexpr double kGauss2 = 0.28867513459481288; // 1/(2 sqrt(3))

} // namespace

double FieldP1::eval_on(int e, const Vec2& p) const {
    const auto& t = mesh->triangles[static_cast<std::size_t>(e)];
    const Vec2& a = mesh->vertices[static_cast<std::size_t>(t[0])];
    const Vec2& b = mesh->vertices[static_cast<std::size_t>(t[1])];
    const Vec2& c = mesh->vertices[static_cast<std::size_t>(t[2])];
    const double two_area = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    const double l1 = ((b.x - p.x) * (c.y - p.y) - (b.y - p.y) * (c.x - p.x)) / two_area;
    const double l2 = ((c.x - p.x) * (a.y - p.y) - (c.y - p.y) * (a.x - p.x)) / two_area;
    const double l3 = 1.0 - l1 - l2;
    return l1 * values[static_cast<std::size_t>(t[0])] + l2 * values[static_cast<std::size_t>(t[1])] +
           l3 * values[static_cast<std::size_t>(t[2])];
}

SparseMatrix SparseMatrix::from_triplets(int rows, int cols,
                                         std::vector<std::tuple<int, int, double>> triplets,
                                         bool symmetric_hint) {
    std::stable_sort(triplets.begin(), triplets.end(), [](const auto& a, const auto& b) {
        return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                                : std::get<1>(a) < std::get<1>(b);
    });
    SparseMatrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.symmetric_ = symmetric_hint;
    m.row_ptr_.assign(static_cast<std::size_t>(rows) + 1, 0);
    std::size_t i = 0;
    while (i < triplets.size()) {
        const int r = std::get<0>(triplets[i]);
        const int c = std::get<1>(triplets[i]);
        CompensatedSum sum;
        while (i < triplets.size() && std::get<0>(triplets[i]) == r && std::get<1>(triplets[i]) == c) {
            sum.add(std::get<2>(triplets[i]));
            ++i;
        }
        m.col_idx_.push_back(c);
        m.vals_.push_back(sum.value());
        m.row_ptr_[static_cast<std::size_t>(r) + 1]++;
    }
    for (int r = 0; r < rows; ++r) {
        m.row_ptr_[static_cast<std::size_t>(r) + 1] += m.row_ptr_[static_cast<std::size_t>(r)];
    }
    return m;
}

void SparseMatrix::multiply(const std::vector<double>& x, std::vector<double>& y) const {
    y.assign(static_cast<std::size_t>(rows_), 0.0);
    for (int r = 0; r < rows_; ++r) {
        double acc = 0.0;
        for (int k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k) {
            acc += vals_[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(col_idx_[static_cast<std::size_t>(k)])];
        }
        y[static_cast<std::size_t>(r)] = acc;
    }
}

std::vector<double> SparseMatrix::multiply(const std::vector<double>& x) const {
    std::vector<double> y;
    multiply(x, y);
    return y;
}

std::vector<double> SparseMatrix::diagonal() const {
    std::vector<double> d(static_cast<std::size_t>(rows_), 0.0);
    for (int r = 0; r < rows_; ++r) {
        for (int k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k) {
            if (col_idx_[static_cast<std::size_t>(k)] == r) d[static_cast<std::size_t>(r)] = vals_[static_cast<std::size_t>(k)];
        }
    }
    return d;
}

double SparseMatrix::entry(int i, int j) const {
    for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
        if (col_idx_[static_cast<std::size_t>(k)] == j) return vals_[static_cast<std::size_t>(k)];
    }
    return 0.0;
}

double SparseMatrix::max_abs() const {
    double m = 0.0;
    for (double v : vals_) m = std::max(m, std::fabs(v));
    return m;
}

double SparseMatrix::max_asymmetry() const {
    double m = 0.0;
    for (int r = 0; r < rows_; ++r) {
        for (int k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k) {
            m = std::max(m, std::fabs(vals_[static_cast<std::size_t>(k)] - entry(col_idx_[static_cast<std::size_t>(k)], r)));
        }
    }
    return m;
}

double SparseMatrix::total() const {
    CompensatedSum s;
    for (double v : vals_) s.add(v);
    return s.value();
}

std::string SparseMatrix::to_matrix_market() const {
    std::ostringstream os;
    os << "%%MatrixMarket matrix coordinate real general\n";
    os << rows_ << ' ' << cols_ << ' ' << vals_.size() << '\n';
    for (int r = 0; r < rows_; ++r) {
        for (int k = row_ptr_[static_cast<std::size_t>(r)]; k < row_ptr_[static_cast<std::size_t>(r) + 1]; ++k) {
            os << r + 1 << ' ' << col_idx_[static_cast<std::size_t>(k)] + 1 << ' '
               << format_double(vals_[static_cast<std::size_t>(k)]) << '\n';
        }
    }
    return os.str();
}

const VolumeQuadrature& degree2_rule() {
    static const VolumeQuadrature rule{
        {Vec2{0.5, 0.0}, Vec2{0.5, 0.5}, Vec2{0.0, 0.5}},
        {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0}};
    return rule;
}

Vec2 quad_point(const Mesh& mesh, int e, int q) {
    const auto& t = mesh.triangles[static_cast<std::size_t>(e)];
    const Vec2& a = mesh.vertices[static_cast<std::size_t>(t[0])];
    const Vec2& b = mesh.vertices[static_cast<std::size_t>(t[1])];
    const Vec2& c = mesh.vertices[static_cast<std::size_t>(t[2])];
    const Vec2& r = degree2_rule().points_reference[static_cast<std::size_t>(q)];
    return a + (b - a) * r.x + (c - a) * r.y;
}

int num_volume_qp(const Mesh& mesh) { return 3 * mesh.num_triangles(); }

std::array<Vec2, 2> edge_quad_points(const Mesh& mesh, const BoundaryEdge& be) {
    const Vec2& a = mesh.vertices[static_cast<std::size_t>(be.a)];
    const Vec2& b = mesh.vertices[static_cast<std::size_t>(be.b)];
    return {a + (b - a) * (0.5 - kGauss2), a + (b - a) * (0.5 + kGauss2)};
}

SparseMatrix assemble_stiffness(const Mesh& mesh, const TensorCoefficient& tensor) {
    auto triplets = reserve_triplets(mesh);
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const ElementGeometry g = element_geometry(mesh, e);
        for (int q = 0; q < 3; ++q) {
            const Mat2 D = tensor.eval(e, q);
            if (tensor.spd) {
                const auto ev = D.sym_eigenvalues();
                if (!(ev[0] > 0.0)) {
                    throw NonSPDCoefficient("tensor eigenvalue " + std::to_string(ev[0]) +
                                            " at element " + std::to_string(e));
                }
            }
            const double w = g.area * degree2_rule().weights[static_cast<std::size_t>(q)];
            for (int i = 0; i < 3; ++i) {
                const Vec2 Dg = D * g.grad[static_cast<std::size_t>(i)];
                for (int j = 0; j < 3; ++j) {
                    triplets.emplace_back(g.nodes[static_cast<std::size_t>(i)],
                                          g.nodes[static_cast<std::size_t>(j)],
                                          w * Dg.dot(g.grad[static_cast<std::size_t>(j)]));
                }
            }
        }
    }
    return SparseMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), std::move(triplets), true);
}

SparseMatrix assemble_mass(const Mesh& mesh, const ScalarCoefficient& scalar) {
    auto triplets = reserve_triplets(mesh);
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const ElementGeometry g = element_geometry(mesh, e);
        for (int q = 0; q < 3; ++q) {
            const double c = scalar(e, q);
            if (!std::isfinite(c)) throw NonSPDCoefficient("non-finite mass coefficient");
            const double w = g.area * degree2_rule().weights[static_cast<std::size_t>(q)] * c;
            for (int i = 0; i < 3; ++i) {
                const double phi_i = kMidpointBasis[q][i];
                if (phi_i == 0.0) continue;
                for (int j = 0; j < 3; ++j) {
                    const double phi_j = kMidpointBasis[q][j];
                    if (phi_j == 0.0) continue;
                    triplets.emplace_back(g.nodes[static_cast<std::size_t>(i)],
                                          g.nodes[static_cast<std::size_t>(j)], w * phi_i * phi_j);
                }
            }
        }
    }
    return SparseMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), std::move(triplets), true);
}

SparseMatrix assemble_convection(const Mesh& mesh, const VectorCoefficient& vector) {
    // entry (i,j) = - int (V . grad phi_j) phi_i
    auto triplets = reserve_triplets(mesh);
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const ElementGeometry g = element_geometry(mesh, e);
        for (int q = 0; q < 3; ++q) {
            const Vec2 V = vector(e, q);
            if (!std::isfinite(V.x) || !std::isfinite(V.y)) {
                throw NonSPDCoefficient("non-finite convection coefficient");
            }
            const double w = g.area * degree2_rule().weights[static_cast<std::size_t>(q)];
            for (int j = 0; j < 3; ++j) {
                const double vg = V.dot(g.grad[static_cast<std::size_t>(j)]);
                for (int i = 0; i < 3; ++i) {
                    const double phi_i = kMidpointBasis[q][i];
                    if (phi_i == 0.0) continue;
                    triplets.emplace_back(g.nodes[static_cast<std::size_t>(i)],
                                          g.nodes[static_cast<std::size_t>(j)], -w * vg * phi_i);
                }
            }
        }
    }
    return SparseMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), std::move(triplets), false);
}

SparseMatrix assemble_surface_mass(const Mesh& mesh, EdgeTag tag, const ScalarCoefficient& scalar,
                                   int cell) {
    std::vector<std::tuple<int, int, double>> triplets;
    bool any = false;
    for (std::size_t be_idx = 0; be_idx < mesh.boundary_edges.size(); ++be_idx) {
        const BoundaryEdge& be = mesh.boundary_edges[be_idx];
        if (be.tag != tag) continue;
        if (cell >= 0 && be.cell != cell) continue;
        any = true;
        const Vec2& a = mesh.vertices[static_cast<std::size_t>(be.a)];
        const Vec2& b = mesh.vertices[static_cast<std::size_t>(be.b)];
        const double len = (b - a).norm();
        // 2-point Gauss on the edge; basis values at xi and 1-xi.
        const double xi[2] = {0.5 - kGauss2, 0.5 + kGauss2};
        for (int gq = 0; gq < 2; ++gq) {
            const double c = scalar(static_cast<int>(be_idx), gq);
            const double w = 0.5 * len * c;
            const double phi[2] = {1.0 - xi[gq], xi[gq]};
            const int nodes[2] = {be.a, be.b};
            for (int i = 0; i < 2; ++i) {
                for (int j = 0; j < 2; ++j) {
                    triplets.emplace_back(nodes[i], nodes[j], w * phi[i] * phi[j]);
                }
            }
        }
    }
    if (cell >= 0 && !any) {
        throw MissingSurface("no tagged edges for cell " + std::to_string(cell));
    }
    return SparseMatrix::from_triplets(mesh.num_vertices(), mesh.num_vertices(), std::move(triplets), true);
}

std::vector<double> assemble_load(const Mesh& mesh, const ScalarCoefficient& scalar) {
    std::vector<double> b(static_cast<std::size_t>(mesh.num_vertices()), 0.0);
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const ElementGeometry g = element_geometry(mesh, e);
        for (int q = 0; q < 3; ++q) {
            const double w = g.area * degree2_rule().weights[static_cast<std::size_t>(q)] * scalar(e, q);
            for (int i = 0; i < 3; ++i) {
                b[static_cast<std::size_t>(g.nodes[static_cast<std::size_t>(i)])] += w * kMidpointBasis[q][i];
            }
        }
    }
    return b;
}

ScalarCoefficient constant_scalar(double c) {
    return [c](int, int) { return c; };
}
TensorCoefficient constant_tensor(const Mat2& D, bool spd) {
    return {[D](int, int) { return D; }, spd};
}
VectorCoefficient constant_vector(const Vec2& v) {
    return [v](int, int) { return v; };
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

std::vector<double> jacobi_inverse(const SparseMatrix& A) {
    std::vector<double> d = A.diagonal();
    for (double& v : d) v = (std::fabs(v) > 1e-300) ? 1.0 / v : 1.0;
    return d;
}

std::vector<double> gmres_restarted(const SparseMatrix& A, const std::vector<double>& b,
                                    double tol, int max_iter, SolveStats* stats,
                                    const std::vector<double>* x0) {
    const int n = A.rows();
    const int m = 30;
    const double bnorm = norm2(b);
    std::vector<double> x = x0 ? *x0 : std::vector<double>(static_cast<std::size_t>(n), 0.0);
    if (bnorm == 0.0) return std::vector<double>(static_cast<std::size_t>(n), 0.0);
    const std::vector<double> Minv = jacobi_inverse(A);
    int total_iters = 0;

    while (total_iters < max_iter) {
        std::vector<double> r = A.multiply(x);
        for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] - r[static_cast<std::size_t>(i)];
        for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] *= Minv[static_cast<std::size_t>(i)];
        const double beta = norm2(r);
        if (beta / bnorm <= tol) break;

        std::vector<std::vector<double>> V;
        V.push_back(r);
        for (double& v : V[0]) v /= beta;
        std::vector<double> H(static_cast<std::size_t>((m + 1) * m), 0.0);
        std::vector<double> cs(static_cast<std::size_t>(m), 0.0), sn(static_cast<std::size_t>(m), 0.0);
        std::vector<double> s(static_cast<std::size_t>(m) + 1, 0.0);
        s[0] = beta;
        int k = 0;
        for (; k < m && total_iters < max_iter; ++k, ++total_iters) {
            std::vector<double> w = A.multiply(V[static_cast<std::size_t>(k)]);
            for (int i = 0; i < n; ++i) w[static_cast<std::size_t>(i)] *= Minv[static_cast<std::size_t>(i)];
            for (int i = 0; i <= k; ++i) {
                const double hik = dot(w, V[static_cast<std::size_t>(i)]);
                H[static_cast<std::size_t>(i * m + k)] = hik;
                axpy(-hik, V[static_cast<std::size_t>(i)], w);
            }
            const double hk1 = norm2(w);
            if (hk1 < 1e-300) { ++k; break; }
            for (double& v : w) v /= hk1;
            V.push_back(std::move(w));
            // Givens rotations
            double h_kk = 0.0;
            for (int i = 0; i < k; ++i) {
                const double t1 = cs[static_cast<std::size_t>(i)] * H[static_cast<std::size_t>(i * m + k)] +
                                  sn[static_cast<std::size_t>(i)] * H[static_cast<std::size_t>((i + 1) * m + k)];
                const double t2 = -sn[static_cast<std::size_t>(i)] * H[static_cast<std::size_t>(i * m + k)] +
                                  cs[static_cast<std::size_t>(i)] * H[static_cast<std::size_t>((i + 1) * m + k)];
                H[static_cast<std::size_t>(i * m + k)] = t1;
                H[static_cast<std::size_t>((i + 1) * m + k)] = t2;
            }
            h_kk = H[static_cast<std::size_t>(k * m + k)];
            const double h_k1k = hk1;
            const double denom = std::hypot(h_kk, h_k1k);
            cs[static_cast<std::size_t>(k)] = h_kk / denom;
            sn[static_cast<std::size_t>(k)] = h_k1k / denom;
            H[static_cast<std::size_t>(k * m + k)] = denom;
            s[static_cast<std::size_t>(k) + 1] = -sn[static_cast<std::size_t>(k)] * s[static_cast<std::size_t>(k)];
            s[static_cast<std::size_t>(k)] = cs[static_cast<std::size_t>(k)] * s[static_cast<std::size_t>(k)];
            if (std::fabs(s[static_cast<std::size_t>(k) + 1]) / bnorm <= tol * 0.5) { ++k; break; }
        }
        // Back substitution for y and update x.
        std::vector<double> y(static_cast<std::size_t>(k), 0.0);
        for (int i = k - 1; i >= 0; --i) {
            double acc = s[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < k; ++j) acc -= H[static_cast<std::size_t>(i * m + j)] * y[static_cast<std::size_t>(j)];
            y[static_cast<std::size_t>(i)] = acc / H[static_cast<std::size_t>(i * m + i)];
        }
        for (int i = 0; i < k; ++i) axpy(y[static_cast<std::size_t>(i)], V[static_cast<std::size_t>(i)], x);
    }

    std::vector<double> r = A.multiply(x);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    const double res = norm2(r) / bnorm;
    if (stats) {
        stats->iterations = total_iters;
        stats->residual = res;
        stats->used_fallback = true;
    }
    if (res > tol) {
        throw NoConvergence("GMRES stalled at relative residual " + std::to_string(res));
    }
    return x;
}

} // namespace

std::vector<double> solve_spd(const SparseMatrix& A, const std::vector<double>& b,
                              double tol, int max_iter, SolveStats* stats,
                              const std::vector<double>* x0) {
    const int n = A.rows();
    if (max_iter <= 0) max_iter = 20 * n;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        if (stats) *stats = {0, 0.0, false};
        return std::vector<double>(static_cast<std::size_t>(n), 0.0);
    }
    const std::vector<double> Minv = jacobi_inverse(A);
    std::vector<double> x = x0 ? *x0 : std::vector<double>(static_cast<std::size_t>(n), 0.0);
    std::vector<double> r = A.multiply(x);
    for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] - r[static_cast<std::size_t>(i)];
    std::vector<double> z(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = Minv[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i)];
    std::vector<double> p = z;
    double rz = dot(r, z);
    std::vector<double> Ap;
    int it = 0;
    double res = norm2(r) / bnorm;
    while (res > tol) {
        if (it >= max_iter) {
            throw NoConvergence("CG reached max_iter with relative residual " + std::to_string(res));
        }
        A.multiply(p, Ap);
        const double alpha = rz / dot(p, Ap);
        axpy(alpha, p, x);
        axpy(-alpha, Ap, r);
        for (int i = 0; i < n; ++i) z[static_cast<std::size_t>(i)] = Minv[static_cast<std::size_t>(i)] * r[static_cast<std::size_t>(i)];
        const double rz_new = dot(r, z);
        const double beta = rz_new / rz;
        rz = rz_new;
        for (int i = 0; i < n; ++i) {
            p[static_cast<std::size_t>(i)] = z[static_cast<std::size_t>(i)] + beta * p[static_cast<std::size_t>(i)];
        }
        ++it;
        res = norm2(r) / bnorm;
    }
    if (stats) *stats = {it, res, false};
    return x;
}

std::vector<double> solve_general(const SparseMatrix& A, const std::vector<double>& b,
                                  double tol, int max_iter, SolveStats* stats,
                                  const std::vector<double>* x0) {
    const int n = A.rows();
    if (max_iter <= 0) max_iter = 20 * n;
    const double bnorm = norm2(b);
    if (bnorm == 0.0) {
        if (stats) *stats = {0, 0.0, false};
        return std::vector<double>(static_cast<std::size_t>(n), 0.0);
    }
    const std::vector<double> Minv = jacobi_inverse(A);

    std::vector<double> x = x0 ? *x0 : std::vector<double>(static_cast<std::size_t>(n), 0.0);
    std::vector<double> r = A.multiply(x);
    for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = b[static_cast<std::size_t>(i)] - r[static_cast<std::size_t>(i)];
    const std::vector<double> r_hat = r;
    std::vector<double> p(static_cast<std::size_t>(n), 0.0), v(static_cast<std::size_t>(n), 0.0);
    std::vector<double> s(static_cast<std::size_t>(n)), t(static_cast<std::size_t>(n));
    std::vector<double> phat(static_cast<std::size_t>(n)), shat(static_cast<std::size_t>(n));
    double rho = 1.0, alpha = 1.0, omega = 1.0;

    double res = norm2(r) / bnorm;
    for (int it = 0; res > tol; ++it) {
        if (it >= max_iter) {
            throw NoConvergence("BiCGStab reached max_iter with relative residual " + std::to_string(res));
        }
        const double rho_new = dot(r_hat, r);
        if (!std::isfinite(rho_new) || std::fabs(rho_new) < 1e-300 * bnorm * bnorm) {
            return gmres_restarted(A, b, tol, max_iter, stats, &x);
        }
        const double beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for (int i = 0; i < n; ++i) {
            p[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)] +
                beta * (p[static_cast<std::size_t>(i)] - omega * v[static_cast<std::size_t>(i)]);
        }
        for (int i = 0; i < n; ++i) phat[static_cast<std::size_t>(i)] = Minv[static_cast<std::size_t>(i)] * p[static_cast<std::size_t>(i)];
        A.multiply(phat, v);
        alpha = rho / dot(r_hat, v);
        if (!std::isfinite(alpha)) return gmres_restarted(A, b, tol, max_iter, stats, &x);
        for (int i = 0; i < n; ++i) s[static_cast<std::size_t>(i)] = r[static_cast<std::size_t>(i)] - alpha * v[static_cast<std::size_t>(i)];
        if (norm2(s) / bnorm <= tol) {
            axpy(alpha, phat, x);
            r = s;
            res = norm2(r) / bnorm;
            if (stats) *stats = {it + 1, res, false};
            return x;
        }
        for (int i = 0; i < n; ++i) shat[static_cast<std::size_t>(i)] = Minv[static_cast<std::size_t>(i)] * s[static_cast<std::size_t>(i)];
        A.multiply(shat, t);
        const double tt = dot(t, t);
        if (!(tt > 0.0)) return gmres_restarted(A, b, tol, max_iter, stats, &x);
        omega = dot(t, s) / tt;
        if (!std::isfinite(omega) || std::fabs(omega) < 1e-300) {
            return gmres_restarted(A, b, tol, max_iter, stats, &x);
        }
        axpy(alpha, phat, x);
        axpy(omega, shat, x);
        for (int i = 0; i < n; ++i) r[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(i)] - omega * t[static_cast<std::size_t>(i)];
        res = norm2(r) / bnorm;
        if (stats) *stats = {it + 1, res, false};
    }
    return x;
}

ConstrainedSystem ConstrainedSystem::build(const SparseMatrix& A, const std::vector<double>& b,
                                           const std::vector<std::pair<int, int>>& periodic_pairs,
                                           bool mean_zero, const std::vector<double>* mass_vector) {
    const int n = A.rows();
    // Union-find canonical representative per node; resolves corner chains.
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            parent[static_cast<std::size_t>(i)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
            i = parent[static_cast<std::size_t>(i)];
        }
        return i;
    };
    for (const auto& [a, bb] : periodic_pairs) {
        if (a < 0 || bb < 0 || a >= n || bb >= n || a == bb) {
            throw InconsistentPairs("invalid periodic pair (" + std::to_string(a) + ", " + std::to_string(bb) + ")");
        }
        const int ra = find(a), rb = find(bb);
        if (ra != rb) parent[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
    }

    ConstrainedSystem sys;
    sys.n_full = n;
    sys.full_to_reduced_.assign(static_cast<std::size_t>(n), -1);
    int nr = 0;
    for (int i = 0; i < n; ++i) {
        if (find(i) == i) sys.full_to_reduced_[static_cast<std::size_t>(i)] = nr++;
    }
    for (int i = 0; i < n; ++i) {
        sys.full_to_reduced_[static_cast<std::size_t>(i)] = sys.full_to_reduced_[static_cast<std::size_t>(find(i))];
    }
    sys.n_reduced = nr;
    sys.has_multiplier_ = mean_zero;
    const int dim = nr + (mean_zero ? 1 : 0);

    std::vector<std::tuple<int, int, double>> triplets;
    for (int r = 0; r < n; ++r) {
        const int rr = sys.full_to_reduced_[static_cast<std::size_t>(r)];
        for (int k = A.row_ptr()[static_cast<std::size_t>(r)]; k < A.row_ptr()[static_cast<std::size_t>(r) + 1]; ++k) {
            triplets.emplace_back(rr, sys.full_to_reduced_[static_cast<std::size_t>(A.col_idx()[static_cast<std::size_t>(k)])],
                                  A.values()[static_cast<std::size_t>(k)]);
        }
    }
    std::vector<double> br(static_cast<std::size_t>(dim), 0.0);
    for (int i = 0; i < n; ++i) {
        br[static_cast<std::size_t>(sys.full_to_reduced_[static_cast<std::size_t>(i)])] += b[static_cast<std::size_t>(i)];
    }
    if (mean_zero) {
        if (mass_vector == nullptr || static_cast<int>(mass_vector->size()) != n) {
            throw InconsistentPairs("mean-zero constraint needs the coefficient-1 mass vector");
        }
        std::vector<double> w(static_cast<std::size_t>(nr), 0.0);
        for (int i = 0; i < n; ++i) {
            w[static_cast<std::size_t>(sys.full_to_reduced_[static_cast<std::size_t>(i)])] += (*mass_vector)[static_cast<std::size_t>(i)];
        }
        for (int i = 0; i < nr; ++i) {
            triplets.emplace_back(nr, i, w[static_cast<std::size_t>(i)]);
            triplets.emplace_back(i, nr, w[static_cast<std::size_t>(i)]);
        }
    }
    sys.A_ = SparseMatrix::from_triplets(dim, dim, std::move(triplets), A.symmetric_hint());
    sys.b_ = std::move(br);
    return sys;
}

std::vector<double> ConstrainedSystem::expand(const std::vector<double>& reduced) const {
    std::vector<double> full(static_cast<std::size_t>(n_full));
    for (int i = 0; i < n_full; ++i) {
        full[static_cast<std::size_t>(i)] = reduced[static_cast<std::size_t>(full_to_reduced_[static_cast<std::size_t>(i)])];
    }
    return full;
}

std::vector<double> ConstrainedSystem::reduce(const std::vector<double>& full) const {
    std::vector<double> r(static_cast<std::size_t>(n_reduced + (has_multiplier_ ? 1 : 0)), 0.0);
    for (int i = 0; i < n_full; ++i) {
        r[static_cast<std::size_t>(full_to_reduced_[static_cast<std::size_t>(i)])] = full[static_cast<std::size_t>(i)];
    }
    return r;
}

double l2_norm(const SparseMatrix& unit_mass, const std::vector<double>& u) {
    return std::sqrt(std::max(0.0, dot(u, unit_mass.multiply(u))));
}

double h1_seminorm(const SparseMatrix& unit_stiffness, const std::vector<double>& u) {
    return std::sqrt(std::max(0.0, dot(u, unit_stiffness.multiply(u))));
}

double max_norm(const std::vector<double>& u) {
    double m = 0.0;
    for (double v : u) m = std::max(m, std::fabs(v));
    return m;
}

ErrorNorms error_norms(const Mesh& mesh, const std::vector<double>& u,
                       const std::function<double(Vec2)>& exact,
                       const std::function<Vec2(Vec2)>& exact_grad) {
    // Degree-4 Dunavant rule (6 points).
    static const double qa = 0.445948490915965;
    static const double qb = 0.091576213509771;
    static const double wa = 0.223381589678011;
    static const double wb = 0.109951743655322;
    static const double pts[6][2] = {{qa, qa}, {1 - 2 * qa, qa}, {qa, 1 - 2 * qa},
                                     {qb, qb}, {1 - 2 * qb, qb}, {qb, 1 - 2 * qb}};
    static const double wts[6] = {wa, wa, wa, wb, wb, wb};

    CompensatedSum l2, h1;
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        const auto& t = mesh.triangles[static_cast<std::size_t>(e)];
        const Vec2& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec2& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec2& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        const double area = mesh.triangle_area(e);
        const double two_area = 2.0 * area;
        const Vec2 g0{(b.y - c.y) / two_area, (c.x - b.x) / two_area};
        const Vec2 g1{(c.y - a.y) / two_area, (a.x - c.x) / two_area};
        const Vec2 g2{(a.y - b.y) / two_area, (b.x - a.x) / two_area};
        const Vec2 grad_h = g0 * u[static_cast<std::size_t>(t[0])] + g1 * u[static_cast<std::size_t>(t[1])] +
                            g2 * u[static_cast<std::size_t>(t[2])];
        for (int q = 0; q < 6; ++q) {
            const double l1 = pts[q][0], l2v = pts[q][1];
            const Vec2 p = a + (b - a) * l1 + (c - a) * l2v;
            const double uh = (1.0 - l1 - l2v) * u[static_cast<std::size_t>(t[0])] +
                              l1 * u[static_cast<std::size_t>(t[1])] + l2v * u[static_cast<std::size_t>(t[2])];
            const double err = uh - exact(p);
            const Vec2 gerr = grad_h - exact_grad(p);
            l2.add(area * wts[q] * err * err);
            h1.add(area * wts[q] * gerr.dot(gerr));
        }
    }
    return {std::sqrt(std::max(0.0, l2.value())), std::sqrt(std::max(0.0, h1.value()))};
}

} // namespace evoporo
