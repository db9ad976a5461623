#include "evoporo/mesh.hpp"

#include "evoporo/errors.hpp"
#include "evoporo/util.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace evoporo {

namespace {

constexpr double kPi = std::numbers::pi;

// Bitwise coordinate key; tiling produces bitwise-identical coordinates for
// coincident nodes, so exact keying is safe there.
struct CoordKey {
    std::uint64_t x;
    std::uint64_t y;
    bool operator==(const CoordKey& o) const { return x == o.x && y == o.y; }
};

struct CoordKeyHash {
    std::size_t operator()(const CoordKey& k) const {
        return static_cast<std::size_t>(fnv1a(&k, sizeof(k)));
    }
};

CoordKey coord_key(const Vec2& p) {
    CoordKey k;
    std::memcpy(&k.x, &p.x, sizeof(double));
    std::memcpy(&k.y, &p.y, sizeof(double));
    return k;
}

double signed_area(const Vec2& a, const Vec2& b, const Vec2& c) {
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
}

// Radial grading shared by all transfinite rays: spacings grow geometrically
// from s_in until capped at s_cap, covering the longest ray. Normalized
// breakpoints scale per ray with its length, which keeps radial and
// tangential spacings comparable on both the shortest and longest rays.
std::vector<double> graded_breakpoints(double s_in, double s_cap, double len_max) {
    std::vector<double> prefix{0.0};
    double step = std::min(s_in, s_cap);
    while (prefix.back() < len_max) {
        prefix.push_back(prefix.back() + step);
        step = std::min(step * 1.3, s_cap);
    }
    if (prefix.size() < 3) prefix = {0.0, 0.5 * len_max, len_max};
    const double total = prefix.back();
    for (double& v : prefix) v /= total;
    prefix.back() = 1.0;
    return prefix;
}

class MeshBuilder {
public:
    int add_vertex(const Vec2& p) {
        auto [it, inserted] = index_.try_emplace(coord_key(p), static_cast<int>(mesh.vertices.size()));
        if (inserted) mesh.vertices.push_back(p);
        return it->second;
    }

    void add_quad_crossed(int a, int b, int c, int d) {
        const Vec2 center = (mesh.vertices[static_cast<std::size_t>(a)] +
                             mesh.vertices[static_cast<std::size_t>(b)] +
                             mesh.vertices[static_cast<std::size_t>(c)] +
                             mesh.vertices[static_cast<std::size_t>(d)]) * 0.25;
        const int e = add_vertex(center);
        add_triangle(a, b, e);
        add_triangle(b, c, e);
        add_triangle(c, d, e);
        add_triangle(d, a, e);
    }

    void add_triangle(int a, int b, int c) {
        if (signed_area(mesh.vertices[static_cast<std::size_t>(a)],
                        mesh.vertices[static_cast<std::size_t>(b)],
                        mesh.vertices[static_cast<std::size_t>(c)]) < 0.0) {
            std::swap(b, c);
        }
        mesh.triangles.push_back({a, b, c});
    }

    Mesh mesh;

private:
    std::unordered_map<CoordKey, int, CoordKeyHash> index_;
};

void check_quality(const Mesh& mesh) {
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        if (mesh.triangle_area(e) <= 0.0) {
            throw MeshQualityFailure("inverted or degenerate triangle " + std::to_string(e));
        }
    }
    const double min_angle = mesh.min_angle_deg();
    if (min_angle < 15.0) {
        throw MeshQualityFailure("minimum angle " + std::to_string(min_angle) + " deg < 15 deg");
    }
}

void check_conforming(const Mesh& mesh) {
    std::map<std::pair<int, int>, int> edge_count;
    for (const auto& t : mesh.triangles) {
        for (int i = 0; i < 3; ++i) {
            int a = t[static_cast<std::size_t>(i)];
            int b = t[static_cast<std::size_t>((i + 1) % 3)];
            if (a > b) std::swap(a, b);
            edge_count[{a, b}]++;
        }
    }
    std::size_t boundary = 0;
    for (const auto& [edge, count] : edge_count) {
        if (count == 1) {
            ++boundary;
        } else if (count != 2) {
            throw NonConformingTiling("edge shared by " + std::to_string(count) + " triangles");
        }
    }
    if (boundary != mesh.boundary_edges.size()) {
        throw NonConformingTiling("boundary edge bookkeeping mismatch: " +
                                  std::to_string(boundary) + " vs " +
                                  std::to_string(mesh.boundary_edges.size()));
    }
}

} // namespace

double Mesh::triangle_area(int e) const {
    const auto& t = triangles[static_cast<std::size_t>(e)];
    return signed_area(vertices[static_cast<std::size_t>(t[0])],
                       vertices[static_cast<std::size_t>(t[1])],
                       vertices[static_cast<std::size_t>(t[2])]);
}

Vec2 Mesh::triangle_centroid(int e) const {
    const auto& t = triangles[static_cast<std::size_t>(e)];
    return (vertices[static_cast<std::size_t>(t[0])] +
            vertices[static_cast<std::size_t>(t[1])] +
            vertices[static_cast<std::size_t>(t[2])]) * (1.0 / 3.0);
}

double Mesh::min_angle_deg() const {
    double min_angle = 180.0;
    for (const auto& t : triangles) {
        const Vec2& a = vertices[static_cast<std::size_t>(t[0])];
        const Vec2& b = vertices[static_cast<std::size_t>(t[1])];
        const Vec2& c = vertices[static_cast<std::size_t>(t[2])];
        const double la = (b - c).norm(), lb = (c - a).norm(), lc = (a - b).norm();
        auto angle = [](double opp, double s1, double s2) {
            double cosv = (s1 * s1 + s2 * s2 - opp * opp) / (2.0 * s1 * s2);
            cosv = std::clamp(cosv, -1.0, 1.0);
            return std::acos(cosv) * 180.0 / kPi;
        };
        min_angle = std::min({min_angle, angle(la, lb, lc), angle(lb, lc, la), angle(lc, la, lb)});
    }
    return min_angle;
}

double Mesh::total_area() const {
    CompensatedSum s;
    for (int e = 0; e < num_triangles(); ++e) s.add(triangle_area(e));
    return s.value();
}

CellIndexer CellIndexer::make(double eps, int l1, int l2) {
    if (l1 < 1 || l2 < 1) throw ConfigError("domain extents must be positive integers");
    const double inv = 1.0 / eps;
    if (!(eps > 0.0) || std::fabs(inv - std::round(inv)) > 1e-12) {
        throw ConfigError("1/eps must be a positive integer");
    }
    return CellIndexer{eps, l1, l2};
}

int CellIndexer::cells_x() const { return static_cast<int>(std::round(l1 / eps)); }
int CellIndexer::cells_y() const { return static_cast<int>(std::round(l2 / eps)); }

Vec2 CellIndexer::cell_center(int k) const {
    const int kx = k % cells_x();
    const int ky = k / cells_x();
    return {eps * (kx + 0.5), eps * (ky + 0.5)};
}

Mesh build_reference_cell_mesh(double R_hole, double h) {
    if (!(R_hole > 0.0 && R_hole < 0.5)) throw ConfigError("hole radius must lie in (0, 1/2)");
    if (!(h > 0.0 && h <= R_hole / 4.0)) throw ConfigError("mesh size must satisfy h <= R/4");

    // n_side intervals per outer side (even); n_c = 4 n_side circle segments
    // so the square corners fall on transfinite rays (n_c divisible by 8).
    const int n_side = 2 * std::max(2, static_cast<int>(std::ceil(1.0 / (2.0 * h))));
    const int n_c = 4 * n_side;
    const int wedge = n_c / 8;

    // Wedge offsets (from the cell center) for angles in [0, pi/4]; the other
    // seven octants are exact sign/swap images, which keeps the vertex set
    // invariant under the dihedral group.
    const double s_in = 2.0 * kPi * R_hole / n_c;
    const double len_max = std::hypot(0.5, 0.5) - R_hole; // corner ray
    const std::vector<double> t = graded_breakpoints(s_in, 1.0 / n_side, len_max);
    const int L = static_cast<int>(t.size()) - 1;

    // offsets[j][l] for wedge ray j, ring l (0 = circle, L = square).
    std::vector<std::vector<Vec2>> offsets(static_cast<std::size_t>(wedge) + 1);
    for (int j = 0; j <= wedge; ++j) {
        const double theta = 2.0 * kPi * j / n_c;
        const Vec2 c{R_hole * std::cos(theta), R_hole * std::sin(theta)};
        const Vec2 q{0.5, static_cast<double>(j) / n_side};
        auto& ray = offsets[static_cast<std::size_t>(j)];
        ray.resize(static_cast<std::size_t>(L) + 1);
        for (int l = 0; l <= L; ++l) {
            const double tl = t[static_cast<std::size_t>(l)];
            ray[static_cast<std::size_t>(l)] = c * (1.0 - tl) + q * tl;
        }
    }

    // Octant images: (x,y) -> ... with exact negation/swap.
    auto octant_image = [](const Vec2& d, int o) -> Vec2 {
        switch (o) {
            case 0: return {d.x, d.y};
            case 1: return {d.y, d.x};
            case 2: return {-d.y, d.x};
            case 3: return {-d.x, d.y};
            case 4: return {-d.x, -d.y};
            case 5: return {-d.y, -d.x};
            case 6: return {d.y, -d.x};
            default: return {d.x, -d.y};
        }
    };
    // Octants with odd index run their wedge parameter backwards so that ring
    // node (global j, l) is continuous around the circle.
    auto ring_offset = [&](int j, int l) -> Vec2 {
        j = ((j % n_c) + n_c) % n_c;
        const int o = j / wedge;
        const int r = j % wedge;
        const int jw = (o % 2 == 0) ? r : wedge - r;
        return octant_image(offsets[static_cast<std::size_t>(jw)][static_cast<std::size_t>(l)], o);
    };

    MeshBuilder builder;
    const Vec2 m{0.5, 0.5};
    std::vector<std::vector<int>> ring_ids(static_cast<std::size_t>(n_c));
    for (int j = 0; j < n_c; ++j) {
        auto& col = ring_ids[static_cast<std::size_t>(j)];
        col.resize(static_cast<std::size_t>(L) + 1);
        for (int l = 0; l <= L; ++l) {
            col[static_cast<std::size_t>(l)] = builder.add_vertex(m + ring_offset(j, l));
        }
    }
    for (int j = 0; j < n_c; ++j) {
        const auto& c0 = ring_ids[static_cast<std::size_t>(j)];
        const auto& c1 = ring_ids[static_cast<std::size_t>((j + 1) % n_c)];
        for (int l = 0; l < L; ++l) {
            builder.add_quad_crossed(c0[static_cast<std::size_t>(l)], c1[static_cast<std::size_t>(l)],
                                     c1[static_cast<std::size_t>(l + 1)], c0[static_cast<std::size_t>(l + 1)]);
        }
    }

    Mesh mesh = std::move(builder.mesh);
    mesh.h = h;
    mesh.hole_radius = R_hole;

    for (int j = 0; j < n_c; ++j) {
        const int a = ring_ids[static_cast<std::size_t>(j)][0];
        const int b = ring_ids[static_cast<std::size_t>((j + 1) % n_c)][0];
        mesh.boundary_edges.push_back({a, b, EdgeTag::GammaHole, -1});
    }
    auto side_tag = [&](const Vec2& pa, const Vec2& pb) {
        if (pa.x == 1.0 && pb.x == 1.0) return EdgeTag::PeriodicRight;
        if (pa.x == 0.0 && pb.x == 0.0) return EdgeTag::PeriodicLeft;
        if (pa.y == 1.0 && pb.y == 1.0) return EdgeTag::PeriodicTop;
        if (pa.y == 0.0 && pb.y == 0.0) return EdgeTag::PeriodicBottom;
        throw MeshQualityFailure("outer ring edge not on the unit square");
    };
    for (int j = 0; j < n_c; ++j) {
        const int a = ring_ids[static_cast<std::size_t>(j)][static_cast<std::size_t>(L)];
        const int b = ring_ids[static_cast<std::size_t>((j + 1) % n_c)][static_cast<std::size_t>(L)];
        mesh.boundary_edges.push_back({a, b, side_tag(mesh.vertices[static_cast<std::size_t>(a)],
                                                      mesh.vertices[static_cast<std::size_t>(b)]), -1});
    }

    // Periodic pairs: right -> left and top -> bottom, matched by the shared
    // transverse coordinate (bitwise identical by the wedge construction).
    std::unordered_map<CoordKey, int, CoordKeyHash> left, bottom;
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        const Vec2& p = mesh.vertices[static_cast<std::size_t>(i)];
        if (p.x == 0.0) left[coord_key({0.0, p.y})] = i;
        if (p.y == 0.0) bottom[coord_key({p.x, 0.0})] = i;
    }
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        const Vec2& p = mesh.vertices[static_cast<std::size_t>(i)];
        if (p.x == 1.0) {
            auto it = left.find(coord_key({0.0, p.y}));
            if (it == left.end()) throw NonConformingTiling("left/right trace mismatch");
            mesh.periodic_pairs.emplace_back(i, it->second);
        }
        if (p.y == 1.0) {
            auto it = bottom.find(coord_key({p.x, 0.0}));
            if (it == bottom.end()) throw NonConformingTiling("top/bottom trace mismatch");
            mesh.periodic_pairs.emplace_back(i, it->second);
        }
    }

    check_quality(mesh);
    check_conforming(mesh);
    return mesh;
}

Mesh build_square_mesh(int lx, int ly, double h, bool periodic) {
    if (lx < 1 || ly < 1) throw ConfigError("square mesh extents must be positive integers");
    if (!(h > 0.0)) throw ConfigError("mesh size must be positive");
    const int n = std::max(1, static_cast<int>(std::ceil(1.0 / h)));
    const int nx = n * lx;
    const int ny = n * ly;

    MeshBuilder builder;
    std::vector<int> grid(static_cast<std::size_t>((nx + 1) * (ny + 1)));
    auto gid = [&](int i, int j) { return grid[static_cast<std::size_t>(j * (nx + 1) + i)]; };
    for (int j = 0; j <= ny; ++j) {
        for (int i = 0; i <= nx; ++i) {
            grid[static_cast<std::size_t>(j * (nx + 1) + i)] =
                builder.add_vertex({static_cast<double>(lx) * i / nx, static_cast<double>(ly) * j / ny});
        }
    }
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            builder.add_quad_crossed(gid(i, j), gid(i + 1, j), gid(i + 1, j + 1), gid(i, j + 1));
        }
    }

    Mesh mesh = std::move(builder.mesh);
    mesh.h = 1.0 / n;
    for (int i = 0; i < nx; ++i) {
        mesh.boundary_edges.push_back({gid(i, 0), gid(i + 1, 0),
                                       periodic ? EdgeTag::PeriodicBottom : EdgeTag::OuterBoundary, -1});
        mesh.boundary_edges.push_back({gid(i, ny), gid(i + 1, ny),
                                       periodic ? EdgeTag::PeriodicTop : EdgeTag::OuterBoundary, -1});
    }
    for (int j = 0; j < ny; ++j) {
        mesh.boundary_edges.push_back({gid(0, j), gid(0, j + 1),
                                       periodic ? EdgeTag::PeriodicLeft : EdgeTag::OuterBoundary, -1});
        mesh.boundary_edges.push_back({gid(nx, j), gid(nx, j + 1),
                                       periodic ? EdgeTag::PeriodicRight : EdgeTag::OuterBoundary, -1});
    }
    if (periodic) {
        for (int j = 0; j <= ny; ++j) mesh.periodic_pairs.emplace_back(gid(nx, j), gid(0, j));
        for (int i = 0; i <= nx; ++i) mesh.periodic_pairs.emplace_back(gid(i, ny), gid(i, 0));
    }

    check_quality(mesh);
    check_conforming(mesh);
    return mesh;
}

MicroMesh build_micro_mesh(const CellIndexer& indexer, const Mesh& templ) {
    if (templ.hole_radius <= 0.0) throw ConfigError("micro tiling needs a perforated template");
    const int cx = indexer.cells_x();
    const int cy = indexer.cells_y();
    const double eps = indexer.eps;

    MicroMesh out;
    out.indexer = indexer;
    out.cell_nodes.assign(static_cast<std::size_t>(cx * cy), {});

    MeshBuilder builder;
    auto on_outer = [&](const Vec2& p) {
        return p.x == 0.0 || p.y == 0.0 ||
               std::fabs(p.x - indexer.l1) < 1e-12 || std::fabs(p.y - indexer.l2) < 1e-12;
    };

    for (int ky = 0; ky < cy; ++ky) {
        for (int kx = 0; kx < cx; ++kx) {
            const int k = indexer.linear_index(kx, ky);
            auto& ids = out.cell_nodes[static_cast<std::size_t>(k)];
            ids.resize(templ.vertices.size());
            for (std::size_t v = 0; v < templ.vertices.size(); ++v) {
                const Vec2& y = templ.vertices[v];
                ids[v] = builder.add_vertex({eps * (kx + y.x), eps * (ky + y.y)});
            }
            for (const auto& t : templ.triangles) {
                builder.add_triangle(ids[static_cast<std::size_t>(t[0])],
                                     ids[static_cast<std::size_t>(t[1])],
                                     ids[static_cast<std::size_t>(t[2])]);
                builder.mesh.element_cell.push_back(k);
            }
            for (const auto& be : templ.boundary_edges) {
                const int a = ids[static_cast<std::size_t>(be.a)];
                const int b = ids[static_cast<std::size_t>(be.b)];
                if (be.tag == EdgeTag::GammaHole) {
                    builder.mesh.boundary_edges.push_back({a, b, EdgeTag::GammaHole, k});
                } else if (on_outer(builder.mesh.vertices[static_cast<std::size_t>(a)]) &&
                           on_outer(builder.mesh.vertices[static_cast<std::size_t>(b)])) {
                    builder.mesh.boundary_edges.push_back({a, b, EdgeTag::OuterBoundary, -1});
                }
                // interior cell-interface edges merge away
            }
        }
    }

    out.mesh = std::move(builder.mesh);
    out.mesh.h = eps * templ.h;
    out.mesh.hole_radius = eps * templ.hole_radius;
    check_conforming(out.mesh);
    return out;
}

std::array<int, 2> cell_of_point(const Vec2& x, const CellIndexer& indexer) {
    const double tol = 1e-12;
    if (x.x < -tol || x.y < -tol || x.x > indexer.l1 + tol || x.y > indexer.l2 + tol) {
        throw CellLookupFailure("point outside the tiled domain");
    }
    auto idx = [&](double v, int cells) {
        double s = v / indexer.eps;
        int k = static_cast<int>(std::floor(s));
        if (s == std::floor(s) && s > 0.0) k -= 1; // left/bottom ownership
        return std::clamp(k, 0, cells - 1);
    };
    return {idx(x.x, indexer.cells_x()), idx(x.y, indexer.cells_y())};
}

std::vector<std::vector<int>> dihedral_node_maps(const Mesh& mesh, double cx, double cy) {
    // Quantized lookup with neighbor probing tolerant to ~1e-12 wobble.
    const double q = 1e9;
    std::unordered_map<std::uint64_t, int> lookup;
    auto key = [&](double x, double y) {
        const auto ix = static_cast<std::int64_t>(std::llround(x * q));
        const auto iy = static_cast<std::int64_t>(std::llround(y * q));
        std::uint64_t h = fnv1a(&ix, sizeof(ix));
        return fnv1a(&iy, sizeof(iy), h);
    };
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        lookup[key(mesh.vertices[static_cast<std::size_t>(i)].x,
                   mesh.vertices[static_cast<std::size_t>(i)].y)] = i;
    }
    auto find = [&](double x, double y) {
        for (int dx = -1; dx <= 1; ++dx) {
            for (int dy = -1; dy <= 1; ++dy) {
                auto it = lookup.find(key(x + dx / q, y + dy / q));
                if (it != lookup.end()) {
                    const Vec2& p = mesh.vertices[static_cast<std::size_t>(it->second)];
                    if (std::fabs(p.x - x) < 1e-11 && std::fabs(p.y - y) < 1e-11) return it->second;
                }
            }
        }
        throw MeshQualityFailure("mesh is not dihedral-symmetric about the requested center");
    };

    std::vector<std::vector<int>> maps(8, std::vector<int>(static_cast<std::size_t>(mesh.num_vertices())));
    for (int i = 0; i < mesh.num_vertices(); ++i) {
        const double dx = mesh.vertices[static_cast<std::size_t>(i)].x - cx;
        const double dy = mesh.vertices[static_cast<std::size_t>(i)].y - cy;
        const double img[8][2] = {{dx, dy},  {-dy, dx}, {-dx, -dy}, {dy, -dx},
                                  {-dx, dy}, {dx, -dy}, {dy, dx},   {-dy, -dx}};
        for (int s = 0; s < 8; ++s) {
            maps[static_cast<std::size_t>(s)][static_cast<std::size_t>(i)] =
                find(cx + img[s][0], cy + img[s][1]);
        }
    }
    return maps;
}

std::string mesh_to_vtk(const Mesh& mesh,
                        const std::vector<std::pair<std::string, const std::vector<double>*>>& point_fields) {
    std::ostringstream os;
    os << "# vtk DataFile Version 3.0\n";
    os << "evoporo mesh\n";
    os << "ASCII\n";
    os << "DATASET UNSTRUCTURED_GRID\n";
    os << "POINTS " << mesh.num_vertices() << " double\n";
    for (const auto& p : mesh.vertices) {
        os << format_double(p.x) << ' ' << format_double(p.y) << " 0\n";
    }
    os << "CELLS " << mesh.num_triangles() << ' ' << 4 * mesh.num_triangles() << '\n';
    for (const auto& t : mesh.triangles) {
        os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    }
    os << "CELL_TYPES " << mesh.num_triangles() << '\n';
    for (int e = 0; e < mesh.num_triangles(); ++e) os << "5\n";

    os << "CELL_DATA " << mesh.num_triangles() << '\n';
    os << "SCALARS cell_index int 1\nLOOKUP_TABLE default\n";
    for (int e = 0; e < mesh.num_triangles(); ++e) {
        os << (mesh.element_cell.empty() ? -1 : mesh.element_cell[static_cast<std::size_t>(e)]) << '\n';
    }

    if (!point_fields.empty()) {
        os << "POINT_DATA " << mesh.num_vertices() << '\n';
        for (const auto& [name, values] : point_fields) {
            os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
            for (double v : *values) os << format_double(v) << '\n';
        }
    }

    os << "FIELD boundary 1\n";
    os << "boundary_edges " << 4 << ' ' << mesh.boundary_edges.size() << " int\n";
    for (const auto& be : mesh.boundary_edges) {
        os << be.a << ' ' << be.b << ' ' << static_cast<int>(be.tag) << ' ' << be.cell << '\n';
    }
    return os.str();
}

} // namespace evoporo
