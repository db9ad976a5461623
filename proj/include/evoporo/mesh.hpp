#pragma once

#include "evoporo/linalg.hpp"

#include <array>
#include <string>
#include <vector>

namespace evoporo {

enum class EdgeTag {
    GammaHole,
    OuterBoundary,
    PeriodicLeft,
    PeriodicRight,
    PeriodicBottom,
    PeriodicTop,
};

struct BoundaryEdge {
    int a = -1;
    int b = -1;
    EdgeTag tag = EdgeTag::OuterBoundary;
    int cell = -1; // owning micro cell for GammaHole edges, -1 otherwise
};

// Conforming P1 triangulation with tagged boundary edges, periodic node
// identifications on the reference cell sides, and an element -> micro-cell
// map for tiled meshes.
struct Mesh {
    std::vector<Vec2> vertices;
    std::vector<std::array<int, 3>> triangles; // counterclockwise
    std::vector<BoundaryEdge> boundary_edges;
    std::vector<std::pair<int, int>> periodic_pairs; // (node, partner)
    std::vector<int> element_cell;                   // micro meshes only
    double h = 0.0;          // target edge length
    double hole_radius = 0.0; // 0 = no hole

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }

    double triangle_area(int e) const;
    Vec2 triangle_centroid(int e) const;
    double min_angle_deg() const;
    double total_area() const;
};

// eps-periodic tiling bookkeeping: Omega = (0,l1) x (0,l2), cells eps(Y+k).
struct CellIndexer {
    double eps = 0.25;
    int l1 = 1;
    int l2 = 1;

    static CellIndexer make(double eps, int l1, int l2);
    int cells_x() const;
    int cells_y() const;
    int num_cells() const { return cells_x() * cells_y(); }
    int linear_index(int kx, int ky) const { return ky * cells_x() + kx; }
    Vec2 cell_center(int k) const;
};

// Deterministic transfinite O-grid between the hole circle and the cell
// boundary; every quad is split into four triangles at its barycenter so the
// triangulation is invariant under the dihedral symmetries of the cell.
Mesh build_reference_cell_mesh(double R_hole, double h);

// Crossed-quad grid on (0,lx) x (0,ly); periodic tags + pairs when requested,
// OuterBoundary tags otherwise.
Mesh build_square_mesh(int lx, int ly, double h, bool periodic);

struct MicroMesh {
    Mesh mesh;
    CellIndexer indexer;
    // cell_nodes[k][i] = global vertex index of template vertex i in cell k.
    std::vector<std::vector<int>> cell_nodes;
};

// Tile one reference-cell template over all cells of the indexer, merging
// duplicate interface nodes exactly.
MicroMesh build_micro_mesh(const CellIndexer& indexer, const Mesh& templ);

// Componentwise floor of x/eps with the left/bottom ownership rule for face
// points, clamped to the admissible index set.
std::array<int, 2> cell_of_point(const Vec2& x, const CellIndexer& indexer);

// Node index maps for the 8 dihedral symmetries of a cell mesh centered at
// (cx, cy): maps[s][i] is the node at the image of vertex i. Throws if the
// mesh is not symmetric.
std::vector<std::vector<int>> dihedral_node_maps(const Mesh& mesh, double cx, double cy);

// Legacy ASCII VTK dump (triangles, optional point fields, cell_index cell
// data, boundary edges as integer field data).
std::string mesh_to_vtk(const Mesh& mesh,
                        const std::vector<std::pair<std::string, const std::vector<double>*>>& point_fields = {});

} // namespace evoporo
