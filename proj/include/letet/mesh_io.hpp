#pragma once

// Tetrahedral mesh container plus TetGen (.node/.ele) parsing and VTK legacy
// output. Parsers are single pass and report errors with line numbers.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "letet/error.hpp"
#include "letet/geometry.hpp"

namespace letet {

using Tet = std::array<int, 4>;

struct TetMesh {
    std::vector<Vec3> vertices;
    std::vector<Tet> tets;

    std::size_t n_vertices() const { return vertices.size(); }
    std::size_t n_tets() const { return tets.size(); }

    std::array<Vec3, 4> corners(std::size_t t) const {
        const Tet& tet = tets[t];
        return {vertices[tet[0]], vertices[tet[1]], vertices[tet[2]], vertices[tet[3]]};
    }
};

/// One scalar or fixed-width vector per vertex, stored row-major.
struct VertexField {
    std::vector<double> values;
    int width = 1;

    std::size_t size() const { return width > 0 ? values.size() / static_cast<std::size_t>(width) : 0; }
};

struct NodeData {
    std::vector<Vec3> vertices;
    int base = 0;  ///< indexing base detected from the first record (0 or 1)
};

namespace detail {

/// Reads non-empty, comment-stripped lines and tokenizes them.
class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    bool next(std::vector<std::string_view>& tokens) {
        while (std::getline(in_, line_)) {
            ++line_no_;
            if (auto hash = line_.find('#'); hash != std::string::npos) line_.erase(hash);
            tokens.clear();
            std::string_view rest(line_);
            while (!rest.empty()) {
                const auto b = rest.find_first_not_of(" \t\r,");
                if (b == std::string_view::npos) break;
                rest.remove_prefix(b);
                const auto e = rest.find_first_of(" \t\r,");
                tokens.push_back(rest.substr(0, e));
                if (e == std::string_view::npos) break;
                rest.remove_prefix(e);
            }
            if (!tokens.empty()) return true;
        }
        return false;
    }

    std::size_t line() const { return line_no_; }

private:
    std::istream& in_;
    std::string line_;
    std::size_t line_no_ = 0;
};

inline long long parse_int(std::string_view tok, std::size_t line) {
    long long v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
        throw ParseError("expected integer, got '" + std::string(tok) + "'", line);
    }
    return v;
}

inline double parse_double(std::string_view tok, std::size_t line) {
    double v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
        throw ParseError("expected number, got '" + std::string(tok) + "'", line);
    }
    if (!std::isfinite(v)) throw ParseError("non-finite coordinate", line);
    return v;
}

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), p);
}

inline std::string format_float(float v) {
    std::array<char, 32> buf{};
    auto [p, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), p);
}

} // namespace detail

inline NodeData parse_node_file(std::istream& in) {
    detail::LineReader reader(in);
    std::vector<std::string_view> tok;
    if (!reader.next(tok)) throw ParseError("missing .node header", reader.line());
    if (tok.size() < 2) throw ParseError(".node header needs at least <#points> <dim>", reader.line());
    const long long count = detail::parse_int(tok[0], reader.line());
    const long long dim = detail::parse_int(tok[1], reader.line());
    if (dim != 3) throw ParseError("dimension must be 3, got " + std::to_string(dim), reader.line());
    if (count < 0) throw ParseError("negative point count", reader.line());

    NodeData out;
    out.vertices.reserve(static_cast<std::size_t>(count));
    while (reader.next(tok)) {
        if (static_cast<long long>(out.vertices.size()) == count) {
            throw ParseError("count mismatch: header declares " + std::to_string(count) + " points", reader.line());
        }
        if (tok.size() < 4) throw ParseError("point record needs <index> <x> <y> <z>", reader.line());
        const long long idx = detail::parse_int(tok[0], reader.line());
        if (out.vertices.empty()) {
            if (idx != 0 && idx != 1) throw ParseError("first point index must be 0 or 1", reader.line());
            out.base = static_cast<int>(idx);
        }
        if (idx != out.base + static_cast<long long>(out.vertices.size())) {
            throw ParseError("non-contiguous point index " + std::to_string(idx), reader.line());
        }
        out.vertices.push_back({detail::parse_double(tok[1], reader.line()), detail::parse_double(tok[2], reader.line()),
                                detail::parse_double(tok[3], reader.line())});
    }
    if (static_cast<long long>(out.vertices.size()) != count) {
        throw ParseError("truncated file: expected " + std::to_string(count) + " points, found " +
                             std::to_string(out.vertices.size()),
                         reader.line());
    }
    return out;
}

/// Parses a TetGen .ele stream; vertex indices are rebased by `base` to 0.
/// Orientation is left as read.
inline std::vector<Tet> parse_ele_file(std::istream& in, std::size_t n_vertices, int base = 0) {
    detail::LineReader reader(in);
    std::vector<std::string_view> tok;
    if (!reader.next(tok)) throw ParseError("missing .ele header", reader.line());
    if (tok.size() < 2) throw ParseError(".ele header needs <#tets> <nodes-per-tet>", reader.line());
    const long long count = detail::parse_int(tok[0], reader.line());
    const long long per = detail::parse_int(tok[1], reader.line());
    if (per != 4) throw ParseError("nodes-per-tet must be 4, got " + std::to_string(per), reader.line());
    if (count < 0) throw ParseError("negative tetrahedron count", reader.line());

    std::vector<Tet> tets;
    tets.reserve(static_cast<std::size_t>(count));
    while (reader.next(tok)) {
        if (static_cast<long long>(tets.size()) == count) {
            throw ParseError("count mismatch: header declares " + std::to_string(count) + " tetrahedra", reader.line());
        }
        if (tok.size() < 5) throw ParseError("tetrahedron record needs <index> <v1> <v2> <v3> <v4>", reader.line());
        Tet t{};
        for (int k = 0; k < 4; ++k) {
            const long long v = detail::parse_int(tok[k + 1], reader.line()) - base;
            if (v < 0 || v >= static_cast<long long>(n_vertices)) {
                throw ParseError("vertex index out of range: " + std::string(tok[k + 1]), reader.line());
            }
            t[k] = static_cast<int>(v);
        }
        tets.push_back(t);
    }
    if (static_cast<long long>(tets.size()) != count) {
        throw ParseError("truncated file: expected " + std::to_string(count) + " tetrahedra", reader.line());
    }
    return tets;
}

inline TetMesh read_tetgen(const std::string& node_path, const std::string& ele_path) {
    std::ifstream node(node_path);
    if (!node) throw DataError("cannot open " + node_path);
    std::ifstream ele(ele_path);
    if (!ele) throw DataError("cannot open " + ele_path);
    NodeData nd = parse_node_file(node);
    TetMesh mesh;
    mesh.tets = parse_ele_file(ele, nd.vertices.size(), nd.base);
    mesh.vertices = std::move(nd.vertices);
    return mesh;
}

inline std::string write_node_file(const TetMesh& mesh) {
    std::string out = std::to_string(mesh.n_vertices()) + " 3 0 0\n";
    for (std::size_t i = 0; i < mesh.n_vertices(); ++i) {
        const Vec3& v = mesh.vertices[i];
        out += std::to_string(i) + ' ' + detail::format_double(v[0]) + ' ' + detail::format_double(v[1]) + ' ' +
               detail::format_double(v[2]) + '\n';
    }
    return out;
}

inline std::string write_ele_file(const TetMesh& mesh) {
    std::string out = std::to_string(mesh.n_tets()) + " 4 0\n";
    for (std::size_t t = 0; t < mesh.n_tets(); ++t) {
        const Tet& tet = mesh.tets[t];
        out += std::to_string(t) + ' ' + std::to_string(tet[0]) + ' ' + std::to_string(tet[1]) + ' ' +
               std::to_string(tet[2]) + ' ' + std::to_string(tet[3]) + '\n';
    }
    return out;
}

struct MeshReport {
    double min_volume = 0.0;
    double max_volume = 0.0;
    double min_dihedral = 0.0;  ///< radians
    std::size_t n_reoriented = 0;
    std::size_t n_duplicates_removed = 0;
};

struct OrientedMesh {
    TetMesh mesh;
    MeshReport report;
};

inline double bounding_box_diagonal(const std::vector<Vec3>& pts) {
    if (pts.empty()) return 0.0;
    Vec3 lo = pts.front(), hi = pts.front();
    for (const Vec3& p : pts) {
        for (int k = 0; k < 3; ++k) {
            lo[k] = std::min(lo[k], p[k]);
            hi[k] = std::max(hi[k], p[k]);
        }
    }
    return norm(hi - lo);
}

/// Interior dihedral angle along edge (a, b) between faces (a, b, c) and (a, b, d).
inline double dihedral_angle(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
    const Vec3 e = b - a;
    const double ee = dot(e, e);
    const Vec3 u = (c - a) - (dot(c - a, e) / ee) * e;
    const Vec3 w = (d - a) - (dot(d - a, e) / ee) * e;
    return std::atan2(norm(cross(u, w)), dot(u, w));
}

inline double min_dihedral_angle(const std::array<Vec3, 4>& p) {
    static constexpr int kEdges[6][4] = {{0, 1, 2, 3}, {0, 2, 1, 3}, {0, 3, 1, 2},
                                         {1, 2, 0, 3}, {1, 3, 0, 2}, {2, 3, 0, 1}};
    double best = std::numbers::pi;
    for (const auto& e : kEdges) best = std::min(best, dihedral_angle(p[e[0]], p[e[1]], p[e[2]], p[e[3]]));
    return best;
}

/// Fixes tet orientation to positive volume, drops duplicate tets and checks
/// every TetMesh invariant. Idempotent.
inline OrientedMesh validate_and_orient(const TetMesh& in) {
    if (in.n_vertices() < 4) throw DataError("mesh needs at least 4 vertices");
    if (in.n_tets() < 1) throw DataError("mesh needs at least 1 tetrahedron");
    for (const Vec3& v : in.vertices) {
        if (!std::isfinite(v[0]) || !std::isfinite(v[1]) || !std::isfinite(v[2])) {
            throw DataError("non-finite vertex coordinate");
        }
    }
    const double diag = bounding_box_diagonal(in.vertices);
    const double vol_tol = 1e-12 * diag * diag * diag;

    OrientedMesh out;
    out.mesh.vertices = in.vertices;
    out.mesh.tets.reserve(in.n_tets());
    out.report.min_volume = std::numeric_limits<double>::infinity();
    out.report.min_dihedral = std::numbers::pi;
    std::set<std::array<int, 4>> seen;
    const auto n = static_cast<int>(in.n_vertices());
    for (std::size_t t = 0; t < in.n_tets(); ++t) {
        Tet tet = in.tets[t];
        for (int k = 0; k < 4; ++k) {
            if (tet[k] < 0 || tet[k] >= n) {
                throw DataError("tetrahedron " + std::to_string(t) + ": vertex index out of range");
            }
        }
        std::array<int, 4> key = tet;
        std::sort(key.begin(), key.end());
        if (std::adjacent_find(key.begin(), key.end()) != key.end()) {
            throw DataError("tetrahedron " + std::to_string(t) + " has repeated vertices");
        }
        double vol = signed_volume(in.vertices[tet[0]], in.vertices[tet[1]], in.vertices[tet[2]], in.vertices[tet[3]]);
        if (std::abs(vol) < vol_tol) {
            throw NumericalError("degenerate tetrahedron " + std::to_string(t));
        }
        if (!seen.insert(key).second) {
            ++out.report.n_duplicates_removed;
            continue;
        }
        if (vol < 0) {
            std::swap(tet[2], tet[3]);
            vol = -vol;
            ++out.report.n_reoriented;
        }
        out.report.min_volume = std::min(out.report.min_volume, vol);
        out.report.max_volume = std::max(out.report.max_volume, vol);
        out.mesh.tets.push_back(tet);
        out.report.min_dihedral = std::min(out.report.min_dihedral, min_dihedral_angle(out.mesh.corners(out.mesh.n_tets() - 1)));
    }
    return out;
}

struct ScaleRecord {
    Vec3 centroid{0, 0, 0};
    double scale = 1.0;

    Vec3 to_original(const Vec3& p) const { return centroid + scale * p; }
};

struct NormalizedMesh {
    TetMesh mesh;
    ScaleRecord record;
};

/// Translates the vertex centroid to the origin and scales the farthest vertex to radius 1.
inline NormalizedMesh normalize_mesh(const TetMesh& in) {
    if (in.vertices.empty()) throw DataError("mesh has no vertices");
    Vec3 c{0, 0, 0};
    for (const Vec3& v : in.vertices) c = c + v;
    c = (1.0 / static_cast<double>(in.n_vertices())) * c;
    double r = 0.0;
    for (const Vec3& v : in.vertices) r = std::max(r, norm(v - c));
    if (!(r > 0.0)) throw DataError("all vertices coincident");

    NormalizedMesh out;
    out.record = {c, r};
    out.mesh.tets = in.tets;
    out.mesh.vertices.reserve(in.n_vertices());
    for (const Vec3& v : in.vertices) out.mesh.vertices.push_back((1.0 / r) * (v - c));
    return out;
}

namespace detail {

inline std::string vtk_geometry(const TetMesh& mesh) {
    std::string out = "# vtk DataFile Version 3.0\nletet\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out += "POINTS " + std::to_string(mesh.n_vertices()) + " float\n";
    for (const Vec3& v : mesh.vertices) {
        out += format_double(v[0]) + ' ' + format_double(v[1]) + ' ' + format_double(v[2]) + '\n';
    }
    out += "CELLS " + std::to_string(mesh.n_tets()) + ' ' + std::to_string(5 * mesh.n_tets()) + '\n';
    for (const Tet& t : mesh.tets) {
        out += "4 " + std::to_string(t[0]) + ' ' + std::to_string(t[1]) + ' ' + std::to_string(t[2]) + ' ' +
               std::to_string(t[3]) + '\n';
    }
    out += "CELL_TYPES " + std::to_string(mesh.n_tets()) + '\n';
    for (std::size_t t = 0; t < mesh.n_tets(); ++t) out += "10\n";
    return out;
}

} // namespace detail

/// VTK legacy ASCII unstructured grid with one point-data scalar array.
inline std::string write_vtk_scalar(const TetMesh& mesh, const VertexField& field, const std::string& name) {
    if (field.width < 1 || field.width > 4) throw DataError("VTK scalars support 1 to 4 components");
    if (field.values.size() != mesh.n_vertices() * static_cast<std::size_t>(field.width)) {
        throw DataError("field length does not match vertex count");
    }
    for (double v : field.values) {
        if (!std::isfinite(v)) throw DataError("field contains non-finite values");
    }
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
        throw DataError("VTK array name must be a single token");
    }
    std::string out = detail::vtk_geometry(mesh);
    out += "POINT_DATA " + std::to_string(mesh.n_vertices()) + '\n';
    out += "SCALARS " + name + " float " + std::to_string(field.width) + '\n';
    out += "LOOKUP_TABLE default\n";
    const auto w = static_cast<std::size_t>(field.width);
    for (std::size_t i = 0; i < mesh.n_vertices(); ++i) {
        for (std::size_t c = 0; c < w; ++c) {
            if (c) out += ' ';
            out += detail::format_float(static_cast<float>(field.values[i * w + c]));
        }
        out += '\n';
    }
    return out;
}

/// Integer per-vertex labels (e.g. patch ids) as a VTK `int` scalar array.
inline std::string write_vtk_labels(const TetMesh& mesh, const std::vector<int>& labels, const std::string& name) {
    if (labels.size() != mesh.n_vertices()) throw DataError("label count does not match vertex count");
    std::string out = detail::vtk_geometry(mesh);
    out += "POINT_DATA " + std::to_string(mesh.n_vertices()) + '\n';
    out += "SCALARS " + name + " int 1\nLOOKUP_TABLE default\n";
    for (int l : labels) out += std::to_string(l) + '\n';
    return out;
}

} // namespace letet
