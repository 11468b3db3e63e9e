#pragma once

// Geometry substrate: 2D meshes of linear triangles and bilinear quads,
// plane or axisymmetric, with quadrature and shape-function evaluation.

#include <array>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace restenosim {

enum class Mode { plane, axisym };

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Element {
  std::array<int, 4> nodes{-1, -1, -1, -1};
  int nn = 0;  // 3 (tri) or 4 (quad)
};

struct BoundaryEdge {
  int element = -1;
  int local_edge = -1;
  std::string tag;
};

using Coords = std::vector<Eigen::Vector2d>;

// Local edge -> (local node, local node), counter-clockwise.
inline std::array<int, 2> edge_nodes(const Element& el, int local_edge) {
  return {local_edge, (local_edge + 1) % el.nn};
}

struct QuadratureRule {
  std::vector<Eigen::Vector2d> points;
  std::vector<double> weights;
};

// 2x2 Gauss for quads; 1- or 3-point rules for triangles.
inline QuadratureRule quadrature(int nn, int tri_points = 3) {
  QuadratureRule q;
  if (nn == 4) {
    const double g = 1.0 / std::sqrt(3.0);
    for (double eta : {-g, g})
      for (double xi : {-g, g}) {
        q.points.emplace_back(xi, eta);
        q.weights.push_back(1.0);
      }
  } else if (nn == 3) {
    if (tri_points == 1) {
      q.points.emplace_back(1.0 / 3.0, 1.0 / 3.0);
      q.weights.push_back(0.5);
    } else {
      for (auto [a, b] : {std::pair{1. / 6, 1. / 6}, {2. / 3, 1. / 6}, {1. / 6, 2. / 3}}) {
        q.points.emplace_back(a, b);
        q.weights.push_back(1.0 / 6.0);
      }
    }
  } else {
    throw MeshError("unsupported element node count " + std::to_string(nn));
  }
  return q;
}

struct ShapeEval {
  std::array<double, 4> N{};
  std::array<Eigen::Vector2d, 4> dN_dx{};   // spatial gradients [1/mm]
  double detJ_times_w = 0.0;                // incl. 2*pi*r in axisym mode
  double radius = 0.0;                      // first coordinate at the qp
  int nn = 0;
};

inline void reference_shapes(int nn, const Eigen::Vector2d& xi,
                             std::array<double, 4>& N,
                             std::array<Eigen::Vector2d, 4>& dN_dxi) {
  if (nn == 4) {
    const double x = xi[0], y = xi[1];
    N = {0.25 * (1 - x) * (1 - y), 0.25 * (1 + x) * (1 - y),
         0.25 * (1 + x) * (1 + y), 0.25 * (1 - x) * (1 + y)};
    dN_dxi[0] = {-0.25 * (1 - y), -0.25 * (1 - x)};
    dN_dxi[1] = {0.25 * (1 - y), -0.25 * (1 + x)};
    dN_dxi[2] = {0.25 * (1 + y), 0.25 * (1 + x)};
    dN_dxi[3] = {-0.25 * (1 + y), 0.25 * (1 - x)};
  } else {
    const double x = xi[0], y = xi[1];
    N = {1 - x - y, x, y, 0.0};
    dN_dxi[0] = {-1.0, -1.0};
    dN_dxi[1] = {1.0, 0.0};
    dN_dxi[2] = {0.0, 1.0};
    dN_dxi[3] = {0.0, 0.0};
  }
}

struct Mesh {
  Coords nodes;
  std::vector<Element> elements;
  std::vector<BoundaryEdge> boundary;
  Mode mode = Mode::plane;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_elements() const { return static_cast<int>(elements.size()); }
};

inline ShapeEval shape_eval(const Mesh& mesh, int element, const Eigen::Vector2d& qp,
                            double w, const Coords* current_coords = nullptr) {
  const Coords& X = current_coords ? *current_coords : mesh.nodes;
  const Element& el = mesh.elements.at(element);

  ShapeEval s;
  s.nn = el.nn;
  std::array<Eigen::Vector2d, 4> dN_dxi;
  reference_shapes(el.nn, qp, s.N, dN_dxi);

  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  for (int a = 0; a < el.nn; ++a) {
    J += X[el.nodes[a]] * dN_dxi[a].transpose();
    x += s.N[a] * X[el.nodes[a]];
  }
  const double detJ = J.determinant();
  if (detJ <= 0.0)
    throw MeshError("singular or inverted Jacobian in element " + std::to_string(element) +
                    " (detJ = " + std::to_string(detJ) + ")");
  const Eigen::Matrix2d Jinv = J.inverse();
  for (int a = 0; a < el.nn; ++a) s.dN_dx[a] = Jinv.transpose() * dN_dxi[a];

  s.radius = x[0];
  s.detJ_times_w = detJ * w;
  if (mesh.mode == Mode::axisym) {
    if (s.radius < 0.0)
      throw MeshError("negative radius at quadrature point of element " + std::to_string(element));
    s.detJ_times_w *= 2.0 * std::numbers::pi * s.radius;
  }
  return s;
}

// Edge integration point for boundary loads: shape values on the parent
// element plus the arc-length weight (incl. axisym revolution factor).
struct EdgeEval {
  std::array<double, 4> N{};
  Eigen::Vector2d normal;  // outward unit normal
  double ds_times_w = 0.0;
};

inline std::vector<EdgeEval> edge_quadrature(const Mesh& mesh, const BoundaryEdge& be,
                                             const Coords* current_coords = nullptr) {
  const Coords& X = current_coords ? *current_coords : mesh.nodes;
  const Element& el = mesh.elements.at(be.element);
  auto en = edge_nodes(el, be.local_edge);
  const Eigen::Vector2d p0 = X[el.nodes[en[0]]];
  const Eigen::Vector2d p1 = X[el.nodes[en[1]]];
  const Eigen::Vector2d t = p1 - p0;
  const double len = t.norm();
  // CCW element ordering puts the outward normal to the right of the edge.
  Eigen::Vector2d n(t[1] / len, -t[0] / len);

  std::vector<EdgeEval> out;
  const double g = 1.0 / std::sqrt(3.0);
  for (double xi : {-g, g}) {
    EdgeEval e;
    const double s0 = 0.5 * (1 - xi), s1 = 0.5 * (1 + xi);
    e.N[en[0]] = s0;
    e.N[en[1]] = s1;
    e.normal = n;
    e.ds_times_w = 0.5 * len;  // 2-pt Gauss, weight 1 each on [-1,1]
    if (mesh.mode == Mode::axisym) {
      const double r = s0 * p0[0] + s1 * p1[0];
      e.ds_times_w *= 2.0 * std::numbers::pi * r;
    }
    out.push_back(e);
  }
  return out;
}

inline void validate_mesh(const Mesh& mesh) {
  const int nn = mesh.n_nodes();
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Element& el = mesh.elements[e];
    if (el.nn != 3 && el.nn != 4)
      throw MeshError("element " + std::to_string(e) + " has invalid node count");
    for (int a = 0; a < el.nn; ++a)
      if (el.nodes[a] < 0 || el.nodes[a] >= nn)
        throw MeshError("element " + std::to_string(e) + " references node " +
                        std::to_string(el.nodes[a]) + " of " + std::to_string(nn));
    QuadratureRule q = quadrature(el.nn);
    for (size_t k = 0; k < q.points.size(); ++k)
      shape_eval(mesh, e, q.points[k], q.weights[k]);  // throws on detJ <= 0
  }
  for (const BoundaryEdge& be : mesh.boundary) {
    if (be.element < 0 || be.element >= mesh.n_elements())
      throw MeshError("boundary edge references element " + std::to_string(be.element));
    if (be.local_edge < 0 || be.local_edge >= mesh.elements[be.element].nn)
      throw MeshError("boundary edge has invalid local edge " + std::to_string(be.local_edge));
  }
  if (mesh.mode == Mode::axisym)
    for (int i = 0; i < nn; ++i)
      if (mesh.nodes[i][0] < 0.0)
        throw MeshError("axisymmetric mesh has node " + std::to_string(i) +
                        " with negative radius");
}

// Plain-text format:
//   mode plane|axisym
//   nodes <count>      followed by "x y" lines
//   elements <count>   followed by "tri i j k" / "quad i j k l" lines
//   boundary <count>   followed by "<elem> <local-edge> <tag>" lines
inline Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file: " + path);

  Mesh mesh;
  std::string line;
  int lineno = 0;
  auto next_line = [&](std::istringstream& ss) {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      ss = std::istringstream(line);
      return true;
    }
    return false;
  };
  auto fail = [&](const std::string& msg) -> void {
    throw MeshError(path + ":" + std::to_string(lineno) + ": " + msg);
  };

  std::istringstream ss;
  std::string kw, val;
  if (!next_line(ss) || !(ss >> kw >> val) || kw != "mode") fail("expected 'mode plane|axisym'");
  if (val == "plane")
    mesh.mode = Mode::plane;
  else if (val == "axisym")
    mesh.mode = Mode::axisym;
  else
    fail("unknown mode '" + val + "'");

  int count = 0;
  if (!next_line(ss) || !(ss >> kw >> count) || kw != "nodes") fail("expected 'nodes <count>'");
  for (int i = 0; i < count; ++i) {
    double x, y;
    if (!next_line(ss) || !(ss >> x >> y)) fail("expected node coordinates");
    mesh.nodes.emplace_back(x, y);
  }

  if (!next_line(ss) || !(ss >> kw >> count) || kw != "elements")
    fail("expected 'elements <count>'");
  for (int i = 0; i < count; ++i) {
    std::string type;
    if (!next_line(ss) || !(ss >> type)) fail("expected element line");
    Element el;
    el.nn = (type == "tri") ? 3 : (type == "quad") ? 4 : 0;
    if (el.nn == 0) fail("unknown element type '" + type + "'");
    for (int a = 0; a < el.nn; ++a)
      if (!(ss >> el.nodes[a])) fail("expected " + std::to_string(el.nn) + " node indices");
    mesh.elements.push_back(el);
  }

  if (next_line(ss)) {
    if (!(ss >> kw >> count) || kw != "boundary") fail("expected 'boundary <count>'");
    for (int i = 0; i < count; ++i) {
      BoundaryEdge be;
      if (!next_line(ss) || !(ss >> be.element >> be.local_edge >> be.tag))
        fail("expected boundary edge line");
      mesh.boundary.push_back(be);
    }
  }

  validate_mesh(mesh);
  return mesh;
}

inline void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  out << "mode " << (mesh.mode == Mode::plane ? "plane" : "axisym") << "\n";
  out << "nodes " << mesh.n_nodes() << "\n";
  out.precision(17);
  for (const auto& p : mesh.nodes) out << p[0] << " " << p[1] << "\n";
  out << "elements " << mesh.n_elements() << "\n";
  for (const Element& el : mesh.elements) {
    out << (el.nn == 3 ? "tri" : "quad");
    for (int a = 0; a < el.nn; ++a) out << " " << el.nodes[a];
    out << "\n";
  }
  out << "boundary " << mesh.boundary.size() << "\n";
  for (const BoundaryEdge& be : mesh.boundary)
    out << be.element << " " << be.local_edge << " " << be.tag << "\n";
}

// Structured quad mesh of a length x thickness strip. Plane mode lays the
// length along x and the thickness along y. Axisymmetric mode stores (r, z):
// thickness along r (offset by the inner radius), length along z.
inline Mesh structured_rectangle(double length_mm, double thickness_mm, int nx, int ny,
                                 Mode mode, double inner_offset_mm = 0.0) {
  if (nx < 1 || ny < 1) throw MeshError("structured_rectangle: nx, ny must be >= 1");
  if (length_mm <= 0 || thickness_mm <= 0)
    throw MeshError("structured_rectangle: dimensions must be positive");

  Mesh mesh;
  mesh.mode = mode;
  const double dx = length_mm / nx, dy = thickness_mm / ny;
  auto nid = [&](int i, int j) { return i + j * (nx + 1); };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      const double s = i * dx;            // along the length
      const double t = j * dy;            // through the thickness
      if (mode == Mode::plane)
        mesh.nodes.emplace_back(s, t);
      else
        mesh.nodes.emplace_back(inner_offset_mm + t, s);
    }
  // Counter-clockwise corner order in both layouts.
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      Element el;
      el.nn = 4;
      if (mode == Mode::plane)
        el.nodes = {nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)};
      else
        el.nodes = {nid(i, j), nid(i, j + 1), nid(i + 1, j + 1), nid(i + 1, j)};
      mesh.elements.push_back(el);
    }
  auto eid = [&](int i, int j) { return i + j * nx; };
  for (int i = 0; i < nx; ++i) {
    // inner: thickness = 0 side; outer: thickness = max side
    mesh.boundary.push_back({eid(i, 0), mode == Mode::plane ? 0 : 3, "inner"});
    mesh.boundary.push_back({eid(i, ny - 1), mode == Mode::plane ? 2 : 1, "outer"});
  }
  for (int j = 0; j < ny; ++j) {
    mesh.boundary.push_back({eid(0, j), mode == Mode::plane ? 3 : 0, "left"});
    mesh.boundary.push_back({eid(nx - 1, j), mode == Mode::plane ? 1 : 2, "right"});
  }
  validate_mesh(mesh);
  return mesh;
}

// Inverse of the element map; returns false if the point lies outside.
inline bool locate_in_element(const Mesh& mesh, int element, const Eigen::Vector2d& x,
                              Eigen::Vector2d& xi_out, const Coords* coords = nullptr,
                              double tol = 1e-9) {
  const Coords& X = coords ? *coords : mesh.nodes;
  const Element& el = mesh.elements[element];
  if (el.nn == 3) {
    Eigen::Matrix2d A;
    A.col(0) = X[el.nodes[1]] - X[el.nodes[0]];
    A.col(1) = X[el.nodes[2]] - X[el.nodes[0]];
    Eigen::Vector2d xi = A.inverse() * (x - X[el.nodes[0]]);
    xi_out = xi;
    return xi[0] >= -tol && xi[1] >= -tol && xi[0] + xi[1] <= 1 + tol;
  }
  Eigen::Vector2d xi = Eigen::Vector2d::Zero();
  for (int it = 0; it < 30; ++it) {
    std::array<double, 4> N;
    std::array<Eigen::Vector2d, 4> dN;
    reference_shapes(4, xi, N, dN);
    Eigen::Vector2d r = -x;
    Eigen::Matrix2d J = Eigen::Matrix2d::Zero();
    for (int a = 0; a < 4; ++a) {
      r += N[a] * X[el.nodes[a]];
      J += X[el.nodes[a]] * dN[a].transpose();
    }
    if (r.norm() < 1e-13) break;
    xi -= J.inverse() * r;
  }
  xi_out = xi;
  return xi[0] >= -1 - tol && xi[0] <= 1 + tol && xi[1] >= -1 - tol && xi[1] <= 1 + tol;
}

// Brute-force point location over all elements; returns element index or -1.
inline int locate_point(const Mesh& mesh, const Eigen::Vector2d& x, Eigen::Vector2d& xi_out,
                        const Coords* coords = nullptr) {
  for (int e = 0; e < mesh.n_elements(); ++e)
    if (locate_in_element(mesh, e, x, xi_out, coords)) return e;
  return -1;
}

inline double interpolate(const Mesh& mesh, int element, const Eigen::Vector2d& xi,
                          const Eigen::VectorXd& nodal) {
  const Element& el = mesh.elements[element];
  std::array<double, 4> N;
  std::array<Eigen::Vector2d, 4> dN;
  reference_shapes(el.nn, xi, N, dN);
  double v = 0;
  for (int a = 0; a < el.nn; ++a) v += N[a] * nodal[el.nodes[a]];
  return v;
}

}  // namespace restenosim
