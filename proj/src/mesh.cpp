#include "doprec/mesh.hpp"

#include <algorithm>
#include <cmath>

#include "doprec/errors.hpp"

namespace doprec {

namespace {

std::vector<double> dual_lengths(const std::vector<double>& p) {
    std::vector<double> cv(p.size(), 0.0);
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const double half = 0.5 * (p[i + 1] - p[i]);
        cv[i] += half;
        cv[i + 1] += half;
    }
    return cv;
}

}  // namespace

void MeshParams::validate() const {
    if (!(dx_max > 0) || !(min_wavelength > 0)) throw ConfigError("mesh: spacings must be positive");
    if (nz < 2) throw ConfigError("mesh: nz must be at least 2");
    if (!(z_grading >= 1.0)) throw ConfigError("mesh: z_grading must be >= 1");
}

Mesh2D Mesh2D::tensor(std::vector<double> x, std::vector<double> z) {
    if (x.size() < 2 || z.size() < 2) throw InvalidConfig("mesh needs at least 2 nodes per axis");
    for (const auto* axis : {&x, &z}) {
        for (std::size_t i = 1; i < axis->size(); ++i) {
            if (!((*axis)[i] > (*axis)[i - 1])) {
                throw InvalidConfig("mesh coordinates must be strictly increasing");
            }
        }
    }
    Mesh2D m;
    m.x_ = std::move(x);
    m.z_ = std::move(z);
    m.cv_x_ = dual_lengths(m.x_);
    m.cv_z_ = dual_lengths(m.z_);

    const std::size_t nx = m.x_.size();
    const std::size_t nz = m.z_.size();
    m.edges_.reserve(2 * nx * nz);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < nz; ++j) {
            if (j + 1 < nz) {
                m.edges_.push_back({m.node(i, j), m.node(i, j + 1), m.z_[j + 1] - m.z_[j], m.cv_x_[i]});
            }
            if (i + 1 < nx) {
                m.edges_.push_back({m.node(i, j), m.node(i + 1, j), m.x_[i + 1] - m.x_[i], m.cv_z_[j]});
            }
        }
    }

    m.tags_.assign(nx * nz, BoundaryTag::Interior);
    for (std::size_t i = 0; i < nx; ++i) {
        for (std::size_t j = 0; j < nz; ++j) {
            auto& t = m.tags_[m.node(i, j)];
            if (i == 0) {
                t = BoundaryTag::ContactD1;
            } else if (i + 1 == nx) {
                t = BoundaryTag::ContactD2;
            } else if (j == 0 || j + 1 == nz) {
                t = BoundaryTag::Neumann;
            }
        }
    }
    return m;
}

Mesh2D Mesh2D::build(const DeviceGeometry& geometry, const MeshParams& params) {
    params.validate();
    const double length_um = geometry.length * 1000.0;
    const double height_um = geometry.height * 1000.0;
    const double dx = std::min(params.dx_max, params.min_wavelength / 4.0);
    const auto cells = static_cast<std::size_t>(std::ceil(length_um / dx - 1e-9));

    std::vector<double> x(cells + 1);
    for (std::size_t i = 0; i <= cells; ++i) {
        x[i] = -0.5 * length_um + length_um * static_cast<double>(i) / static_cast<double>(cells);
    }
    x.back() = 0.5 * length_um;

    // Geometric spacings h0 * g^j measured downwards from the surface.
    const auto intervals = static_cast<std::size_t>(params.nz - 1);
    double weight = 0.0;
    for (std::size_t j = 0; j < intervals; ++j) weight += std::pow(params.z_grading, static_cast<double>(j));
    const double h0 = height_um / weight;
    std::vector<double> z(intervals + 1);
    z[intervals] = 0.0;
    double depth = 0.0;
    for (std::size_t j = 0; j < intervals; ++j) {
        depth += h0 * std::pow(params.z_grading, static_cast<double>(j));
        z[intervals - 1 - j] = -depth;
    }
    z.front() = -height_um;
    return tensor(std::move(x), std::move(z));
}

double Mesh2D::total_area() const {
    double a = 0.0;
    for (std::size_t k = 0; k < node_count(); ++k) a += volume(k);
    return a;
}

std::vector<std::size_t> Mesh2D::nodes_with(BoundaryTag t) const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < tags_.size(); ++k) {
        if (tags_[k] == t) out.push_back(k);
    }
    return out;
}

}  // namespace doprec
