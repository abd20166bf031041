#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "doprec/device_model.hpp"

namespace doprec {

enum class BoundaryTag : std::uint8_t { Interior, ContactD1, ContactD2, Neumann };

struct MeshParams {
    // Upper bound on the lateral spacing [um]; the builder also enforces
    // four nodes per shortest doping wavelength.
    double dx_max = 2.5;
    double min_wavelength = 10.0;
    int nz = 3;
    // Ratio between consecutive vertical spacings, growing away from z = 0.
    double z_grading = 2.0;

    void validate() const;
};

// Tensor-product Voronoi mesh of the (x, z) cross-section. Coordinates in um;
// node k = i * nz + j for x-index i and z-index j.
class Mesh2D {
public:
    struct Edge {
        std::size_t k;
        std::size_t l;
        double length;       // |x_l - x_k| [um]
        double transversal;  // Voronoi face length [um]
    };

    static Mesh2D tensor(std::vector<double> x, std::vector<double> z);
    static Mesh2D build(const DeviceGeometry& geometry, const MeshParams& params);

    std::size_t nx() const { return x_.size(); }
    std::size_t nz() const { return z_.size(); }
    std::size_t node_count() const { return x_.size() * z_.size(); }
    std::size_t node(std::size_t i, std::size_t j) const { return i * z_.size() + j; }
    std::size_t x_index(std::size_t k) const { return k / z_.size(); }
    std::size_t z_index(std::size_t k) const { return k % z_.size(); }

    const std::vector<double>& x() const { return x_; }
    const std::vector<double>& z() const { return z_; }
    double node_x(std::size_t k) const { return x_[x_index(k)]; }
    double node_z(std::size_t k) const { return z_[z_index(k)]; }
    // Control-volume area [um^2].
    double volume(std::size_t k) const { return cv_x_[x_index(k)] * cv_z_[z_index(k)]; }
    double total_area() const;

    const std::vector<Edge>& edges() const { return edges_; }
    BoundaryTag tag(std::size_t k) const { return tags_[k]; }
    bool is_contact(std::size_t k) const {
        return tags_[k] == BoundaryTag::ContactD1 || tags_[k] == BoundaryTag::ContactD2;
    }
    std::vector<std::size_t> nodes_with(BoundaryTag t) const;

private:
    std::vector<double> x_, z_, cv_x_, cv_z_;
    std::vector<Edge> edges_;
    std::vector<BoundaryTag> tags_;
};

}  // namespace doprec
