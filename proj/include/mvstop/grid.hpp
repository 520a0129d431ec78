#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace mvstop {

/// Whether a kernel may fan out over OpenMP threads. Both paths perform the
/// same per-element arithmetic and reduce in the same order.
enum class Exec { serial, parallel };

/// Uniform 1-D grid with `cells` cells and `cells + 1` nodes.
struct UniformGrid {
    double x_min = 0.0;
    double x_max = 1.0;
    std::size_t cells = 1;

    double dx() const { return (x_max - x_min) / static_cast<double>(cells); }
    std::size_t size() const { return cells + 1; }
    double node(std::size_t i) const { return x_min + dx() * static_cast<double>(i); }

    void validate() const {
        if (!(x_max > x_min) || cells < 2) throw std::invalid_argument("grid needs x_max > x_min and >= 2 cells");
    }
    bool operator==(const UniformGrid&) const = default;
};

struct GridDensity {
    UniformGrid grid;
    std::vector<double> values;
    double time = 0.0;
};

/// Composite trapezoid rule over the whole grid.
inline double trapezoid(const UniformGrid& grid, std::span<const double> values) {
    if (values.size() != grid.size()) throw std::invalid_argument("values do not match grid");
    double s = 0.5 * (values.front() + values.back());
    for (std::size_t i = 1; i + 1 < values.size(); ++i) s += values[i];
    return s * grid.dx();
}

inline double mass(const GridDensity& d) { return trapezoid(d.grid, d.values); }

inline double first_moment(const GridDensity& d) {
    std::vector<double> xf(d.values.size());
    for (std::size_t i = 0; i < xf.size(); ++i) xf[i] = d.grid.node(i) * d.values[i];
    return trapezoid(d.grid, xf);
}

/// Samples `pdf` on the grid and rescales to unit trapezoid mass.
template <class Pdf>
GridDensity density_from_pdf(const UniformGrid& grid, Pdf&& pdf, double time = 0.0) {
    grid.validate();
    GridDensity d{grid, std::vector<double>(grid.size()), time};
    for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = pdf(grid.node(i));
    const double m = mass(d);
    if (!(m > 0.0)) throw std::invalid_argument("pdf has no mass on the grid");
    for (double& v : d.values) v /= m;
    return d;
}

}  // namespace mvstop
