#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace slowcone {

enum class Boundary { open, periodic };
enum class Norm { l1, linf };

inline std::string to_string(Boundary bc) { return bc == Boundary::open ? "open" : "periodic"; }
inline std::string to_string(Norm n) { return n == Norm::l1 ? "l1" : "linf"; }

inline Boundary parse_boundary(const std::string& s) {
    if (s == "open") return Boundary::open;
    if (s == "periodic") return Boundary::periodic;
    throw std::invalid_argument("unknown boundary condition '" + s + "'");
}

inline Norm parse_norm(const std::string& s) {
    if (s == "l1") return Norm::l1;
    if (s == "linf") return Norm::linf;
    throw std::invalid_argument("unknown norm '" + s + "'");
}

/// Integer coordinates of a site, one entry per axis.
using Coord = std::vector<int>;

inline constexpr std::int64_t default_site_budget = 1 << 24;

/// Finite hypercubic box {0..L-1}^d standing in for Z^d.
///
/// Sites are indexed row-major with axis 0 slowest. The origin (the site
/// called x = 0 by every physical quantity) is the center L/2 on each axis;
/// `offset()` returns coordinates relative to it.
class LatticeBox {
public:
    LatticeBox(int dim, int side, Boundary bc, std::int64_t site_budget = default_site_budget)
        : dim_(dim), side_(side), bc_(bc) {
        if (dim < 1) throw std::invalid_argument("lattice dimension must be >= 1");
        if (side < 1) throw std::invalid_argument("lattice side length must be >= 1");
        std::int64_t n = 1;
        for (int a = 0; a < dim; ++a) {
            n *= side;
            if (n > site_budget)
                throw std::length_error("lattice of side " + std::to_string(side) + " in d=" +
                                        std::to_string(dim) + " exceeds site budget " +
                                        std::to_string(site_budget));
        }
        sites_ = static_cast<int>(n);

        stride_.assign(dim, 1);
        for (int a = dim - 2; a >= 0; --a) stride_[a] = stride_[a + 1] * side;

        Coord center(dim, side / 2);
        origin_ = index(center);

        nbr_start_.reserve(sites_ + 1);
        nbr_start_.push_back(0);
        Coord c;
        for (int i = 0; i < sites_; ++i) {
            c = coord(i);
            for (int a = 0; a < dim; ++a) {
                for (int step : {-1, +1}) {
                    int v = c[a] + step;
                    if (v < 0 || v >= side) {
                        if (bc == Boundary::open) continue;
                        v = (v + side) % side;
                    }
                    const int j = i + (v - c[a]) * stride_[a];
                    if (j == i) continue;
                    // L=2 periodic reaches the same neighbour both ways
                    auto first = nbr_.begin() + nbr_start_.back();
                    if (std::find(first, nbr_.end(), j) != nbr_.end()) continue;
                    nbr_.push_back(j);
                }
            }
            nbr_start_.push_back(static_cast<int>(nbr_.size()));
        }
    }

    int dim() const { return dim_; }
    int side() const { return side_; }
    Boundary boundary() const { return bc_; }
    int site_count() const { return sites_; }
    int origin() const { return origin_; }

    Coord coord(int i) const {
        Coord c(dim_);
        for (int a = 0; a < dim_; ++a) {
            c[a] = i / stride_[a];
            i %= stride_[a];
        }
        return c;
    }

    int index(const Coord& c) const {
        if (static_cast<int>(c.size()) != dim_) throw std::invalid_argument("coordinate has wrong dimension");
        int i = 0;
        for (int a = 0; a < dim_; ++a) {
            if (c[a] < 0 || c[a] >= side_) throw std::out_of_range("coordinate outside box");
            i += c[a] * stride_[a];
        }
        return i;
    }

    bool contains(const Coord& c) const {
        if (static_cast<int>(c.size()) != dim_) return false;
        return std::all_of(c.begin(), c.end(), [&](int v) { return v >= 0 && v < side_; });
    }

    /// Coordinates relative to the origin.
    Coord offset(int i) const {
        Coord c = coord(i);
        for (int a = 0; a < dim_; ++a) c[a] -= side_ / 2;
        return c;
    }

    /// Site at a coordinate given relative to the origin.
    int site_at_offset(const Coord& rel) const {
        Coord c = rel;
        for (int a = 0; a < dim_ && a < static_cast<int>(c.size()); ++a) c[a] += side_ / 2;
        return index(c);
    }

    std::span<const int> neighbors(int i) const {
        return {nbr_.data() + nbr_start_[i], nbr_.data() + nbr_start_[i + 1]};
    }

    /// Number of undirected nearest-neighbour bonds.
    int edge_count() const { return static_cast<int>(nbr_.size()) / 2; }

    /// Axis separation, minimum image under periodic boundaries.
    int axis_separation(int a, int b) const {
        int s = std::abs(a - b);
        if (bc_ == Boundary::periodic) s = std::min(s, side_ - s);
        return s;
    }

    int distance(int i, int j, Norm norm) const {
        const Coord ci = coord(i), cj = coord(j);
        int acc = 0;
        for (int a = 0; a < dim_; ++a) {
            const int s = axis_separation(ci[a], cj[a]);
            acc = norm == Norm::l1 ? acc + s : std::max(acc, s);
        }
        return acc;
    }

    /// Distance of a site from the origin.
    int radius(int i, Norm norm) const { return distance(i, origin_, norm); }

    /// Sites between the origin and the nearest face (open boundaries).
    int half_extent() const { return side_ / 2 - (side_ % 2 == 0 ? 1 : 0); }

private:
    int dim_;
    int side_;
    Boundary bc_;
    int sites_ = 0;
    int origin_ = 0;
    std::vector<int> stride_;
    std::vector<int> nbr_start_;
    std::vector<int> nbr_;
};

using BoxPtr = std::shared_ptr<const LatticeBox>;

inline BoxPtr build_box(int dim, int side, Boundary bc = Boundary::open,
                        std::int64_t site_budget = default_site_budget) {
    return std::make_shared<const LatticeBox>(dim, side, bc, site_budget);
}

/// A set of sites of one box.
struct Region {
    enum class Kind { ball, complement, explicit_set };

    BoxPtr box;
    std::vector<char> mask;
    Kind kind = Kind::explicit_set;
    int radius = 0;
    int center = 0;
    Norm norm = Norm::l1;
    /// The ball would extend past the box (or wrap onto itself when periodic).
    bool clipped = false;

    int size() const { return static_cast<int>(std::count(mask.begin(), mask.end(), char{1})); }
    bool contains(int site) const { return mask[site] != 0; }

    std::string label() const {
        switch (kind) {
        case Kind::ball: return "ball(" + std::to_string(radius) + ")";
        case Kind::complement: return "complement(" + std::to_string(radius) + ")";
        default: return "explicit";
        }
    }
};

inline Region ball_region(const BoxPtr& box, int r, int center, Norm norm = Norm::l1) {
    if (r < 0) throw std::invalid_argument("ball radius must be >= 0");
    if (center < 0 || center >= box->site_count()) throw std::out_of_range("ball center outside box");
    Region reg;
    reg.box = box;
    reg.kind = Region::Kind::ball;
    reg.radius = r;
    reg.center = center;
    reg.norm = norm;
    reg.mask.assign(box->site_count(), 0);
    for (int i = 0; i < box->site_count(); ++i)
        if (box->distance(i, center, norm) <= r) reg.mask[i] = 1;

    const Coord c = box->coord(center);
    for (int a = 0; a < box->dim(); ++a) {
        if (box->boundary() == Boundary::open) {
            if (c[a] - r < 0 || c[a] + r > box->side() - 1) reg.clipped = true;
        } else if (2 * r + 1 > box->side()) {
            reg.clipped = true;
        }
    }
    return reg;
}

inline Region ball_region(const BoxPtr& box, int r, Norm norm = Norm::l1) {
    return ball_region(box, r, box->origin(), norm);
}

inline Region complement_region(const Region& ball) {
    Region reg = ball;
    reg.kind = Region::Kind::complement;
    for (auto& m : reg.mask) m = m ? 0 : 1;
    return reg;
}

inline Region full_region(const BoxPtr& box) {
    Region reg;
    reg.box = box;
    reg.mask.assign(box->site_count(), 1);
    return reg;
}

} // namespace slowcone
