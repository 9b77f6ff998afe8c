#pragma once

#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "slowcone/lattice.hpp"

namespace slowcone {

using cplx = std::complex<double>;

/// Complex amplitudes over the sites of a box, with the l2 norm cached.
class WaveFunction {
public:
    WaveFunction() = default;

    WaveFunction(BoxPtr box, Eigen::VectorXcd amplitudes) : box_(std::move(box)), amp_(std::move(amplitudes)) {
        if (amp_.size() != box_->site_count())
            throw std::invalid_argument("wave function length does not match the box");
        norm_ = amp_.norm();
    }

    static WaveFunction zero(BoxPtr box) {
        const int n = box->site_count();
        return {std::move(box), Eigen::VectorXcd::Zero(n)};
    }

    static WaveFunction delta(BoxPtr box, int site) {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(box->site_count());
        v(site) = 1.0;
        return {std::move(box), std::move(v)};
    }

    const BoxPtr& box() const { return box_; }
    const Eigen::VectorXcd& amplitudes() const { return amp_; }
    int size() const { return static_cast<int>(amp_.size()); }
    cplx operator[](int site) const { return amp_(site); }
    double norm() const { return norm_; }

    WaveFunction normalized() const {
        if (norm_ == 0.0) throw std::domain_error("cannot normalize the zero wave function");
        return {box_, amp_ / norm_};
    }

    double mass_in(const Region& region) const {
        double m = 0.0;
        for (int i = 0; i < size(); ++i)
            if (region.mask[i]) m += std::norm(amp_(i));
        return m;
    }

    /// True when every amplitude inside the region is exactly zero.
    bool vanishes_on(const Region& region) const {
        for (int i = 0; i < size(); ++i)
            if (region.mask[i] && amp_(i) != cplx{}) return false;
        return true;
    }

    double sup_norm() const { return amp_.cwiseAbs().maxCoeff(); }

private:
    BoxPtr box_;
    Eigen::VectorXcd amp_;
    double norm_ = 0.0;
};

} // namespace slowcone
