#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace cardioquant {

/// Dense NCHW tensor. S is float in production and double in gradient-check
/// mode.
template <class S>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<S> v;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, S(0)) {}

    std::size_t size() const { return v.size(); }

    S* plane(int ni, int ci) {
        return v.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
    }
    const S* plane(int ni, int ci) const {
        return v.data() + (static_cast<std::size_t>(ni) * c + ci) * h * w;
    }

    S& at(int ni, int ci, int y, int x) {
        return v[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
    }
    S at(int ni, int ci, int y, int x) const {
        return v[((static_cast<std::size_t>(ni) * c + ci) * h + y) * w + x];
    }

    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

}  // namespace cardioquant
