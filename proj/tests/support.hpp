#pragma once

#include <cmath>
#include <functional>

#include "ltdd/graph.hpp"
#include "ltdd/rng.hpp"
#include "ltdd/tensor.hpp"

namespace ltdd::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = scale * rng.normal();
    return t;
}

// Central difference of f at x[i].
inline double central_diff(const std::function<double(const Tensor&)>& f, Tensor x, std::size_t i, double h = 1e-5) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    return (up - down) / (2.0 * h);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b)); }

}  // namespace ltdd::testing
