#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "rim/param_store.hpp"
#include "rim/tensor.hpp"

namespace rim {

// Central-difference gradient check. `loss` rebuilds the scalar loss from the
// current parameter values each call. Samples up to `max_coords` coordinates
// across all parameters and returns the max relative error
// |analytic - numeric| / (|analytic| + |numeric| + 1e-6). The 1e-6 floor is
// the resolution limit of central differences on an O(1) double-precision
// loss: coordinates whose true gradient is zero (for example softmax key
// biases) read back as roundoff noise on both sides and must compare equal.
template <typename S>
double finite_diff_check(ParamStore<S>& store,
                         const std::function<Tensor<S>()>& loss,
                         double eps, int max_coords, std::mt19937_64& rng) {
    check(eps > 0, "finite_diff_check: eps must be positive");

    store.zero_grad();
    Tensor<S> l = loss();
    check(std::isfinite(static_cast<double>(l.item())), "finite_diff_check: non-finite loss");
    backward(l);

    struct Coord {
        Tensor<S>* t;
        size_t i;
        double analytic;
    };
    std::vector<Coord> coords;
    for (auto& [name, t] : store)
        for (size_t i = 0; i < t.values().size(); ++i)
            coords.push_back({&t, i, t.grad().empty() ? 0.0 : static_cast<double>(t.grad()[i])});
    std::shuffle(coords.begin(), coords.end(), rng);
    if (static_cast<int>(coords.size()) > max_coords) coords.resize(static_cast<size_t>(max_coords));

    double max_rel = 0.0;
    for (const Coord& c : coords) {
        const S saved = c.t->values()[c.i];
        c.t->values()[c.i] = saved + static_cast<S>(eps);
        const double up = static_cast<double>(loss().item());
        c.t->values()[c.i] = saved - static_cast<S>(eps);
        const double down = static_cast<double>(loss().item());
        c.t->values()[c.i] = saved;
        check(std::isfinite(up) && std::isfinite(down), "finite_diff_check: non-finite loss");
        const double numeric = (up - down) / (2.0 * eps);
        const double rel =
            std::abs(c.analytic - numeric) / (std::abs(c.analytic) + std::abs(numeric) + 1e-6);
        max_rel = std::max(max_rel, rel);
    }
    return max_rel;
}

}  // namespace rim
