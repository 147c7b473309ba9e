#pragma once

#include <span>
#include <vector>

#include "ltdd/models.hpp"

namespace ltdd {

/// Heavy-ball SGD with L2 weight decay:
///   v <- momentum * v + (grad + weight_decay * p);  p <- p - step * v
class MomentumSgd {
public:
    MomentumSgd(double step_size, double momentum, double weight_decay)
        : step_size_(step_size), momentum_(momentum), weight_decay_(weight_decay) {}

    void update(Tensor& param, Tensor& velocity, const Tensor& grad) const;

    /// One soft-target cross-entropy step on every layer of `params` (which
    /// may be any stack of affine layers, e.g. a lone classifier). Returns
    /// the loss before the update.
    double step(ParamSet& params, std::vector<Layer>& velocity, const Tensor& x, const Tensor& targets) const;

private:
    double step_size_;
    double momentum_;
    double weight_decay_;
};

std::vector<Layer> zero_velocity(const ParamSet& params);

Tensor one_hot(std::span<const int> labels, std::size_t num_classes);

/// Copies the rows listed in `rows` out of a matrix.
Tensor gather(const Tensor& matrix, std::span<const std::size_t> rows);

}  // namespace ltdd
