#pragma once

#include <cmath>
#include <cstddef>

#include "shadownet/errors.hpp"

namespace shadownet {

enum class ActivationKind { None, Relu, Relu6, LeakyRelu };

// LeakyReLU(x) = max(0.1x, x); the slope is part of the definition.
inline constexpr double kLeakySlope = 0.1;

// Activate the first k = ceil(ratio * C) channels, copy the rest.
struct PartialActivationSpec {
    double ratio = 1.0;
    ActivationKind inner = ActivationKind::Relu;
};

inline std::size_t active_channels(double ratio, std::size_t channels) {
    if (!(ratio >= 0.0) || ratio > 1.0)
        throw RangeError("activation ratio must lie in [0, 1]");
    const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(channels)));
    return k < channels ? k : channels;
}

} // namespace shadownet
