#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "shadownet/activation.hpp"
#include "shadownet/netgraph.hpp"
#include "shadownet/transport.hpp"

// Analytic round/communication pricing. Interactive layers follow the
// three-party protocol prices; everything affine or structural is free
// under additive sharing. log2(p) enters as a real number and a megabyte
// is 10^6 bytes: both conventions are reverse-engineered from the worked
// figures these formulas must reproduce.

namespace shadownet {

struct CostParams {
    unsigned bits = 64; // l
    unsigned field = 67; // p

    double log_p() const { return std::log2(static_cast<double>(field)); }

    static CostParams from_ring(const RingParams& rp) { return {rp.bits, rp.field}; }
};

inline constexpr double kBytesPerMb = 1e6;

enum class CostPhase { Online, Offline, Local };

struct LayerCost {
    std::string name;
    std::string kind;
    std::uint64_t rounds = 0;
    double bits = 0; // exact real value
    CostPhase phase = CostPhase::Online;
    std::string note; // e.g. extrapolation flags

    double bytes() const { return bits / 8.0; }
    double mb() const { return bytes() / kBytesPerMb; }
};

struct CostReport {
    std::vector<LayerCost> layers;
    std::uint64_t total_rounds = 0;
    double total_bits = 0;
    std::optional<MeasuredCost> measured; // side-by-side display only

    double total_bytes() const { return total_bits / 8.0; }
    double total_mb() const { return total_bytes() / kBytesPerMb; }

    void append(LayerCost c);

    std::string to_text() const; // aligned columns
    std::string to_json() const;
};

// m = output spatial dim (strided convs price with the adjusted m),
// f = kernel, i/o = channel widths.
LayerCost conv_cost(std::size_t m, std::size_t f, std::size_t i, std::size_t o,
                    const CostParams& p);
LayerCost relu_cost(std::size_t n, const CostParams& p);
LayerCost drelu_cost(std::size_t n, const CostParams& p);
LayerCost relu6_cost(std::size_t n, const CostParams& p);   // exactly 2x relu
LayerCost leaky_relu_cost(std::size_t n, const CostParams& p); // equals relu
LayerCost maxpool_cost(std::size_t n_out, std::size_t f, const CostParams& p);
LayerCost avgpool_cost();
LayerCost partial_activation_cost(std::size_t n, std::size_t channels, double ratio,
                                  ActivationKind inner, const CostParams& p);

// Prices every layer, summing rounds sequentially (parallel branches are
// scheduled conservatively). Depthwise conv is priced per channel group
// (i = o = 1) and flagged as an extrapolation.
CostReport network_cost(const NetworkGraph& g, const CostParams& p);

} // namespace shadownet
