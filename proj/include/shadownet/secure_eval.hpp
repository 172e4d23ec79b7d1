#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "shadownet/costmodel.hpp"
#include "shadownet/netgraph.hpp"
#include "shadownet/protocols.hpp"
#include "shadownet/transport.hpp"

namespace shadownet {

// Wire cost observed for one layer of a secure run.
struct LayerMeasure {
    std::string name;
    std::uint64_t rounds = 0;
    std::uint64_t bytes = 0;
};

struct InferenceResult {
    FloatTensor output;       // reconstructed and decoded network output
    RingTensor output_ring;   // the same output before decoding
    CostReport modeled;       // analytic per-layer costs, measured totals attached
    MeasuredCost measured;    // observed rounds and payload bytes
    std::vector<LayerMeasure> measured_layers;
};

// Runs one secret-shared inference over the session. Weights and the input
// are shared from the session's input stream, every layer is evaluated with
// the secure protocols (locally where the layer needs no interaction), and
// the output shares are reconstructed at the end. Deterministic in the
// session seed.
InferenceResult run_secure_inference(Session& s, const Ring& ring, const NetworkGraph& g,
                                     const WeightStore& w, const FloatTensor& input);

} // namespace shadownet
