#include "shadownet/costmodel.hpp"

#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "shadownet/errors.hpp"

namespace shadownet {

namespace {

// Per-element bits of one interactive comparison-based activation.
double relu_bits_per_element(const CostParams& p) {
    return 8.0 * p.bits * p.log_p() + 24.0 * p.bits;
}

std::string phase_name(CostPhase ph) {
    switch (ph) {
        case CostPhase::Online: return "online";
        case CostPhase::Offline: return "offline";
        default: return "local";
    }
}

// Per-element bits and constant rounds of an activation kind.
struct ActPrice {
    std::uint64_t rounds = 0;
    double bits_per_element = 0;
};

ActPrice activation_price(ActivationKind k, const CostParams& p) {
    switch (k) {
        case ActivationKind::Relu:
        case ActivationKind::LeakyRelu: return {10, relu_bits_per_element(p)};
        case ActivationKind::Relu6: return {20, 2.0 * relu_bits_per_element(p)};
        case ActivationKind::None: return {0, 0.0};
    }
    throw AnalysisError("unknown activation kind");
}

LayerCost local_cost(std::string kind) {
    return {"", std::move(kind), 0, 0.0, CostPhase::Local, ""};
}

} // namespace

LayerCost conv_cost(std::size_t m, std::size_t f, std::size_t i, std::size_t o,
                    const CostParams& p) {
    if (m < 1 || f < 1 || i < 1 || o < 1)
        throw AnalysisError("conv cost needs all dimensions >= 1");
    const double m2 = static_cast<double>(m) * m;
    const double f2 = static_cast<double>(f) * f;
    const double bits = (2.0 * m2 * f2 * i + 2.0 * f2 * o * i + m2 * o) * p.bits;
    return {"", "conv2d", 2, bits, CostPhase::Online, ""};
}

LayerCost relu_cost(std::size_t n, const CostParams& p) {
    return {"", "relu", n > 0 ? 10ULL : 0ULL, n * relu_bits_per_element(p), CostPhase::Online,
            ""};
}

LayerCost drelu_cost(std::size_t n, const CostParams& p) {
    const double bits = n * (8.0 * p.bits * p.log_p() + 19.0 * p.bits);
    return {"", "drelu", n > 0 ? 8ULL : 0ULL, bits, CostPhase::Online, ""};
}

LayerCost relu6_cost(std::size_t n, const CostParams& p) {
    return {"", "relu6", n > 0 ? 20ULL : 0ULL, n * 2.0 * relu_bits_per_element(p),
            CostPhase::Online, ""};
}

LayerCost leaky_relu_cost(std::size_t n, const CostParams& p) {
    LayerCost c = relu_cost(n, p);
    c.kind = "leakyrelu";
    return c;
}

LayerCost maxpool_cost(std::size_t n_out, std::size_t f, const CostParams& p) {
    if (f < 1) throw AnalysisError("maxpool cost needs kernel >= 1");
    const double stages = static_cast<double>(f) * f - 1.0;
    const double bits = n_out * (8.0 * p.bits * p.log_p() + 29.0 * p.bits) * stages;
    const std::uint64_t rounds = (n_out > 0 && f > 1) ? 9 * (f * f - 1) : 0;
    return {"", "maxpool", rounds, bits, CostPhase::Online, ""};
}

LayerCost avgpool_cost() { return local_cost("avgpool"); }

LayerCost partial_activation_cost(std::size_t n, std::size_t channels, double ratio,
                                  ActivationKind inner, const CostParams& p) {
    if (channels < 1) throw AnalysisError("partial activation cost needs channels >= 1");
    const std::size_t k = active_channels(ratio, channels);
    const ActPrice inner_price = activation_price(inner, p);
    const double n_active = static_cast<double>(n) * k / channels;
    LayerCost c{"", "partial_activation", 0, n_active * inner_price.bits_per_element,
                CostPhase::Online, ""};
    if (k > 0 && n > 0) c.rounds = inner_price.rounds;
    if (c.bits == 0.0 && c.rounds == 0) c.phase = CostPhase::Local;
    return c;
}

void CostReport::append(LayerCost c) {
    total_rounds += c.rounds;
    total_bits += c.bits;
    layers.push_back(std::move(c));
}

CostReport network_cost(const NetworkGraph& g, const CostParams& p) {
    const auto shapes = infer_shapes(g);
    CostReport report;
    for (const LayerSpec& l : g.layers) {
        if (l.inputs.empty()) throw AnalysisError("layer '" + l.name + "' has no input");
        const auto& in_shape = shapes.at(l.inputs.front());
        const auto& out_shape = shapes.at(l.name);
        const std::size_t n_in = RingTensor::numel_of(in_shape);
        const std::size_t n_out = RingTensor::numel_of(out_shape);

        LayerCost c;
        switch (l.kind) {
            case LayerKind::Conv2d:
                c = conv_cost(out_shape[0], l.kernel, in_shape[2], l.channels, p);
                break;
            case LayerKind::DwConv2d: {
                // Per-channel groups priced as unit-width convs (i = o = 1).
                const LayerCost per = conv_cost(out_shape[0], l.kernel, 1, 1, p);
                c = per;
                c.kind = "dwconv2d";
                c.bits = per.bits * static_cast<double>(in_shape[2]);
                c.note = "per-group extrapolation";
                break;
            }
            case LayerKind::FullyConnected:
                c = conv_cost(1, 1, n_in, l.channels, p);
                c.kind = "fullyconnected";
                break;
            case LayerKind::Relu: c = relu_cost(n_in, p); break;
            case LayerKind::Relu6: c = relu6_cost(n_in, p); break;
            case LayerKind::LeakyRelu: c = leaky_relu_cost(n_in, p); break;
            case LayerKind::PartialActivation:
                c = partial_activation_cost(n_in, in_shape.back(), l.ratio, l.inner, p);
                break;
            case LayerKind::MaxPool: c = maxpool_cost(n_out, l.kernel, p); break;
            case LayerKind::AvgPool:
            case LayerKind::GlobalAvgPool:
                c = avgpool_cost();
                c.kind = layer_kind_name(l.kind);
                break;
            case LayerKind::ChannelSplit:
            case LayerKind::Concat:
            case LayerKind::ChannelShuffle:
            case LayerKind::ResidualAdd:
            case LayerKind::Flatten:
            case LayerKind::BatchNorm:
                c = local_cost(layer_kind_name(l.kind));
                break;
            default:
                throw AnalysisError("no price for layer '" + l.name + "' of kind " +
                                    layer_kind_name(l.kind));
        }
        c.name = l.name;
        report.append(std::move(c));
    }
    return report;
}

std::string CostReport::to_text() const {
    std::size_t name_w = 5;
    for (const auto& l : layers) name_w = std::max(name_w, l.name.size());
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(name_w + 2)) << "layer" << std::setw(20)
       << "kind" << std::setw(9) << "phase" << std::right << std::setw(8) << "rounds"
       << std::setw(18) << "bits" << std::setw(12) << "MB" << "\n";
    for (const auto& l : layers) {
        os << std::left << std::setw(static_cast<int>(name_w + 2)) << l.name << std::setw(20)
           << l.kind << std::setw(9) << phase_name(l.phase) << std::right << std::setw(8)
           << l.rounds << std::setw(18) << std::fixed << std::setprecision(1) << l.bits
           << std::setw(12) << std::setprecision(6) << l.mb();
        os.unsetf(std::ios_base::floatfield);
        if (!l.note.empty()) os << "  (" << l.note << ")";
        os << "\n";
    }
    os << std::left << std::setw(static_cast<int>(name_w + 2)) << "TOTAL" << std::setw(20) << ""
       << std::setw(9) << "" << std::right << std::setw(8) << total_rounds << std::setw(18)
       << std::fixed << std::setprecision(1) << total_bits << std::setw(12)
       << std::setprecision(6) << total_mb();
    os.unsetf(std::ios_base::floatfield);
    os << "\n";
    if (measured) {
        os << "measured: " << measured->rounds << " rounds, " << measured->bytes << " bytes ("
           << std::fixed << std::setprecision(6) << measured->bytes / kBytesPerMb << " MB)\n";
        os.unsetf(std::ios_base::floatfield);
    }
    return os.str();
}

std::string CostReport::to_json() const {
    nlohmann::json j;
    j["layers"] = nlohmann::json::array();
    for (const auto& l : layers) {
        nlohmann::json row{{"name", l.name},   {"kind", l.kind},   {"rounds", l.rounds},
                           {"bits", l.bits},   {"bytes", l.bytes()}, {"mb", l.mb()},
                           {"phase", phase_name(l.phase)}};
        if (!l.note.empty()) row["note"] = l.note;
        j["layers"].push_back(std::move(row));
    }
    j["totals"] = {{"rounds", total_rounds},
                   {"bits", total_bits},
                   {"bytes", total_bytes()},
                   {"mb", total_mb()}};
    if (measured)
        j["measured"] = {{"rounds", measured->rounds}, {"bytes", measured->bytes}};
    return j.dump(2);
}

} // namespace shadownet
