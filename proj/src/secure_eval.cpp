#include "shadownet/secure_eval.hpp"

#include <map>

#include "shadownet/errors.hpp"
#include "shadownet/tensor_ops.hpp"

namespace shadownet {

namespace {

const FloatTensor& weight_of(const WeightStore& w, const std::string& layer,
                             const std::string& param) {
    const std::string key = layer + "." + param;
    if (!w.has(key)) throw AnalysisError("layer '" + layer + "' is missing weights '" + key + "'");
    return w.at(key);
}

SharePair add_channel_bias(const Ring& ring, const SharePair& t, const SharePair& bias) {
    const std::size_t c = t.shape().back();
    if (bias.numel() != c) throw ShapeError("bias width does not match channels");
    const std::size_t rows = t.numel() / c;
    SharePair out = t;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < c; ++i) {
            out.h0.payload.data[r * c + i] =
                ring.add(out.h0.payload.data[r * c + i], bias.h0.payload.data[i]);
            out.h1.payload.data[r * c + i] =
                ring.add(out.h1.payload.data[r * c + i], bias.h1.payload.data[i]);
        }
    return out;
}

// Depthwise conv: one matmul job per channel, all batched into a single
// Beaver exchange so the layer still costs two rounds.
SharePair dwconv_shared(Session& s, const Ring& ring, const SharePair& x, const SharePair& k,
                        std::size_t stride, std::size_t pad) {
    const std::size_t f = k.shape()[0], c = x.shape()[2];
    if (k.shape().size() != 3 || k.shape()[2] != c)
        throw ShapeError("depthwise kernel does not match the input channels");
    std::vector<MulJob> jobs;
    for (std::size_t ch = 0; ch < c; ++ch) {
        SharePair xc = sp_map(x, [&](const RingTensor& t) { return slice_channels(t, ch, ch + 1); });
        SharePair kc = sp_map(k, [&](const RingTensor& t) {
            RingTensor col({f * f, 1});
            for (std::size_t i = 0; i < f * f; ++i) col.data[i] = t.data[i * c + ch];
            return col;
        });
        jobs.push_back({MulKind::MatMul, sp_map(xc, [&](const RingTensor& t) {
                            return im2col(t, f, stride, pad);
                        }),
                        kc});
    }
    std::vector<SharePair> prods = mul_batch(s, ring, jobs);
    const std::size_t oh = conv_out_dim(x.shape()[0], f, stride, pad);
    const std::size_t ow = conv_out_dim(x.shape()[1], f, stride, pad);
    std::vector<RingTensor> h0s, h1s;
    for (SharePair& p : prods) {
        h0s.push_back(reshape(p.h0.payload, {oh, ow, 1}));
        h1s.push_back(reshape(p.h1.payload, {oh, ow, 1}));
    }
    return {{0, concat_channels(h0s)}, {1, concat_channels(h1s)}};
}

SharePair gap_shared(const Ring& ring, const SharePair& x) {
    const std::size_t c = x.shape()[2], hw = x.shape()[0] * x.shape()[1];
    SharePair out = sp_map(x, [&](const RingTensor& t) {
        RingTensor acc({c});
        for (std::size_t r = 0; r < hw; ++r)
            for (std::size_t i = 0; i < c; ++i)
                acc.data[i] = ring.add(acc.data[i], t.data[r * c + i]);
        return acc;
    });
    out = sp_scale_public(ring, out, ring.encode(1.0 / static_cast<double>(hw)));
    return sp_trunc(ring, out);
}

std::pair<std::size_t, std::size_t> split_bounds(const LayerSpec& l, std::size_t c) {
    double acc = 0;
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i <= l.index; ++i) {
        lo = hi;
        acc += l.fractions[i];
        hi = static_cast<std::size_t>(std::llround(acc * static_cast<double>(c)));
    }
    if (hi <= lo || hi > c) throw ShapeError("layer '" + l.name + "': empty channel split");
    return {lo, hi};
}

} // namespace

InferenceResult run_secure_inference(Session& s, const Ring& ring, const NetworkGraph& g,
                                     const WeightStore& w, const FloatTensor& input) {
    if (input.shape != g.input_shape)
        throw ShapeError("input tensor does not match the graph input shape");

    RandomStream& dealer = s.input_rng();
    const auto share_tensor = [&](const FloatTensor& t) {
        return share(ring, ring.encode(t), dealer);
    };

    // secret-share all weights up front, in layer order
    std::map<std::string, SharePair> wshares;
    const auto shared_weight = [&](const std::string& layer, const std::string& param) {
        const std::string key = layer + "." + param;
        auto it = wshares.find(key);
        if (it == wshares.end())
            it = wshares.emplace(key, share_tensor(weight_of(w, layer, param))).first;
        return it->second;
    };

    std::map<std::string, SharePair> vals;
    vals.emplace("input", share_tensor(input));
    const auto arg = [&](const LayerSpec& l, std::size_t i = 0) -> const SharePair& {
        return vals.at(l.inputs[i]);
    };

    InferenceResult res;
    res.modeled = network_cost(g, CostParams::from_ring(ring.params()));

    std::uint64_t last_rounds = s.round_count();
    std::uint64_t last_bytes = s.transcript().measured_cost().bytes;

    for (const LayerSpec& l : g.layers) {
        SharePair out;
        switch (l.kind) {
            case LayerKind::Conv2d: {
                const std::size_t pad = l.same_pad ? same_padding(l.kernel) : 0;
                SharePair k = shared_weight(l.name, "kernel");
                out = sp_trunc(ring, pi_conv2d(s, ring, arg(l), k, l.stride, pad));
                out = add_channel_bias(ring, out, shared_weight(l.name, "bias"));
                break;
            }
            case LayerKind::DwConv2d: {
                const std::size_t pad = l.same_pad ? same_padding(l.kernel) : 0;
                out = dwconv_shared(s, ring, arg(l), shared_weight(l.name, "kernel"), l.stride,
                                    pad);
                out = add_channel_bias(ring, sp_trunc(ring, out),
                                       shared_weight(l.name, "bias"));
                break;
            }
            case LayerKind::FullyConnected: {
                SharePair row =
                    sp_map(arg(l), [&](const RingTensor& t) { return reshape(t, {1, t.numel()}); });
                out = pi_matmul(s, ring, row, shared_weight(l.name, "kernel"));
                out = sp_map(out, [&](const RingTensor& t) { return reshape(t, {l.channels}); });
                out = add_channel_bias(ring, sp_trunc(ring, out),
                                       shared_weight(l.name, "bias"));
                break;
            }
            case LayerKind::Relu: out = pi_relu(s, ring, arg(l)); break;
            case LayerKind::Relu6: out = pi_relu6(s, ring, arg(l)); break;
            case LayerKind::LeakyRelu: out = pi_leaky_relu(s, ring, arg(l)); break;
            case LayerKind::PartialActivation:
                out = pi_partial_activation(s, ring, arg(l), {l.ratio, l.inner});
                break;
            case LayerKind::MaxPool: out = pi_maxpool(s, ring, arg(l), l.kernel, l.stride); break;
            case LayerKind::AvgPool: out = avgpool(ring, arg(l), l.kernel, l.stride); break;
            case LayerKind::GlobalAvgPool: out = gap_shared(ring, arg(l)); break;
            case LayerKind::ChannelSplit: {
                auto [lo, hi] = split_bounds(l, arg(l).shape().back());
                out = sp_map(arg(l),
                             [&](const RingTensor& t) { return slice_channels(t, lo, hi); });
                break;
            }
            case LayerKind::Concat: {
                std::vector<RingTensor> h0s, h1s;
                for (std::size_t i = 0; i < l.inputs.size(); ++i) {
                    h0s.push_back(arg(l, i).h0.payload);
                    h1s.push_back(arg(l, i).h1.payload);
                }
                out = {{0, concat_channels(h0s)}, {1, concat_channels(h1s)}};
                break;
            }
            case LayerKind::ChannelShuffle:
                out = sp_map(arg(l),
                             [&](const RingTensor& t) { return channel_shuffle(t, l.groups); });
                break;
            case LayerKind::ResidualAdd: out = sp_add(ring, arg(l, 0), arg(l, 1)); break;
            case LayerKind::Flatten:
                out = sp_map(arg(l), [](const RingTensor& t) { return flatten(t); });
                break;
            case LayerKind::BatchNorm:
                throw AnalysisError("fold batch normalization before secure evaluation "
                                    "(layer '" +
                                    l.name + "')");
        }
        vals.emplace(l.name, std::move(out));

        const std::uint64_t rounds_now = s.round_count();
        const std::uint64_t bytes_now = s.transcript().measured_cost().bytes;
        res.measured_layers.push_back(
            {l.name, rounds_now - last_rounds, bytes_now - last_bytes});
        last_rounds = rounds_now;
        last_bytes = bytes_now;
    }

    const SharePair& out = vals.at(output_layer(g).name);
    res.output_ring = reconstruct(ring, out.h0, out.h1);
    res.output = ring.decode(res.output_ring);
    res.measured = s.transcript().measured_cost();
    res.modeled.measured = res.measured;
    return res;
}

} // namespace shadownet
