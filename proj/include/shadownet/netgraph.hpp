#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "shadownet/activation.hpp"
#include "shadownet/ring.hpp"

// Network description, plaintext reference evaluators (float and
// fixed-point; the fixed oracle mirrors ring semantics operation by
// operation and is what the secure path is tested against), weight
// container, architecture block templates and the rewrite passes.

namespace shadownet {

enum class LayerKind {
    Conv2d,
    DwConv2d,
    FullyConnected,
    Relu,
    Relu6,
    LeakyRelu,
    PartialActivation,
    MaxPool,
    AvgPool,
    GlobalAvgPool,
    ChannelSplit,
    Concat,
    ChannelShuffle,
    ResidualAdd,
    Flatten,
    BatchNorm,
};

std::string layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);
bool is_activation_kind(LayerKind k);

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::Relu;
    std::vector<std::string> inputs; // "input" refers to the graph input

    // kind-specific parameters; unused ones keep their defaults
    std::size_t kernel = 0;       // conv / pool window f
    std::size_t stride = 1;
    bool same_pad = true;         // conv2d/dwconv2d: "same" vs "valid"
    std::size_t channels = 0;     // conv2d / fullyconnected output width
    double ratio = 0.0;           // partial_activation
    ActivationKind inner = ActivationKind::None; // partial_activation
    std::vector<double> fractions; // channel_split part sizes, sums to 1
    std::size_t index = 0;         // channel_split: which part this node is
    std::size_t groups = 0;        // channel_shuffle

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkGraph {
    std::string name;
    std::string variant; // "original" / "crypto" / free-form
    std::string note;    // free-form caveats carried in the file
    std::vector<std::size_t> input_shape; // h, w, c
    std::vector<LayerSpec> layers;        // topologically ordered after parse

    bool operator==(const NetworkGraph&) const = default;
};

// Parses and validates; the error message lists every violation found.
NetworkGraph parse_graph(const std::string& text);
std::string serialize_graph(const NetworkGraph& g);

// Output shape of every layer (layer name -> shape), plus the graph input
// under the reserved name "input". Throws on channel/shape inconsistency.
std::map<std::string, std::vector<std::size_t>> infer_shapes(const NetworkGraph& g);

// The unique layer no other layer consumes.
const LayerSpec& output_layer(const NetworkGraph& g);

// ---------------------------------------------------------------------------
// Weights
// ---------------------------------------------------------------------------

// Flat store keyed "layer.param" (kernel, bias, gamma, beta, mean, var).
struct WeightStore {
    std::vector<std::pair<std::string, FloatTensor>> entries;

    bool has(const std::string& key) const;
    const FloatTensor& at(const std::string& key) const;
    void put(const std::string& key, FloatTensor t);

    bool operator==(const WeightStore&) const = default;
};

WeightStore load_weights(const std::string& path);
void save_weights(const WeightStore& store, const std::string& path);

// Deterministic per seed: uniform(-0.5, 0.5) for kernels and biases;
// batch-norm variances uniform(0.25, 1.25) to stay positive.
WeightStore gen_weights(const NetworkGraph& g, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reference evaluation
// ---------------------------------------------------------------------------

FloatTensor eval_float(const NetworkGraph& g, const WeightStore& w, const FloatTensor& input);

// Mirrors ring-core semantics exactly (encode, wrapping products, exact
// truncation). All secure-path equivalence tests compare against this.
RingTensor eval_fixed(const NetworkGraph& g, const WeightStore& w, const Ring& ring,
                      const FloatTensor& input);

// ---------------------------------------------------------------------------
// Architecture blocks
// ---------------------------------------------------------------------------

enum class BlockKind { Fire, ShuffleUnit, InvertedResidual };
enum class BlockVariant { Original, Crypto };
enum class BlockProfile { Cifar, Mnist };

// Channel templates for the three block families. Crypto variants bake in
// the crypto-oriented edits: fire (cifar) drops the squeeze activation
// and partially activates the expand stage, (mnist) the reverse with a
// smaller ratio; the shuffle unit partially activates its first branch
// activation and drops the branch-final ones; the inverted residual drops
// the expand activation, partially activates the depthwise one and swaps
// ReLU6 for ReLU.
struct BlockTemplate {
    BlockKind kind = BlockKind::Fire;
    BlockVariant variant = BlockVariant::Original;
    BlockProfile profile = BlockProfile::Cifar;
    std::string name; // layer-name prefix, e.g. "fire2"

    std::size_t in_channels = 0;
    std::size_t squeeze = 0;      // fire: squeeze width
    std::size_t expand = 0;       // fire: width of EACH expand branch
    std::size_t out_channels = 0; // shuffle unit / inverted residual
    std::size_t stride = 1;       // shuffle unit / inverted residual
    std::size_t expansion = 6;    // inverted residual t
    double pa_ratio = 0.0;        // 0 = profile default (0.5 cifar, 0.25 mnist)
};

// Returns the block as a fragment: a graph whose "input" is the block
// input and whose last layer is the block output.
NetworkGraph make_block(const BlockTemplate& t);

// ---------------------------------------------------------------------------
// Rewrite passes
// ---------------------------------------------------------------------------

enum class RewriteKind { PaReplace, RemoveActivation, Relu6ToRelu, MaxpoolToAvgpool };

// selector: "first" / "second" target the n-th activation stage of every
// block that has at least two (block = name prefix before '/'; a stage is
// an equal-depth group of activation layers); "all" targets every
// activation; anything else is a glob over layer names.
struct RewritePass {
    RewriteKind kind = RewriteKind::RemoveActivation;
    std::string selector = "all";
    double ratio = 0.5; // pa_replace only
};

RewritePass parse_rewrite_pass(const std::string& text); // "name(arg,...)"

struct RewriteResult {
    NetworkGraph graph;
    std::size_t matched = 0; // 0 = warning-level no-op
};

RewriteResult rewrite(const NetworkGraph& g, const RewritePass& pass);

// Folds inference-time batch normalization into the preceding conv.
// Float-mode outputs are preserved within 1e-6 relative.
std::pair<NetworkGraph, WeightStore> fold_batchnorm(const NetworkGraph& g,
                                                    const WeightStore& w);

} // namespace shadownet
