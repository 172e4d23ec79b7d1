#include "shadownet/netgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shadownet/errors.hpp"
#include "shadownet/prg.hpp"
#include "shadownet/tensor_ops.hpp"

namespace shadownet {

using nlohmann::json;

std::string layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::DwConv2d: return "dwconv2d";
        case LayerKind::FullyConnected: return "fullyconnected";
        case LayerKind::Relu: return "relu";
        case LayerKind::Relu6: return "relu6";
        case LayerKind::LeakyRelu: return "leakyrelu";
        case LayerKind::PartialActivation: return "partial_activation";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::GlobalAvgPool: return "globalavgpool";
        case LayerKind::ChannelSplit: return "channel_split";
        case LayerKind::Concat: return "concat";
        case LayerKind::ChannelShuffle: return "channel_shuffle";
        case LayerKind::ResidualAdd: return "residual_add";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::BatchNorm: return "batchnorm";
    }
    throw ParseError("unknown layer kind value");
}

LayerKind layer_kind_from_name(const std::string& name) {
    static const std::map<std::string, LayerKind> table = {
        {"conv2d", LayerKind::Conv2d},
        {"dwconv2d", LayerKind::DwConv2d},
        {"fullyconnected", LayerKind::FullyConnected},
        {"relu", LayerKind::Relu},
        {"relu6", LayerKind::Relu6},
        {"leakyrelu", LayerKind::LeakyRelu},
        {"partial_activation", LayerKind::PartialActivation},
        {"maxpool", LayerKind::MaxPool},
        {"avgpool", LayerKind::AvgPool},
        {"globalavgpool", LayerKind::GlobalAvgPool},
        {"channel_split", LayerKind::ChannelSplit},
        {"concat", LayerKind::Concat},
        {"channel_shuffle", LayerKind::ChannelShuffle},
        {"residual_add", LayerKind::ResidualAdd},
        {"flatten", LayerKind::Flatten},
        {"batchnorm", LayerKind::BatchNorm},
    };
    auto it = table.find(name);
    if (it == table.end()) throw ParseError("unknown layer kind '" + name + "'");
    return it->second;
}

bool is_activation_kind(LayerKind k) {
    return k == LayerKind::Relu || k == LayerKind::Relu6 || k == LayerKind::LeakyRelu ||
           k == LayerKind::PartialActivation;
}

namespace {

std::string activation_name(ActivationKind k) {
    switch (k) {
        case ActivationKind::None: return "none";
        case ActivationKind::Relu: return "relu";
        case ActivationKind::Relu6: return "relu6";
        case ActivationKind::LeakyRelu: return "leakyrelu";
    }
    throw ParseError("unknown activation kind value");
}

ActivationKind activation_from_name(const std::string& name) {
    if (name == "none") return ActivationKind::None;
    if (name == "relu") return ActivationKind::Relu;
    if (name == "relu6") return ActivationKind::Relu6;
    if (name == "leakyrelu") return ActivationKind::LeakyRelu;
    throw ParseError("unknown activation kind '" + name + "'");
}

bool needs_kernel(LayerKind k) {
    return k == LayerKind::Conv2d || k == LayerKind::DwConv2d || k == LayerKind::MaxPool ||
           k == LayerKind::AvgPool;
}

// Iterative glob over '*' and '?'.
bool glob_match(const std::string& pat, const std::string& s) {
    std::size_t p = 0, i = 0, star = std::string::npos, mark = 0;
    while (i < s.size()) {
        if (p < pat.size() && (pat[p] == '?' || pat[p] == s[i])) {
            ++p;
            ++i;
        } else if (p < pat.size() && pat[p] == '*') {
            star = p++;
            mark = i;
        } else if (star != std::string::npos) {
            p = star + 1;
            i = ++mark;
        } else {
            return false;
        }
    }
    while (p < pat.size() && pat[p] == '*') ++p;
    return p == pat.size();
}

// ---------------------------------------------------------------------------
// Parse / serialize
// ---------------------------------------------------------------------------

// Kahn's algorithm keeping the original order stable; on a cycle, walks the
// unplaced region to report one concrete back edge.
std::vector<LayerSpec> toposort(std::vector<LayerSpec> layers,
                                std::vector<std::string>& violations) {
    std::set<std::string> placed{"input"};
    std::vector<LayerSpec> out;
    std::vector<bool> done(layers.size(), false);
    bool progress = true;
    while (out.size() < layers.size() && progress) {
        progress = false;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (done[i]) continue;
            const bool ready = std::all_of(layers[i].inputs.begin(), layers[i].inputs.end(),
                                           [&](const std::string& in) {
                                               return placed.count(in) > 0;
                                           });
            if (!ready) continue;
            placed.insert(layers[i].name);
            out.push_back(layers[i]);
            done[i] = true;
            progress = true;
        }
    }
    if (out.size() < layers.size()) {
        // Every remaining layer depends on another remaining layer; follow
        // those dependencies until one repeats.
        std::map<std::string, const LayerSpec*> remaining;
        for (std::size_t i = 0; i < layers.size(); ++i)
            if (!done[i]) remaining[layers[i].name] = &layers[i];
        const LayerSpec* cur = remaining.begin()->second;
        std::set<std::string> seen;
        std::string edge;
        while (seen.insert(cur->name).second) {
            for (const auto& in : cur->inputs) {
                auto it = remaining.find(in);
                if (it != remaining.end()) {
                    edge = "'" + cur->name + "' -> '" + in + "'";
                    cur = it->second;
                    break;
                }
            }
        }
        violations.push_back("cycle through edge " + edge);
        return layers;
    }
    return out;
}

json params_to_json(const LayerSpec& l) {
    json p = json::object();
    switch (l.kind) {
        case LayerKind::Conv2d:
            p["kernel"] = l.kernel;
            p["stride"] = l.stride;
            p["padding"] = l.same_pad ? "same" : "valid";
            p["channels"] = l.channels;
            break;
        case LayerKind::DwConv2d:
            p["kernel"] = l.kernel;
            p["stride"] = l.stride;
            p["padding"] = l.same_pad ? "same" : "valid";
            break;
        case LayerKind::FullyConnected: p["channels"] = l.channels; break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool:
            p["kernel"] = l.kernel;
            p["stride"] = l.stride;
            break;
        case LayerKind::PartialActivation:
            p["ratio"] = l.ratio;
            p["inner"] = activation_name(l.inner);
            break;
        case LayerKind::ChannelSplit:
            p["fractions"] = l.fractions;
            p["index"] = l.index;
            break;
        case LayerKind::ChannelShuffle: p["groups"] = l.groups; break;
        default: break;
    }
    return p;
}

void parse_params(const json& p, LayerSpec& l, std::vector<std::string>& violations) {
    const std::string where = "layer '" + l.name + "': ";
    std::set<std::string> allowed;
    switch (l.kind) {
        case LayerKind::Conv2d: allowed = {"kernel", "stride", "padding", "channels"}; break;
        case LayerKind::DwConv2d: allowed = {"kernel", "stride", "padding"}; break;
        case LayerKind::FullyConnected: allowed = {"channels"}; break;
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: allowed = {"kernel", "stride"}; break;
        case LayerKind::PartialActivation: allowed = {"ratio", "inner"}; break;
        case LayerKind::ChannelSplit: allowed = {"fractions", "index"}; break;
        case LayerKind::ChannelShuffle: allowed = {"groups"}; break;
        default: break;
    }
    for (auto it = p.begin(); it != p.end(); ++it)
        if (!allowed.count(it.key()))
            violations.push_back(where + "unknown param '" + it.key() + "'");

    try {
        if (p.contains("kernel")) l.kernel = p.at("kernel").get<std::size_t>();
        if (p.contains("stride")) l.stride = p.at("stride").get<std::size_t>();
        else if (l.kind == LayerKind::MaxPool || l.kind == LayerKind::AvgPool)
            l.stride = l.kernel; // pooling defaults to non-overlapping windows
        if (p.contains("padding")) {
            const std::string pad = p.at("padding").get<std::string>();
            if (pad != "same" && pad != "valid")
                violations.push_back(where + "padding must be 'same' or 'valid'");
            l.same_pad = pad != "valid";
        }
        if (p.contains("channels")) l.channels = p.at("channels").get<std::size_t>();
        if (p.contains("ratio")) l.ratio = p.at("ratio").get<double>();
        if (p.contains("inner")) l.inner = activation_from_name(p.at("inner").get<std::string>());
        if (p.contains("fractions")) l.fractions = p.at("fractions").get<std::vector<double>>();
        if (p.contains("index")) l.index = p.at("index").get<std::size_t>();
        if (p.contains("groups")) l.groups = p.at("groups").get<std::size_t>();
    } catch (const json::exception& e) {
        violations.push_back(where + "bad param value: " + e.what());
        return;
    }

    if (needs_kernel(l.kind) && l.kernel < 1)
        violations.push_back(where + "kernel must be >= 1");
    if (l.stride < 1) violations.push_back(where + "stride must be >= 1");
    if ((l.kind == LayerKind::Conv2d || l.kind == LayerKind::FullyConnected) && l.channels < 1)
        violations.push_back(where + "channels must be >= 1");
    if (l.kind == LayerKind::PartialActivation && !(l.ratio >= 0.0 && l.ratio <= 1.0))
        violations.push_back(where + "ratio must lie in [0, 1]");
    if (l.kind == LayerKind::ChannelSplit) {
        double sum = 0;
        for (double f : l.fractions) {
            if (f <= 0) violations.push_back(where + "fractions must be positive");
            sum += f;
        }
        if (l.fractions.empty() || std::abs(sum - 1.0) > 1e-9)
            violations.push_back(where + "fractions must sum to 1");
        else if (l.index >= l.fractions.size())
            violations.push_back(where + "index outside fractions");
    }
    if (l.kind == LayerKind::ChannelShuffle && l.groups < 1)
        violations.push_back(where + "groups must be >= 1");
}

std::size_t expected_inputs(LayerKind k) {
    // 0 means "two or more"
    if (k == LayerKind::Concat) return 0;
    if (k == LayerKind::ResidualAdd) return 2;
    return 1;
}

} // namespace

NetworkGraph parse_graph(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }

    std::vector<std::string> violations;
    NetworkGraph g;
    try {
        g.name = doc.value("name", "");
        g.variant = doc.value("variant", "");
        g.note = doc.value("note", "");
        if (!doc.contains("input_shape"))
            violations.push_back("missing input_shape");
        else
            g.input_shape = doc.at("input_shape").get<std::vector<std::size_t>>();
        if (!doc.contains("layers") || !doc.at("layers").is_array())
            violations.push_back("missing layers array");
    } catch (const json::exception& e) {
        throw ParseError(std::string("malformed document: ") + e.what());
    }
    if (g.input_shape.empty() ||
        std::any_of(g.input_shape.begin(), g.input_shape.end(),
                    [](std::size_t d) { return d == 0; }))
        violations.push_back("input_shape must be nonempty positive dims");

    std::set<std::string> names;
    if (doc.contains("layers") && doc.at("layers").is_array()) {
        for (const json& jl : doc.at("layers")) {
            LayerSpec l;
            try {
                l.name = jl.value("name", "");
                if (l.name.empty()) {
                    violations.push_back("layer without a name");
                    continue;
                }
                if (l.name == "input")
                    violations.push_back("layer name 'input' is reserved");
                if (!names.insert(l.name).second)
                    violations.push_back("duplicate layer name '" + l.name + "'");
                if (!jl.contains("kind")) {
                    violations.push_back("layer '" + l.name + "' has no kind");
                    continue;
                }
                l.kind = layer_kind_from_name(jl.at("kind").get<std::string>());
                if (jl.contains("inputs"))
                    l.inputs = jl.at("inputs").get<std::vector<std::string>>();
                parse_params(jl.value("params", json::object()), l, violations);
            } catch (const ParseError& e) {
                violations.push_back(e.what());
                continue;
            } catch (const json::exception& e) {
                violations.push_back("layer '" + l.name + "': " + e.what());
                continue;
            }
            g.layers.push_back(std::move(l));
        }
    }

    // reference and arity checks
    for (const LayerSpec& l : g.layers) {
        const std::size_t want = expected_inputs(l.kind);
        if (want == 0 && l.inputs.size() < 2)
            violations.push_back("layer '" + l.name + "' needs at least two inputs");
        if (want > 0 && l.inputs.size() != want)
            violations.push_back("layer '" + l.name + "' needs exactly " +
                                 std::to_string(want) + " input(s)");
        for (const std::string& in : l.inputs)
            if (in != "input" && !names.count(in))
                violations.push_back("layer '" + l.name + "' references unknown input '" + in +
                                     "'");
    }

    if (violations.empty()) {
        g.layers = toposort(std::move(g.layers), violations);

        // single sink
        std::set<std::string> consumed;
        for (const LayerSpec& l : g.layers)
            for (const std::string& in : l.inputs) consumed.insert(in);
        std::size_t sinks = 0;
        for (const LayerSpec& l : g.layers)
            if (!consumed.count(l.name)) ++sinks;
        if (!g.layers.empty() && sinks != 1)
            violations.push_back("graph must have exactly one output layer, found " +
                                 std::to_string(sinks));

        if (violations.empty()) {
            try {
                infer_shapes(g); // channel arithmetic
            } catch (const Error& e) {
                violations.push_back(e.what());
            }
        }
    }

    if (!violations.empty()) {
        std::string msg = "graph validation failed:";
        for (const std::string& v : violations) msg += "\n  - " + v;
        throw ParseError(msg);
    }
    return g;
}

std::string serialize_graph(const NetworkGraph& g) {
    json doc;
    doc["name"] = g.name;
    if (!g.variant.empty()) doc["variant"] = g.variant;
    if (!g.note.empty()) doc["note"] = g.note;
    doc["input_shape"] = g.input_shape;
    doc["layers"] = json::array();
    for (const LayerSpec& l : g.layers) {
        json jl{{"name", l.name}, {"kind", layer_kind_name(l.kind)}, {"inputs", l.inputs}};
        json p = params_to_json(l);
        if (!p.empty()) jl["params"] = std::move(p);
        doc["layers"].push_back(std::move(jl));
    }
    return doc.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Shapes
// ---------------------------------------------------------------------------

namespace {

// Channel boundaries of a split: cumulative fractions rounded to channels.
std::pair<std::size_t, std::size_t> split_bounds(const LayerSpec& l, std::size_t c) {
    double acc = 0;
    std::size_t lo = 0, hi = 0;
    for (std::size_t i = 0; i <= l.index; ++i) {
        lo = hi;
        acc += l.fractions[i];
        hi = static_cast<std::size_t>(std::llround(acc * static_cast<double>(c)));
    }
    if (hi <= lo || hi > c)
        throw ShapeError("layer '" + l.name + "': channel split part " +
                         std::to_string(l.index) + " is empty");
    return {lo, hi};
}

} // namespace

std::map<std::string, std::vector<std::size_t>> infer_shapes(const NetworkGraph& g) {
    std::map<std::string, std::vector<std::size_t>> shapes;
    shapes["input"] = g.input_shape;
    for (const LayerSpec& l : g.layers) {
        const std::string where = "layer '" + l.name + "': ";
        std::vector<std::vector<std::size_t>> in;
        for (const std::string& name : l.inputs) {
            auto it = shapes.find(name);
            if (it == shapes.end())
                throw ShapeError(where + "input '" + name + "' not yet defined");
            in.push_back(it->second);
        }
        const auto spatial = [&](const std::vector<std::size_t>& s) {
            if (s.size() != 3) throw ShapeError(where + "needs an h x w x c input");
        };
        std::vector<std::size_t> out;
        switch (l.kind) {
            case LayerKind::Conv2d:
            case LayerKind::DwConv2d: {
                spatial(in[0]);
                const std::size_t pad = l.same_pad ? same_padding(l.kernel) : 0;
                const std::size_t oh = conv_out_dim(in[0][0], l.kernel, l.stride, pad);
                const std::size_t ow = conv_out_dim(in[0][1], l.kernel, l.stride, pad);
                out = {oh, ow, l.kind == LayerKind::Conv2d ? l.channels : in[0][2]};
                break;
            }
            case LayerKind::FullyConnected:
                if (in[0].size() != 1)
                    throw ShapeError(where + "needs a flattened rank-1 input");
                out = {l.channels};
                break;
            case LayerKind::Relu:
            case LayerKind::Relu6:
            case LayerKind::LeakyRelu:
            case LayerKind::BatchNorm: out = in[0]; break;
            case LayerKind::PartialActivation:
                if (in[0].empty() || in[0].back() < 1)
                    throw ShapeError(where + "needs at least one channel");
                out = in[0];
                break;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool: {
                spatial(in[0]);
                const std::size_t h = in[0][0], w = in[0][1];
                if (h < l.kernel || w < l.kernel || (h - l.kernel) % l.stride != 0 ||
                    (w - l.kernel) % l.stride != 0)
                    throw ShapeError(where + "pooling window does not tile the input");
                out = {(h - l.kernel) / l.stride + 1, (w - l.kernel) / l.stride + 1, in[0][2]};
                break;
            }
            case LayerKind::GlobalAvgPool:
                spatial(in[0]);
                out = {in[0][2]};
                break;
            case LayerKind::ChannelSplit: {
                if (in[0].empty()) throw ShapeError(where + "needs channels");
                auto [lo, hi] = split_bounds(l, in[0].back());
                out = in[0];
                out.back() = hi - lo;
                break;
            }
            case LayerKind::Concat: {
                out = in[0];
                std::size_t c = 0;
                for (const auto& s : in) {
                    if (s.size() != out.size() ||
                        !std::equal(s.begin(), s.end() - 1, out.begin()))
                        throw ShapeError(where + "concat inputs disagree on leading dims");
                    c += s.back();
                }
                out.back() = c;
                break;
            }
            case LayerKind::ChannelShuffle:
                if (in[0].empty() || in[0].back() % l.groups != 0)
                    throw ShapeError(where + "channels not divisible by shuffle groups");
                out = in[0];
                break;
            case LayerKind::ResidualAdd:
                if (in[0] != in[1])
                    throw ShapeError(where + "residual inputs have different shapes");
                out = in[0];
                break;
            case LayerKind::Flatten:
                out = {RingTensor::numel_of(in[0])};
                break;
        }
        shapes[l.name] = std::move(out);
    }
    return shapes;
}

const LayerSpec& output_layer(const NetworkGraph& g) {
    if (g.layers.empty()) throw AnalysisError("empty graph has no output layer");
    std::set<std::string> consumed;
    for (const LayerSpec& l : g.layers)
        for (const std::string& in : l.inputs) consumed.insert(in);
    const LayerSpec* out = nullptr;
    for (const LayerSpec& l : g.layers) {
        if (consumed.count(l.name)) continue;
        if (out) throw AnalysisError("graph has more than one output layer");
        out = &l;
    }
    if (!out) throw AnalysisError("graph has no output layer");
    return *out;
}

// ---------------------------------------------------------------------------
// Weight container
// ---------------------------------------------------------------------------

bool WeightStore::has(const std::string& key) const {
    return std::any_of(entries.begin(), entries.end(),
                       [&](const auto& e) { return e.first == key; });
}

const FloatTensor& WeightStore::at(const std::string& key) const {
    for (const auto& e : entries)
        if (e.first == key) return e.second;
    throw AnalysisError("weight store has no entry '" + key + "'");
}

void WeightStore::put(const std::string& key, FloatTensor t) {
    for (auto& e : entries)
        if (e.first == key) {
            e.second = std::move(t);
            return;
        }
    entries.emplace_back(key, std::move(t));
}

namespace {

constexpr char kWeightMagic[4] = {'S', 'N', 'W', '1'};

template <class T>
void write_le(std::ostream& os, T v) {
    for (std::size_t b = 0; b < sizeof(T); ++b)
        os.put(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * b)) & 0xff));
}

template <class T>
T read_le(std::istream& is) {
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < sizeof(T); ++b) {
        const int c = is.get();
        if (c < 0) throw FormatError("weight container truncated");
        v |= static_cast<std::uint64_t>(c) << (8 * b);
    }
    return static_cast<T>(v);
}

} // namespace

void save_weights(const WeightStore& store, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open '" + path + "' for writing");
    os.write(kWeightMagic, 4);
    for (const auto& [name, tensor] : store.entries) {
        if (name.size() > 0xffff) throw FormatError("entry name too long");
        write_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        os.put(0); // dtype f32
        os.put(static_cast<char>(tensor.shape.size()));
        for (std::size_t d : tensor.shape) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
        for (double v : tensor.data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, 4);
            write_le<std::uint32_t>(os, bits);
        }
    }
    if (!os) throw FormatError("write failed on '" + path + "'");
}

WeightStore load_weights(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path + "'");
    char magic[4];
    is.read(magic, 4);
    if (is.gcount() != 4 || std::memcmp(magic, kWeightMagic, 4) != 0)
        throw FormatError("'" + path + "' is not a weight container (bad magic)");
    WeightStore store;
    while (true) {
        const int peek = is.peek();
        if (peek == std::char_traits<char>::eof()) break;
        const auto name_len = read_le<std::uint16_t>(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        if (is.gcount() != name_len) throw FormatError("weight container truncated");
        const auto dtype = read_le<std::uint8_t>(is);
        if (dtype != 0) throw FormatError("unsupported dtype " + std::to_string(dtype));
        const auto rank = read_le<std::uint8_t>(is);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = read_le<std::uint32_t>(is);
        FloatTensor t(shape);
        for (auto& v : t.data) {
            const std::uint32_t bits = read_le<std::uint32_t>(is);
            float f;
            std::memcpy(&f, &bits, 4);
            v = f;
        }
        if (store.has(name)) throw FormatError("duplicate entry '" + name + "'");
        store.put(name, std::move(t));
    }
    return store;
}

namespace {

// f32-quantized uniform(-0.5, 0.5) so containers round-trip bit-exactly.
FloatTensor random_weights(RandomStream& rng, const std::vector<std::size_t>& shape,
                           double offset = 0.0) {
    FloatTensor t(shape);
    for (auto& v : t.data)
        v = static_cast<double>(static_cast<float>(rng.next_centered_unit() + offset));
    return t;
}

} // namespace

WeightStore gen_weights(const NetworkGraph& g, std::uint64_t seed) {
    const auto shapes = infer_shapes(g);
    RandomStream rng(derive_seed(seed_from_u64(seed), "weights"));
    WeightStore store;
    for (const LayerSpec& l : g.layers) {
        const auto& in = shapes.at(l.inputs.front());
        switch (l.kind) {
            case LayerKind::Conv2d:
                store.put(l.name + ".kernel",
                          random_weights(rng, {l.kernel, l.kernel, in[2], l.channels}));
                store.put(l.name + ".bias", random_weights(rng, {l.channels}));
                break;
            case LayerKind::DwConv2d:
                store.put(l.name + ".kernel", random_weights(rng, {l.kernel, l.kernel, in[2]}));
                store.put(l.name + ".bias", random_weights(rng, {in[2]}));
                break;
            case LayerKind::FullyConnected:
                store.put(l.name + ".kernel", random_weights(rng, {in[0], l.channels}));
                store.put(l.name + ".bias", random_weights(rng, {l.channels}));
                break;
            case LayerKind::BatchNorm: {
                const std::size_t c = in.back();
                store.put(l.name + ".gamma", random_weights(rng, {c}));
                store.put(l.name + ".beta", random_weights(rng, {c}));
                store.put(l.name + ".mean", random_weights(rng, {c}));
                store.put(l.name + ".var", random_weights(rng, {c}, 0.75)); // (0.25, 1.25)
                break;
            }
            default: break;
        }
    }
    return store;
}

// ---------------------------------------------------------------------------
// Reference evaluators
// ---------------------------------------------------------------------------

namespace {

const FloatTensor& weight(const WeightStore& w, const std::string& layer,
                          const std::string& param) {
    const std::string key = layer + "." + param;
    if (!w.has(key)) throw AnalysisError("layer '" + layer + "' is missing weights '" + key + "'");
    return w.at(key);
}

FloatTensor add_channel_bias(FloatTensor t, const FloatTensor& bias) {
    const std::size_t c = t.shape.back();
    if (bias.numel() != c) throw ShapeError("bias width does not match channels");
    const std::size_t rows = t.numel() / c;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < c; ++i) t.data[r * c + i] += bias.data[i];
    return t;
}

RingTensor add_channel_bias(const Ring& ring, RingTensor t, const RingTensor& bias) {
    const std::size_t c = t.shape.back();
    if (bias.numel() != c) throw ShapeError("bias width does not match channels");
    const std::size_t rows = t.numel() / c;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = 0; i < c; ++i)
            t.data[r * c + i] = ring.add(t.data[r * c + i], bias.data[i]);
    return t;
}

// Depthwise conv as one per-channel im2col product per channel.
template <class T, class MatMul>
TensorT<T> dwconv(const TensorT<T>& x, const TensorT<T>& k, std::size_t stride,
                  std::size_t pad, MatMul&& mm) {
    const std::size_t c = x.shape[2], f = k.shape[0];
    std::vector<TensorT<T>> outs;
    for (std::size_t ch = 0; ch < c; ++ch) {
        TensorT<T> xc = slice_channels(x, ch, ch + 1);
        TensorT<T> kc({f * f, 1});
        for (std::size_t i = 0; i < f * f; ++i) kc.data[i] = k.data[i * c + ch];
        TensorT<T> prod = mm(im2col(xc, f, stride, pad), kc);
        const std::size_t oh = conv_out_dim(x.shape[0], f, stride, pad);
        const std::size_t ow = conv_out_dim(x.shape[1], f, stride, pad);
        outs.push_back(reshape(prod, {oh, ow, 1}));
    }
    return concat_channels(outs);
}

} // namespace

FloatTensor eval_float(const NetworkGraph& g, const WeightStore& w, const FloatTensor& input) {
    if (input.shape != g.input_shape)
        throw ShapeError("input tensor does not match the graph input shape");
    std::map<std::string, FloatTensor> vals;
    vals["input"] = input;
    const auto arg = [&](const LayerSpec& l, std::size_t i = 0) -> const FloatTensor& {
        return vals.at(l.inputs[i]);
    };
    const auto mm = [](const FloatTensor& a, const FloatTensor& b) { return matmul(a, b); };

    for (const LayerSpec& l : g.layers) {
        FloatTensor out;
        switch (l.kind) {
            case LayerKind::Conv2d: {
                const FloatTensor& k = weight(w, l.name, "kernel");
                const std::size_t pad = l.same_pad ? same_padding(l.kernel) : 0;
                const std::size_t f = l.kernel, c = arg(l).shape[2];
                FloatTensor prod = matmul(im2col(arg(l), f, l.stride, pad),
                                          reshape(k, {f * f * c, l.channels}));
                const std::size_t oh = conv_out_dim(arg(l).shape[0], f, l.stride, pad);
                const std::size_t ow = conv_out_dim(arg(l).shape[1], f, l.stride, pad);
                out = add_channel_bias(reshape(prod, {oh, ow, l.channels}),
                                       weight(w, l.name, "bias"));
                break;
            }
            case LayerKind::DwConv2d:
                out = add_channel_bias(
                    dwconv(arg(l), weight(w, l.name, "kernel"), l.stride,
                           l.same_pad ? same_padding(l.kernel) : 0, mm),
                    weight(w, l.name, "bias"));
                break;
            case LayerKind::FullyConnected: {
                FloatTensor prod = matmul(reshape(arg(l), {1, arg(l).numel()}),
                                          weight(w, l.name, "kernel"));
                out = add_channel_bias(reshape(prod, {l.channels}), weight(w, l.name, "bias"));
                break;
            }
            case LayerKind::Relu:
                out = arg(l);
                for (auto& v : out.data) v = std::max(0.0, v);
                break;
            case LayerKind::Relu6:
                out = arg(l);
                for (auto& v : out.data) v = std::min(std::max(0.0, v), 6.0);
                break;
            case LayerKind::LeakyRelu:
                out = arg(l);
                for (auto& v : out.data) v = std::max(kLeakySlope * v, v);
                break;
            case LayerKind::PartialActivation: {
                out = arg(l);
                const std::size_t c = out.shape.back();
                const std::size_t k = active_channels(l.ratio, c);
                const std::size_t rows = out.numel() / c;
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < k; ++i) {
                        double& v = out.data[r * c + i];
                        switch (l.inner) {
                            case ActivationKind::Relu: v = std::max(0.0, v); break;
                            case ActivationKind::Relu6:
                                v = std::min(std::max(0.0, v), 6.0);
                                break;
                            case ActivationKind::LeakyRelu:
                                v = std::max(kLeakySlope * v, v);
                                break;
                            case ActivationKind::None: break;
                        }
                    }
                break;
            }
            case LayerKind::MaxPool: {
                out = pool_window_element(arg(l), l.kernel, l.stride, 0);
                for (std::size_t t = 1; t < l.kernel * l.kernel; ++t) {
                    FloatTensor e = pool_window_element(arg(l), l.kernel, l.stride, t);
                    for (std::size_t i = 0; i < out.numel(); ++i)
                        out.data[i] = std::max(out.data[i], e.data[i]);
                }
                break;
            }
            case LayerKind::AvgPool: {
                out = pool_window_element(arg(l), l.kernel, l.stride, 0);
                for (std::size_t t = 1; t < l.kernel * l.kernel; ++t) {
                    FloatTensor e = pool_window_element(arg(l), l.kernel, l.stride, t);
                    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += e.data[i];
                }
                const double inv = 1.0 / static_cast<double>(l.kernel * l.kernel);
                for (auto& v : out.data) v *= inv;
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const FloatTensor& x = arg(l);
                const std::size_t c = x.shape[2], hw = x.shape[0] * x.shape[1];
                out = FloatTensor({c});
                for (std::size_t r = 0; r < hw; ++r)
                    for (std::size_t i = 0; i < c; ++i) out.data[i] += x.data[r * c + i];
                for (auto& v : out.data) v /= static_cast<double>(hw);
                break;
            }
            case LayerKind::ChannelSplit: {
                auto [lo, hi] = split_bounds(l, arg(l).shape.back());
                out = slice_channels(arg(l), lo, hi);
                break;
            }
            case LayerKind::Concat: {
                std::vector<FloatTensor> parts;
                for (std::size_t i = 0; i < l.inputs.size(); ++i) parts.push_back(arg(l, i));
                out = concat_channels(parts);
                break;
            }
            case LayerKind::ChannelShuffle: out = channel_shuffle(arg(l), l.groups); break;
            case LayerKind::ResidualAdd: {
                out = arg(l, 0);
                const FloatTensor& b = arg(l, 1);
                for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b.data[i];
                break;
            }
            case LayerKind::Flatten: out = flatten(arg(l)); break;
            case LayerKind::BatchNorm: {
                const FloatTensor& gma = weight(w, l.name, "gamma");
                const FloatTensor& beta = weight(w, l.name, "beta");
                const FloatTensor& mean = weight(w, l.name, "mean");
                const FloatTensor& var = weight(w, l.name, "var");
                out = arg(l);
                const std::size_t c = out.shape.back();
                const std::size_t rows = out.numel() / c;
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < c; ++i) {
                        double& v = out.data[r * c + i];
                        v = gma.data[i] * (v - mean.data[i]) /
                                std::sqrt(var.data[i] + 1e-5) +
                            beta.data[i];
                    }
                break;
            }
        }
        vals[l.name] = std::move(out);
    }
    return vals.at(output_layer(g).name);
}

RingTensor eval_fixed(const NetworkGraph& g, const WeightStore& w, const Ring& ring,
                      const FloatTensor& input) {
    if (input.shape != g.input_shape)
        throw ShapeError("input tensor does not match the graph input shape");
    std::map<std::string, RingTensor> vals;
    vals["input"] = ring.encode(input);
    const auto arg = [&](const LayerSpec& l, std::size_t i = 0) -> const RingTensor& {
        return vals.at(l.inputs[i]);
    };
    const auto mm = [&](const RingTensor& a, const RingTensor& b) { return matmul(ring, a, b); };
    const std::uint64_t six = ring.encode(6.0);
    const std::uint64_t slope = ring.encode(kLeakySlope);
    const std::uint64_t rest = ring.encode(1.0 - kLeakySlope);

    // these mirror the secure protocols' ring arithmetic exactly
    const auto relu1 = [&](std::uint64_t v) { return ring.mul(ring.heaviside(v), v); };
    const auto relu6_1 = [&](std::uint64_t a) {
        const std::uint64_t alpha = ring.heaviside(ring.sub(a, six));
        const std::uint64_t c = ring.mul(alpha, ring.sub(six, a));
        return ring.mul(ring.heaviside(a), ring.add(a, c));
    };
    const auto leaky1 = [&](std::uint64_t a) {
        const std::uint64_t coef = ring.add(slope, ring.mul(rest, ring.heaviside(a)));
        return ring.trunc(ring.mul(a, coef));
    };
    const auto apply_inner = [&](std::uint64_t v, ActivationKind k) {
        switch (k) {
            case ActivationKind::Relu: return relu1(v);
            case ActivationKind::Relu6: return relu6_1(v);
            case ActivationKind::LeakyRelu: return leaky1(v);
            case ActivationKind::None: return v;
        }
        throw AnalysisError("unknown activation kind");
    };

    for (const LayerSpec& l : g.layers) {
        RingTensor out;
        switch (l.kind) {
            case LayerKind::Conv2d: {
                const RingTensor k = ring.encode(weight(w, l.name, "kernel"));
                const std::size_t pad = l.same_pad ? same_padding(l.kernel) : 0;
                const std::size_t f = l.kernel, c = arg(l).shape[2];
                RingTensor prod = matmul(ring, im2col(arg(l), f, l.stride, pad),
                                         reshape(k, {f * f * c, l.channels}));
                const std::size_t oh = conv_out_dim(arg(l).shape[0], f, l.stride, pad);
                const std::size_t ow = conv_out_dim(arg(l).shape[1], f, l.stride, pad);
                out = add_channel_bias(ring, ring.trunc(reshape(prod, {oh, ow, l.channels})),
                                       ring.encode(weight(w, l.name, "bias")));
                break;
            }
            case LayerKind::DwConv2d:
                out = add_channel_bias(
                    ring,
                    ring.trunc(dwconv(arg(l), ring.encode(weight(w, l.name, "kernel")),
                                      l.stride, l.same_pad ? same_padding(l.kernel) : 0, mm)),
                    ring.encode(weight(w, l.name, "bias")));
                break;
            case LayerKind::FullyConnected: {
                RingTensor prod = matmul(ring, reshape(arg(l), {1, arg(l).numel()}),
                                         ring.encode(weight(w, l.name, "kernel")));
                out = add_channel_bias(ring, ring.trunc(reshape(prod, {l.channels})),
                                       ring.encode(weight(w, l.name, "bias")));
                break;
            }
            case LayerKind::Relu:
                out = arg(l);
                for (auto& v : out.data) v = relu1(v);
                break;
            case LayerKind::Relu6:
                out = arg(l);
                for (auto& v : out.data) v = relu6_1(v);
                break;
            case LayerKind::LeakyRelu:
                out = arg(l);
                for (auto& v : out.data) v = leaky1(v);
                break;
            case LayerKind::PartialActivation: {
                out = arg(l);
                const std::size_t c = out.shape.back();
                const std::size_t k = active_channels(l.ratio, c);
                const std::size_t rows = out.numel() / c;
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t i = 0; i < k; ++i)
                        out.data[r * c + i] = apply_inner(out.data[r * c + i], l.inner);
                break;
            }
            case LayerKind::MaxPool: {
                // same ladder as the secure path: m <- e + H(m - e)(m - e)
                out = pool_window_element(arg(l), l.kernel, l.stride, 0);
                for (std::size_t t = 1; t < l.kernel * l.kernel; ++t) {
                    RingTensor e = pool_window_element(arg(l), l.kernel, l.stride, t);
                    for (std::size_t i = 0; i < out.numel(); ++i) {
                        const std::uint64_t d = ring.sub(out.data[i], e.data[i]);
                        out.data[i] = ring.add(e.data[i], ring.mul(ring.heaviside(d), d));
                    }
                }
                break;
            }
            case LayerKind::AvgPool: {
                out = pool_window_element(arg(l), l.kernel, l.stride, 0);
                for (std::size_t t = 1; t < l.kernel * l.kernel; ++t)
                    out = ring.add(out, pool_window_element(arg(l), l.kernel, l.stride, t));
                const std::uint64_t inv =
                    ring.encode(1.0 / static_cast<double>(l.kernel * l.kernel));
                out = ring.trunc(ring.scalar_mul(out, inv));
                break;
            }
            case LayerKind::GlobalAvgPool: {
                const RingTensor& x = arg(l);
                const std::size_t c = x.shape[2], hw = x.shape[0] * x.shape[1];
                out = RingTensor({c});
                for (std::size_t r = 0; r < hw; ++r)
                    for (std::size_t i = 0; i < c; ++i)
                        out.data[i] = ring.add(out.data[i], x.data[r * c + i]);
                const std::uint64_t inv = ring.encode(1.0 / static_cast<double>(hw));
                out = ring.trunc(ring.scalar_mul(out, inv));
                break;
            }
            case LayerKind::ChannelSplit: {
                auto [lo, hi] = split_bounds(l, arg(l).shape.back());
                out = slice_channels(arg(l), lo, hi);
                break;
            }
            case LayerKind::Concat: {
                std::vector<RingTensor> parts;
                for (std::size_t i = 0; i < l.inputs.size(); ++i) parts.push_back(arg(l, i));
                out = concat_channels(parts);
                break;
            }
            case LayerKind::ChannelShuffle: out = channel_shuffle(arg(l), l.groups); break;
            case LayerKind::ResidualAdd: out = ring.add(arg(l, 0), arg(l, 1)); break;
            case LayerKind::Flatten: out = flatten(arg(l)); break;
            case LayerKind::BatchNorm:
                throw AnalysisError("fold batch normalization before fixed-point evaluation "
                                    "(layer '" +
                                    l.name + "')");
        }
        vals[l.name] = std::move(out);
    }
    return vals.at(output_layer(g).name);
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

namespace {

LayerSpec conv1x1(const std::string& name, const std::string& in, std::size_t channels) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::Conv2d;
    l.inputs = {in};
    l.kernel = 1;
    l.channels = channels;
    return l;
}

LayerSpec conv3x3(const std::string& name, const std::string& in, std::size_t channels,
                  std::size_t stride = 1) {
    LayerSpec l = conv1x1(name, in, channels);
    l.kernel = 3;
    l.stride = stride;
    return l;
}

LayerSpec dw3x3(const std::string& name, const std::string& in, std::size_t stride) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::DwConv2d;
    l.inputs = {in};
    l.kernel = 3;
    l.stride = stride;
    return l;
}

LayerSpec act_layer(const std::string& name, const std::string& in, ActivationKind kind) {
    LayerSpec l;
    l.name = name;
    l.kind = kind == ActivationKind::Relu6 ? LayerKind::Relu6
             : kind == ActivationKind::LeakyRelu ? LayerKind::LeakyRelu
                                                 : LayerKind::Relu;
    l.inputs = {in};
    return l;
}

LayerSpec pa_layer(const std::string& name, const std::string& in, double ratio,
                   ActivationKind inner) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::PartialActivation;
    l.inputs = {in};
    l.ratio = ratio;
    l.inner = inner;
    return l;
}

} // namespace

NetworkGraph make_block(const BlockTemplate& t) {
    if (t.in_channels < 1) throw ShapeError("block needs in_channels >= 1");
    const bool crypto = t.variant == BlockVariant::Crypto;
    const double ratio =
        t.pa_ratio > 0 ? t.pa_ratio : (t.profile == BlockProfile::Mnist ? 0.25 : 0.5);
    const std::string p = t.name.empty() ? "block" : t.name;

    NetworkGraph g;
    g.name = p;
    g.variant = crypto ? "crypto" : "original";
    g.input_shape = {8, 8, t.in_channels};

    switch (t.kind) {
        case BlockKind::Fire: {
            if (t.squeeze < 1 || t.expand < 1)
                throw ShapeError("fire block needs squeeze and expand widths");
            // mnist profile keeps the squeeze activation (partial) and
            // drops the expand ones; cifar does the reverse
            const bool pa_on_squeeze = crypto && t.profile == BlockProfile::Mnist;
            const bool pa_on_expand = crypto && t.profile == BlockProfile::Cifar;
            g.layers.push_back(conv1x1(p + "/squeeze", "input", t.squeeze));
            std::string head = p + "/squeeze";
            if (!crypto) {
                g.layers.push_back(act_layer(p + "/squeeze_act", head, ActivationKind::Relu));
                head = p + "/squeeze_act";
            } else if (pa_on_squeeze) {
                g.layers.push_back(
                    pa_layer(p + "/squeeze_act", head, ratio, ActivationKind::Relu));
                head = p + "/squeeze_act";
            }
            g.layers.push_back(conv1x1(p + "/expand1x1", head, t.expand));
            g.layers.push_back(conv3x3(p + "/expand3x3", head, t.expand));
            std::string left = p + "/expand1x1", right = p + "/expand3x3";
            if (!crypto) {
                g.layers.push_back(act_layer(p + "/expand1x1_act", left, ActivationKind::Relu));
                g.layers.push_back(act_layer(p + "/expand3x3_act", right, ActivationKind::Relu));
                left += "_act";
                right += "_act";
            } else if (pa_on_expand) {
                g.layers.push_back(
                    pa_layer(p + "/expand1x1_act", left, ratio, ActivationKind::Relu));
                g.layers.push_back(
                    pa_layer(p + "/expand3x3_act", right, ratio, ActivationKind::Relu));
                left += "_act";
                right += "_act";
            }
            LayerSpec cat;
            cat.name = p + "/concat";
            cat.kind = LayerKind::Concat;
            cat.inputs = {left, right};
            g.layers.push_back(cat);
            break;
        }
        case BlockKind::ShuffleUnit: {
            if (t.out_channels < 2 || t.out_channels % 2 != 0)
                throw ShapeError("shuffle unit needs an even out_channels");
            const std::size_t half = t.out_channels / 2;
            std::vector<std::string> cat_in;
            if (t.stride == 1) {
                if (t.in_channels != t.out_channels)
                    throw ShapeError("stride-1 shuffle unit keeps its channel count");
                LayerSpec pass;
                pass.name = p + "/split0";
                pass.kind = LayerKind::ChannelSplit;
                pass.inputs = {"input"};
                pass.fractions = {0.5, 0.5};
                pass.index = 0;
                LayerSpec main = pass;
                main.name = p + "/split1";
                main.index = 1;
                g.layers.push_back(pass);
                g.layers.push_back(main);
                g.layers.push_back(conv1x1(p + "/conv1", p + "/split1", half));
                std::string head = p + "/conv1";
                if (crypto)
                    g.layers.push_back(pa_layer(p + "/act1", head, ratio, ActivationKind::Relu));
                else
                    g.layers.push_back(act_layer(p + "/act1", head, ActivationKind::Relu));
                g.layers.push_back(dw3x3(p + "/dw", p + "/act1", 1));
                g.layers.push_back(conv1x1(p + "/conv2", p + "/dw", half));
                std::string tail = p + "/conv2";
                if (!crypto) {
                    g.layers.push_back(act_layer(p + "/act2", tail, ActivationKind::Relu));
                    tail = p + "/act2";
                }
                cat_in = {p + "/split0", tail};
            } else {
                // downsample unit: both branches read the block input
                g.layers.push_back(dw3x3(p + "/left_dw", "input", t.stride));
                g.layers.push_back(conv1x1(p + "/left_conv", p + "/left_dw", half));
                std::string left = p + "/left_conv";
                if (!crypto) {
                    g.layers.push_back(act_layer(p + "/left_act", left, ActivationKind::Relu));
                    left = p + "/left_act";
                }
                g.layers.push_back(conv1x1(p + "/conv1", "input", half));
                if (crypto)
                    g.layers.push_back(
                        pa_layer(p + "/act1", p + "/conv1", ratio, ActivationKind::Relu));
                else
                    g.layers.push_back(act_layer(p + "/act1", p + "/conv1", ActivationKind::Relu));
                g.layers.push_back(dw3x3(p + "/dw", p + "/act1", t.stride));
                g.layers.push_back(conv1x1(p + "/conv2", p + "/dw", half));
                std::string right = p + "/conv2";
                if (!crypto) {
                    g.layers.push_back(act_layer(p + "/act2", right, ActivationKind::Relu));
                    right = p + "/act2";
                }
                cat_in = {left, right};
            }
            LayerSpec cat;
            cat.name = p + "/concat";
            cat.kind = LayerKind::Concat;
            cat.inputs = cat_in;
            g.layers.push_back(cat);
            LayerSpec sh;
            sh.name = p + "/shuffle";
            sh.kind = LayerKind::ChannelShuffle;
            sh.inputs = {p + "/concat"};
            sh.groups = 2;
            g.layers.push_back(sh);
            break;
        }
        case BlockKind::InvertedResidual: {
            if (t.out_channels < 1 || t.expansion < 1)
                throw ShapeError("inverted residual needs out_channels and expansion");
            const std::size_t mid = t.in_channels * t.expansion;
            g.layers.push_back(conv1x1(p + "/expand", "input", mid));
            std::string head = p + "/expand";
            if (!crypto) {
                g.layers.push_back(act_layer(p + "/expand_act", head, ActivationKind::Relu6));
                head = p + "/expand_act";
            }
            g.layers.push_back(dw3x3(p + "/dw", head, t.stride));
            if (crypto)
                g.layers.push_back(pa_layer(p + "/dw_act", p + "/dw", ratio, ActivationKind::Relu));
            else
                g.layers.push_back(act_layer(p + "/dw_act", p + "/dw", ActivationKind::Relu6));
            g.layers.push_back(conv1x1(p + "/project", p + "/dw_act", t.out_channels));
            if (t.stride == 1 && t.in_channels == t.out_channels) {
                LayerSpec add;
                add.name = p + "/add";
                add.kind = LayerKind::ResidualAdd;
                add.inputs = {"input", p + "/project"};
                g.layers.push_back(add);
            }
            break;
        }
    }
    return g;
}

// ---------------------------------------------------------------------------
// Rewrites
// ---------------------------------------------------------------------------

namespace {

std::string block_of(const std::string& name) {
    const auto pos = name.find('/');
    return pos == std::string::npos ? name : name.substr(0, pos);
}

// Names of activation layers sitting in the n-th (0-based) equal-depth
// activation stage of every block that has at least two stages.
std::set<std::string> positional_targets(const NetworkGraph& g, std::size_t position) {
    std::map<std::string, std::size_t> depth;
    depth["input"] = 0;
    for (const LayerSpec& l : g.layers) {
        std::size_t d = 0;
        for (const std::string& in : l.inputs) d = std::max(d, depth.at(in));
        depth[l.name] = d + 1;
    }
    // block -> (depth -> members)
    std::map<std::string, std::map<std::size_t, std::vector<std::string>>> stages;
    for (const LayerSpec& l : g.layers)
        if (is_activation_kind(l.kind))
            stages[block_of(l.name)][depth.at(l.name)].push_back(l.name);

    std::set<std::string> out;
    for (const auto& [block, by_depth] : stages) {
        if (by_depth.size() < 2) continue;
        auto it = by_depth.begin();
        std::advance(it, static_cast<std::ptrdiff_t>(std::min(position, by_depth.size() - 1)));
        if (position < by_depth.size())
            for (const std::string& n : it->second) out.insert(n);
    }
    return out;
}

std::set<std::string> select_activations(const NetworkGraph& g, const std::string& selector) {
    if (selector == "first") return positional_targets(g, 0);
    if (selector == "second") return positional_targets(g, 1);
    std::set<std::string> out;
    for (const LayerSpec& l : g.layers)
        if (is_activation_kind(l.kind) &&
            (selector == "all" || glob_match(selector, l.name)))
            out.insert(l.name);
    return out;
}

ActivationKind inner_of(const LayerSpec& l) {
    switch (l.kind) {
        case LayerKind::Relu: return ActivationKind::Relu;
        case LayerKind::Relu6: return ActivationKind::Relu6;
        case LayerKind::LeakyRelu: return ActivationKind::LeakyRelu;
        case LayerKind::PartialActivation: return l.inner;
        default: return ActivationKind::None;
    }
}

} // namespace

RewritePass parse_rewrite_pass(const std::string& text) {
    std::string name = text;
    std::vector<std::string> args;
    const auto open = text.find('(');
    if (open != std::string::npos) {
        if (text.back() != ')') throw ParseError("malformed pass '" + text + "'");
        name = text.substr(0, open);
        std::string body = text.substr(open + 1, text.size() - open - 2);
        std::stringstream ss(body);
        std::string item;
        while (std::getline(ss, item, ',')) {
            const auto b = item.find_first_not_of(" \t");
            const auto e = item.find_last_not_of(" \t");
            args.push_back(b == std::string::npos ? "" : item.substr(b, e - b + 1));
        }
    }
    RewritePass pass;
    if (name == "pa_replace") {
        pass.kind = RewriteKind::PaReplace;
        if (args.size() != 2) throw ParseError("pa_replace needs (selector, ratio)");
        pass.selector = args[0];
        try {
            pass.ratio = std::stod(args[1]);
        } catch (const std::exception&) {
            throw ParseError("pa_replace ratio '" + args[1] + "' is not a number");
        }
        if (!(pass.ratio >= 0.0 && pass.ratio <= 1.0))
            throw ParseError("pa_replace ratio must lie in [0, 1]");
    } else if (name == "remove_activation") {
        pass.kind = RewriteKind::RemoveActivation;
        if (args.size() > 1) throw ParseError("remove_activation takes one selector");
        if (!args.empty()) pass.selector = args[0];
    } else if (name == "relu6_to_relu") {
        pass.kind = RewriteKind::Relu6ToRelu;
        if (args.size() > 1) throw ParseError("relu6_to_relu takes one selector");
        if (!args.empty()) pass.selector = args[0];
    } else if (name == "maxpool_to_avgpool") {
        pass.kind = RewriteKind::MaxpoolToAvgpool;
        if (args.size() > 1) throw ParseError("maxpool_to_avgpool takes one selector");
        if (!args.empty()) pass.selector = args[0];
    } else {
        throw ParseError("unknown rewrite pass '" + name + "'");
    }
    return pass;
}

RewriteResult rewrite(const NetworkGraph& g, const RewritePass& pass) {
    RewriteResult res{g, 0};
    switch (pass.kind) {
        case RewriteKind::PaReplace: {
            const auto targets = select_activations(g, pass.selector);
            for (LayerSpec& l : res.graph.layers) {
                if (!targets.count(l.name)) continue;
                const ActivationKind inner = inner_of(l);
                l.kind = LayerKind::PartialActivation;
                l.ratio = pass.ratio;
                l.inner = inner;
                l.kernel = 0;
                l.stride = 1;
                ++res.matched;
            }
            break;
        }
        case RewriteKind::RemoveActivation: {
            const auto targets = select_activations(g, pass.selector);
            std::map<std::string, std::string> alias;
            std::vector<LayerSpec> kept;
            for (const LayerSpec& l : res.graph.layers) {
                std::string in0 = l.inputs.empty() ? std::string() : l.inputs.front();
                if (targets.count(l.name)) {
                    while (alias.count(in0)) in0 = alias.at(in0);
                    alias[l.name] = in0;
                    ++res.matched;
                    continue;
                }
                kept.push_back(l);
            }
            for (LayerSpec& l : kept)
                for (std::string& in : l.inputs)
                    while (alias.count(in)) in = alias.at(in);
            res.graph.layers = std::move(kept);
            break;
        }
        case RewriteKind::Relu6ToRelu:
            for (LayerSpec& l : res.graph.layers) {
                const bool name_ok =
                    pass.selector == "all" || glob_match(pass.selector, l.name);
                if (!name_ok) continue;
                if (l.kind == LayerKind::Relu6) {
                    l.kind = LayerKind::Relu;
                    ++res.matched;
                } else if (l.kind == LayerKind::PartialActivation &&
                           l.inner == ActivationKind::Relu6) {
                    l.inner = ActivationKind::Relu;
                    ++res.matched;
                }
            }
            break;
        case RewriteKind::MaxpoolToAvgpool:
            for (LayerSpec& l : res.graph.layers) {
                const bool name_ok =
                    pass.selector == "all" || glob_match(pass.selector, l.name);
                if (name_ok && l.kind == LayerKind::MaxPool) {
                    l.kind = LayerKind::AvgPool;
                    ++res.matched;
                }
            }
            break;
    }
    return res;
}

std::pair<NetworkGraph, WeightStore> fold_batchnorm(const NetworkGraph& g,
                                                    const WeightStore& w) {
    NetworkGraph out = g;
    WeightStore folded = w;

    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < out.layers.size(); ++i) index[out.layers[i].name] = i;
    std::map<std::string, std::size_t> fanout;
    for (const LayerSpec& l : out.layers)
        for (const std::string& in : l.inputs) ++fanout[in];

    std::map<std::string, std::string> alias;
    std::vector<LayerSpec> kept;
    for (const LayerSpec& l : out.layers) {
        if (l.kind != LayerKind::BatchNorm) {
            kept.push_back(l);
            continue;
        }
        const std::string& src = l.inputs.front();
        auto it = index.find(src);
        const bool on_conv = it != index.end() &&
                             (out.layers[it->second].kind == LayerKind::Conv2d ||
                              out.layers[it->second].kind == LayerKind::DwConv2d);
        if (!on_conv)
            throw ParseError("batchnorm '" + l.name + "' does not follow a conv layer");
        if (fanout[src] != 1)
            throw ParseError("batchnorm '" + l.name + "' shares its conv with other layers");

        const FloatTensor& gma = weight(w, l.name, "gamma");
        const FloatTensor& beta = weight(w, l.name, "beta");
        const FloatTensor& mean = weight(w, l.name, "mean");
        const FloatTensor& var = weight(w, l.name, "var");
        FloatTensor kernel = weight(folded, src, "kernel");
        FloatTensor bias = weight(folded, src, "bias");
        const std::size_t c = bias.numel();
        if (gma.numel() != c)
            throw ShapeError("batchnorm '" + l.name + "' width does not match its conv");
        std::vector<double> scale(c);
        for (std::size_t i = 0; i < c; ++i)
            scale[i] = gma.data[i] / std::sqrt(var.data[i] + 1e-5);
        // conv kernels keep the output channel as the innermost dim
        for (std::size_t i = 0; i < kernel.numel(); ++i) kernel.data[i] *= scale[i % c];
        for (std::size_t i = 0; i < c; ++i)
            bias.data[i] = (bias.data[i] - mean.data[i]) * scale[i] + beta.data[i];
        folded.put(src + ".kernel", std::move(kernel));
        folded.put(src + ".bias", std::move(bias));

        std::string target = src;
        while (alias.count(target)) target = alias.at(target);
        alias[l.name] = target;

        std::erase_if(folded.entries, [&](const auto& e) {
            return e.first.rfind(l.name + ".", 0) == 0;
        });
    }
    for (LayerSpec& l : kept)
        for (std::string& in : l.inputs)
            while (alias.count(in)) in = alias.at(in);
    out.layers = std::move(kept);
    return {std::move(out), std::move(folded)};
}

} // namespace shadownet
