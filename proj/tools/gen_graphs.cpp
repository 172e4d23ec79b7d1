// Emits the shipped network graphs: {squeezenet, shufflenetv2, mobilenetv2}
// x {cifar, mnist} x {orig, crypto}. Channel tables follow the standard 1.0x
// profiles with strides adapted to 32x32 / 28x28 inputs.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "shadownet/netgraph.hpp"

using namespace shadownet;

namespace {

LayerSpec conv(const std::string& name, const std::string& in, std::size_t kernel,
               std::size_t stride, std::size_t channels) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::Conv2d;
    l.inputs = {in};
    l.kernel = kernel;
    l.stride = stride;
    l.channels = channels;
    return l;
}

LayerSpec act(const std::string& name, const std::string& in, LayerKind kind) {
    LayerSpec l;
    l.name = name;
    l.kind = kind;
    l.inputs = {in};
    return l;
}

LayerSpec pool(const std::string& name, const std::string& in, bool crypto) {
    LayerSpec l;
    l.name = name;
    l.kind = crypto ? LayerKind::AvgPool : LayerKind::MaxPool;
    l.inputs = {in};
    l.kernel = 2;
    l.stride = 2;
    return l;
}

LayerSpec gap(const std::string& name, const std::string& in) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::GlobalAvgPool;
    l.inputs = {in};
    return l;
}

LayerSpec fc(const std::string& name, const std::string& in, std::size_t channels) {
    LayerSpec l;
    l.name = name;
    l.kind = LayerKind::FullyConnected;
    l.inputs = {in};
    l.channels = channels;
    return l;
}

// Splices a block fragment onto the tail of a network.
std::string append_block(NetworkGraph& net, const NetworkGraph& frag,
                         const std::string& input_name) {
    for (LayerSpec l : frag.layers) {
        for (auto& in : l.inputs)
            if (in == "input") in = input_name;
        net.layers.push_back(std::move(l));
    }
    return net.layers.back().name;
}

NetworkGraph start(const std::string& base, bool crypto, bool mnist) {
    NetworkGraph g;
    g.name = base + (mnist ? "_mnist" : "_cifar");
    g.variant = crypto ? "crypto" : "original";
    g.note = "widths follow the standard 1.0x profile adapted to small inputs";
    g.input_shape = mnist ? std::vector<std::size_t>{28, 28, 1}
                          : std::vector<std::size_t>{32, 32, 3};
    return g;
}

NetworkGraph mobilenetv2(bool crypto, bool mnist) {
    NetworkGraph g = start("mobilenetv2", crypto, mnist);
    g.layers.push_back(conv("stem/conv", "input", 3, 1, 32));
    g.layers.push_back(act("stem/act", "stem/conv",
                           crypto ? LayerKind::Relu : LayerKind::Relu6));
    std::string prev = "stem/act";

    struct Group {
        std::size_t t, c, n, s;
    };
    const std::vector<Group> groups = {{1, 16, 1, 1},  {6, 24, 2, 1}, {6, 32, 3, 2},
                                       {6, 64, 4, 2},  {6, 96, 3, 1}, {6, 160, 3, 2},
                                       {6, 320, 1, 1}};
    std::size_t in_c = 32, idx = 0;
    for (const Group& grp : groups) {
        for (std::size_t rep = 0; rep < grp.n; ++rep) {
            BlockTemplate bt;
            bt.kind = BlockKind::InvertedResidual;
            bt.variant = crypto ? BlockVariant::Crypto : BlockVariant::Original;
            bt.profile = mnist ? BlockProfile::Mnist : BlockProfile::Cifar;
            bt.name = "ir" + std::to_string(++idx);
            bt.in_channels = in_c;
            bt.out_channels = grp.c;
            bt.stride = rep == 0 ? grp.s : 1;
            bt.expansion = grp.t;
            prev = append_block(g, make_block(bt), prev);
            in_c = grp.c;
        }
    }

    g.layers.push_back(conv("head/conv", prev, 1, 1, 1280));
    g.layers.push_back(act("head/act", "head/conv",
                           crypto ? LayerKind::Relu : LayerKind::Relu6));
    g.layers.push_back(gap("head/gap", "head/act"));
    g.layers.push_back(fc("head/fc", "head/gap", 10));
    return g;
}

NetworkGraph squeezenet(bool crypto, bool mnist) {
    NetworkGraph g = start("squeezenet", crypto, mnist);
    g.layers.push_back(conv("stem/conv", "input", 3, 1, 96));
    g.layers.push_back(act("stem/act", "stem/conv", LayerKind::Relu));
    g.layers.push_back(pool("stem/pool", "stem/act", crypto));
    std::string prev = "stem/pool";

    struct Fire {
        std::size_t in, squeeze, expand;
        bool pool_after;
    };
    const std::vector<Fire> fires = {{96, 16, 64, false},  {128, 16, 64, false},
                                     {128, 32, 128, true}, {256, 32, 128, false},
                                     {256, 48, 192, false}, {384, 48, 192, false},
                                     {384, 64, 256, true}, {512, 64, 256, false}};
    std::size_t idx = 1;
    for (const Fire& f : fires) {
        BlockTemplate bt;
        bt.kind = BlockKind::Fire;
        bt.variant = crypto ? BlockVariant::Crypto : BlockVariant::Original;
        bt.profile = mnist ? BlockProfile::Mnist : BlockProfile::Cifar;
        bt.name = "fire" + std::to_string(++idx);
        bt.in_channels = f.in;
        bt.squeeze = f.squeeze;
        bt.expand = f.expand;
        prev = append_block(g, make_block(bt), prev);
        // the 28x28 profile stops pooling at 7x7, which a 2x2 window
        // cannot tile; it keeps two pooling stages instead of three
        const bool pool_here = f.pool_after && !(mnist && idx == 8);
        if (pool_here) {
            const std::string name = "pool" + std::to_string(idx);
            g.layers.push_back(pool(name, prev, crypto));
            prev = name;
        }
    }

    g.layers.push_back(conv("head/conv", prev, 1, 1, 10));
    g.layers.push_back(act("head/act", "head/conv", LayerKind::Relu));
    g.layers.push_back(gap("head/gap", "head/act"));
    return g;
}

NetworkGraph shufflenetv2(bool crypto, bool mnist) {
    NetworkGraph g = start("shufflenetv2", crypto, mnist);
    g.layers.push_back(conv("stem/conv", "input", 3, 1, 24));
    g.layers.push_back(act("stem/act", "stem/conv", LayerKind::Relu));
    std::string prev = "stem/act";

    struct Stage {
        std::size_t out, repeats;
    };
    const std::vector<Stage> stages = {{116, 4}, {232, 8}, {464, 4}};
    std::size_t in_c = 24;
    for (std::size_t si = 0; si < stages.size(); ++si) {
        for (std::size_t ui = 0; ui < stages[si].repeats; ++ui) {
            BlockTemplate bt;
            bt.kind = BlockKind::ShuffleUnit;
            bt.variant = crypto ? BlockVariant::Crypto : BlockVariant::Original;
            bt.profile = mnist ? BlockProfile::Mnist : BlockProfile::Cifar;
            bt.name = "s" + std::to_string(si + 2) + "u" + std::to_string(ui + 1);
            bt.in_channels = ui == 0 ? in_c : stages[si].out;
            bt.out_channels = stages[si].out;
            bt.stride = ui == 0 ? 2 : 1;
            prev = append_block(g, make_block(bt), prev);
        }
        in_c = stages[si].out;
    }

    g.layers.push_back(conv("head/conv", prev, 1, 1, 1024));
    g.layers.push_back(act("head/act", "head/conv", LayerKind::Relu));
    g.layers.push_back(gap("head/gap", "head/act"));
    g.layers.push_back(fc("head/fc", "head/gap", 10));
    return g;
}

} // namespace

int main(int argc, char** argv) {
    const std::filesystem::path dir = argc > 1 ? argv[1] : "graphs";
    std::filesystem::create_directories(dir);
    const auto write = [&](const NetworkGraph& g) {
        const std::string text = serialize_graph(g);
        parse_graph(text); // every shipped graph must validate
        const std::string fname =
            g.name + "." + (g.variant == "crypto" ? "crypto" : "orig") + ".json";
        std::ofstream os(dir / fname, std::ios::binary);
        os << text;
        std::cout << (dir / fname).string() << "\n";
    };
    try {
        for (bool mnist : {false, true})
            for (bool crypto : {false, true}) {
                write(mobilenetv2(crypto, mnist));
                write(squeezenet(crypto, mnist));
                write(shufflenetv2(crypto, mnist));
            }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
