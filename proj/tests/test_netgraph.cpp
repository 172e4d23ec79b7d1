#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "shadownet/errors.hpp"
#include "shadownet/netgraph.hpp"
#include "shadownet/prg.hpp"

using namespace shadownet;

namespace {

std::size_t count_kind(const NetworkGraph& g, LayerKind k) {
    std::size_t n = 0;
    for (const LayerSpec& l : g.layers)
        if (l.kind == k) ++n;
    return n;
}

const LayerSpec* find_layer(const NetworkGraph& g, const std::string& name) {
    for (const LayerSpec& l : g.layers)
        if (l.name == name) return &l;
    return nullptr;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

const char* kToyDoc = R"({
    "name": "toy",
    "input_shape": [6, 6, 2],
    "layers": [
        {"name": "c1", "kind": "conv2d", "inputs": ["input"],
         "params": {"kernel": 3, "stride": 1, "padding": "same", "channels": 4}},
        {"name": "a1", "kind": "relu", "inputs": ["c1"]}
    ]
})";

} // namespace

TEST_CASE("minimal document parses with defaults") {
    const NetworkGraph g = parse_graph(kToyDoc);
    REQUIRE(g.layers.size() == 2);
    CHECK(g.name == "toy");
    CHECK(g.layers[0].kind == LayerKind::Conv2d);
    CHECK(g.layers[0].stride == 1);
    CHECK(g.layers[0].same_pad);
    CHECK(g.layers[1].inputs == std::vector<std::string>{"c1"});
    CHECK(output_layer(g).name == "a1");
}

TEST_CASE("parse reports every violation at once") {
    const char* doc = R"({
        "name": "bad",
        "input_shape": [8, 8, 1],
        "layers": [
            {"name": "x", "kind": "warp5d", "inputs": ["input"]},
            {"name": "y", "kind": "relu", "inputs": ["ghost"]},
            {"name": "y", "kind": "relu", "inputs": ["input"]},
            {"name": "input", "kind": "relu", "inputs": ["input"]},
            {"name": "z", "kind": "conv2d", "inputs": ["input"],
             "params": {"kernel": 0, "channels": 0, "warp": 1}}
        ]
    })";
    try {
        parse_graph(doc);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("warp5d") != std::string::npos);
        CHECK(msg.find("ghost") != std::string::npos);
        CHECK(msg.find("duplicate layer name 'y'") != std::string::npos);
        CHECK(msg.find("reserved") != std::string::npos);
        CHECK(msg.find("kernel") != std::string::npos);
        CHECK(msg.find("channels") != std::string::npos);
        CHECK(msg.find("unknown param 'warp'") != std::string::npos);
    }
}

TEST_CASE("cycles name a back edge") {
    const char* doc = R"({
        "name": "loop",
        "input_shape": [4, 4, 1],
        "layers": [
            {"name": "a", "kind": "relu", "inputs": ["b"]},
            {"name": "b", "kind": "relu", "inputs": ["a"]}
        ]
    })";
    CHECK_THROWS_WITH_AS(parse_graph(doc),
                         doctest::Contains("cycle through edge"), ParseError);
}

TEST_CASE("toposort is stable and tolerant of forward references") {
    const char* doc = R"({
        "name": "fwd",
        "input_shape": [4, 4, 2],
        "layers": [
            {"name": "late", "kind": "relu", "inputs": ["early"]},
            {"name": "early", "kind": "relu", "inputs": ["input"]}
        ]
    })";
    const NetworkGraph g = parse_graph(doc);
    CHECK(g.layers[0].name == "early");
    CHECK(g.layers[1].name == "late");
}

TEST_CASE("serialize parse round trip") {
    for (const BlockKind kind :
         {BlockKind::Fire, BlockKind::ShuffleUnit, BlockKind::InvertedResidual}) {
        BlockTemplate t;
        t.kind = kind;
        t.name = "b";
        t.in_channels = 16;
        t.squeeze = 4;
        t.expand = 8;
        t.out_channels = 16;
        t.stride = 1;
        for (const BlockVariant v : {BlockVariant::Original, BlockVariant::Crypto}) {
            t.variant = v;
            const NetworkGraph g = make_block(t);
            const NetworkGraph back = parse_graph(serialize_graph(g));
            CHECK(back == g);
        }
    }
}

TEST_CASE("shape inference") {
    const char* doc = R"({
        "name": "shapes",
        "input_shape": [9, 9, 6],
        "layers": [
            {"name": "c1", "kind": "conv2d", "inputs": ["input"],
             "params": {"kernel": 3, "stride": 2, "padding": "same", "channels": 8}},
            {"name": "s0", "kind": "channel_split", "inputs": ["c1"],
             "params": {"fractions": [0.25, 0.75], "index": 0}},
            {"name": "s1", "kind": "channel_split", "inputs": ["c1"],
             "params": {"fractions": [0.25, 0.75], "index": 1}},
            {"name": "cat", "kind": "concat", "inputs": ["s1", "s0"]},
            {"name": "sh", "kind": "channel_shuffle", "inputs": ["cat"], "params": {"groups": 4}},
            {"name": "fl", "kind": "flatten", "inputs": ["sh"]},
            {"name": "fc", "kind": "fullyconnected", "inputs": ["fl"], "params": {"channels": 5}}
        ]
    })";
    const auto shapes = infer_shapes(parse_graph(doc));
    CHECK(shapes.at("c1") == std::vector<std::size_t>{5, 5, 8});
    CHECK(shapes.at("s0") == std::vector<std::size_t>{5, 5, 2});
    CHECK(shapes.at("s1") == std::vector<std::size_t>{5, 5, 6});
    CHECK(shapes.at("cat") == std::vector<std::size_t>{5, 5, 8});
    CHECK(shapes.at("fl") == std::vector<std::size_t>{200});
    CHECK(shapes.at("fc") == std::vector<std::size_t>{5});
}

TEST_CASE("shape violations are parse errors") {
    const char* pool = R"({
        "name": "badpool",
        "input_shape": [7, 7, 2],
        "layers": [{"name": "p", "kind": "maxpool", "inputs": ["input"], "params": {"kernel": 2}}]
    })";
    CHECK_THROWS_WITH_AS(parse_graph(pool), doctest::Contains("tile"), ParseError);
    const char* shuffle = R"({
        "name": "badshuffle",
        "input_shape": [4, 4, 6],
        "layers": [{"name": "s", "kind": "channel_shuffle", "inputs": ["input"],
                    "params": {"groups": 4}}]
    })";
    CHECK_THROWS_WITH_AS(parse_graph(shuffle), doctest::Contains("divisible"), ParseError);
    const char* res = R"({
        "name": "badres",
        "input_shape": [4, 4, 2],
        "layers": [
            {"name": "c", "kind": "conv2d", "inputs": ["input"], "params": {"kernel": 1, "channels": 3}},
            {"name": "r", "kind": "residual_add", "inputs": ["input", "c"]}
        ]
    })";
    CHECK_THROWS_WITH_AS(parse_graph(res), doctest::Contains("different shapes"), ParseError);
}

TEST_CASE("inverted residual block variants") {
    BlockTemplate t;
    t.kind = BlockKind::InvertedResidual;
    t.name = "ir";
    t.in_channels = 16;
    t.out_channels = 16;
    t.stride = 1;
    t.expansion = 6;

    t.variant = BlockVariant::Original;
    const NetworkGraph orig = make_block(t);
    CHECK(count_kind(orig, LayerKind::Relu6) == 2);
    CHECK(count_kind(orig, LayerKind::PartialActivation) == 0);
    CHECK(count_kind(orig, LayerKind::ResidualAdd) == 1);
    CHECK(find_layer(orig, "ir/expand")->channels == 96);

    t.variant = BlockVariant::Crypto;
    const NetworkGraph crypto = make_block(t);
    CHECK(count_kind(crypto, LayerKind::Relu6) == 0);
    CHECK(count_kind(crypto, LayerKind::PartialActivation) == 1);
    const LayerSpec* pa = find_layer(crypto, "ir/dw_act");
    REQUIRE(pa != nullptr);
    CHECK(pa->ratio == 0.5);
    CHECK(pa->inner == ActivationKind::Relu);
    CHECK(find_layer(crypto, "ir/expand_act") == nullptr);
    // the depthwise stage now reads the expansion conv directly
    CHECK(find_layer(crypto, "ir/dw")->inputs == std::vector<std::string>{"ir/expand"});

    t.stride = 2;
    CHECK(count_kind(make_block(t), LayerKind::ResidualAdd) == 0);
    t.stride = 1;
    t.out_channels = 24;
    CHECK(count_kind(make_block(t), LayerKind::ResidualAdd) == 0);
}

TEST_CASE("fire block variants") {
    BlockTemplate t;
    t.kind = BlockKind::Fire;
    t.name = "fire";
    t.in_channels = 96;
    t.squeeze = 16;
    t.expand = 64;

    t.variant = BlockVariant::Original;
    const NetworkGraph orig = make_block(t);
    CHECK(count_kind(orig, LayerKind::Relu) == 3);
    CHECK(output_layer(orig).kind == LayerKind::Concat);

    t.variant = BlockVariant::Crypto;
    t.profile = BlockProfile::Cifar;
    const NetworkGraph cifar = make_block(t);
    CHECK(count_kind(cifar, LayerKind::Relu) == 0);
    CHECK(count_kind(cifar, LayerKind::PartialActivation) == 2);
    CHECK(find_layer(cifar, "fire/squeeze_act") == nullptr);
    CHECK(find_layer(cifar, "fire/expand1x1_act")->ratio == 0.5);

    t.profile = BlockProfile::Mnist;
    const NetworkGraph mnist = make_block(t);
    CHECK(count_kind(mnist, LayerKind::PartialActivation) == 1);
    const LayerSpec* pa = find_layer(mnist, "fire/squeeze_act");
    REQUIRE(pa != nullptr);
    CHECK(pa->ratio == 0.25);
    CHECK(find_layer(mnist, "fire/expand1x1_act") == nullptr);
    CHECK(find_layer(mnist, "fire/expand3x3_act") == nullptr);
}

TEST_CASE("shuffle unit variants") {
    BlockTemplate t;
    t.kind = BlockKind::ShuffleUnit;
    t.name = "u";
    t.in_channels = 116;
    t.out_channels = 116;
    t.stride = 1;

    t.variant = BlockVariant::Original;
    const NetworkGraph basic = make_block(t);
    CHECK(count_kind(basic, LayerKind::Relu) == 2);
    CHECK(count_kind(basic, LayerKind::ChannelSplit) == 2);
    CHECK(output_layer(basic).kind == LayerKind::ChannelShuffle);

    t.in_channels = 24;
    t.stride = 2;
    const NetworkGraph down = make_block(t);
    CHECK(count_kind(down, LayerKind::Relu) == 3);
    CHECK(count_kind(down, LayerKind::ChannelSplit) == 0);
    CHECK(count_kind(down, LayerKind::DwConv2d) == 2);

    t.variant = BlockVariant::Crypto;
    const NetworkGraph down_c = make_block(t);
    CHECK(count_kind(down_c, LayerKind::Relu) == 0);
    CHECK(count_kind(down_c, LayerKind::PartialActivation) == 1);
    CHECK(find_layer(down_c, "u/act1")->inner == ActivationKind::Relu);
}

TEST_CASE("block fragments infer shapes end to end") {
    BlockTemplate t;
    t.kind = BlockKind::ShuffleUnit;
    t.name = "u";
    t.in_channels = 24;
    t.out_channels = 116;
    t.stride = 2;
    const NetworkGraph g = make_block(t);
    const auto shapes = infer_shapes(g);
    CHECK(shapes.at("u/shuffle") == std::vector<std::size_t>{4, 4, 116});
}

TEST_CASE("rewrite pass parsing") {
    const RewritePass pa = parse_rewrite_pass("pa_replace(second, 0.5)");
    CHECK(pa.kind == RewriteKind::PaReplace);
    CHECK(pa.selector == "second");
    CHECK(pa.ratio == 0.5);
    const RewritePass rm = parse_rewrite_pass("remove_activation(first)");
    CHECK(rm.kind == RewriteKind::RemoveActivation);
    CHECK(rm.selector == "first");
    const RewritePass r6 = parse_rewrite_pass("relu6_to_relu");
    CHECK(r6.kind == RewriteKind::Relu6ToRelu);
    CHECK(r6.selector == "all");
    CHECK(parse_rewrite_pass("maxpool_to_avgpool").kind == RewriteKind::MaxpoolToAvgpool);
    CHECK_THROWS_AS(parse_rewrite_pass("pa_replace(0.5)"), ParseError);
    CHECK_THROWS_AS(parse_rewrite_pass("pa_replace(all, 1.5)"), ParseError);
    CHECK_THROWS_AS(parse_rewrite_pass("warp(all)"), ParseError);
    CHECK_THROWS_AS(parse_rewrite_pass("relu6_to_relu(all"), ParseError);
}

TEST_CASE("rewrites on an inverted residual graph") {
    BlockTemplate t;
    t.kind = BlockKind::InvertedResidual;
    t.name = "ir";
    t.in_channels = 8;
    t.out_channels = 8;
    t.stride = 1;
    t.expansion = 6;
    t.variant = BlockVariant::Original;
    const NetworkGraph g = make_block(t);

    // relu6 -> relu across the block
    const RewriteResult r6 = rewrite(g, parse_rewrite_pass("relu6_to_relu"));
    CHECK(r6.matched == 2);
    CHECK(count_kind(r6.graph, LayerKind::Relu6) == 0);
    CHECK(count_kind(r6.graph, LayerKind::Relu) == 2);

    // positional selectors pick by stage depth inside the block
    const RewriteResult pa = rewrite(r6.graph, parse_rewrite_pass("pa_replace(second, 0.5)"));
    CHECK(pa.matched == 1);
    CHECK(find_layer(pa.graph, "ir/dw_act")->kind == LayerKind::PartialActivation);
    CHECK(find_layer(pa.graph, "ir/dw_act")->inner == ActivationKind::Relu);
    CHECK(find_layer(pa.graph, "ir/expand_act")->kind == LayerKind::Relu);

    const RewriteResult rm = rewrite(pa.graph, parse_rewrite_pass("remove_activation(first)"));
    CHECK(rm.matched == 1);
    CHECK(find_layer(rm.graph, "ir/expand_act") == nullptr);
    CHECK(find_layer(rm.graph, "ir/dw")->inputs == std::vector<std::string>{"ir/expand"});
    // the result equals the crypto template
    t.variant = BlockVariant::Crypto;
    CHECK(rm.graph.layers == make_block(t).layers);

    // globs address layers by name; unmatched selectors report zero
    CHECK(rewrite(g, parse_rewrite_pass("remove_activation(ir/expand*)")).matched == 1);
    CHECK(rewrite(g, parse_rewrite_pass("remove_activation(nothing*)")).matched == 0);
    CHECK(rewrite(g, parse_rewrite_pass("pa_replace(*_act, 0.25)")).matched == 2);
}

TEST_CASE("single stage blocks are immune to positional selectors") {
    const char* doc = R"({
        "name": "stemmy",
        "input_shape": [8, 8, 3],
        "layers": [
            {"name": "stem/conv", "kind": "conv2d", "inputs": ["input"],
             "params": {"kernel": 3, "channels": 4}},
            {"name": "stem/act", "kind": "relu6", "inputs": ["stem/conv"]}
        ]
    })";
    const NetworkGraph g = parse_graph(doc);
    CHECK(rewrite(g, parse_rewrite_pass("remove_activation(first)")).matched == 0);
    CHECK(rewrite(g, parse_rewrite_pass("remove_activation(all)")).matched == 1);
}

TEST_CASE("maxpool to avgpool keeps geometry") {
    const char* doc = R"({
        "name": "p",
        "input_shape": [8, 8, 2],
        "layers": [{"name": "p1", "kind": "maxpool", "inputs": ["input"],
                    "params": {"kernel": 2, "stride": 2}}]
    })";
    const RewriteResult res = rewrite(parse_graph(doc), parse_rewrite_pass("maxpool_to_avgpool"));
    CHECK(res.matched == 1);
    CHECK(res.graph.layers[0].kind == LayerKind::AvgPool);
    CHECK(res.graph.layers[0].kernel == 2);
    CHECK(res.graph.layers[0].stride == 2);
}

TEST_CASE("weight container round trip") {
    const NetworkGraph g = parse_graph(kToyDoc);
    const WeightStore w = gen_weights(g, 11);
    CHECK(w.has("c1.kernel"));
    CHECK(w.at("c1.kernel").shape == std::vector<std::size_t>{3, 3, 2, 4});
    CHECK(w.at("c1.bias").shape == std::vector<std::size_t>{4});
    CHECK_THROWS_AS(w.at("missing.bias"), AnalysisError);

    const std::string path = temp_path("shadownet_w.bin");
    save_weights(w, path);
    const WeightStore back = load_weights(path);
    CHECK(back == w);
    std::remove(path.c_str());
}

TEST_CASE("weight container rejects corruption") {
    const std::string path = temp_path("shadownet_bad.bin");
    {
        std::ofstream os(path, std::ios::binary);
        os << "NOPE";
    }
    CHECK_THROWS_AS(load_weights(path), FormatError);
    {
        std::ofstream os(path, std::ios::binary);
        os << "SNW1";
        os.put(5);
        os.put(0); // truncated name
    }
    CHECK_THROWS_AS(load_weights(path), FormatError);
    std::remove(path.c_str());
    CHECK_THROWS_AS(load_weights(temp_path("shadownet_missing.bin")), FormatError);
}

TEST_CASE("gen_weights is deterministic and in range") {
    const NetworkGraph g = parse_graph(kToyDoc);
    const WeightStore a = gen_weights(g, 5);
    const WeightStore b = gen_weights(g, 5);
    const WeightStore c = gen_weights(g, 6);
    CHECK(a == b);
    CHECK(!(a == c));
    for (const auto& [name, t] : a.entries)
        for (double v : t.data) {
            CHECK(v >= -0.5);
            CHECK(v < 0.5);
        }
}

TEST_CASE("batchnorm folding matches the float path") {
    const char* doc = R"({
        "name": "bn",
        "input_shape": [6, 6, 2],
        "layers": [
            {"name": "c1", "kind": "conv2d", "inputs": ["input"],
             "params": {"kernel": 3, "channels": 4}},
            {"name": "n1", "kind": "batchnorm", "inputs": ["c1"]},
            {"name": "a1", "kind": "relu", "inputs": ["n1"]},
            {"name": "d1", "kind": "dwconv2d", "inputs": ["a1"], "params": {"kernel": 3}},
            {"name": "n2", "kind": "batchnorm", "inputs": ["d1"]}
        ]
    })";
    const NetworkGraph g = parse_graph(doc);
    const WeightStore w = gen_weights(g, 17);
    // bn variances sit in the positive band
    for (double v : w.at("n1.var").data) {
        CHECK(v >= 0.25);
        CHECK(v < 1.25);
    }
    const auto [folded, fw] = fold_batchnorm(g, w);
    CHECK(count_kind(folded, LayerKind::BatchNorm) == 0);
    CHECK(!fw.has("n1.gamma"));
    CHECK(output_layer(folded).name == "d1");

    FloatTensor x(g.input_shape);
    RandomStream rng(seed_from_u64(3));
    for (auto& v : x.data) v = rng.next_centered_unit() * 2;
    const FloatTensor want = eval_float(g, w, x);
    const FloatTensor got = eval_float(folded, fw, x);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.numel(); ++i)
        CHECK(got.data[i] ==
              doctest::Approx(want.data[i]).epsilon(1e-6).scale(std::abs(want.data[i]) + 1.0));
}

TEST_CASE("fold_batchnorm rejects orphans and leaves clean graphs alone") {
    const char* orphan = R"({
        "name": "orphan",
        "input_shape": [4, 4, 2],
        "layers": [
            {"name": "a1", "kind": "relu", "inputs": ["input"]},
            {"name": "n1", "kind": "batchnorm", "inputs": ["a1"]}
        ]
    })";
    const NetworkGraph og = parse_graph(orphan);
    CHECK_THROWS_AS(fold_batchnorm(og, gen_weights(og, 1)), ParseError);

    const NetworkGraph clean = parse_graph(kToyDoc);
    const WeightStore w = gen_weights(clean, 2);
    const auto [same, sw] = fold_batchnorm(clean, w);
    CHECK(same == clean);
    CHECK(sw == w);
}

TEST_CASE("fixed point evaluation tracks the float oracle") {
    BlockTemplate t;
    t.kind = BlockKind::Fire;
    t.name = "f";
    t.in_channels = 4;
    t.squeeze = 3;
    t.expand = 5;
    t.variant = BlockVariant::Original;
    const NetworkGraph g = make_block(t);
    const WeightStore w = gen_weights(g, 23);
    const Ring ring(RingParams{64, 67, 13});

    FloatTensor x(g.input_shape);
    RandomStream rng(seed_from_u64(29));
    for (auto& v : x.data) v = rng.next_centered_unit() * 2;

    const FloatTensor want = eval_float(g, w, x);
    const RingTensor fixed = eval_fixed(g, w, ring, x);
    const FloatTensor got = ring.decode(fixed);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.numel(); ++i)
        CHECK(got.data[i] == doctest::Approx(want.data[i]).epsilon(2e-3));
}

TEST_CASE("fixed point evaluation refuses unfolded batchnorm") {
    const char* doc = R"({
        "name": "bn",
        "input_shape": [4, 4, 2],
        "layers": [
            {"name": "c1", "kind": "conv2d", "inputs": ["input"], "params": {"kernel": 1, "channels": 2}},
            {"name": "n1", "kind": "batchnorm", "inputs": ["c1"]}
        ]
    })";
    const NetworkGraph g = parse_graph(doc);
    const WeightStore w = gen_weights(g, 1);
    const Ring ring(RingParams{64, 67, 13});
    FloatTensor x(g.input_shape);
    CHECK_THROWS_AS(eval_fixed(g, w, ring, x), AnalysisError);
}
