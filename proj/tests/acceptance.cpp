// Acceptance gate: one line per criterion, nonzero exit if any fails.
// Tolerances are pinned next to each check.

#include <array>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "shadownet/costmodel.hpp"
#include "shadownet/netgraph.hpp"
#include "shadownet/protocols.hpp"
#include "shadownet/secure_eval.hpp"
#include "shadownet/tensor_ops.hpp"

using namespace shadownet;

namespace {

struct Criterion {
    std::string label;
    std::vector<std::string> failures;

    explicit Criterion(std::string l) : label(std::move(l)) {}

    void expect(bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    }
    template <class T>
    void expect_eq(const T& got, const T& want, const std::string& what) {
        if (!(got == want)) {
            std::ostringstream ss;
            ss << what << ": got " << got << ", want " << want;
            failures.push_back(ss.str());
        }
    }
    void expect_near(double got, double want, double tol, const std::string& what) {
        if (!(std::abs(got - want) <= tol)) {
            std::ostringstream ss;
            ss << what << ": got " << got << ", want " << want << " +-" << tol;
            failures.push_back(ss.str());
        }
    }
};

// independent two's-complement view, not Ring::to_signed
std::int64_t signed_of(unsigned bits, std::uint64_t v) {
    const std::uint64_t m = bits == 64 ? ~0ULL : ((1ULL << bits) - 1ULL);
    v &= m;
    const std::uint64_t sign = 1ULL << (bits - 1);
    return (v & sign) ? static_cast<std::int64_t>(v | ~m) : static_cast<std::int64_t>(v);
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

FloatTensor random_floats(const std::vector<std::size_t>& shape, std::uint64_t seed,
                          double amplitude) {
    FloatTensor t(shape);
    RandomStream rng(seed_from_u64(seed));
    for (auto& v : t.data) v = rng.next_centered_unit() * 2.0 * amplitude;
    return t;
}

// ---------------------------------------------------------------------------
// 1. analytic cost figures
// ---------------------------------------------------------------------------

Criterion criterion_cost_figures() {
    Criterion c("cost-model reference figures");
    try {
        const CostParams kP{}; // l = 64, p = 67
        constexpr double kConvMb = 0.58, kConvMbTol = 0.005;
        constexpr double kReluMb = 9.5, kReluMbTol = 0.05;
        constexpr double kCommRatio = 16.4, kCommRatioTol = 0.2;
        constexpr double kMaxpoolMb = 1.43, kMaxpoolMbTol = 0.01;

        const LayerCost conv = conv_cost(32, 3, 3, 16, kP);
        c.expect_eq<std::uint64_t>(conv.rounds, 2, "conv(32,3,3,16) rounds");
        c.expect_near(conv.mb(), kConvMb, kConvMbTol, "conv(32,3,3,16) MB");

        const LayerCost relu = relu_cost(16384, kP);
        c.expect_eq<std::uint64_t>(relu.rounds, 10, "relu(16384) rounds");
        c.expect_near(relu.mb(), kReluMb, kReluMbTol, "relu(16384) MB");
        c.expect(relu.rounds == 5 * conv.rounds, "relu/conv round ratio is exactly 5");
        c.expect_near(relu.bits / conv.bits, kCommRatio, kCommRatioTol,
                      "relu/conv communication ratio");

        const LayerCost mp = maxpool_cost(768, 2, kP);
        c.expect_eq<std::uint64_t>(mp.rounds, 27, "maxpool(768, f=2) rounds");
        c.expect_near(mp.mb(), kMaxpoolMb, kMaxpoolMbTol, "maxpool(768, f=2) MB");

        const LayerCost r6 = relu6_cost(16384, kP);
        const LayerCost lk = leaky_relu_cost(16384, kP);
        const LayerCost dr = drelu_cost(16384, kP);
        c.expect(r6.rounds == 2 * relu.rounds && r6.bits == 2 * relu.bits,
                 "relu6 is exactly twice relu");
        c.expect(lk.rounds == relu.rounds && lk.bits == relu.bits, "leaky relu equals relu");
        const LayerCost unit = conv_cost(1, 1, 1, 1, kP); // one scalar product
        c.expect(relu.rounds == dr.rounds + unit.rounds &&
                     relu.bits == dr.bits + 16384.0 * unit.bits,
                 "relu is exactly drelu plus a scalar product per element");
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// 2. protocol equivalence against brute-force oracles
// ---------------------------------------------------------------------------

void exhaustive_small_ring(Criterion& c) {
    const Ring ring(RingParams{8, 67, 0});
    Session s = Session::open_in_process(seed_from_u64(101));

    RingTensor all({256});
    for (std::size_t i = 0; i < 256; ++i) all.data[i] = i;
    const SharePair xs = share(ring, all, s.input_rng());

    const RingTensor drelu = reconstruct(ring, pi_drelu(s, ring, xs));
    const RingTensor relu = reconstruct(ring, pi_relu(s, ring, xs));
    const RingTensor relu6 = reconstruct(ring, pi_relu6(s, ring, xs));
    std::size_t bad = 0;
    for (std::size_t i = 0; i < 256; ++i) {
        const std::int64_t v = signed_of(8, all.data[i]);
        if (drelu.data[i] != (v >= 0 ? 1u : 0u)) ++bad;
        if (signed_of(8, relu.data[i]) != (v >= 0 ? v : 0)) ++bad;
        const std::int64_t want6 = v < 0 ? 0 : (v > 6 ? 6 : v);
        if (signed_of(8, relu6.data[i]) != want6) ++bad;
    }
    c.expect_eq<std::size_t>(bad, 0, "l=8 exhaustive drelu/relu/relu6 mismatches");

    // every byte value appears exactly once per sweep; windows stay inside
    // a narrow signed band, the comparable range of H(a - b), and rotation
    // moves each value through every window slot
    for (const int rot : {0, 1, 2, 3}) {
        RingTensor img({16, 16, 1});
        for (std::size_t wy = 0; wy < 8; ++wy)
            for (std::size_t wx = 0; wx < 8; ++wx) {
                const std::size_t wi = wy * 8 + wx;
                for (std::size_t j = 0; j < 4; ++j) {
                    const std::size_t slot = (j + static_cast<std::size_t>(rot)) % 4;
                    const std::size_t dy = slot / 2, dx = slot % 2;
                    img.data[(2 * wy + dy) * 16 + (2 * wx + dx)] =
                        ring.from_signed(-128 + static_cast<std::int64_t>(4 * wi + j));
                }
            }
        const SharePair is = share(ring, img, s.input_rng());
        const RingTensor got = reconstruct(ring, pi_maxpool(s, ring, is, 2, 2));
        std::size_t badmax = 0;
        for (std::size_t oy = 0; oy < 8; ++oy)
            for (std::size_t ox = 0; ox < 8; ++ox) {
                std::int64_t want = signed_of(8, img.data[(2 * oy) * 16 + 2 * ox]);
                for (const auto [dy, dx] : {std::pair{0, 1}, {1, 0}, {1, 1}}) {
                    const std::int64_t v =
                        signed_of(8, img.data[(2 * oy + dy) * 16 + (2 * ox + dx)]);
                    want = v > want ? v : want;
                }
                if (signed_of(8, got.data[oy * 8 + ox]) != want) ++badmax;
            }
        c.expect_eq<std::size_t>(badmax, 0, "l=8 exhaustive 2x2 maxpool mismatches");
    }

    // partial activation ratio sweep; ratio 0 is silent
    RingTensor img({8, 8, 4});
    for (std::size_t i = 0; i < 256; ++i) img.data[i] = (i * 37 + 11) & 0xff;
    const SharePair is = share(ring, img, s.input_rng());
    for (const double ratio : {0.0, 0.25, 0.5, 1.0}) {
        const std::uint64_t before = s.round_count();
        const RingTensor got = reconstruct(
            ring, pi_partial_activation(s, ring, is, {ratio, ActivationKind::Relu}));
        if (ratio == 0.0)
            c.expect(s.round_count() == before, "ratio-0 partial activation sends nothing");
        const std::size_t k = active_channels(ratio, 4);
        std::size_t badpa = 0;
        for (std::size_t i = 0; i < 256; ++i) {
            const std::int64_t v = signed_of(8, img.data[i]);
            const std::int64_t want = (i % 4) < k ? (v >= 0 ? v : 0) : v;
            if (signed_of(8, got.data[i]) != want) ++badpa;
        }
        std::ostringstream what;
        what << "l=8 exhaustive partial activation mismatches at ratio " << ratio;
        c.expect_eq<std::size_t>(badpa, 0, what.str());
    }
}

void randomized_wide_ring(Criterion& c) {
    const Ring ring(RingParams{64, 67, 13});
    Session s = Session::open_in_process(seed_from_u64(202));
    constexpr std::size_t kSamples = 10000;

    // bit-multiplier family: exact on raw ring words
    {
        RingTensor x({kSamples});
        RandomStream rng(seed_from_u64(7));
        for (auto& v : x.data) v = rng.next();
        const SharePair xs = share(ring, x, s.input_rng());
        const RingTensor drelu = reconstruct(ring, pi_drelu(s, ring, xs));
        const RingTensor relu = reconstruct(ring, pi_relu(s, ring, xs));
        const RingTensor relu6 = reconstruct(ring, pi_relu6(s, ring, xs));
        const std::int64_t six = static_cast<std::int64_t>(ring.encode(6.0));
        std::size_t bad = 0;
        for (std::size_t i = 0; i < kSamples; ++i) {
            const std::int64_t v = signed_of(64, x.data[i]);
            if (drelu.data[i] != (v >= 0 ? 1u : 0u)) ++bad;
            if (signed_of(64, relu.data[i]) != (v >= 0 ? v : 0)) ++bad;
            const std::int64_t want6 = v < 0 ? 0 : (v > six ? six : v);
            if (signed_of(64, relu6.data[i]) != want6) ++bad;
        }
        c.expect_eq<std::size_t>(bad, 0, "l=64 bit-family mismatches on 10^4 words");
    }

    // matmul: exact, as the protocol never truncates
    {
        RingTensor a({100, 100}), b({100, 100});
        RandomStream rng(seed_from_u64(8));
        for (auto& v : a.data) v = rng.next();
        for (auto& v : b.data) v = rng.next();
        const SharePair as = share(ring, a, s.input_rng());
        const SharePair bs = share(ring, b, s.input_rng());
        const RingTensor got = reconstruct(ring, pi_matmul(s, ring, as, bs));
        c.expect(got == matmul(ring, a, b), "pi_matmul exact on 10^4 outputs");
    }

    // conv: exact before rescaling, within 1 ULP after
    {
        const FloatTensor xf = random_floats({32, 32, 8}, 9, 1.0);
        const FloatTensor kf = random_floats({3, 3, 8, 12}, 10, 1.0);
        const RingTensor x = ring.encode(xf), k = ring.encode(kf);
        const SharePair xs = share(ring, x, s.input_rng());
        const SharePair ks = share(ring, k, s.input_rng());
        const SharePair conv = pi_conv2d(s, ring, xs, ks, 1, 1);
        const RingTensor exact = reshape(
            matmul(ring, im2col(x, 3, 1, 1), reshape(k, {3 * 3 * 8, 12})), {32, 32, 12});
        c.expect(reconstruct(ring, conv) == exact, "pi_conv2d exact before rescaling");
        const RingTensor got = reconstruct(ring, sp_trunc(ring, conv));
        const RingTensor want = ring.trunc(exact);
        std::uint64_t worst = 0;
        for (std::size_t i = 0; i < got.numel(); ++i) {
            const std::int64_t d = ring.to_signed(ring.sub(got.data[i], want.data[i]));
            worst = std::max<std::uint64_t>(worst, static_cast<std::uint64_t>(std::abs(d)));
        }
        c.expect(worst <= 1, "conv rescaling within 1 ULP on 10^4 outputs");
    }

    // leaky relu: one truncation, within 1 ULP of the two-slope product
    {
        const FloatTensor xf = random_floats({kSamples}, 11, 16.0);
        const RingTensor x = ring.encode(xf);
        const SharePair xs = share(ring, x, s.input_rng());
        const RingTensor got = reconstruct(ring, pi_leaky_relu(s, ring, xs));
        const std::uint64_t one = ring.encode(1.0), slope = ring.encode(kLeakySlope);
        std::uint64_t worst = 0;
        for (std::size_t i = 0; i < kSamples; ++i) {
            const std::uint64_t coef = ring.is_nonneg(x.data[i]) ? one : slope;
            const std::uint64_t want = ring.trunc(ring.mul(x.data[i], coef));
            const std::int64_t d = ring.to_signed(ring.sub(got.data[i], want));
            worst = std::max<std::uint64_t>(worst, static_cast<std::uint64_t>(std::abs(d)));
        }
        c.expect(worst <= 1, "leaky relu within 1 ULP on 10^4 elements");
    }

    // avgpool: local, one truncation
    {
        const FloatTensor xf = random_floats({200, 200, 1}, 12, 8.0);
        const RingTensor x = ring.encode(xf);
        const SharePair xs = share(ring, x, s.input_rng());
        const std::uint64_t before = s.round_count();
        const RingTensor got = reconstruct(ring, avgpool(ring, xs, 2, 2));
        c.expect(s.round_count() == before, "avgpool is silent");
        RingTensor sum = pool_window_element(x, 2, 2, 0);
        for (std::size_t t = 1; t < 4; ++t)
            sum = ring.add(sum, pool_window_element(x, 2, 2, t));
        const RingTensor want = ring.trunc(ring.scalar_mul(sum, ring.encode(0.25)));
        std::uint64_t worst = 0;
        for (std::size_t i = 0; i < got.numel(); ++i) {
            const std::int64_t d = ring.to_signed(ring.sub(got.data[i], want.data[i]));
            worst = std::max<std::uint64_t>(worst, static_cast<std::uint64_t>(std::abs(d)));
        }
        c.expect(worst <= 1, "avgpool within 1 ULP on 10^4 outputs");
    }
}

void relu6_ladder_trace(Criterion& c) {
    const Ring ring(RingParams{64, 67, 13});
    Session s = Session::open_in_process(seed_from_u64(303));

    FloatTensor grid({41});
    for (std::size_t i = 0; i < 41; ++i) grid.data[i] = -10.0 + 0.5 * static_cast<double>(i);
    const RingTensor a = ring.encode(grid);
    const SharePair as = share(ring, a, s.input_rng());

    Relu6Trace trace;
    const RingTensor out = reconstruct(ring, pi_relu6(s, ring, as, &trace));
    const RingTensor alpha = reconstruct(ring, trace.alpha);
    const RingTensor cstep = reconstruct(ring, trace.c);
    const RingTensor beta = reconstruct(ring, trace.beta);
    const RingTensor dstep = reconstruct(ring, trace.d);

    const std::uint64_t six = ring.encode(6.0);
    std::size_t bad = 0;
    for (std::size_t i = 0; i < 41; ++i) {
        const std::uint64_t av = a.data[i];
        const std::uint64_t want_alpha = ring.heaviside(ring.sub(av, six));
        const std::uint64_t want_c = ring.mul(want_alpha, ring.sub(six, av));
        const std::uint64_t want_beta = ring.heaviside(av);
        const std::uint64_t want_d = ring.mul(want_beta, ring.add(av, want_c));
        if (alpha.data[i] != want_alpha || cstep.data[i] != want_c ||
            beta.data[i] != want_beta || dstep.data[i] != want_d || out.data[i] != want_d)
            ++bad;
    }
    c.expect_eq<std::size_t>(bad, 0, "relu6 ladder trace mismatches on the 41-point grid");
}

Criterion criterion_protocol_equivalence() {
    Criterion c("protocol equivalence vs plaintext oracles");
    try {
        exhaustive_small_ring(c);
        randomized_wide_ring(c);
        relu6_ladder_trace(c);
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// 3. rewrite cost deltas on the shipped mobilenetv2_cifar pair
// ---------------------------------------------------------------------------

Criterion criterion_rewrite_deltas() {
    Criterion c("rewrite cost deltas, mobilenetv2_cifar");
    try {
        constexpr double kTolPp = 5.0; // percentage points
        constexpr double kFullComm = 79.0, kFullRounds = 63.4;
        constexpr double kPaComm = 43.6;
        constexpr double kRemoveComm = 47.9, kRemoveRounds = 39.8;

        const std::string dir = SHADOWNET_GRAPH_DIR;
        const NetworkGraph orig = parse_graph(read_file(dir + "/mobilenetv2_cifar.orig.json"));
        const NetworkGraph crypto = parse_graph(read_file(dir + "/mobilenetv2_cifar.crypto.json"));

        const CostParams kP{};
        const CostReport ro = network_cost(orig, kP);
        const CostReport rc = network_cost(crypto, kP);
        const auto comm_drop = [&](const CostReport& r) {
            return 100.0 * (1.0 - r.total_bits / ro.total_bits);
        };
        const auto round_drop = [&](const CostReport& r) {
            return 100.0 * (1.0 - static_cast<double>(r.total_rounds) /
                                      static_cast<double>(ro.total_rounds));
        };

        const double full_comm = comm_drop(rc);
        const double full_rounds = round_drop(rc);
        c.expect_near(full_comm, kFullComm, kTolPp, "full pipeline communication drop %");
        c.expect_near(full_rounds, kFullRounds, kTolPp, "full pipeline round drop %");

        const CostReport pa =
            network_cost(rewrite(orig, parse_rewrite_pass("pa_replace(all, 0.5)")).graph, kP);
        const double pa_comm = comm_drop(pa);
        c.expect_near(pa_comm, kPaComm, kTolPp, "pa_replace(all, 0.5) communication drop %");

        const CostReport rm =
            network_cost(rewrite(orig, parse_rewrite_pass("remove_activation(first)")).graph, kP);
        const double rm_comm = comm_drop(rm);
        const double rm_rounds = round_drop(rm);
        c.expect_near(rm_comm, kRemoveComm, kTolPp, "remove_activation(first) communication drop %");
        c.expect_near(rm_rounds, kRemoveRounds, kTolPp, "remove_activation(first) round drop %");

        // directions and orderings are strict
        c.expect(pa_comm > 0 && rm_comm > 0 && full_comm > 0 && rm_rounds > 0 && full_rounds > 0,
                 "all drops are strictly positive");
        c.expect(full_comm > rm_comm && rm_comm > pa_comm,
                 "communication drops order: full > remove-first > pa-50");
        c.expect(full_rounds > rm_rounds, "round drops order: full > remove-first");
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// 4. transcript determinism and transport equivalence
// ---------------------------------------------------------------------------

const char* kFiveLayerDoc = R"({
    "name": "five",
    "input_shape": [8, 8, 3],
    "layers": [
        {"name": "c1", "kind": "conv2d", "inputs": ["input"],
         "params": {"kernel": 3, "stride": 1, "padding": "same", "channels": 4}},
        {"name": "a1", "kind": "relu6", "inputs": ["c1"]},
        {"name": "p1", "kind": "maxpool", "inputs": ["a1"], "params": {"kernel": 2}},
        {"name": "fl", "kind": "flatten", "inputs": ["p1"]},
        {"name": "fc", "kind": "fullyconnected", "inputs": ["fl"], "params": {"channels": 10}}
    ]
})";

Criterion criterion_transcripts() {
    Criterion c("transcript determinism and transport equivalence");
    try {
        const Ring ring(RingParams{64, 67, 13});
        const NetworkGraph g = parse_graph(kFiveLayerDoc);
        const WeightStore w = gen_weights(g, 7);
        const FloatTensor input = random_floats(g.input_shape, 31, 1.0);

        const auto run_inproc = [&](std::uint64_t seed) {
            Session s = Session::open_in_process(seed_from_u64(seed));
            run_secure_inference(s, ring, g, w, input);
            return s.transcript();
        };
        const Transcript t1 = run_inproc(42);
        const Transcript t2 = run_inproc(42);
        std::ostringstream j1, j2;
        t1.write_jsonl(j1);
        t2.write_jsonl(j2);
        c.expect(t1 == t2 && j1.str() == j2.str() && !t1.records.empty(),
                 "equal seeds give byte-identical transcripts");

        Endpoints ep;
        ep.addr = {"127.0.0.1:27431", "127.0.0.1:27432", "127.0.0.1:27433"};
        std::array<Transcript, 3> tcp;
        std::array<std::exception_ptr, 3> errs{};
        std::vector<std::thread> threads;
        for (int p = 0; p < 3; ++p)
            threads.emplace_back([&, p] {
                try {
                    Session s = Session::open_tcp(p, ep, seed_from_u64(42));
                    run_secure_inference(s, ring, g, w, input);
                    tcp[static_cast<std::size_t>(p)] = s.transcript();
                } catch (...) {
                    errs[static_cast<std::size_t>(p)] = std::current_exception();
                }
            });
        for (auto& t : threads) t.join();
        for (int p = 0; p < 3; ++p) {
            if (errs[static_cast<std::size_t>(p)]) {
                try {
                    std::rethrow_exception(errs[static_cast<std::size_t>(p)]);
                } catch (const std::exception& e) {
                    c.expect(false, "tcp party " + std::to_string(p) + ": " + e.what());
                }
                continue;
            }
            std::ostringstream what;
            what << "tcp party " << p << " transcript equals the in-process one";
            c.expect(tcp[static_cast<std::size_t>(p)] == t1, what.str());
        }
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    return c;
}

// ---------------------------------------------------------------------------
// 5. measured transcript structure
// ---------------------------------------------------------------------------

Criterion criterion_measured_structure() {
    Criterion c("measured transcript structure");
    try {
        const Ring ring(RingParams{64, 67, 13});

        {
            Session s = Session::open_in_process(seed_from_u64(404));
            RingTensor a({16, 24}), b({24, 8});
            RandomStream rng(seed_from_u64(1));
            for (auto& v : a.data) v = rng.next();
            for (auto& v : b.data) v = rng.next();
            pi_matmul(s, ring, share(ring, a, s.input_rng()), share(ring, b, s.input_rng()));
            c.expect_eq<std::uint64_t>(s.round_count(), 2, "pi_matmul measured rounds");
        }
        {
            Session s = Session::open_in_process(seed_from_u64(405));
            const RingTensor x = ring.encode(random_floats({10, 10, 3}, 2, 1.0));
            const RingTensor k = ring.encode(random_floats({3, 3, 3, 4}, 3, 1.0));
            pi_conv2d(s, ring, share(ring, x, s.input_rng()), share(ring, k, s.input_rng()), 1, 1);
            c.expect_eq<std::uint64_t>(s.round_count(), 2, "pi_conv2d measured rounds");
        }
        {
            // channel shuffle and avgpool never touch the wire
            const char* doc = R"({
                "name": "local",
                "input_shape": [8, 8, 4],
                "layers": [
                    {"name": "sh", "kind": "channel_shuffle", "inputs": ["input"],
                     "params": {"groups": 2}},
                    {"name": "ap", "kind": "avgpool", "inputs": ["sh"], "params": {"kernel": 2}}
                ]
            })";
            const NetworkGraph g = parse_graph(doc);
            Session s = Session::open_in_process(seed_from_u64(406));
            const InferenceResult res =
                run_secure_inference(s, ring, g, gen_weights(g, 1), random_floats(g.input_shape, 4, 1.0));
            c.expect(res.measured.rounds == 0 && res.measured.bytes == 0 &&
                         s.transcript().records.empty(),
                     "channel shuffle + avgpool leave an empty transcript");
        }
        {
            // element-wise rounds do not scale with tensor size
            const auto rounds_for = [&](std::size_t n, std::uint64_t seed) {
                Session s = Session::open_in_process(seed_from_u64(seed));
                const RingTensor x = ring.encode(random_floats({n}, seed, 4.0));
                pi_relu6(s, ring, share(ring, x, s.input_rng()));
                return s.round_count();
            };
            const std::uint64_t small = rounds_for(16, 407);
            const std::uint64_t large = rounds_for(4096, 408);
            c.expect(small == large, "relu6 measured rounds invariant to size");
            c.expect_eq<std::uint64_t>(small, 8, "relu6 measured rounds");
        }
    } catch (const std::exception& e) {
        c.expect(false, std::string("exception: ") + e.what());
    }
    return c;
}

} // namespace

int main() {
    std::vector<Criterion> crits;
    crits.push_back(criterion_cost_figures());
    crits.push_back(criterion_protocol_equivalence());
    crits.push_back(criterion_rewrite_deltas());
    crits.push_back(criterion_transcripts());
    crits.push_back(criterion_measured_structure());

    bool ok = true;
    for (std::size_t i = 0; i < crits.size(); ++i) {
        const Criterion& c = crits[i];
        std::cout << "criterion " << (i + 1) << " (" << c.label << "): ";
        if (c.failures.empty()) {
            std::cout << "PASS\n";
        } else {
            ok = false;
            std::cout << "FAIL (" << c.failures.size() << " checks), first: " << c.failures.front()
                      << "\n";
        }
    }
    return ok ? 0 : 1;
}
