#include "shadownet/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "shadownet/costmodel.hpp"
#include "shadownet/errors.hpp"
#include "shadownet/netgraph.hpp"
#include "shadownet/secure_eval.hpp"

namespace shadownet {

namespace {

struct RingFlags {
    unsigned bits = 64;
    unsigned field = 67;
    unsigned scale = 13;

    RingParams params() const { return RingParams{bits, field, scale}; }
};

void add_ring_flags(CLI::App* cmd, RingFlags& rf) {
    cmd->add_option("--bits", rf.bits, "ring width l (8..64)");
    cmd->add_option("--field", rf.field, "field size p of the comparison subprotocol");
    cmd->add_option("--scale", rf.scale, "fixed-point fractional bits");
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

void write_text(const std::string& text, const std::string& out) {
    if (out.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream os(out, std::ios::binary);
    if (!os) throw ParseError("cannot open '" + out + "' for writing");
    os << text;
}

NetworkGraph load_graph(const std::string& path) { return parse_graph(read_file(path)); }

bool has_batchnorm(const NetworkGraph& g) {
    return std::any_of(g.layers.begin(), g.layers.end(), [](const LayerSpec& l) {
        return l.kind == LayerKind::BatchNorm;
    });
}

Endpoints parse_endpoints(const std::string& csv) {
    Endpoints ep;
    std::stringstream ss(csv);
    std::string item;
    std::size_t i = 0;
    while (std::getline(ss, item, ',')) {
        if (i >= kNumParties) throw TransportError("--endpoints takes exactly three host:port entries");
        ep.addr[i++] = item;
    }
    if (i != kNumParties) throw TransportError("--endpoints takes exactly three host:port entries");
    return ep;
}

// Layers whose secure evaluation truncates shares; each contributes at most
// one ULP of deviation against the fixed-point oracle.
std::size_t truncation_depth(const NetworkGraph& g) {
    std::size_t d = 0;
    for (const LayerSpec& l : g.layers) {
        switch (l.kind) {
            case LayerKind::Conv2d:
            case LayerKind::DwConv2d:
            case LayerKind::FullyConnected:
            case LayerKind::LeakyRelu:
            case LayerKind::AvgPool:
            case LayerKind::GlobalAvgPool: ++d; break;
            case LayerKind::PartialActivation:
                if (l.inner == ActivationKind::LeakyRelu) ++d;
                break;
            default: break;
        }
    }
    return d;
}

std::string render_tensor(const FloatTensor& t) {
    std::ostringstream ss;
    ss << std::setprecision(10);
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (i) ss << ' ';
        ss << t.data[i];
    }
    return ss.str();
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) ss << 'x';
        ss << shape[i];
    }
    return ss.str();
}

int cmd_analyze(const std::string& graph_path, const RingFlags& rf, const std::string& format,
                const std::string& out) {
    const NetworkGraph g = load_graph(graph_path);
    const CostReport report = network_cost(g, CostParams::from_ring(rf.params()));
    write_text(format == "json" ? report.to_json() + "\n" : report.to_text(), out);
    return 0;
}

int cmd_rewrite(const std::string& graph_path, const std::vector<std::string>& passes,
                const std::string& out) {
    NetworkGraph g = load_graph(graph_path);
    bool missed = false;
    for (const std::string& text : passes) {
        const RewritePass pass = parse_rewrite_pass(text);
        RewriteResult res = rewrite(g, pass);
        if (res.matched == 0) {
            std::cerr << "warning: pass '" << text << "' matched no layers\n";
            missed = true;
        }
        g = std::move(res.graph);
    }
    const std::string text = serialize_graph(g);
    parse_graph(text); // the rewritten graph must still validate
    write_text(text, out);
    return missed ? 2 : 0;
}

int cmd_gen_weights(const std::string& graph_path, std::uint64_t seed, const std::string& out) {
    const NetworkGraph g = load_graph(graph_path);
    if (out.empty()) throw ParseError("gen-weights needs --out");
    save_weights(gen_weights(g, seed), out);
    return 0;
}

std::string render_run(const InferenceResult& res, const std::string& format) {
    if (format == "json") {
        nlohmann::json doc;
        doc["shape"] = res.output.shape;
        doc["output"] = res.output.data;
        doc["measured"] = {{"rounds", res.measured.rounds}, {"bytes", res.measured.bytes}};
        doc["modeled"] = {{"rounds", res.modeled.total_rounds},
                          {"bytes", res.modeled.total_bytes()}};
        return doc.dump(2) + "\n";
    }
    std::ostringstream ss;
    ss << "output shape: " << shape_string(res.output.shape) << "\n";
    ss << "output: " << render_tensor(res.output) << "\n";
    ss << "measured: rounds=" << res.measured.rounds << " bytes=" << res.measured.bytes << "\n";
    ss << "modeled: rounds=" << res.modeled.total_rounds << " bytes=" << std::setprecision(10)
       << res.modeled.total_bytes() << "\n";
    return ss.str();
}

int cmd_run(const std::string& graph_path, const std::string& weights_path,
            const std::string& input_path, std::uint64_t seed, const RingFlags& rf,
            const std::string& transport, int party, const std::string& endpoints_csv,
            const std::string& format, const std::string& out) {
    NetworkGraph g = load_graph(graph_path);
    WeightStore w = load_weights(weights_path);
    if (has_batchnorm(g)) std::tie(g, w) = fold_batchnorm(g, w);

    FloatTensor input;
    if (!input_path.empty()) {
        input = load_weights(input_path).at("input");
    } else {
        // no input file: deterministic placeholder drawn from the seed
        input = FloatTensor(g.input_shape);
        RandomStream rng(derive_seed(seed_from_u64(seed), "cli-input"));
        for (auto& v : input.data)
            v = static_cast<double>(static_cast<float>(rng.next_centered_unit()));
        std::cerr << "note: no --input given, using a seeded random input\n";
    }

    const Ring ring(rf.params());
    Session session = [&] {
        if (transport == "tcp") {
            if (party < 0) throw TransportError("tcp transport needs --party");
            const Endpoints ep =
                endpoints_csv.empty() ? Endpoints::from_env() : parse_endpoints(endpoints_csv);
            return Session::open_tcp(party, ep, seed_from_u64(seed));
        }
        if (party >= 0) throw TransportError("in-process transport forbids --party");
        return Session::open_in_process(seed_from_u64(seed));
    }();

    const InferenceResult res = run_secure_inference(session, ring, g, w, input);
    write_text(render_run(res, format), out);
    return 0;
}

int cmd_compare(const std::string& graph_path, const std::string& weights_path,
                std::size_t samples, std::uint64_t seed, const RingFlags& rf,
                const std::string& format, const std::string& out) {
    NetworkGraph g = load_graph(graph_path);
    WeightStore w = weights_path.empty() ? gen_weights(g, seed) : load_weights(weights_path);
    if (has_batchnorm(g)) std::tie(g, w) = fold_batchnorm(g, w);

    const Ring ring(rf.params());
    const std::size_t budget = std::max<std::size_t>(truncation_depth(g), 0);
    RandomStream rng(derive_seed(seed_from_u64(seed), "compare-input"));

    std::uint64_t worst = 0;
    std::vector<std::uint64_t> per_sample;
    for (std::size_t i = 0; i < samples; ++i) {
        FloatTensor input(g.input_shape);
        for (auto& v : input.data)
            v = static_cast<double>(static_cast<float>(rng.next_centered_unit()));
        const RingTensor oracle = eval_fixed(g, w, ring, input);
        Session session = Session::open_in_process(seed_from_u64(seed + i));
        const InferenceResult res = run_secure_inference(session, ring, g, w, input);
        std::uint64_t ulp = 0;
        for (std::size_t k = 0; k < oracle.numel(); ++k) {
            const std::int64_t d = ring.to_signed(ring.sub(res.output_ring.data[k], oracle.data[k]));
            ulp = std::max<std::uint64_t>(ulp, static_cast<std::uint64_t>(d < 0 ? -d : d));
        }
        per_sample.push_back(ulp);
        worst = std::max(worst, ulp);
    }
    const bool ok = worst <= budget;

    if (format == "json") {
        nlohmann::json doc;
        doc["samples"] = samples;
        doc["per_sample_ulp"] = per_sample;
        doc["max_ulp"] = worst;
        doc["budget_ulp"] = budget;
        doc["verdict"] = ok ? "PASS" : "FAIL";
        write_text(doc.dump(2) + "\n", out);
    } else {
        std::ostringstream ss;
        ss << "samples: " << samples << "\n";
        ss << "max ulp deviation: " << worst << " (budget " << budget << ")\n";
        ss << "verdict: " << (ok ? "PASS" : "FAIL") << "\n";
        write_text(ss.str(), out);
    }
    return ok ? 0 : 1;
}

} // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"three-party secure inference engine"};
    app.require_subcommand(1);

    RingFlags rf;
    std::string graph_path, weights_path, input_path, format = "text", out, transport = "inproc";
    std::string endpoints_csv;
    std::uint64_t seed = 1;
    std::size_t samples = 3;
    int party = -1;
    std::vector<std::string> passes;

    CLI::App* analyze = app.add_subcommand("analyze", "analytic cost report for a graph");
    analyze->add_option("--graph", graph_path, "graph JSON")->required();
    add_ring_flags(analyze, rf);
    analyze->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
    analyze->add_option("--out", out, "write the report here instead of stdout");

    CLI::App* rewrite_cmd = app.add_subcommand("rewrite", "apply rewrite passes to a graph");
    rewrite_cmd->add_option("--graph", graph_path, "graph JSON")->required();
    rewrite_cmd->add_option("--pass", passes, "pass spec, e.g. pa_replace(second,0.5)");
    rewrite_cmd->add_option("--out", out, "write the rewritten graph here");

    CLI::App* run = app.add_subcommand("run", "secure inference over three parties");
    run->add_option("--graph", graph_path, "graph JSON")->required();
    run->add_option("--weights", weights_path, "weight container")->required();
    run->add_option("--input", input_path, "input container with one entry 'input'");
    run->add_option("--seed", seed, "session seed");
    add_ring_flags(run, rf);
    run->add_option("--transport", transport)->check(CLI::IsMember({"inproc", "tcp"}));
    run->add_option("--party", party, "party id, tcp transport only")->check(CLI::Range(0, 2));
    run->add_option("--endpoints", endpoints_csv, "p0,p1,p2 as host:port (else SHADOWNET_P* env)");
    run->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
    run->add_option("--out", out);

    CLI::App* compare = app.add_subcommand("compare", "secure run vs fixed-point oracle");
    compare->add_option("--graph", graph_path, "graph JSON")->required();
    compare->add_option("--weights", weights_path, "weight container (default: seeded random)");
    compare->add_option("--samples", samples, "number of random inputs");
    compare->add_option("--seed", seed);
    add_ring_flags(compare, rf);
    compare->add_option("--format", format)->check(CLI::IsMember({"text", "json"}));
    compare->add_option("--out", out);

    CLI::App* genw = app.add_subcommand("gen-weights", "seeded random weights for a graph");
    genw->add_option("--graph", graph_path, "graph JSON")->required();
    genw->add_option("--seed", seed);
    genw->add_option("--out", out, "output container path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (analyze->parsed()) return cmd_analyze(graph_path, rf, format, out);
        if (rewrite_cmd->parsed()) return cmd_rewrite(graph_path, passes, out);
        if (run->parsed())
            return cmd_run(graph_path, weights_path, input_path, seed, rf, transport, party,
                           endpoints_csv, format, out);
        if (compare->parsed())
            return cmd_compare(graph_path, weights_path, samples, seed, rf, format, out);
        if (genw->parsed()) return cmd_gen_weights(graph_path, seed, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

int cli_main(const std::vector<std::string>& args) {
    std::vector<std::string> argv_s;
    argv_s.push_back("shadownet");
    argv_s.insert(argv_s.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    argv.reserve(argv_s.size());
    for (const std::string& a : argv_s) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

} // namespace shadownet
