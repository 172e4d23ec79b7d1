#include "shadownet/transport.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <set>
#include <thread>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "shadownet/errors.hpp"

namespace shadownet {

namespace {

std::string edge_name(PartyId from, PartyId to) {
    return "P" + std::to_string(from) + "->P" + std::to_string(to);
}

void check_party(PartyId p) {
    if (p < 0 || p >= kNumParties) throw ProtocolError("party id out of range");
}

std::string json_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\') out.push_back('\\');
        out.push_back(c);
    }
    return out;
}

} // namespace

MeasuredCost Transcript::measured_cost(std::optional<std::string_view> tag) const {
    MeasuredCost cost;
    std::set<std::uint64_t> rounds;
    for (const auto& r : records) {
        if (tag && r.tag != *tag) continue;
        rounds.insert(r.round);
        cost.bytes += r.bytes;
    }
    cost.rounds = rounds.size();
    return cost;
}

void Transcript::write_jsonl(std::ostream& os) const {
    for (const auto& r : records) {
        os << "{\"round\":" << r.round << ",\"from\":" << r.from << ",\"to\":" << r.to
           << ",\"bytes\":" << r.bytes << ",\"tag\":\"" << json_escape(r.tag) << "\"}\n";
    }
}

Endpoints Endpoints::from_env() {
    Endpoints ep;
    const char* names[3] = {"SHADOWNET_P0", "SHADOWNET_P1", "SHADOWNET_P2"};
    for (int i = 0; i < 3; ++i) {
        const char* v = std::getenv(names[i]);
        if (!v || !*v)
            throw TransportError(std::string("missing endpoint variable ") + names[i]);
        ep.addr[i] = v;
    }
    return ep;
}

// ---------------------------------------------------------------------------
// Socket plumbing (tcp-loopback mode)
// ---------------------------------------------------------------------------

namespace {

struct Fd {
    int fd = -1;
    Fd() = default;
    explicit Fd(int f) : fd(f) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    Fd(Fd&& o) noexcept : fd(o.fd) { o.fd = -1; }
    Fd& operator=(Fd&& o) noexcept {
        if (this != &o) {
            reset();
            std::swap(fd, o.fd);
        }
        return *this;
    }
    ~Fd() { reset(); }
    void reset() {
        if (fd >= 0) ::close(fd);
        fd = -1;
    }
    explicit operator bool() const { return fd >= 0; }
};

std::pair<std::string, std::uint16_t> split_host_port(const std::string& addr) {
    auto pos = addr.rfind(':');
    if (pos == std::string::npos)
        throw TransportError("endpoint '" + addr + "' is not host:port");
    const std::string host = addr.substr(0, pos);
    const int port = std::atoi(addr.c_str() + pos + 1);
    if (port <= 0 || port > 65535)
        throw TransportError("endpoint '" + addr + "' has an invalid port");
    return {host, static_cast<std::uint16_t>(port)};
}

sockaddr_in resolve(const std::string& addr) {
    auto [host, port] = split_host_port(addr);
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (host.empty() || host == "*") {
        sa.sin_addr.s_addr = htonl(INADDR_ANY);
        return sa;
    }
    if (inet_pton(AF_INET, host.c_str(), &sa.sin_addr) == 1) return sa;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || !res)
        throw TransportError("cannot resolve endpoint host '" + host + "'");
    sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
    return sa;
}

void write_all(int fd, const void* buf, std::size_t len, PartyId from, PartyId to) {
    const char* p = static_cast<const char*>(buf);
    while (len > 0) {
        const ssize_t n = ::send(fd, p, len, MSG_NOSIGNAL);
        if (n <= 0) throw TransportError("send failed on edge " + edge_name(from, to));
        p += n;
        len -= static_cast<std::size_t>(n);
    }
}

void read_all(int fd, void* buf, std::size_t len, PartyId from, PartyId to) {
    char* p = static_cast<char*>(buf);
    while (len > 0) {
        const ssize_t n = ::recv(fd, p, len, 0);
        if (n <= 0) throw TransportError("recv failed on edge " + edge_name(from, to));
        p += n;
        len -= static_cast<std::size_t>(n);
    }
}

// Frame: u32 LE payload length, u8 tag length, tag bytes, payload bytes.
void send_frame(int fd, const Message& m) {
    if (m.tag.size() > 255) throw ProtocolError("message tag longer than 255 bytes");
    std::vector<std::uint8_t> head(5 + m.tag.size());
    const std::uint32_t len = static_cast<std::uint32_t>(m.payload.size());
    head[0] = len & 0xff;
    head[1] = (len >> 8) & 0xff;
    head[2] = (len >> 16) & 0xff;
    head[3] = (len >> 24) & 0xff;
    head[4] = static_cast<std::uint8_t>(m.tag.size());
    std::memcpy(head.data() + 5, m.tag.data(), m.tag.size());
    write_all(fd, head.data(), head.size(), m.from, m.to);
    if (!m.payload.empty()) write_all(fd, m.payload.data(), m.payload.size(), m.from, m.to);
}

Message recv_frame(int fd, PartyId from, PartyId to) {
    std::uint8_t head[5];
    read_all(fd, head, 5, from, to);
    const std::uint32_t len = static_cast<std::uint32_t>(head[0]) |
                              (static_cast<std::uint32_t>(head[1]) << 8) |
                              (static_cast<std::uint32_t>(head[2]) << 16) |
                              (static_cast<std::uint32_t>(head[3]) << 24);
    Message m;
    m.from = from;
    m.to = to;
    m.tag.resize(head[4]);
    if (head[4] > 0) read_all(fd, m.tag.data(), head[4], from, to);
    m.payload.resize(len);
    if (len > 0) read_all(fd, m.payload.data(), len, from, to);
    return m;
}

} // namespace

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

struct Session::Impl {
    TransportKind kind = TransportKind::InProcess;
    PartyId local = -1;
    std::uint64_t round = 0;
    Transcript transcript;
    std::array<std::array<std::uint64_t, 3>, 3> edge_bytes{};

    std::array<CommonRandomness, 3> pair_cr; // index: 3 - a - b for pair {a,b}
    std::unique_ptr<RandomStream> producer_rng;
    std::unique_ptr<RandomStream> input_rng;

    // tcp mode: full-duplex socket per peer (index = peer id)
    std::array<Fd, 3> peer;

    void seed(const Seed256& master) {
        pair_cr[3 - 0 - 1] = CommonRandomness{derive_seed(master, "cr-pair-01"), 0};
        pair_cr[3 - 0 - 2] = CommonRandomness{derive_seed(master, "cr-pair-02"), 0};
        pair_cr[3 - 1 - 2] = CommonRandomness{derive_seed(master, "cr-pair-12"), 0};
        producer_rng = std::make_unique<RandomStream>(derive_seed(master, "crypto-producer"));
        input_rng = std::make_unique<RandomStream>(derive_seed(master, "input-sharing"));
    }
};

Session::Session() : impl_(std::make_unique<Impl>()) {}
Session::Session(Session&&) noexcept = default;
Session& Session::operator=(Session&&) noexcept = default;
Session::~Session() = default;

Session Session::open_in_process(const Seed256& master_seed) {
    Session s;
    s.impl_->kind = TransportKind::InProcess;
    s.impl_->seed(master_seed);
    return s;
}

Session Session::open_tcp(PartyId local_party, const Endpoints& endpoints,
                          const Seed256& master_seed, int timeout_ms) {
    check_party(local_party);
    Session s;
    Impl& im = *s.impl_;
    im.kind = TransportKind::TcpLoopback;
    im.local = local_party;
    im.seed(master_seed);

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);

    // Convention: for pair {i, j} with i < j, party i listens and j connects.
    Fd listener;
    if (local_party < 2) {
        listener = Fd(::socket(AF_INET, SOCK_STREAM, 0));
        if (!listener) throw TransportError("cannot create listening socket");
        int one = 1;
        setsockopt(listener.fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in sa = resolve(endpoints.addr[local_party]);
        sa.sin_addr.s_addr = htonl(INADDR_ANY);
        if (bind(listener.fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) != 0)
            throw TransportError("cannot bind " + endpoints.addr[local_party]);
        if (listen(listener.fd, 2) != 0) throw TransportError("listen failed");
    }

    for (PartyId peer = 0; peer < local_party; ++peer) {
        // connect to lower-id parties, retrying until the deadline
        sockaddr_in sa = resolve(endpoints.addr[peer]);
        for (;;) {
            Fd fd(::socket(AF_INET, SOCK_STREAM, 0));
            if (!fd) throw TransportError("cannot create socket");
            if (connect(fd.fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) == 0) {
                const std::uint8_t hello = static_cast<std::uint8_t>(local_party);
                write_all(fd.fd, &hello, 1, local_party, peer);
                int one = 1;
                setsockopt(fd.fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
                im.peer[peer] = std::move(fd);
                break;
            }
            if (std::chrono::steady_clock::now() >= deadline)
                throw TransportError("connect timeout on edge " +
                                     edge_name(local_party, peer) + " (party " +
                                     std::to_string(peer) + " absent)");
            std::this_thread::sleep_for(std::chrono::milliseconds(25));
        }
    }

    for (PartyId peer = local_party + 1; peer < kNumParties; ++peer) {
        pollfd pf{listener.fd, POLLIN, 0};
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0 || poll(&pf, 1, static_cast<int>(left.count())) <= 0)
            throw TransportError("accept timeout on edge " + edge_name(peer, local_party) +
                                 " (party " + std::to_string(peer) + " absent)");
        Fd fd(::accept(listener.fd, nullptr, nullptr));
        if (!fd) throw TransportError("accept failed");
        std::uint8_t hello = 0;
        read_all(fd.fd, &hello, 1, peer, local_party);
        if (hello >= kNumParties || im.peer[hello])
            throw TransportError("unexpected handshake from peer");
        int one = 1;
        setsockopt(fd.fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        im.peer[hello] = std::move(fd);
    }

    for (PartyId p = 0; p < kNumParties; ++p)
        if (p != local_party && !im.peer[p])
            throw TransportError("channel to party " + std::to_string(p) + " not established");
    return s;
}

std::vector<Message> Session::exchange(std::vector<Message> plan) {
    Impl& im = *impl_;
    if (plan.empty()) throw ProtocolError("a round must carry at least one message");
    std::set<std::pair<PartyId, PartyId>> edges;
    for (const auto& m : plan) {
        check_party(m.from);
        check_party(m.to);
        if (m.from == m.to) throw ProtocolError("message from a party to itself");
        if (!edges.insert({m.from, m.to}).second)
            throw ProtocolError("duplicate edge " + edge_name(m.from, m.to) +
                                " in one round plan");
    }

    if (im.kind == TransportKind::TcpLoopback) {
        // Send own messages from a helper thread while receiving, so a
        // bidirectional round cannot deadlock on full socket buffers.
        std::exception_ptr send_error;
        std::thread writer([&] {
            try {
                for (const auto& m : plan)
                    if (m.from == im.local) send_frame(im.peer[m.to].fd, m);
            } catch (...) {
                send_error = std::current_exception();
            }
        });
        try {
            for (auto& m : plan) {
                if (m.to != im.local) continue;
                Message got = recv_frame(im.peer[m.from].fd, m.from, m.to);
                if (got.tag != m.tag || got.payload.size() != m.payload.size())
                    throw TransportError("frame mismatch on edge " + edge_name(m.from, m.to) +
                                         " (expected tag '" + m.tag + "', got '" + got.tag +
                                         "')");
                m.payload = std::move(got.payload);
            }
        } catch (...) {
            writer.join();
            throw;
        }
        writer.join();
        if (send_error) std::rethrow_exception(send_error);
    }

    for (const auto& m : plan) {
        im.transcript.records.push_back(
            {im.round, m.from, m.to, static_cast<std::uint64_t>(m.payload.size()), m.tag});
        im.edge_bytes[m.from][m.to] += m.payload.size();
    }
    ++im.round;
    return plan;
}

std::uint64_t Session::round_count() const { return impl_->round; }
const Transcript& Session::transcript() const { return impl_->transcript; }

std::uint64_t Session::edge_bytes(PartyId from, PartyId to) const {
    check_party(from);
    check_party(to);
    return impl_->edge_bytes[from][to];
}

TransportKind Session::kind() const { return impl_->kind; }
PartyId Session::local_party() const { return impl_->local; }

CommonRandomness& Session::pair_cr(PartyId a, PartyId b) {
    check_party(a);
    check_party(b);
    if (a == b) throw ProtocolError("pair randomness needs two distinct parties");
    return impl_->pair_cr[3 - a - b];
}

RandomStream& Session::producer_rng() { return *impl_->producer_rng; }
RandomStream& Session::input_rng() { return *impl_->input_rng; }

} // namespace shadownet
