#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "shadownet/prg.hpp"
#include "shadownet/sharing.hpp"

namespace shadownet {

// Three logical parties: P0 model owner, P1 data owner, P2 crypto producer.
using PartyId = int;
inline constexpr int kNumParties = 3;

enum class TransportKind { InProcess, TcpLoopback };

struct TranscriptRecord {
    std::uint64_t round = 0;
    PartyId from = 0;
    PartyId to = 0;
    std::uint64_t bytes = 0;
    std::string tag;

    bool operator==(const TranscriptRecord&) const = default;
};

struct MeasuredCost {
    std::uint64_t rounds = 0;
    std::uint64_t bytes = 0;

    bool operator==(const MeasuredCost&) const = default;
};

// Ordered log of every message of a session. Replays under the same seeds
// are byte-identical, in both transport modes.
struct Transcript {
    std::vector<TranscriptRecord> records;

    // rounds = distinct round indices among matching records; bytes = sum
    // of payload lengths. Frame overhead is never counted.
    MeasuredCost measured_cost(std::optional<std::string_view> tag = std::nullopt) const;

    // One {round, from, to, bytes, tag} JSON object per line.
    void write_jsonl(std::ostream& os) const;

    bool operator==(const Transcript&) const = default;
};

struct Message {
    PartyId from = 0;
    PartyId to = 0;
    std::string tag;
    std::vector<std::uint8_t> payload;
};

struct Endpoints {
    std::array<std::string, 3> addr; // host:port per party

    // Reads SHADOWNET_P0 / SHADOWNET_P1 / SHADOWNET_P2.
    static Endpoints from_env();
};

// Three-party communication context: ordered FIFO channels between every
// pair, a monotone round counter, per-edge byte accounting and the full
// transcript. One exchange call is one round: the maximal set of messages
// with no data dependence, delivered together.
//
// The engine evaluates the protocol as one deterministic simulation. In
// tcp-loopback mode each process runs that same simulation and physically
// transmits / receives the messages on its own edges, so measured
// transcripts are identical across modes by construction.
class Session {
public:
    static Session open_in_process(const Seed256& master_seed);
    static Session open_tcp(PartyId local_party, const Endpoints& endpoints,
                            const Seed256& master_seed, int timeout_ms = 10000);

    Session(Session&&) noexcept;
    Session& operator=(Session&&) noexcept;
    ~Session();

    // Delivers one round of messages. The plan may not contain (sender,
    // receiver) twice and may not be empty.
    std::vector<Message> exchange(std::vector<Message> plan);

    std::uint64_t round_count() const;
    const Transcript& transcript() const;
    std::uint64_t edge_bytes(PartyId from, PartyId to) const;
    TransportKind kind() const;
    PartyId local_party() const; // -1 in in-process mode

    // Pairwise common randomness (seeded from the master seed).
    CommonRandomness& pair_cr(PartyId a, PartyId b);
    // P2's private randomness for triple dealing and the ideal oracle.
    RandomStream& producer_rng();
    // Randomness used to share inputs and weights into the session.
    RandomStream& input_rng();

private:
    Session();
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace shadownet
