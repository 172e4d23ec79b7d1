#pragma once

#include <stdexcept>
#include <string>

namespace shadownet {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor shape disagreement (elementwise ops, matmul inner dims, pooling).
struct ShapeError : Error {
    using Error::Error;
};

// Value outside the representable fixed-point range.
struct RangeError : Error {
    using Error::Error;
};

// Misuse of the sharing/protocol API (same-owner reconstruct, duplicate
// edge in a round plan, empty plan).
struct ProtocolError : Error {
    using Error::Error;
};

// Channel establishment / wire failures; names the offending edge.
struct TransportError : Error {
    using Error::Error;
};

// Graph parse or validation failure; message lists every violation.
struct ParseError : Error {
    using Error::Error;
};

// Weight container format problems.
struct FormatError : Error {
    using Error::Error;
};

// Cost analysis cannot price a layer.
struct AnalysisError : Error {
    using Error::Error;
};

} // namespace shadownet
