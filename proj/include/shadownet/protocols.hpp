#pragma once

#include <cstddef>
#include <vector>

#include "shadownet/activation.hpp"
#include "shadownet/ring.hpp"
#include "shadownet/sharing.hpp"
#include "shadownet/transport.hpp"

// Three-party layer protocols over additive shares. Multiplications are
// Beaver-assisted (P2 deals, P0/P1 open masked operands); comparisons go
// through an ideal DReLU oracle whose analytic price is charged by the
// cost model. Elementwise protocols batch every element of a tensor into
// shared exchange rounds, never one round per element.

namespace shadownet {

enum class MulKind { Elementwise, MatMul };

struct MulDims {
    MulKind kind = MulKind::Elementwise;
    std::vector<std::size_t> lhs;
    std::vector<std::size_t> rhs;
};

struct BeaverTriple {
    MulKind kind = MulKind::Elementwise;
    SharePair u, v, w; // reconstruct(w) = reconstruct(u) * reconstruct(v)
};

// One exchange round tagged "offline". The mask shares U_j, V_j come from
// P2's pairwise seed with party j, so only the W shares travel: P2 sends
// W_0 to P0 and W_1 to P1.
std::vector<BeaverTriple> deal_triples(Session& s, const Ring& ring,
                                       const std::vector<MulDims>& dims);

struct MulJob {
    MulKind kind = MulKind::Elementwise;
    SharePair lhs, rhs;
};

// Batched Beaver multiplication: exactly two rounds for the whole batch,
// the "offline" dealing plus one "matmul-open" round where P0 and P1 cross
// their shares of A - U and B - V. No truncation; callers rescale.
std::vector<SharePair> mul_batch(Session& s, const Ring& ring, const std::vector<MulJob>& jobs);

SharePair pi_matmul(Session& s, const Ring& ring, const SharePair& a, const SharePair& b);

// x is h x w x c, kernel f x f x c x o; output oh x ow x o via im2col +
// pi_matmul. Output keeps double scale; caller truncates.
SharePair pi_conv2d(Session& s, const Ring& ring, const SharePair& x, const SharePair& k,
                    std::size_t stride, std::size_t pad);

// Ideal comparison oracle: fresh shares of H(a), the Heaviside bit
// (1 iff signed(a) >= 0). P0/P1 re-randomize with zero shares and submit;
// the oracle reconstructs, evaluates, reshares. Tag "ideal-drelu" on all
// four messages; two rounds per call regardless of batch size.
std::vector<SharePair> pi_drelu(Session& s, const Ring& ring, const std::vector<SharePair>& as);
SharePair pi_drelu(Session& s, const Ring& ring, const SharePair& a);

// H(a) * a. The multiplier is a bare bit, so the product keeps the input's
// scale and the result is exact.
SharePair pi_relu(Session& s, const Ring& ring, const SharePair& a);

// Intermediates of the ReLU6 ladder, kept for verification.
struct Relu6Trace {
    SharePair alpha, c, beta, d;
};

// alpha = DReLU(a - 6); c = alpha*(6 - a); beta = DReLU(a);
// d = beta*(a + c); output d + fresh zero shares. Exact.
SharePair pi_relu6(Session& s, const Ring& ring, const SharePair& a,
                   Relu6Trace* trace = nullptr);

// alpha = DReLU(a); output a*(0.1 + 0.9*alpha) truncated once, plus fresh
// zero shares. Within 1 ULP of max(0.1a, a).
SharePair pi_leaky_relu(Session& s, const Ring& ring, const SharePair& a);

// f*f - 1 sequential stages of max(m, e) = e + H(m - e)*(m - e); every
// window advances in parallel within a stage. Exact.
SharePair pi_maxpool(Session& s, const Ring& ring, const SharePair& x, std::size_t f,
                     std::size_t stride);

// Local: window sum, public multiply by encode(1/f^2), truncate. Zero
// rounds, zero bytes.
SharePair avgpool(const Ring& ring, const SharePair& x, std::size_t f, std::size_t stride);

// Channels [0, k) through the inner protocol, channels [k, C) copied;
// order preserved. ratio 0 (or inner None) is the identity and sends
// nothing.
SharePair pi_partial_activation(Session& s, const Ring& ring, const SharePair& x,
                                const PartialActivationSpec& spec);

// Dispatch by kind; None returns its input.
SharePair pi_activation(Session& s, const Ring& ring, const SharePair& a, ActivationKind kind);

} // namespace shadownet
