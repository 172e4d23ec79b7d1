#pragma once

#include <cstddef>
#include <vector>

#include "shadownet/ring.hpp"

// Structural tensor operations shared by the plaintext oracles and the
// secure path. Spatial tensors are laid out h x w x c (channels last,
// row-major); matrices are rows x cols. Everything here is a pure index
// permutation or gather, so applying it to each share half independently
// commutes with reconstruction.

namespace shadownet {

inline std::size_t conv_out_dim(std::size_t in, std::size_t f, std::size_t stride,
                                std::size_t pad) {
    if (in + 2 * pad < f) throw ShapeError("kernel larger than padded input");
    return (in + 2 * pad - f) / stride + 1;
}

// "same" padding for stride-1 odd kernels.
inline std::size_t same_padding(std::size_t f) { return (f - 1) / 2; }

template <class T>
TensorT<T> reshape(const TensorT<T>& x, std::vector<std::size_t> shape) {
    if (TensorT<T>::numel_of(shape) != x.numel())
        throw ShapeError("reshape changes element count");
    return TensorT<T>(std::move(shape), x.data);
}

template <class T>
TensorT<T> flatten(const TensorT<T>& x) {
    return TensorT<T>({x.numel()}, x.data);
}

// Lowers an h x w x c image to a (oh*ow) x (f*f*c) patch matrix. Patch
// column order is (kh, kw, ic), matching a kernel stored [f, f, c, o] and
// flattened to (f*f*c) x o.
template <class T>
TensorT<T> im2col(const TensorT<T>& x, std::size_t f, std::size_t stride, std::size_t pad) {
    if (x.shape.size() != 3) throw ShapeError("im2col expects h x w x c input");
    const std::size_t h = x.shape[0], w = x.shape[1], c = x.shape[2];
    const std::size_t oh = conv_out_dim(h, f, stride, pad);
    const std::size_t ow = conv_out_dim(w, f, stride, pad);
    TensorT<T> out({oh * ow, f * f * c});
    std::size_t row = 0;
    for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox, ++row) {
            T* dst = out.data.data() + row * f * f * c;
            for (std::size_t kh = 0; kh < f; ++kh) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + kh) -
                                          static_cast<std::ptrdiff_t>(pad);
                for (std::size_t kw = 0; kw < f; ++kw) {
                    const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kw) -
                                              static_cast<std::ptrdiff_t>(pad);
                    T* cell = dst + (kh * f + kw) * c;
                    if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                        ix >= static_cast<std::ptrdiff_t>(w)) {
                        for (std::size_t ic = 0; ic < c; ++ic) cell[ic] = T{};
                    } else {
                        const T* src = x.data.data() + (static_cast<std::size_t>(iy) * w +
                                                        static_cast<std::size_t>(ix)) * c;
                        for (std::size_t ic = 0; ic < c; ++ic) cell[ic] = src[ic];
                    }
                }
            }
        }
    }
    return out;
}

inline RingTensor matmul(const Ring& ring, const RingTensor& a, const RingTensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw ShapeError("matmul inner dimensions disagree");
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    RingTensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t t = 0; t < k; ++t) {
            const std::uint64_t av = a.data[i * k + t];
            if (av == 0) continue;
            const std::uint64_t* brow = b.data.data() + t * n;
            std::uint64_t* orow = out.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    for (auto& v : out.data) v &= ring.mask();
    return out;
}

inline FloatTensor matmul(const FloatTensor& a, const FloatTensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw ShapeError("matmul inner dimensions disagree");
    const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
    FloatTensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a.data[i * k + t];
            for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += av * b.data[t * n + j];
        }
    return out;
}

template <class T>
TensorT<T> slice_channels(const TensorT<T>& x, std::size_t c0, std::size_t c1) {
    if (x.shape.empty()) throw ShapeError("slice_channels on rank-0 tensor");
    const std::size_t c = x.shape.back();
    if (c0 > c1 || c1 > c) throw ShapeError("channel slice out of range");
    std::vector<std::size_t> shape = x.shape;
    shape.back() = c1 - c0;
    TensorT<T> out(shape);
    const std::size_t rows = x.numel() / c;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t i = c0; i < c1; ++i)
            out.data[r * (c1 - c0) + (i - c0)] = x.data[r * c + i];
    return out;
}

template <class T>
TensorT<T> concat_channels(const std::vector<TensorT<T>>& parts) {
    if (parts.empty()) throw ShapeError("concat of zero tensors");
    std::vector<std::size_t> lead(parts[0].shape.begin(), parts[0].shape.end() - 1);
    std::size_t ctotal = 0;
    for (const auto& p : parts) {
        if (p.shape.empty() ||
            !std::equal(lead.begin(), lead.end(), p.shape.begin(), p.shape.end() - 1))
            throw ShapeError("concat operands disagree on leading dimensions");
        ctotal += p.shape.back();
    }
    std::vector<std::size_t> shape = lead;
    shape.push_back(ctotal);
    TensorT<T> out(shape);
    const std::size_t rows = out.numel() / ctotal;
    for (std::size_t r = 0; r < rows; ++r) {
        std::size_t off = 0;
        for (const auto& p : parts) {
            const std::size_t pc = p.shape.back();
            for (std::size_t i = 0; i < pc; ++i)
                out.data[r * ctotal + off + i] = p.data[r * pc + i];
            off += pc;
        }
    }
    return out;
}

// ShuffleNet channel shuffle: view channels as groups x (c/groups),
// transpose, flatten.
template <class T>
TensorT<T> channel_shuffle(const TensorT<T>& x, std::size_t groups) {
    const std::size_t c = x.shape.back();
    if (groups == 0 || c % groups != 0)
        throw ShapeError("channel count not divisible by shuffle groups");
    const std::size_t per = c / groups;
    TensorT<T> out(x.shape);
    const std::size_t rows = x.numel() / c;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t oc = 0; oc < c; ++oc) {
            const std::size_t g = oc % groups, j = oc / groups;
            out.data[r * c + oc] = x.data[r * c + g * per + j];
        }
    return out;
}

// Element t (in kh*f + kw order) of every f x f pooling window; output is
// oh x ow x c. Pooling uses no padding and requires exact coverage.
template <class T>
TensorT<T> pool_window_element(const TensorT<T>& x, std::size_t f, std::size_t stride,
                               std::size_t t) {
    if (x.shape.size() != 3) throw ShapeError("pooling expects h x w x c input");
    const std::size_t h = x.shape[0], w = x.shape[1], c = x.shape[2];
    if ((h < f) || (w < f) || (h - f) % stride != 0 || (w - f) % stride != 0)
        throw ShapeError("pooling window does not tile the input");
    const std::size_t oh = (h - f) / stride + 1, ow = (w - f) / stride + 1;
    const std::size_t kh = t / f, kw = t % f;
    TensorT<T> out({oh, ow, c});
    for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
            const T* src = x.data.data() + ((oy * stride + kh) * w + (ox * stride + kw)) * c;
            T* dst = out.data.data() + (oy * ow + ox) * c;
            for (std::size_t ic = 0; ic < c; ++ic) dst[ic] = src[ic];
        }
    return out;
}

} // namespace shadownet
