#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mbtrim/errors.hpp"
#include "mbtrim/prng.hpp"

namespace mbtrim {

using Shape = std::vector<std::size_t>;

inline std::string to_string(const Shape& shape) {
    std::ostringstream out;
    out << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        out << (i ? "," : "") << shape[i];
    }
    out << ']';
    return out.str();
}

inline std::size_t element_count(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline void validate_shape(const Shape& shape) {
    if (shape.empty() || shape.size() > 4) {
        throw ShapeError("tensor rank must be between 1 and 4, got shape " + to_string(shape));
    }
    for (auto d : shape) {
        if (d == 0) {
            throw ShapeError("tensor dimensions must be >= 1, got shape " + to_string(shape));
        }
    }
}

/// Dense row-major tensor of rank 1..4. Storage is an Eigen column array so
/// elementwise arithmetic can be written as array expressions via array().
template <typename Scalar>
class BasicTensor {
public:
    using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
    using value_type = Scalar;

    BasicTensor(Shape shape, Scalar fill) : shape_(std::move(shape)) {
        validate_shape(shape_);
        data_ = Array::Constant(static_cast<Eigen::Index>(element_count(shape_)), fill);
    }

    BasicTensor(Shape shape, std::vector<Scalar> values) : shape_(std::move(shape)) {
        validate_shape(shape_);
        if (values.size() != element_count(shape_)) {
            throw ShapeError("value count " + std::to_string(values.size()) +
                             " does not match shape " + to_string(shape_));
        }
        data_ = Eigen::Map<const Array>(values.data(), static_cast<Eigen::Index>(values.size()));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }

    /// Elements per leading-axis row.
    std::size_t row_size() const noexcept { return size() / shape_.front(); }

    Scalar* data() noexcept { return data_.data(); }
    const Scalar* data() const noexcept { return data_.data(); }
    std::span<Scalar> values() noexcept { return {data_.data(), size()}; }
    std::span<const Scalar> values() const noexcept { return {data_.data(), size()}; }

    Array& array() noexcept { return data_; }
    const Array& array() const noexcept { return data_; }

    Scalar& operator[](std::size_t i) noexcept { return data_[static_cast<Eigen::Index>(i)]; }
    Scalar operator[](std::size_t i) const noexcept { return data_[static_cast<Eigen::Index>(i)]; }

    Scalar& operator()(std::size_t r, std::size_t c) noexcept { return (*this)[r * shape_[1] + c]; }
    Scalar operator()(std::size_t r, std::size_t c) const noexcept { return (*this)[r * shape_[1] + c]; }

    BasicTensor reshaped(Shape shape) const {
        validate_shape(shape);
        if (element_count(shape) != size()) {
            throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
        }
        BasicTensor out = *this;
        out.shape_ = std::move(shape);
        return out;
    }

    bool operator==(const BasicTensor& other) const {
        return shape_ == other.shape_ && std::equal(data(), data() + size(), other.data());
    }

private:
    Shape shape_;
    Array data_;
};

using Tensor = BasicTensor<double>;

template <typename Scalar = double>
BasicTensor<Scalar> create(Shape shape, Scalar fill) {
    return BasicTensor<Scalar>(std::move(shape), fill);
}

template <typename Scalar = double>
BasicTensor<Scalar> zeros_like(const BasicTensor<Scalar>& t) {
    return BasicTensor<Scalar>(t.shape(), Scalar(0));
}

/// Normal(mean, std) samples, two Prng advances per element in row-major order.
template <typename Scalar = double>
BasicTensor<Scalar> randn(Prng& prng, Shape shape, Scalar mean, Scalar std) {
    if (!(std >= Scalar(0))) {
        throw ParameterError("randn: std must be >= 0");
    }
    BasicTensor<Scalar> out(std::move(shape), mean);
    for (auto& v : out.values()) {
        v = mean + std * static_cast<Scalar>(prng.normal());
    }
    return out;
}

/// [m,k] x [k,n]. Each output accumulates over k in ascending order.
template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    BasicTensor<Scalar> c({m, n}, Scalar(0));
    const Scalar* pa = a.data();
    const Scalar* pb = b.data();
    Scalar* pc = c.data();
    // Four output rows share each streamed row of b. Every output element
    // still sees its k products in ascending order.
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
        Scalar* c0 = pc + i * n;
        Scalar* c1 = c0 + n;
        Scalar* c2 = c1 + n;
        Scalar* c3 = c2 + n;
        for (std::size_t p = 0; p < k; ++p) {
            const Scalar a0 = pa[i * k + p];
            const Scalar a1 = pa[(i + 1) * k + p];
            const Scalar a2 = pa[(i + 2) * k + p];
            const Scalar a3 = pa[(i + 3) * k + p];
            const Scalar* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                const Scalar bv = brow[j];
                c0[j] += a0 * bv;
                c1[j] += a1 * bv;
                c2[j] += a2 * bv;
                c3[j] += a3 * bv;
            }
        }
    }
    for (; i < m; ++i) {
        Scalar* crow = pc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const Scalar aip = pa[i * k + p];
            const Scalar* brow = pb + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                crow[j] += aip * brow[j];
            }
        }
    }
    return c;
}

template <typename Scalar>
BasicTensor<Scalar> transpose(const BasicTensor<Scalar>& a) {
    if (a.rank() != 2) {
        throw ShapeError("transpose: expected rank 2, got " + to_string(a.shape()));
    }
    const std::size_t m = a.dim(0), n = a.dim(1);
    BasicTensor<Scalar> t({n, m}, Scalar(0));
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

/// x[B,D] + bias[D] broadcast over rows.
template <typename Scalar>
BasicTensor<Scalar> add_bias(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& bias) {
    if (x.rank() != 2 || bias.rank() != 1 || x.dim(1) != bias.dim(0)) {
        throw ShapeError("add_bias: incompatible shapes " + to_string(x.shape()) + " and " +
                         to_string(bias.shape()));
    }
    BasicTensor<Scalar> out = x;
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            out(i, j) += bias[j];
        }
    }
    return out;
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& x) {
    BasicTensor<Scalar> out = x;
    out.array() = x.array().max(Scalar(0));
    return out;
}

/// 3x3 cross-correlation, stride 1, zero padding 1, plus per-filter bias.
/// Accumulation order per output element: c, kh, kw (after the bias).
template <typename Scalar>
BasicTensor<Scalar> conv2d_forward(const BasicTensor<Scalar>& x, const BasicTensor<Scalar>& w,
                                   const BasicTensor<Scalar>& bias) {
    if (x.rank() != 4 || w.rank() != 4 || bias.rank() != 1) {
        throw ShapeError("conv2d: expected x[B,C,H,W], w[F,C,3,3], bias[F]");
    }
    if (w.dim(2) != 3 || w.dim(3) != 3) {
        throw ShapeError("conv2d: kernel must be 3x3, got " + to_string(w.shape()));
    }
    if (x.dim(1) != w.dim(1)) {
        throw ShapeError("conv2d: channel mismatch between " + to_string(x.shape()) + " and " +
                         to_string(w.shape()));
    }
    if (bias.dim(0) != w.dim(0)) {
        throw ShapeError("conv2d: bias length must equal filter count");
    }
    const std::size_t batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
    const std::size_t filters = w.dim(0);
    BasicTensor<Scalar> out({batch, filters, height, width}, Scalar(0));
    const Scalar* px = x.data();
    const Scalar* pw = w.data();
    Scalar* po = out.data();
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t f = 0; f < filters; ++f) {
            Scalar* plane = po + (b * filters + f) * height * width;
            for (std::size_t i = 0; i < height * width; ++i) {
                plane[i] = bias[f];
            }
            for (std::size_t c = 0; c < channels; ++c) {
                const Scalar* in = px + (b * channels + c) * height * width;
                const Scalar* kernel = pw + (f * channels + c) * 9;
                for (std::size_t kh = 0; kh < 3; ++kh) {
                    for (std::size_t kw = 0; kw < 3; ++kw) {
                        const Scalar tap = kernel[kh * 3 + kw];
                        // output (h, w) reads input (h + kh - 1, w + kw - 1)
                        const std::size_t h0 = kh == 0 ? 1 : 0;
                        const std::size_t h1 = kh == 2 ? height - 1 : height;
                        const std::size_t w0 = kw == 0 ? 1 : 0;
                        const std::size_t w1 = kw == 2 ? width - 1 : width;
                        for (std::size_t h = h0; h < h1; ++h) {
                            const Scalar* src = in + (h + kh - 1) * width;
                            Scalar* dst = plane + h * width;
                            for (std::size_t col = w0; col < w1; ++col) {
                                dst[col] += tap * src[col + kw - 1];
                            }
                        }
                    }
                }
            }
        }
    }
    return out;
}

template <typename Scalar>
struct PoolResult {
    BasicTensor<Scalar> output;
    /// Flat index into the input tensor for each output element.
    std::vector<std::size_t> argmax;
};

/// 2x2 non-overlapping max pooling. Ties go to the smallest flat input index.
template <typename Scalar>
PoolResult<Scalar> maxpool2_forward(const BasicTensor<Scalar>& x) {
    if (x.rank() != 4) {
        throw ShapeError("maxpool2: expected x[B,C,H,W], got " + to_string(x.shape()));
    }
    const std::size_t batch = x.dim(0), channels = x.dim(1), height = x.dim(2), width = x.dim(3);
    if (height % 2 != 0 || width % 2 != 0) {
        throw ShapeError("maxpool2: H and W must be even, got " + to_string(x.shape()));
    }
    const std::size_t oh = height / 2, ow = width / 2;
    PoolResult<Scalar> result{BasicTensor<Scalar>({batch, channels, oh, ow}, Scalar(0)), {}};
    result.argmax.resize(result.output.size());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < batch * channels; ++plane) {
        const std::size_t base = plane * height * width;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j, ++o) {
                // candidates in ascending flat-index order; strict > keeps the first max
                const std::size_t top = base + 2 * i * width + 2 * j;
                const std::size_t cand[4] = {top, top + 1, top + width, top + width + 1};
                std::size_t best = cand[0];
                for (std::size_t q = 1; q < 4; ++q) {
                    if (x[cand[q]] > x[best]) {
                        best = cand[q];
                    }
                }
                result.output[o] = x[best];
                result.argmax[o] = best;
            }
        }
    }
    return result;
}

/// Copies leading-axis rows of x in the order given by idx.
template <typename Scalar>
BasicTensor<Scalar> gather_rows(const BasicTensor<Scalar>& x, std::span<const std::size_t> idx) {
    if (idx.empty()) {
        throw IndexError("gather_rows: index list must be nonempty");
    }
    const std::size_t rows = x.dim(0), stride = x.row_size();
    Shape shape = x.shape();
    shape[0] = idx.size();
    BasicTensor<Scalar> out(std::move(shape), Scalar(0));
    for (std::size_t r = 0; r < idx.size(); ++r) {
        if (idx[r] >= rows) {
            throw IndexError("gather_rows: index " + std::to_string(idx[r]) + " out of range [0," +
                             std::to_string(rows) + ")");
        }
        std::copy_n(x.data() + idx[r] * stride, stride, out.data() + r * stride);
    }
    return out;
}

}  // namespace mbtrim
