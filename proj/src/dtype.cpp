#include "mergelab/dtype.hpp"

#include "mergelab/error.hpp"

#include <bit>
#include <cstring>

namespace mergelab {

std::size_t dtype_width(DType d) {
    switch (d) {
    case DType::f32:
        return 4;
    case DType::f16:
    case DType::bf16:
        return 2;
    }
    return 0;
}

std::string_view dtype_name(DType d) {
    switch (d) {
    case DType::f32:
        return "F32";
    case DType::f16:
        return "F16";
    case DType::bf16:
        return "BF16";
    }
    return "?";
}

std::optional<DType> dtype_from_name(std::string_view name) {
    if (name == "F32") {
        return DType::f32;
    }
    if (name == "F16") {
        return DType::f16;
    }
    if (name == "BF16") {
        return DType::bf16;
    }
    return std::nullopt;
}

float f16_to_f32(std::uint16_t h) {
    const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
    const std::uint32_t exp = (h >> 10) & 0x1Fu;
    const std::uint32_t mant = h & 0x3FFu;
    std::uint32_t bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign; // signed zero
        } else {
            // subnormal: normalize into f32
            std::uint32_t m = mant;
            int e = -1;
            do {
                m <<= 1;
                ++e;
            } while ((m & 0x400u) == 0);
            bits = sign | static_cast<std::uint32_t>(127 - 15 - e) << 23 | ((m & 0x3FFu) << 13);
        }
    } else if (exp == 31) {
        bits = sign | 0x7F800000u | (mant << 13); // inf / nan, payload kept
    } else {
        bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
    }
    return std::bit_cast<float>(bits);
}

std::uint16_t f32_to_f16(float f) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    const std::uint16_t sign = static_cast<std::uint16_t>((bits >> 16) & 0x8000u);
    const std::uint32_t exp = (bits >> 23) & 0xFFu;
    const std::uint32_t mant = bits & 0x7FFFFFu;

    if (exp == 0xFF) {
        if (mant == 0) {
            return sign | 0x7C00u; // inf
        }
        std::uint16_t payload = static_cast<std::uint16_t>(mant >> 13);
        if (payload == 0) {
            payload = 1; // keep it a nan
        }
        return sign | 0x7C00u | payload;
    }

    const int e = static_cast<int>(exp) - 127 + 15;
    if (e >= 31) {
        return sign | 0x7C00u; // overflow to inf
    }
    if (e <= 0) {
        // subnormal or zero in f16
        if (e < -10) {
            return sign; // rounds to zero
        }
        const std::uint32_t full = mant | 0x800000u; // implicit bit
        const int shift = 14 - e;                    // 14..24
        std::uint32_t half = full >> shift;
        const std::uint32_t rem = full & ((1u << shift) - 1);
        const std::uint32_t halfway = 1u << (shift - 1);
        if (rem > halfway || (rem == halfway && (half & 1u))) {
            ++half; // may carry into exponent; that encoding is still correct
        }
        return sign | static_cast<std::uint16_t>(half);
    }

    std::uint16_t out = static_cast<std::uint16_t>((e << 10) | (mant >> 13));
    const std::uint32_t rem = mant & 0x1FFFu;
    if (rem > 0x1000u || (rem == 0x1000u && (out & 1u))) {
        ++out; // carry propagates cleanly, 0x7BFF+1 == 0x7C00 == inf
    }
    return sign | out;
}

float bf16_to_f32(std::uint16_t h) {
    return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
}

std::uint16_t f32_to_bf16(float f) {
    std::uint32_t bits = std::bit_cast<std::uint32_t>(f);
    if ((bits & 0x7F800000u) == 0x7F800000u && (bits & 0x7FFFFFu) != 0) {
        // nan: truncate payload, keep it a nan
        std::uint16_t out = static_cast<std::uint16_t>(bits >> 16);
        if ((out & 0x7Fu) == 0) {
            out |= 0x40u;
        }
        return out;
    }
    const std::uint32_t lsb = (bits >> 16) & 1u;
    bits += 0x7FFFu + lsb; // round to nearest even
    return static_cast<std::uint16_t>(bits >> 16);
}

Eigen::ArrayXf decode_to_f32(const std::uint8_t* data, std::size_t nbytes, DType d) {
    const std::size_t w = dtype_width(d);
    if (nbytes % w != 0) {
        throw UnsupportedDType("byte length not a multiple of dtype width");
    }
    const auto n = static_cast<Eigen::Index>(nbytes / w);
    Eigen::ArrayXf out(n);
    switch (d) {
    case DType::f32:
        std::memcpy(out.data(), data, nbytes);
        break;
    case DType::f16:
        for (Eigen::Index i = 0; i < n; ++i) {
            std::uint16_t h;
            std::memcpy(&h, data + 2 * static_cast<std::size_t>(i), 2);
            out[i] = f16_to_f32(h);
        }
        break;
    case DType::bf16:
        for (Eigen::Index i = 0; i < n; ++i) {
            std::uint16_t h;
            std::memcpy(&h, data + 2 * static_cast<std::size_t>(i), 2);
            out[i] = bf16_to_f32(h);
        }
        break;
    }
    return out;
}

std::vector<std::uint8_t> encode_from_f32(const Eigen::ArrayXf& values, DType d) {
    const auto n = static_cast<std::size_t>(values.size());
    std::vector<std::uint8_t> out(n * dtype_width(d));
    switch (d) {
    case DType::f32:
        std::memcpy(out.data(), values.data(), out.size());
        break;
    case DType::f16:
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint16_t h = f32_to_f16(values[static_cast<Eigen::Index>(i)]);
            std::memcpy(out.data() + 2 * i, &h, 2);
        }
        break;
    case DType::bf16:
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint16_t h = f32_to_bf16(values[static_cast<Eigen::Index>(i)]);
            std::memcpy(out.data() + 2 * i, &h, 2);
        }
        break;
    }
    return out;
}

} // namespace mergelab
