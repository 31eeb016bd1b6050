#include "p2img/png.hpp"

#include <array>
#include <cstring>
#include <stdexcept>
#include <string>

namespace p2img {

namespace {

uint32_t crc32(const uint8_t* data, size_t len, uint32_t crc = 0) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t n = 0; n < 256; ++n) {
            uint32_t c = n;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
            t[n] = c;
        }
        return t;
    }();
    crc ^= 0xffffffffu;
    for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
    return crc ^ 0xffffffffu;
}

uint32_t adler32(const uint8_t* data, size_t len) {
    uint32_t a = 1, b = 0;
    for (size_t i = 0; i < len; ++i) {
        a = (a + data[i]) % 65521u;
        b = (b + a) % 65521u;
    }
    return (b << 16) | a;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const std::vector<uint8_t>& b, size_t pos) {
    return (static_cast<uint32_t>(b[pos]) << 24) | (static_cast<uint32_t>(b[pos + 1]) << 16) |
           (static_cast<uint32_t>(b[pos + 2]) << 8) | static_cast<uint32_t>(b[pos + 3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_u32(out, static_cast<uint32_t>(payload.size()));
    size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    put_u32(out, crc32(out.data() + crc_start, out.size() - crc_start));
}

// zlib stream made of stored deflate blocks (max 65535 bytes each).
std::vector<uint8_t> zlib_store(const std::vector<uint8_t>& raw) {
    std::vector<uint8_t> out;
    out.push_back(0x78); // CMF: deflate, 32K window
    out.push_back(0x01); // FLG: no dict, fastest
    size_t pos = 0;
    do {
        size_t n = std::min<size_t>(raw.size() - pos, 65535);
        bool last = pos + n == raw.size();
        out.push_back(last ? 1 : 0);
        out.push_back(static_cast<uint8_t>(n & 0xff));
        out.push_back(static_cast<uint8_t>(n >> 8));
        out.push_back(static_cast<uint8_t>(~n & 0xff));
        out.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
        out.insert(out.end(), raw.begin() + static_cast<long>(pos), raw.begin() + static_cast<long>(pos + n));
        pos += n;
    } while (pos < raw.size());
    put_u32(out, adler32(raw.data(), raw.size()));
    return out;
}

std::vector<uint8_t> zlib_unstore(const uint8_t* data, size_t len) {
    if (len < 6) throw std::invalid_argument("png: truncated zlib stream");
    if ((data[0] & 0x0f) != 8) throw std::invalid_argument("png: unsupported compression method");
    std::vector<uint8_t> out;
    size_t pos = 2;
    for (;;) {
        if (pos >= len) throw std::invalid_argument("png: truncated deflate data");
        uint8_t header = data[pos++];
        if ((header & 0x06) != 0)
            throw std::invalid_argument("png: only stored deflate blocks supported");
        if (pos + 4 > len) throw std::invalid_argument("png: truncated stored block");
        size_t n = data[pos] | (static_cast<size_t>(data[pos + 1]) << 8);
        pos += 4;
        if (pos + n > len) throw std::invalid_argument("png: stored block overruns stream");
        out.insert(out.end(), data + pos, data + pos + n);
        pos += n;
        if (header & 1) break;
    }
    return out;
}

constexpr uint8_t kSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

} // namespace

std::vector<uint8_t> encode_png_rgb8(const Rgb8Image& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<size_t>(img.width) * static_cast<size_t>(img.height) * 3)
        throw std::invalid_argument("png: pixel buffer does not match dimensions");

    std::vector<uint8_t> out(kSignature, kSignature + 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8); // bit depth
    ihdr.push_back(2); // color type: truecolor
    ihdr.push_back(0); // compression
    ihdr.push_back(0); // filter method
    ihdr.push_back(0); // no interlace
    append_chunk(out, "IHDR", ihdr);

    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(img.height) * (1 + static_cast<size_t>(img.width) * 3));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0); // filter: none
        const uint8_t* row = img.pixels.data() + static_cast<size_t>(y) * img.width * 3;
        raw.insert(raw.end(), row, row + static_cast<size_t>(img.width) * 3);
    }
    append_chunk(out, "IDAT", zlib_store(raw));
    append_chunk(out, "IEND", {});
    return out;
}

std::pair<int, int> png_dimensions(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 33 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw std::invalid_argument("png: bad signature");
    if (std::memcmp(bytes.data() + 12, "IHDR", 4) != 0)
        throw std::invalid_argument("png: IHDR not first chunk");
    return {static_cast<int>(get_u32(bytes, 16)), static_cast<int>(get_u32(bytes, 20))};
}

Rgb8Image decode_png_rgb8(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
        throw std::invalid_argument("png: bad signature");

    Rgb8Image img;
    std::vector<uint8_t> idat;
    size_t pos = 8;
    bool seen_ihdr = false, seen_iend = false;
    while (pos + 12 <= bytes.size()) {
        uint32_t len = get_u32(bytes, pos);
        std::string type(bytes.begin() + static_cast<long>(pos + 4), bytes.begin() + static_cast<long>(pos + 8));
        size_t payload = pos + 8;
        if (payload + len + 4 > bytes.size()) throw std::invalid_argument("png: truncated chunk");
        if (type == "IHDR") {
            if (len != 13) throw std::invalid_argument("png: bad IHDR");
            img.width = static_cast<int>(get_u32(bytes, payload));
            img.height = static_cast<int>(get_u32(bytes, payload + 4));
            if (bytes[payload + 8] != 8 || bytes[payload + 9] != 2)
                throw std::invalid_argument("png: only 8-bit RGB supported");
            if (bytes[payload + 12] != 0) throw std::invalid_argument("png: interlace unsupported");
            seen_ihdr = true;
        } else if (type == "IDAT") {
            idat.insert(idat.end(), bytes.begin() + static_cast<long>(payload),
                        bytes.begin() + static_cast<long>(payload + len));
        } else if (type == "IEND") {
            seen_iend = true;
            break;
        }
        pos = payload + len + 4;
    }
    if (!seen_ihdr) throw std::invalid_argument("png: missing IHDR");
    if (!seen_iend) throw std::invalid_argument("png: missing IEND");

    std::vector<uint8_t> raw = zlib_unstore(idat.data(), idat.size());
    size_t stride = 1 + static_cast<size_t>(img.width) * 3;
    if (raw.size() != stride * static_cast<size_t>(img.height))
        throw std::invalid_argument("png: scanline data size mismatch");
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y) {
        if (raw[static_cast<size_t>(y) * stride] != 0)
            throw std::invalid_argument("png: only filter 0 supported");
        std::memcpy(img.pixels.data() + static_cast<size_t>(y) * img.width * 3,
                    raw.data() + static_cast<size_t>(y) * stride + 1,
                    static_cast<size_t>(img.width) * 3);
    }
    return img;
}

} // namespace p2img
