#include "t2ue/data/png_io.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace t2ue {

namespace {

constexpr uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
constexpr int kZlibLevel = 6;

void put_u32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>((x >> 24) & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
    v.push_back(static_cast<uint8_t>(x & 0xff));
}

uint32_t get_u32(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void append_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& data) {
    put_u32(out, static_cast<uint32_t>(data.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, out.data() + start, static_cast<uInt>(4 + data.size()));
    put_u32(out, crc);
}

}  // namespace

void write_png_rgb8(const std::string& path, const ImageU8& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.rgb.size() != static_cast<size_t>(img.width) * static_cast<size_t>(img.height) * 3)
        throw std::invalid_argument("png: bad image buffer");

    const size_t stride = static_cast<size_t>(img.width) * 3;
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * static_cast<size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = img.rgb.data() + static_cast<size_t>(y) * stride;
        raw.insert(raw.end(), row, row + stride);
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> comp(bound);
    if (compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), kZlibLevel) != Z_OK)
        throw std::runtime_error("png: deflate failed");
    comp.resize(bound);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(img.width));
    put_u32(ihdr, static_cast<uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type: truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);

    std::vector<uint8_t> out(kSig, kSig + 8);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", comp);
    append_chunk(out, "IEND", {});

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("png: cannot open for write: " + path);
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) throw std::runtime_error("png: write failed: " + path);
}

ImageU8 read_png_rgb8(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("png: cannot open: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() < 8 || std::memcmp(buf.data(), kSig, 8) != 0)
        throw std::runtime_error("png: bad signature: " + path);

    ImageU8 img;
    std::vector<uint8_t> idat;
    bool have_ihdr = false;
    size_t pos = 8;
    while (pos + 8 <= buf.size()) {
        uint32_t len = get_u32(buf.data() + pos);
        if (pos + 12 + len > buf.size()) throw std::runtime_error("png: truncated chunk: " + path);
        const char* type = reinterpret_cast<const char*>(buf.data() + pos + 4);
        const uint8_t* data = buf.data() + pos + 8;
        uint32_t stored_crc = get_u32(buf.data() + pos + 8 + len);
        uint32_t crc = crc32(0L, Z_NULL, 0);
        crc = crc32(crc, buf.data() + pos + 4, 4 + len);
        if (crc != stored_crc) throw std::runtime_error("png: chunk crc mismatch: " + path);
        std::string t(type, 4);
        if (t == "IHDR") {
            if (len != 13) throw std::runtime_error("png: bad IHDR: " + path);
            img.width = static_cast<int>(get_u32(data));
            img.height = static_cast<int>(get_u32(data + 4));
            int depth = data[8], color = data[9], interlace = data[12];
            if (depth != 8 || color != 2) throw std::runtime_error("png: only 8-bit RGB supported: " + path);
            if (interlace != 0) throw std::runtime_error("png: interlaced images unsupported: " + path);
            have_ihdr = true;
        } else if (t == "IDAT") {
            idat.insert(idat.end(), data, data + len);
        } else if (t == "IEND") {
            break;
        } else if (!(type[0] & 0x20)) {
            throw std::runtime_error("png: unsupported critical chunk " + t + ": " + path);
        }
        pos += 12 + len;
    }
    if (!have_ihdr || idat.empty()) throw std::runtime_error("png: missing IHDR/IDAT: " + path);

    const size_t stride = static_cast<size_t>(img.width) * 3;
    std::vector<uint8_t> raw((stride + 1) * static_cast<size_t>(img.height));
    uLongf rawlen = static_cast<uLongf>(raw.size());
    int rc = uncompress(raw.data(), &rawlen, idat.data(), static_cast<uLong>(idat.size()));
    if (rc != Z_OK || rawlen != raw.size()) throw std::runtime_error("png: inflate failed: " + path);

    img.rgb.assign(stride * static_cast<size_t>(img.height), 0);
    std::vector<uint8_t> prev(stride, 0);
    for (int y = 0; y < img.height; ++y) {
        const uint8_t* src = raw.data() + static_cast<size_t>(y) * (stride + 1);
        uint8_t filter = src[0];
        const uint8_t* line = src + 1;
        uint8_t* dst = img.rgb.data() + static_cast<size_t>(y) * stride;
        for (size_t x = 0; x < stride; ++x) {
            int a = x >= 3 ? dst[x - 3] : 0;   // left
            int b = prev[x];                   // up
            int c = x >= 3 ? prev[x - 3] : 0;  // up-left
            int v = line[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: {
                    int p = a + b - c;
                    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
                    v += (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : c);
                    break;
                }
                default: throw std::runtime_error("png: bad filter byte: " + path);
            }
            dst[x] = static_cast<uint8_t>(v & 0xff);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

Tensor<float> image_to_float(const ImageU8& img) {
    Tensor<float> t({3, img.height, img.width});
    const int hw = img.height * img.width;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const uint8_t* px = img.rgb.data() + (static_cast<size_t>(y) * img.width + x) * 3;
            for (int c = 0; c < 3; ++c)
                t.data[c * hw + y * img.width + x] = static_cast<float>(px[c]) / 255.0f;
        }
    return t;
}

ImageU8 float_to_image(const Tensor<float>& chw) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) throw std::invalid_argument("float_to_image: expected (3,H,W)");
    ImageU8 img;
    img.height = chw.dim(1);
    img.width = chw.dim(2);
    img.rgb.resize(static_cast<size_t>(img.height) * img.width * 3);
    const int hw = img.height * img.width;
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            uint8_t* px = img.rgb.data() + (static_cast<size_t>(y) * img.width + x) * 3;
            for (int c = 0; c < 3; ++c) {
                double v = static_cast<double>(chw.data[c * hw + y * img.width + x]) * 255.0;
                long r = std::lround(v);
                if (r < 0) r = 0;
                if (r > 255) r = 255;
                px[c] = static_cast<uint8_t>(r);
            }
        }
    return img;
}

}  // namespace t2ue
