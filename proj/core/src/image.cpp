#include "troupe/image.hpp"

#include "troupe/common.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>

namespace troupe {

namespace {

void put_u32be(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32be(const uint8_t* p) {
    return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
           (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void write_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    put_u32be(out, static_cast<uint32_t>(payload.size()));
    std::vector<uint8_t> body(type, type + 4);
    body.insert(body.end(), payload.begin(), payload.end());
    out.insert(out.end(), body.begin(), body.end());
    const uint32_t crc = static_cast<uint32_t>(crc32(0, body.data(), static_cast<uInt>(body.size())));
    put_u32be(out, crc);
}

std::vector<uint8_t> deflate_all(const std::vector<uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK) {
        throw io_error("png: deflate failed");
    }
    out.resize(bound);
    return out;
}

std::vector<uint8_t> inflate_all(const std::vector<uint8_t>& comp, size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    if (uncompress(out.data(), &len, comp.data(), static_cast<uLong>(comp.size())) != Z_OK || len != expected) {
        throw format_error("png: inflate failed or size mismatch");
    }
    return out;
}

void write_png_raw(const std::string& path, int h, int w, int channels, const std::vector<uint8_t>& pixels) {
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h) * (1 + static_cast<size_t>(w) * channels));
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);  // filter: none
        const uint8_t* row = pixels.data() + static_cast<size_t>(y) * w * channels;
        raw.insert(raw.end(), row, row + static_cast<size_t>(w) * channels);
    }
    std::vector<uint8_t> file = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<uint8_t> ihdr;
    put_u32be(ihdr, static_cast<uint32_t>(w));
    put_u32be(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);                                     // bit depth
    ihdr.push_back(channels == 3 ? 2 : 0);                 // color type
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    write_chunk(file, "IHDR", ihdr);
    write_chunk(file, "IDAT", deflate_all(raw));
    write_chunk(file, "IEND", {});
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw io_error("cannot open for writing: " + path);
    }
    f.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!f) {
        throw io_error("write failed: " + path);
    }
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

std::vector<uint8_t> read_png_raw(const std::string& path, int& h, int& w, int& channels) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw io_error("cannot open: " + path);
    }
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0) {
        throw format_error("not a PNG file: " + path);
    }
    size_t pos = 8;
    bool seen_ihdr = false;
    std::vector<uint8_t> idat;
    h = w = 0;
    channels = 0;
    while (pos + 8 <= file.size()) {
        const uint32_t len = get_u32be(&file[pos]);
        if (pos + 12 + len > file.size()) {
            throw format_error("png: truncated chunk in " + path);
        }
        const char* type = reinterpret_cast<const char*>(&file[pos + 4]);
        const uint8_t* payload = &file[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = static_cast<int>(get_u32be(payload));
            h = static_cast<int>(get_u32be(payload + 4));
            const int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || (color != 2 && color != 0) || interlace != 0) {
                throw format_error("png: unsupported format (need 8-bit gray/RGB, no interlace): " + path);
            }
            channels = color == 2 ? 3 : 1;
            seen_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (!seen_ihdr || idat.empty()) {
        throw format_error("png: missing IHDR or IDAT in " + path);
    }
    const size_t stride = static_cast<size_t>(w) * channels;
    std::vector<uint8_t> raw = inflate_all(idat, static_cast<size_t>(h) * (stride + 1));
    std::vector<uint8_t> pixels(static_cast<size_t>(h) * stride);
    const int bpp = channels;
    for (int y = 0; y < h; ++y) {
        const uint8_t filter = raw[static_cast<size_t>(y) * (stride + 1)];
        const uint8_t* src = &raw[static_cast<size_t>(y) * (stride + 1) + 1];
        uint8_t* dst = &pixels[static_cast<size_t>(y) * stride];
        const uint8_t* up = y > 0 ? &pixels[static_cast<size_t>(y - 1) * stride] : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
            const int b = up ? up[i] : 0;
            const int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw format_error("png: unknown filter in " + path);
            }
            dst[i] = static_cast<uint8_t>(v & 0xff);
        }
    }
    return pixels;
}

}  // namespace

int64_t Mask::count() const {
    int64_t n = 0;
    for (uint8_t b : v) {
        n += b ? 1 : 0;
    }
    return n;
}

Mask Mask::dilated(int radius) const {
    Mask out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!at(y, x)) continue;
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    if (dy * dy + dx * dx > radius * radius) continue;
                    const int ny = y + dy, nx = x + dx;
                    if (ny >= 0 && ny < h && nx >= 0 && nx < w) {
                        out.at(ny, nx) = 1;
                    }
                }
            }
        }
    }
    return out;
}

void write_png(const std::string& path, const Tensor& image) {
    require(image.ndim() == 3 && image.dim(2) == 3, "write_png: expects [H,W,3]");
    const int h = image.dim(0), w = image.dim(1);
    std::vector<uint8_t> px(static_cast<size_t>(h) * w * 3);
    for (int64_t i = 0; i < image.numel(); ++i) {
        px[static_cast<size_t>(i)] = quantize_byte(image[i]);
    }
    write_png_raw(path, h, w, 3, px);
}

Tensor read_png(const std::string& path) {
    int h, w, ch;
    const auto px = read_png_raw(path, h, w, ch);
    if (ch != 3) {
        throw format_error("png: expected RGB image: " + path);
    }
    Tensor out({h, w, 3});
    for (int64_t i = 0; i < out.numel(); ++i) {
        out[i] = byte_to_float(px[static_cast<size_t>(i)]);
    }
    return out;
}

void write_png_mask(const std::string& path, const Mask& m) {
    std::vector<uint8_t> px(m.v.size());
    for (size_t i = 0; i < m.v.size(); ++i) {
        px[i] = m.v[i] ? 255 : 0;
    }
    write_png_raw(path, m.h, m.w, 1, px);
}

Mask read_png_mask(const std::string& path) {
    int h, w, ch;
    const auto px = read_png_raw(path, h, w, ch);
    if (ch != 1) {
        throw format_error("png: expected grayscale mask: " + path);
    }
    Mask m(h, w);
    for (size_t i = 0; i < px.size(); ++i) {
        m.v[i] = px[i] >= 128 ? 1 : 0;
    }
    return m;
}

// ---------------------------------------------------------------------------
// GIF
// ---------------------------------------------------------------------------

namespace {

class LzwWriter {
public:
    explicit LzwWriter(std::vector<uint8_t>& out) : out_(out) {}

    void put_code(int code, int bits) {
        acc_ |= static_cast<uint32_t>(code) << nbits_;
        nbits_ += bits;
        while (nbits_ >= 8) {
            block_.push_back(static_cast<uint8_t>(acc_ & 0xff));
            acc_ >>= 8;
            nbits_ -= 8;
            if (block_.size() == 255) flush_block();
        }
    }

    void finish() {
        if (nbits_ > 0) {
            block_.push_back(static_cast<uint8_t>(acc_ & 0xff));
            acc_ = 0;
            nbits_ = 0;
            if (block_.size() == 255) flush_block();
        }
        if (!block_.empty()) flush_block();
        out_.push_back(0);  // block terminator
    }

private:
    void flush_block() {
        out_.push_back(static_cast<uint8_t>(block_.size()));
        out_.insert(out_.end(), block_.begin(), block_.end());
        block_.clear();
    }

    std::vector<uint8_t>& out_;
    std::vector<uint8_t> block_;
    uint32_t acc_ = 0;
    int nbits_ = 0;
};

// 6x6x6 color cube. index = 16 + 36r + 6g + b over levels 0..5 would be the
// xterm convention; here we just use a dense cube at the start of the table.
int cube_index(float r, float g, float b) {
    auto level = [](float x) {
        int v = static_cast<int>(std::lround(static_cast<double>(x) * 5.0));
        return v < 0 ? 0 : (v > 5 ? 5 : v);
    };
    return (level(r) * 6 + level(g)) * 6 + level(b);
}

}  // namespace

void write_gif(const std::string& path, const Tensor& video, int delay_cs) {
    require(video.ndim() == 4 && video.dim(3) == 3, "write_gif: expects [F,H,W,3]");
    const int F = video.dim(0), H = video.dim(1), W = video.dim(2);
    std::vector<uint8_t> out;
    const char hdr[] = "GIF89a";
    out.insert(out.end(), hdr, hdr + 6);
    // logical screen descriptor, global color table 256 entries
    out.push_back(static_cast<uint8_t>(W & 0xff));
    out.push_back(static_cast<uint8_t>(W >> 8));
    out.push_back(static_cast<uint8_t>(H & 0xff));
    out.push_back(static_cast<uint8_t>(H >> 8));
    out.push_back(0xf7);  // GCT, 8 bits/entry
    out.push_back(0);     // background
    out.push_back(0);     // aspect
    for (int i = 0; i < 256; ++i) {
        if (i < 216) {
            out.push_back(static_cast<uint8_t>((i / 36) * 51));
            out.push_back(static_cast<uint8_t>(((i / 6) % 6) * 51));
            out.push_back(static_cast<uint8_t>((i % 6) * 51));
        } else {
            out.push_back(0);
            out.push_back(0);
            out.push_back(0);
        }
    }
    // netscape loop extension
    const uint8_t loop[] = {0x21, 0xff, 0x0b, 'N', 'E', 'T', 'S', 'C', 'A', 'P', 'E',
                            '2',  '.',  '0',  3,   1,   0,   0,   0};
    out.insert(out.end(), loop, loop + sizeof(loop));

    for (int f = 0; f < F; ++f) {
        // graphic control
        out.push_back(0x21);
        out.push_back(0xf9);
        out.push_back(4);
        out.push_back(0);
        out.push_back(static_cast<uint8_t>(delay_cs & 0xff));
        out.push_back(static_cast<uint8_t>(delay_cs >> 8));
        out.push_back(0);
        out.push_back(0);
        // image descriptor
        out.push_back(0x2c);
        out.push_back(0);
        out.push_back(0);
        out.push_back(0);
        out.push_back(0);
        out.push_back(static_cast<uint8_t>(W & 0xff));
        out.push_back(static_cast<uint8_t>(W >> 8));
        out.push_back(static_cast<uint8_t>(H & 0xff));
        out.push_back(static_cast<uint8_t>(H >> 8));
        out.push_back(0);  // no local table

        // LZW, min code size 8
        out.push_back(8);
        LzwWriter lzw(out);
        const int kClear = 256, kEnd = 257;
        int next_code = 258;
        int code_bits = 9;
        // dictionary: (prefix_code, symbol) -> code
        std::vector<int32_t> dict(4096 * 256, -1);
        auto reset_dict = [&]() {
            std::fill(dict.begin(), dict.end(), -1);
            next_code = 258;
            code_bits = 9;
        };
        reset_dict();
        lzw.put_code(kClear, code_bits);
        int prefix = -1;
        const float* fr = video.ptr() + static_cast<int64_t>(f) * H * W * 3;
        for (int64_t i = 0; i < static_cast<int64_t>(H) * W; ++i) {
            const int sym = cube_index(fr[i * 3], fr[i * 3 + 1], fr[i * 3 + 2]);
            if (prefix < 0) {
                prefix = sym;
                continue;
            }
            const int64_t key = static_cast<int64_t>(prefix) * 256 + sym;
            if (dict[static_cast<size_t>(key)] >= 0) {
                prefix = dict[static_cast<size_t>(key)];
            } else {
                lzw.put_code(prefix, code_bits);
                if (next_code < 4096) {
                    dict[static_cast<size_t>(key)] = next_code++;
                    if (next_code > (1 << code_bits) && code_bits < 12) {
                        ++code_bits;
                    }
                } else {
                    lzw.put_code(kClear, code_bits);
                    reset_dict();
                }
                prefix = sym;
            }
        }
        if (prefix >= 0) {
            lzw.put_code(prefix, code_bits);
        }
        lzw.put_code(kEnd, code_bits);
        lzw.finish();
    }
    out.push_back(0x3b);  // trailer

    std::ofstream fo(path, std::ios::binary);
    if (!fo) {
        throw io_error("cannot open for writing: " + path);
    }
    fo.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!fo) {
        throw io_error("write failed: " + path);
    }
}

Tensor frame_grid(const Tensor& video, int cols) {
    require(video.ndim() == 4 && video.dim(3) == 3, "frame_grid: expects [F,H,W,3]");
    const int F = video.dim(0), H = video.dim(1), W = video.dim(2);
    const int rows = (F + cols - 1) / cols;
    Tensor out = Tensor::zeros({rows * H, cols * W, 3});
    for (int f = 0; f < F; ++f) {
        const int r = f / cols, c = f % cols;
        for (int y = 0; y < H; ++y) {
            const float* src = video.ptr() + ((static_cast<int64_t>(f) * H + y) * W) * 3;
            float* dst = out.ptr() + ((static_cast<int64_t>(r * H + y) * (cols * W)) + c * W) * 3;
            std::copy(src, src + static_cast<int64_t>(W) * 3, dst);
        }
    }
    return out;
}

}  // namespace troupe
