#include "wsic/png_io.hpp"

#include <png.h>

#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

namespace wsic {

namespace {

struct WriteSink {
    std::vector<std::uint8_t>* out;
};

void write_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* sink = static_cast<WriteSink*>(png_get_io_ptr(png));
    sink->out->insert(sink->out->end(), data, data + length);
}

void flush_callback(png_structp) {}

struct ReadSource {
    const std::vector<std::uint8_t>* in;
    std::size_t offset;
};

void read_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* src = static_cast<ReadSource*>(png_get_io_ptr(png));
    if (src->offset + length > src->in->size()) png_error(png, "truncated PNG stream");
    std::memcpy(data, src->in->data() + src->offset, length);
    src->offset += length;
}

struct ErrorState {
    char message[256] = {};
};

[[noreturn]] void error_callback(png_structp png, png_const_charp message) {
    auto* state = static_cast<ErrorState*>(png_get_error_ptr(png));
    std::strncpy(state->message, message, sizeof(state->message) - 1);
    png_longjmp(png, 1);
}

void warning_callback(png_structp, png_const_charp) {}

std::vector<std::uint8_t> encode_rows(int width, int height, int bit_depth, int color_type,
                                      const std::vector<std::vector<std::uint8_t>>& rows) {
    std::vector<std::uint8_t> out;
    WriteSink sink{&out};
    ErrorState state;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &state, error_callback, warning_callback);
    require(png != nullptr, ErrorCode::Io, "png: cannot create write struct");
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::Io, std::string("png: ") + state.message);
    }
    {
        png_set_write_fn(png, &sink, write_callback, flush_callback);
        png_set_compression_level(png, 6);
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                     color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        for (const auto& row : rows) png_write_row(png, row.data());
        png_write_end(png, nullptr);
    }
    png_destroy_write_struct(&png, &info);
    return out;
}

// Decodes to 8-bit gray or RGB.
Raster decode_any(const std::vector<std::uint8_t>& bytes) {
    require(bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0, ErrorCode::Io, "png: bad signature");
    ReadSource src{&bytes, 0};
    ErrorState state;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &state, error_callback, warning_callback);
    require(png != nullptr, ErrorCode::Io, "png: cannot create read struct");
    png_infop info = png_create_info_struct(png);
    Raster out;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw Error(ErrorCode::Io, std::string("png: ") + state.message);
    }
    {
        png_set_read_fn(png, &src, read_callback);
        png_read_info(png, info);
        const int color = png_get_color_type(png, info);
        const int depth = png_get_bit_depth(png, info);
        if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
        if (depth == 16) png_set_strip_16(png);
        if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
        png_read_update_info(png, info);
        const int width = static_cast<int>(png_get_image_width(png, info));
        const int height = static_cast<int>(png_get_image_height(png, info));
        const int channels = png_get_channels(png, info);
        if (channels != 1 && channels != 3) png_error(png, "unsupported channel layout");
        out = Raster(width, height, channels);
        rows.resize(height);
        for (int y = 0; y < height; ++y) {
            rows[y] = out.data().data() + static_cast<std::size_t>(y) * width * channels;
        }
        png_read_image(png, rows.data());
        png_read_end(png, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

} // namespace

std::vector<std::uint8_t> encode_png(const Raster& raster) {
    require(!raster.empty(), ErrorCode::InvalidArgument, "cannot encode an empty raster");
    const std::size_t row_bytes = static_cast<std::size_t>(raster.width()) * raster.channels();
    std::vector<std::vector<std::uint8_t>> rows(raster.height());
    for (int y = 0; y < raster.height(); ++y) {
        auto begin = raster.data().begin() + static_cast<std::ptrdiff_t>(y * row_bytes);
        rows[y].assign(begin, begin + static_cast<std::ptrdiff_t>(row_bytes));
    }
    return encode_rows(raster.width(), raster.height(), 8,
                       raster.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, rows);
}

std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask) {
    const int w = mask.width();
    std::vector<std::vector<std::uint8_t>> rows(mask.height(), std::vector<std::uint8_t>((w + 7) / 8, 0));
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < w; ++x) {
            if (mask.get(x, y)) rows[y][x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
        }
    }
    return encode_rows(w, mask.height(), 1, PNG_COLOR_TYPE_GRAY, rows);
}

Raster decode_png(const std::vector<std::uint8_t>& bytes) { return decode_any(bytes); }

BinaryMask decode_mask_png(const std::vector<std::uint8_t>& bytes) {
    const Raster r = decode_any(bytes);
    require(r.channels() == 1, ErrorCode::Io, "mask PNG must be grayscale");
    BinaryMask mask(r.width(), r.height());
    for (std::size_t i = 0; i < mask.size(); ++i) mask.bits()[i] = r.data()[i] != 0 ? 1 : 0;
    return mask;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::Io, "short write to " + path.string());
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
    write_file_bytes(path, encode_png(raster));
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
    write_file_bytes(path, encode_mask_png(mask));
}

Raster read_png(const std::filesystem::path& path) { return decode_png(read_file_bytes(path)); }

BinaryMask read_mask_png(const std::filesystem::path& path) { return decode_mask_png(read_file_bytes(path)); }

Raster downsample(const Raster& raster, int factor) {
    require(factor >= 1, ErrorCode::InvalidArgument, "downsample factor must be >= 1");
    if (factor == 1) return raster;
    const int w = std::max(1, raster.width() / factor);
    const int h = std::max(1, raster.height() / factor);
    const int c = raster.channels();
    Raster out(w, h, c);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                unsigned sum = 0, count = 0;
                for (int dy = 0; dy < factor && y * factor + dy < raster.height(); ++dy) {
                    for (int dx = 0; dx < factor && x * factor + dx < raster.width(); ++dx) {
                        sum += raster.at(x * factor + dx, y * factor + dy, ch);
                        ++count;
                    }
                }
                out.at(x, y, ch) = static_cast<std::uint8_t>((sum + count / 2) / count);
            }
        }
    }
    return out;
}

} // namespace wsic
