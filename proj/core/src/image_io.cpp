#include "vr4/image_io.hpp"

#include <cstring>
#include <fstream>
#include <iterator>

#include <png.h>

#include "vr4/error.hpp"

namespace vr4 {

namespace {

Frame decode_image(png_image& image, const std::string& origin)
{
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> rgb(PNG_IMAGE_SIZE(image));
    if (png_image_finish_read(&image, nullptr, rgb.data(), 0, nullptr) == 0) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw InputError("cannot decode PNG " + origin + ": " + msg);
    }
    Frame frame;
    frame.width = static_cast<int>(image.width);
    frame.height = static_cast<int>(image.height);
    frame.pixels.resize(static_cast<std::size_t>(frame.width) * frame.height);
    for (std::size_t i = 0; i < frame.pixels.size(); ++i) {
        const unsigned sum = rgb[3 * i] + rgb[3 * i + 1] + rgb[3 * i + 2];
        frame.pixels[i] = static_cast<std::uint8_t>((sum + 1) / 3);
    }
    return frame;
}

} // namespace

Frame decode_png(const std::vector<std::uint8_t>& bytes)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
        throw InputError(std::string("cannot read PNG from memory: ") + image.message);
    }
    return decode_image(image, "<memory>");
}

Frame read_png(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("missing file: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()) == 0) {
        throw InputError("cannot read PNG " + path.string() + ": " + image.message);
    }
    return decode_image(image, path.string());
}

std::vector<std::uint8_t> encode_png(const Frame& frame)
{
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(frame.width);
    image.height = static_cast<png_uint_32>(frame.height);
    image.format = PNG_FORMAT_GRAY;

    png_alloc_size_t size = 0;
    if (png_image_write_to_memory(&image, nullptr, &size, 0, frame.pixels.data(), 0, nullptr) == 0) {
        throw Error(std::string("cannot size PNG: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (png_image_write_to_memory(&image, out.data(), &size, 0, frame.pixels.data(), 0, nullptr) == 0) {
        throw Error(std::string("cannot encode PNG: ") + image.message);
    }
    out.resize(size);
    return out;
}

void write_png(const std::filesystem::path& path, const Frame& frame)
{
    const auto bytes = encode_png(frame);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace vr4
