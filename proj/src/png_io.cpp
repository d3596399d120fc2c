#include "dg/png_io.hpp"

#include <png.h>

#include <cstring>
#include <vector>

namespace dg {

TensorF load_png(const std::string& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str()))
        throw IoError("cannot read PNG " + path + ": " + image.message);

    image.format = PNG_FORMAT_RGB;
    std::vector<unsigned char> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path + ": " + msg);
    }

    const int h = static_cast<int>(image.height);
    const int w = static_cast<int>(image.width);
    TensorF img({3, h, w});
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                img.v[(ch * h + r) * w + c] = buf[(r * w + c) * 3 + ch] / 255.0f;
    return img;
}

void save_png(const TensorF& img, const std::string& path) {
    if (img.shape.size() != 3 || img.shape[0] != 3)
        throw ShapeError("save_png expects [3,H,W], got " + shape_str(img.shape));
    const int h = img.shape[1], w = img.shape[2];

    std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w * 3);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            for (int ch = 0; ch < 3; ++ch)
                buf[(r * w + c) * 3 + ch] = to_byte(img.v[(ch * h + r) * w + c]);

    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(w);
    image.height = static_cast<png_uint_32>(h);
    image.format = PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
        throw IoError("cannot write PNG " + path + ": " + image.message);
}

}  // namespace dg
