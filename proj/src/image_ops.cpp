#include "im2mesh/image_ops.hpp"

namespace im2mesh {

Image resize_image(const Image& img, int h, int w) {
    if (h == img.height && w == img.width) return img;
    Image out(h, w, img.channels);
    double sy = static_cast<double>(img.height) / h;
    double sx = static_cast<double>(img.width) / w;
    for (int r = 0; r < h; ++r) {
        double fy = (r + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        double wy = fy - y0;
        int y1 = std::min(y0 + 1, img.height - 1);
        y0 = std::max(y0, 0);
        for (int c = 0; c < w; ++c) {
            double fx = (c + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            double wx = fx - x0;
            int x1 = std::min(x0 + 1, img.width - 1);
            x0 = std::max(x0, 0);
            for (int ch = 0; ch < img.channels; ++ch) {
                double v00 = img.at(y0, x0)[ch], v01 = img.at(y0, x1)[ch];
                double v10 = img.at(y1, x0)[ch], v11 = img.at(y1, x1)[ch];
                out.at(r, c)[ch] = lerp(lerp(v00, v01, wx), lerp(v10, v11, wx), wy);
            }
        }
    }
    return out;
}

Image downsample2x(const Image& img) {
    if (img.height % 2 || img.width % 2)
        throw std::invalid_argument("downsample2x: dimensions must be even");
    Image out(img.height / 2, img.width / 2, img.channels);
    for (int r = 0; r < out.height; ++r) {
        for (int c = 0; c < out.width; ++c) {
            for (int ch = 0; ch < img.channels; ++ch) {
                out.at(r, c)[ch] = 0.25 * (img.at(2 * r, 2 * c)[ch] + img.at(2 * r, 2 * c + 1)[ch] +
                                           img.at(2 * r + 1, 2 * c)[ch] +
                                           img.at(2 * r + 1, 2 * c + 1)[ch]);
            }
        }
    }
    return out;
}

Image composite_over_black(const Image& rgb, const Image& alpha) {
    if (rgb.height != alpha.height || rgb.width != alpha.width || rgb.channels != 3 ||
        alpha.channels != 1)
        throw std::invalid_argument("composite_over_black: shape mismatch");
    Image out = rgb;
    for (int r = 0; r < rgb.height; ++r)
        for (int c = 0; c < rgb.width; ++c)
            for (int ch = 0; ch < 3; ++ch) out.at(r, c)[ch] *= alpha.at(r, c)[0];
    return out;
}

}  // namespace im2mesh
