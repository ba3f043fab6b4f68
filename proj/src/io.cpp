#include "im2mesh/io.hpp"

#include <png.h>

#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <vector>

namespace im2mesh {

RgbaImage load_png(const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw std::runtime_error("load_png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("load_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("load_png: failed to decode " + path);
    }

    png_init_io(png, fp);
    png_read_info(png, info);

    png_set_expand(png);  // palette/gray/low-depth to 8-bit rgb(a)
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    int w = static_cast<int>(png_get_image_width(png, info));
    int h = static_cast<int>(png_get_image_height(png, info));
    int channels = png_get_channels(png, info);
    if (channels != 3 && channels != 4) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw std::runtime_error("load_png: unsupported channel count in " + path);
    }

    std::vector<png_byte> rowbuf(static_cast<size_t>(w) * channels);
    RgbaImage out;
    out.rgb = Image(h, w, 3);
    out.alpha = Image(h, w, 1, 1.0);
    out.has_alpha = channels == 4;
    for (int r = 0; r < h; ++r) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (int c = 0; c < w; ++c) {
            for (int ch = 0; ch < 3; ++ch)
                out.rgb.at(r, c)[ch] = rowbuf[c * channels + ch] / 255.0;
            if (channels == 4) out.alpha.at(r, c)[0] = rowbuf[c * channels + 3] / 255.0;
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return out;
}

void save_png(const std::string& path, const Image& rgb, const Image& alpha) {
    if (rgb.channels != 3) throw std::invalid_argument("save_png: need a 3-channel image");
    bool with_alpha = !alpha.empty();
    if (with_alpha && (alpha.height != rgb.height || alpha.width != rgb.width))
        throw std::invalid_argument("save_png: alpha shape mismatch");

    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("save_png: cannot open " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("save_png: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("save_png: failed to encode " + path);
    }

    png_init_io(png, fp);
    int channels = with_alpha ? 4 : 3;
    png_set_IHDR(png, info, rgb.width, rgb.height, 8,
                 with_alpha ? PNG_COLOR_TYPE_RGBA : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    auto to_byte = [](double v) {
        return static_cast<png_byte>(std::lround(clamp01(v) * 255.0));
    };
    std::vector<png_byte> row(static_cast<size_t>(rgb.width) * channels);
    for (int r = 0; r < rgb.height; ++r) {
        for (int c = 0; c < rgb.width; ++c) {
            row[c * channels + 0] = to_byte(rgb.at(r, c)[0]);
            row[c * channels + 1] = to_byte(rgb.at(r, c)[1]);
            row[c * channels + 2] = to_byte(rgb.at(r, c)[2]);
            if (with_alpha) row[c * channels + 3] = to_byte(alpha.at(r, c)[0]);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_obj: cannot open " + path);
    char buf[256];
    bool colors = mesh.has_colors();
    for (Index i = 0; i < mesh.vertex_count(); ++i) {
        if (colors) {
            std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g %.9g %.9g %.9g\n",
                          mesh.vertices(i, 0), mesh.vertices(i, 1), mesh.vertices(i, 2),
                          mesh.colors(i, 0), mesh.colors(i, 1), mesh.colors(i, 2));
        } else {
            std::snprintf(buf, sizeof(buf), "v %.9g %.9g %.9g\n", mesh.vertices(i, 0),
                          mesh.vertices(i, 1), mesh.vertices(i, 2));
        }
        out << buf;
    }
    for (Index f = 0; f < mesh.face_count(); ++f)
        out << "f " << mesh.faces(f, 0) + 1 << " " << mesh.faces(f, 1) + 1 << " "
            << mesh.faces(f, 2) + 1 << "\n";
    if (!out) throw std::runtime_error("save_obj: write failed for " + path);
}

TriangleMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_obj: cannot open " + path);
    std::vector<Vec3> verts, colors;
    std::vector<Eigen::RowVector3i> faces;
    bool any_color = false;

    std::string line;
    while (std::getline(in, line)) {
        std::istringstream ss(line);
        std::string tag;
        ss >> tag;
        if (tag == "v") {
            double x, y, z, r, g, b;
            ss >> x >> y >> z;
            if (!ss) throw std::runtime_error("load_obj: malformed vertex in " + path);
            verts.emplace_back(x, y, z);
            if (ss >> r >> g >> b) {
                colors.emplace_back(r, g, b);
                any_color = true;
            } else {
                colors.emplace_back(0.5, 0.5, 0.5);
            }
        } else if (tag == "f") {
            std::vector<int> idx;
            std::string token;
            while (ss >> token) {
                // "i", "i/t", "i/t/n" forms; only the vertex index is used.
                idx.push_back(std::stoi(token.substr(0, token.find('/'))));
            }
            if (idx.size() < 3) throw std::runtime_error("load_obj: malformed face in " + path);
            for (size_t k = 2; k < idx.size(); ++k)
                faces.push_back({idx[0] - 1, idx[k - 1] - 1, idx[k] - 1});
        }
    }

    TriangleMesh mesh;
    mesh.vertices.resize(verts.size(), 3);
    for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(i) = verts[i].transpose();
    mesh.faces.resize(faces.size(), 3);
    for (size_t i = 0; i < faces.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            int v = faces[i][k];
            if (v < 0 || v >= static_cast<int>(verts.size()))
                throw std::runtime_error("load_obj: face index out of range in " + path);
        }
        mesh.faces.row(i) = faces[i];
    }
    if (any_color) {
        mesh.colors.resize(colors.size(), 3);
        for (size_t i = 0; i < colors.size(); ++i) mesh.colors.row(i) = colors[i].transpose();
    }
    return mesh;
}

}  // namespace im2mesh
