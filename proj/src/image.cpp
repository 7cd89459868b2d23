#include "tdr/image.hpp"

#include "tdr/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <png.h>
#include <vector>

namespace tdr {

namespace {

// Piecewise-linear approximation of the viridis map.
std::array<unsigned char, 3> colour(double s) {
    static const double stops[5][3] = {
        {68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
    s = std::clamp(s, 0.0, 1.0) * 4.0;
    const int k = std::min(static_cast<int>(s), 3);
    const double f = s - k;
    std::array<unsigned char, 3> c{};
    for (int q = 0; q < 3; ++q)
        c[q] = static_cast<unsigned char>(std::lround((1 - f) * stops[k][q] + f * stops[k + 1][q]));
    return c;
}

} // namespace

void write_heatmap_png(const std::string& path, const ScalarField& f, double lo, double hi, int scale) {
    const Grid2D& g = f.grid();
    const int n = g.count();
    const int W = n * scale;
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw ConfigError("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw ConfigError("png encoding failed for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, W, W, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<unsigned char> row(3 * W);
    const double span = hi > lo ? hi - lo : 1.0;
    for (int r = 0; r < W; ++r) {
        const int j = n - 1 - r / scale;
        for (int c = 0; c < W; ++c) {
            const auto col = colour((f(c / scale, j) - lo) / span);
            std::copy(col.begin(), col.end(), row.begin() + 3 * c);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

} // namespace tdr
