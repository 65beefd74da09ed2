#include "lcm/imageio.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <memory>

namespace lcm {

namespace {

struct PngImageGuard {
  png_image* image;
  ~PngImageGuard() { png_image_free(image); }
};

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  PngImageGuard guard{&image};
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    throw FormatError("unsupported bit depth in '" + path.string() + "' (only 8-bit PNG is accepted)");
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  Image8 out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = color ? 3 : 1;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw ContractError("PNG output needs 1 or 3 channels");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  PngImageGuard guard{&image};
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
  }
}

std::uint8_t quantize(double v) {
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::floor(c * 255.0 + 0.5));
}

Tensor<Real> image_to_tensor(const Image8& img) {
  Tensor<Real> t(Shape{1, img.channels, img.height, img.width});
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        t.at(0, c, y, x) = static_cast<Real>(img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels + c]) /
                           Real{255};
      }
  return t;
}

Image8 tensor_to_image(const Tensor<Real>& x) {
  require_rank4(x.shape(), "image tensor");
  if (x.n() != 1) throw ShapeError("image tensor must have batch 1, got " + x.shape().str());
  Image8 img;
  img.width = x.w();
  img.height = x.h();
  img.channels = x.c();
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int xx = 0; xx < img.width; ++xx) {
        img.pixels[(static_cast<std::size_t>(y) * img.width + xx) * img.channels + c] = quantize(x.at(0, c, y, xx));
      }
  return img;
}

Tensor<Real> resize_bilinear(const Tensor<Real>& x, int h, int w) {
  require_rank4(x.shape(), "resize");
  if (h == x.h() && w == x.w()) return x;
  Tensor<Real> out(Shape{x.n(), x.c(), h, w});
  auto coord = [](int o, int in_n, int out_n, int& i0, int& i1, double& f) {
    double s = (o + 0.5) * static_cast<double>(in_n) / out_n - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in_n - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, in_n - 1);
    f = s - i0;
  };
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < x.c(); ++c)
      for (int oy = 0; oy < h; ++oy) {
        int y0, y1;
        double fy;
        coord(oy, x.h(), h, y0, y1, fy);
        for (int ox = 0; ox < w; ++ox) {
          int x0, x1;
          double fx;
          coord(ox, x.w(), w, x0, x1, fx);
          const double top = (1 - fx) * x.at(n, c, y0, x0) + fx * x.at(n, c, y0, x1);
          const double bot = (1 - fx) * x.at(n, c, y1, x0) + fx * x.at(n, c, y1, x1);
          out.at(n, c, oy, ox) = static_cast<Real>((1 - fy) * top + fy * bot);
        }
      }
  return out;
}

Tensor<Real> load_image(const std::filesystem::path& path, const MapShape& target) {
  Tensor<Real> t = image_to_tensor(read_png(path));
  if (target.channels == 3 && t.c() == 1) {
    Tensor<Real> rgb(Shape{1, 3, t.h(), t.w()});
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < t.h(); ++y)
        for (int x = 0; x < t.w(); ++x) rgb.at(0, c, y, x) = t.at(0, 0, y, x);
    t = std::move(rgb);
  } else if (target.channels == 1 && t.c() == 3) {
    t = to_gray(t);
  } else if (target.channels != t.c()) {
    throw ShapeError("cannot convert " + std::to_string(t.c()) + "-channel image to " + target.str());
  }
  return resize_bilinear(t, target.height, target.width);
}

void save_image(const Tensor<Real>& x, const std::filesystem::path& path) { write_png(path, tensor_to_image(x)); }

Mask load_mask(const std::filesystem::path& path) {
  Image8 img = read_png(path);
  Mask m(Shape{img.height, img.width});
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t v = img.pixels[(static_cast<std::size_t>(y) * img.width + x) * img.channels];
      m[y * img.width + x] = v >= 128 ? 1.0f : 0.0f;
    }
  return m;
}

void save_mask(const Mask& mask, const std::filesystem::path& path) {
  if (mask.shape().rank() != 2) throw ShapeError("mask must be H x W, got " + mask.shape().str());
  Image8 img;
  img.height = mask.shape()[0];
  img.width = mask.shape()[1];
  img.channels = 1;
  img.pixels.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) img.pixels[i] = mask[i] != 0.0f ? 255 : 0;
  write_png(path, img);
}

}  // namespace lcm
