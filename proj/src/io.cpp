#include "finv/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace finv {

namespace {

static_assert(std::endian::native == std::endian::little, "binary tensor I/O assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'F', 'I', 'N', 'V'};
constexpr std::uint32_t kVersion = 1;

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor from_bytes(const unsigned char* bytes, int height, int width, int channels) {
  Tensor t(Shape{height, width, channels});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = bytes[i];
  return t;
}

std::vector<unsigned char> to_bytes(const Tensor& t) {
  std::vector<unsigned char> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double v = std::clamp(std::nearbyint(t[i]), 0.0, 255.0);
    out[i] = static_cast<unsigned char>(v);
  }
  return out;
}

Tensor read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  if (image.format & PNG_FORMAT_FLAG_LINEAR) {
    png_image_free(&image);
    throw IoError("unsupported bit depth (16-bit) in " + path.string());
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<unsigned char> buffer(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buffer.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + msg);
  }
  return from_bytes(buffer.data(), static_cast<int>(image.height), static_cast<int>(image.width),
                    color ? 3 : 1);
}

void write_png(const Tensor& t, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes = to_bytes(t);
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(t.width());
  image.height = static_cast<png_uint_32>(t.height());
  image.format = t.channels() == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

// Netpbm header tokens, skipping whitespace and '#' comments.
class PnmScanner {
 public:
  explicit PnmScanner(const std::string& bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space();
    std::string tok;
    while (pos_ < bytes_.size() && !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      tok += bytes_[pos_++];
    }
    if (tok.empty()) throw IoError("truncated netpbm header");
    return tok;
  }

  int integer() {
    const std::string tok = token();
    try {
      std::size_t used = 0;
      const int v = std::stoi(tok, &used);
      if (used != tok.size() || v < 0) throw IoError("bad netpbm header field '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      throw IoError("bad netpbm header field '" + tok + "'");
    }
  }

  // Exactly one whitespace byte separates the header from binary data.
  std::size_t data_offset() const { return pos_ + 1; }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

Tensor read_pnm(const std::filesystem::path& path, const std::string& bytes) {
  PnmScanner scan(bytes);
  const std::string magic = scan.token();
  int channels = 0;
  bool ascii = false;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else if (magic == "P2") channels = 1, ascii = true;
  else if (magic == "P3") channels = 3, ascii = true;
  else throw IoError("unsupported netpbm variant '" + magic + "' in " + path.string());
  const int width = scan.integer();
  const int height = scan.integer();
  const int maxval = scan.integer();
  if (maxval == 0 || maxval > 255) {
    throw IoError("unsupported bit depth (maxval " + std::to_string(maxval) + ") in " + path.string());
  }
  Tensor t(Shape{height, width, channels});
  if (ascii) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = scan.integer();
  } else {
    const std::size_t offset = scan.data_offset();
    if (bytes.size() < offset + t.size()) throw IoError("truncated pixel data in " + path.string());
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<unsigned char>(bytes[offset + i]);
  }
  if (maxval != 255) t *= 255.0 / maxval;
  return t;
}

void write_pnm(const Tensor& t, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << (t.channels() == 3 ? "P6" : "P5") << "\n" << t.width() << " " << t.height() << "\n255\n";
  const std::vector<unsigned char> bytes = to_bytes(t);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

template <typename T>
void put(std::string& out, T value) {
  char raw[sizeof(T)];
  std::memcpy(raw, &value, sizeof(T));
  out.append(raw, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IoError("truncated tensor file");
  T value;
  std::memcpy(&value, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace

MeanImage::MeanImage(Tensor values) : values_(std::move(values)) {}

MeanImage MeanImage::constant(double value, int channels) {
  return MeanImage(Tensor(Shape{1, 1, channels}, value));
}

MeanImage MeanImage::per_channel(std::span<const Tensor> images) {
  if (images.empty()) throw std::invalid_argument("mean of an empty image set");
  const int channels = images.front().channels();
  Tensor acc(Shape{1, 1, channels});
  double count = 0.0;
  for (const Tensor& im : images) {
    if (im.channels() != channels) throw ShapeError("mixed channel counts in image set");
    for (int y = 0; y < im.height(); ++y)
      for (int x = 0; x < im.width(); ++x)
        for (int c = 0; c < channels; ++c) acc(0, 0, c) += im(y, x, c);
    count += static_cast<double>(im.height()) * im.width();
  }
  acc *= 1.0 / count;
  return MeanImage(std::move(acc));
}

MeanImage MeanImage::per_pixel(std::span<const Tensor> images) {
  if (images.empty()) throw std::invalid_argument("mean of an empty image set");
  Tensor acc(images.front().shape());
  for (const Tensor& im : images) acc += im;
  acc *= 1.0 / static_cast<double>(images.size());
  return MeanImage(std::move(acc));
}

double MeanImage::at(int y, int x, int c) const {
  if (values_.empty()) return 0.0;
  return is_per_pixel() ? values_(y, x, c) : values_(0, 0, c);
}

void MeanImage::check_compatible(const Shape& image) const {
  if (values_.empty()) return;
  if (values_.channels() != image.channels) {
    throw ShapeError("mean has " + std::to_string(values_.channels()) + " channels, image " + image.str());
  }
  if (is_per_pixel() && (values_.height() != image.height || values_.width() != image.width)) {
    throw ShapeError("per-pixel mean " + values_.shape().str() + " does not match image " + image.str());
  }
}

Tensor MeanImage::subtract_from(Tensor image) const {
  check_compatible(image.shape());
  if (values_.empty()) return image;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c) image(y, x, c) -= at(y, x, c);
  return image;
}

Tensor MeanImage::add_to(Tensor image) const {
  check_compatible(image.shape());
  if (values_.empty()) return image;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      for (int c = 0; c < image.channels(); ++c) image(y, x, c) += at(y, x, c);
  return image;
}

Tensor load_image(const std::filesystem::path& path, const MeanImage& mean) {
  const std::string bytes = slurp(path);
  Tensor raw;
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) {
    raw = read_png(path);
  } else if (bytes.size() >= 2 && bytes[0] == 'P') {
    raw = read_pnm(path, bytes);
  } else {
    throw IoError("unrecognised image format: " + path.string());
  }
  return mean.subtract_from(std::move(raw));
}

void save_image(const Tensor& image, const MeanImage& mean, const std::filesystem::path& path) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw ShapeError("save_image needs 1 or 3 channels, got " + image.shape().str());
  }
  const Tensor pixels = mean.add_to(image);
  const std::string ext = lower_extension(path);
  if (ext == ".png") {
    write_png(pixels, path);
  } else if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
    if (ext == ".pgm" && pixels.channels() != 1) throw ShapeError(".pgm needs a single channel");
    if (ext == ".ppm" && pixels.channels() != 3) throw ShapeError(".ppm needs three channels");
    write_pnm(pixels, path);
  } else {
    throw IoError("unsupported image extension '" + ext + "'");
  }
}

std::string encode_tensor(const Tensor& t) {
  std::string out;
  out.reserve(20 + t.size() * sizeof(double));
  out.append(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.height()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.width()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.channels()));
  for (double v : t.values()) put<double>(out, v);
  return out;
}

Tensor decode_tensor(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw IoError("bad magic: not a tensor file");
  }
  std::size_t pos = 4;
  const auto version = take<std::uint32_t>(bytes, pos);
  if (version != kVersion) throw IoError("unsupported tensor format version " + std::to_string(version));
  const auto h = take<std::uint32_t>(bytes, pos);
  const auto w = take<std::uint32_t>(bytes, pos);
  const auto c = take<std::uint32_t>(bytes, pos);
  const std::uint64_t count = std::uint64_t{h} * w * c;
  const std::uint64_t payload = bytes.size() - pos;
  if (payload != count * sizeof(double)) {
    throw IoError("tensor payload is " + std::to_string(payload) + " bytes, header " + std::to_string(h) +
                  "x" + std::to_string(w) + "x" + std::to_string(c) + " needs " +
                  std::to_string(count * sizeof(double)));
  }
  std::vector<double> values(count);
  if (count > 0) std::memcpy(values.data(), bytes.data() + pos, count * sizeof(double));
  return Tensor(Shape{static_cast<int>(h), static_cast<int>(w), static_cast<int>(c)}, std::move(values));
}

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
  const std::string bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) { return decode_tensor(slurp(path)); }

}  // namespace finv
