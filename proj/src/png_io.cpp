#include "cycconf/png_io.hpp"

#include <zlib.h>

#include <cstring>

#include "cycconf/util.hpp"

namespace cycconf {

namespace {

constexpr unsigned char kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

void put_u32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | static_cast<uint32_t>(p[3]);
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
  put_u32(out, static_cast<uint32_t>(payload.size()));
  std::string body(type, 4);
  body += payload;
  out += body;
  const auto crc =
      crc32(0, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()));
  put_u32(out, static_cast<uint32_t>(crc));
}

std::string zlib_compress(const std::string& raw) {
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string out(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(out.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("png: zlib compression failed");
  out.resize(bound);
  return out;
}

std::string zlib_decompress(const std::string& comp, size_t expected) {
  std::string out(expected, '\0');
  uLongf n = static_cast<uLongf>(expected);
  const int rc = uncompress(reinterpret_cast<Bytef*>(out.data()), &n,
                            reinterpret_cast<const Bytef*>(comp.data()),
                            static_cast<uLong>(comp.size()));
  if (rc != Z_OK || n != expected)
    throw DataError("png: zlib decompression failed");
  return out;
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::string encode_png(const ImageU8& img) {
  if (img.channels != 3 && img.channels != 1)
    throw ContractError("png: only RGB and grayscale supported");
  std::string out(reinterpret_cast<const char*>(kSignature), 8);

  std::string ihdr;
  put_u32(ihdr, static_cast<uint32_t>(img.width));
  put_u32(ihdr, static_cast<uint32_t>(img.height));
  ihdr.push_back(8);                                   // bit depth
  ihdr.push_back(img.channels == 3 ? 2 : 0);           // color type
  ihdr.push_back(0);                                   // compression
  ihdr.push_back(0);                                   // filter method
  ihdr.push_back(0);                                   // no interlace
  put_chunk(out, "IHDR", ihdr);

  const size_t row_bytes = static_cast<size_t>(img.width) * img.channels;
  std::string raw;
  raw.reserve((row_bytes + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back(0);  // filter type 0 per scanline
    raw.append(reinterpret_cast<const char*>(&img.pixels[y * row_bytes]), row_bytes);
  }
  put_chunk(out, "IDAT", zlib_compress(raw));
  put_chunk(out, "IEND", "");
  return out;
}

ImageU8 decode_png(const std::string& bytes, const std::string& origin) {
  auto fail = [&](const std::string& why) -> DataError {
    return DataError("png decode (" + origin + "): " + why);
  };
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kSignature, 8) != 0)
    throw fail("bad signature");

  int width = 0, height = 0, channels = 0;
  std::string idat;
  size_t pos = 8;
  bool seen_end = false;
  while (pos + 8 <= bytes.size() && !seen_end) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
    const uint32_t len = get_u32(p);
    if (pos + 12 + len > bytes.size()) throw fail("truncated chunk");
    const std::string type = bytes.substr(pos + 4, 4);
    const char* payload = bytes.data() + pos + 8;
    if (type == "IHDR") {
      if (len != 13) throw fail("bad IHDR");
      const auto* q = reinterpret_cast<const unsigned char*>(payload);
      width = static_cast<int>(get_u32(q));
      height = static_cast<int>(get_u32(q + 4));
      const int depth = q[8], color = q[9], interlace = q[12];
      if (depth != 8 || interlace != 0) throw fail("unsupported bit depth or interlace");
      if (color == 2) channels = 3;
      else if (color == 0) channels = 1;
      else throw fail("unsupported color type " + std::to_string(color));
    } else if (type == "IDAT") {
      idat.append(payload, len);
    } else if (type == "IEND") {
      seen_end = true;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0 || channels == 0) throw fail("missing IHDR");
  if (idat.empty()) throw fail("missing IDAT");

  const size_t row_bytes = static_cast<size_t>(width) * channels;
  const size_t expected = (row_bytes + 1) * height;
  std::string raw;
  try {
    raw = zlib_decompress(idat, expected);
  } catch (const DataError&) {
    throw fail("corrupt IDAT stream");
  }

  ImageU8 img(height, width, channels);
  const int bpp = channels;
  std::vector<unsigned char> prev(row_bytes, 0);
  for (int y = 0; y < height; ++y) {
    const auto* row = reinterpret_cast<const unsigned char*>(raw.data() + y * (row_bytes + 1));
    const int filter = row[0];
    unsigned char* cur = &img.pixels[y * row_bytes];
    for (size_t i = 0; i < row_bytes; ++i) {
      const int x = row[1 + i];
      const int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<size_t>(bpp) ? prev[i - bpp] : 0;
      int v = 0;
      switch (filter) {
        case 0: v = x; break;
        case 1: v = x + a; break;
        case 2: v = x + b; break;
        case 3: v = x + (a + b) / 2; break;
        case 4: v = x + paeth(a, b, c); break;
        default: throw fail("bad filter type " + std::to_string(filter));
      }
      cur[i] = static_cast<unsigned char>(v & 0xff);
    }
    std::memcpy(prev.data(), cur, row_bytes);
  }
  return img;
}

void write_png(const std::string& path, const ImageU8& img) {
  atomic_write_file(path, encode_png(img));
}

ImageU8 read_png(const std::string& path) {
  return decode_png(read_file(path), path);
}

}  // namespace cycconf
