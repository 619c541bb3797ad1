#ifndef CYCCONF_PNG_IO_HPP_
#define CYCCONF_PNG_IO_HPP_

#include <string>

#include "cycconf/tensor.hpp"

namespace cycconf {

// Minimal PNG codec for 8-bit RGB / grayscale images (the frame format of
// the synthetic benchmark). Compression via zlib.
void write_png(const std::string& path, const ImageU8& img);
ImageU8 read_png(const std::string& path);

std::string encode_png(const ImageU8& img);
ImageU8 decode_png(const std::string& bytes, const std::string& origin);

}  // namespace cycconf

#endif  // CYCCONF_PNG_IO_HPP_
