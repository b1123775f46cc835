// JPEG2000 codec adapter.
//
//   dbcsem-j2k encode <in.ppm> <out.bin> --rate <bpp>
//   dbcsem-j2k decode <in.bin> <out.ppm>
//
// The .bin file holds the bare JPEG2000 codestream; the JP2 file wrapper is
// rebuilt at decode time from the image size in the SIZ marker.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace {

using Bytes = std::vector<std::uint8_t>;

std::uint32_t be32(const Bytes& b, std::size_t at) {
  if (at + 4 > b.size()) throw std::runtime_error("truncated stream");
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) | (std::uint32_t{b[at + 2]} << 8) | b[at + 3];
}

void put_be32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

// offset of the contiguous-codestream box and its header length
std::pair<std::size_t, std::size_t> find_codestream_box(const Bytes& jp2) {
  std::size_t at = 0;
  while (at + 8 <= jp2.size()) {
    std::uint64_t len = be32(jp2, at);
    const std::string type(jp2.begin() + static_cast<long>(at) + 4, jp2.begin() + static_cast<long>(at) + 8);
    std::size_t header = 8;
    if (len == 1) {
      len = (std::uint64_t{be32(jp2, at + 8)} << 32) | be32(jp2, at + 12);
      header = 16;
    } else if (len == 0) {
      len = jp2.size() - at;
    }
    if (type == "jp2c") return {at, header};
    if (len < header) throw std::runtime_error("malformed JP2 box");
    at += len;
  }
  throw std::runtime_error("no codestream box in JP2 output");
}

Bytes read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return Bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const Bytes& data, std::size_t from = 0) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(data.data() + from), static_cast<std::streamsize>(data.size() - from));
  if (!out) throw std::runtime_error("cannot write " + path);
}

Bytes encode_jp2(const cv::Mat& image, double bpp) {
  // OpenCV's parameter is the inverse compression ratio x1000 of 24-bit RGB
  const int x = std::clamp(static_cast<int>(std::lround(bpp * 1000.0 / 24.0)), 1, 1000);
  Bytes out;
  if (!cv::imencode(".jp2", image, out, {cv::IMWRITE_JPEG2000_COMPRESSION_X1000, x})) {
    throw std::runtime_error("JPEG2000 encoder unavailable");
  }
  return out;
}

int encode(const std::string& in, const std::string& out, double bpp) {
  const cv::Mat image = cv::imread(in, cv::IMREAD_COLOR);
  if (image.empty()) throw std::runtime_error("cannot read image " + in);
  const auto jp2 = encode_jp2(image, bpp);
  const auto [at, header] = find_codestream_box(jp2);
  write_file(out, jp2, at + header);
  return 0;
}

int decode(const std::string& in, const std::string& out) {
  const auto codestream = read_file(in);
  // SOC, then SIZ: marker, Lsiz, Rsiz, Xsiz, Ysiz, XOsiz, YOsiz
  if (codestream.size() < 24 || codestream[0] != 0xFF || codestream[1] != 0x4F || codestream[2] != 0xFF ||
      codestream[3] != 0x51) {
    throw std::runtime_error("not a JPEG2000 codestream: " + in);
  }
  const auto width = static_cast<int>(be32(codestream, 8) - be32(codestream, 16));
  const auto height = static_cast<int>(be32(codestream, 12) - be32(codestream, 20));
  if (width <= 0 || height <= 0) throw std::runtime_error("bad image size in " + in);

  auto wrapper = encode_jp2(cv::Mat::zeros(height, width, CV_8UC3), 24.0);
  const auto box = find_codestream_box(wrapper).first;
  wrapper.resize(box);
  put_be32(wrapper, static_cast<std::uint32_t>(codestream.size() + 8));
  for (char c : std::string("jp2c")) wrapper.push_back(static_cast<std::uint8_t>(c));
  wrapper.insert(wrapper.end(), codestream.begin(), codestream.end());

  const cv::Mat image = cv::imdecode(wrapper, cv::IMREAD_COLOR);
  if (image.empty()) throw std::runtime_error("cannot decode " + in);
  if (!cv::imwrite(out, image)) throw std::runtime_error("cannot write " + out);
  return 0;
}

int usage() {
  std::cerr << "usage: dbcsem-j2k encode <in.ppm> <out.bin> --rate <bpp>\n"
               "       dbcsem-j2k decode <in.bin> <out.ppm>\n";
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (args.size() == 5 && args[0] == "encode" && args[3] == "--rate") {
      const double bpp = std::stod(args[4]);
      if (!(bpp > 0)) throw std::runtime_error("rate must be positive");
      return encode(args[1], args[2], bpp);
    }
    if (args.size() == 3 && args[0] == "decode") return decode(args[1], args[2]);
    return usage();
  } catch (const std::exception& e) {
    std::cerr << "dbcsem-j2k: " << e.what() << '\n';
    return 1;
  }
}
