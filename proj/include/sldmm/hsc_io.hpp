#pragma once

// HSC container: the 5 magic bytes "HSC1\n", one text header line
//   m=<int> n=<int> B=<int> dtype=<f32|u8> order=bsq\n
// then m*n*B samples in band-sequential order. f32 samples are little-endian
// IEEE-754 singles; u8 samples are mask flags (0/1).

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "datacube.hpp"

namespace sldmm::io {

inline constexpr char kMagic[] = "HSC1\n";

struct HscHeader {
  Index m = 0, n = 0, bands = 0;
  std::string dtype;
  std::string order;
};

namespace detail {

inline std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big)
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) |
           (v >> 24);
  return v;
}

inline void write_header(std::ostream &os, Index m, Index n, Index b,
                         const char *dtype) {
  os.write(kMagic, 5);
  os << "m=" << m << " n=" << n << " B=" << b << " dtype=" << dtype
     << " order=bsq\n";
}

inline HscHeader read_header(std::istream &is) {
  std::array<char, 5> magic{};
  is.read(magic.data(), 5);
  if (!is || std::memcmp(magic.data(), kMagic, 5) != 0)
    throw IoError("HSC: bad magic");
  std::string line;
  if (!std::getline(is, line))
    throw IoError("HSC: missing header line");

  HscHeader h;
  bool seen_m = false, seen_n = false, seen_b = false;
  std::istringstream tokens(line);
  std::string tok;
  while (tokens >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw IoError("HSC: malformed header token '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    auto as_int = [&](const std::string &s) -> Index {
      std::size_t used = 0;
      long long v = 0;
      try {
        v = std::stoll(s, &used);
      } catch (const std::exception &) {
        throw IoError("HSC: bad integer '" + s + "'");
      }
      if (used != s.size() || v < 1)
        throw IoError("HSC: bad dimension '" + s + "'");
      return static_cast<Index>(v);
    };
    if (key == "m") {
      h.m = as_int(val);
      seen_m = true;
    } else if (key == "n") {
      h.n = as_int(val);
      seen_n = true;
    } else if (key == "B") {
      h.bands = as_int(val);
      seen_b = true;
    } else if (key == "dtype") {
      h.dtype = val;
    } else if (key == "order") {
      h.order = val;
    } else {
      throw IoError("HSC: unknown header key '" + key + "'");
    }
  }
  if (!seen_m || !seen_n || !seen_b)
    throw IoError("HSC: header lacks m, n or B");
  if (h.order != "bsq")
    throw IoError("HSC: unsupported order '" + h.order + "'");
  return h;
}

inline std::ofstream open_out(const std::string &path) {
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot open '" + path + "' for writing");
  return os;
}

inline std::ifstream open_in(const std::string &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open '" + path + "' for reading");
  return is;
}

/// The double nearest the shortest decimal that identifies f, so a sample
/// written from 0.9 reads back as 0.9 rather than 0.89999997615814209.
/// Falls back to the exact value if that double would not narrow back to f.
inline double widen(float f) {
  std::array<char, 32> text{};
  const auto end = std::to_chars(text.data(), text.data() + text.size(), f).ptr;
  double d = 0.0;
  std::from_chars(text.data(), end, d);
  return static_cast<float>(d) == f ? d : static_cast<double>(f);
}

} // namespace detail

/// Values are narrowed to f32 (round to nearest). Reading widens each sample
/// back as described for detail::widen, so write -> read -> write reproduces
/// the file byte for byte and read -> write -> read reproduces the cube.
inline void write_hsc(std::ostream &os, const DataCube &cube) {
  detail::write_header(os, cube.rows(), cube.cols(), cube.bands(), "f32");
  std::vector<std::uint32_t> buf;
  buf.reserve(static_cast<std::size_t>(cube.size()));
  for (double v : cube.values())
    buf.push_back(detail::to_little(std::bit_cast<std::uint32_t>(static_cast<float>(v))));
  os.write(reinterpret_cast<const char *>(buf.data()),
           static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
  if (!os)
    throw IoError("HSC: write failed");
}

inline DataCube read_hsc(std::istream &is) {
  const HscHeader h = detail::read_header(is);
  if (h.dtype != "f32")
    throw IoError("HSC: expected dtype=f32, found '" + h.dtype + "'");
  const Index count = h.m * h.n * h.bands;
  std::vector<std::uint32_t> buf(static_cast<std::size_t>(count));
  is.read(reinterpret_cast<char *>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)));
  if (is.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(std::uint32_t)))
    throw IoError("HSC: truncated sample data");
  std::vector<double> values(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const float f = std::bit_cast<float>(detail::to_little(buf[i]));
    if (!std::isfinite(f))
      throw IoError("HSC: non-finite sample at index " + std::to_string(i));
    values[i] = detail::widen(f);
  }
  return {h.m, h.n, h.bands, std::move(values)};
}

inline void write_mask(std::ostream &os, const MaskSet &masks) {
  detail::write_header(os, masks.rows(), masks.cols(), masks.bands(), "u8");
  auto f = masks.flags();
  os.write(reinterpret_cast<const char *>(f.data()),
           static_cast<std::streamsize>(f.size()));
  if (!os)
    throw IoError("HSC: write failed");
}

inline MaskSet read_mask(std::istream &is) {
  const HscHeader h = detail::read_header(is);
  if (h.dtype != "u8")
    throw IoError("HSC mask: expected dtype=u8, found '" + h.dtype + "'");
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(h.m * h.n * h.bands));
  is.read(reinterpret_cast<char *>(flags.data()),
          static_cast<std::streamsize>(flags.size()));
  if (is.gcount() != static_cast<std::streamsize>(flags.size()))
    throw IoError("HSC mask: truncated flag data");
  for (auto f : flags)
    if (f > 1)
      throw IoError("HSC mask: flag values must be 0 or 1");
  return {h.m, h.n, h.bands, std::move(flags)};
}

inline void write_hsc(const std::string &path, const DataCube &cube) {
  auto os = detail::open_out(path);
  write_hsc(os, cube);
}
inline DataCube read_hsc(const std::string &path) {
  auto is = detail::open_in(path);
  return read_hsc(is);
}
inline void write_mask(const std::string &path, const MaskSet &masks) {
  auto os = detail::open_out(path);
  write_mask(os, masks);
}
inline MaskSet read_mask(const std::string &path) {
  auto is = detail::open_in(path);
  return read_mask(is);
}

/// Binary 16-bit PGM of band t (0-based), min-max scaled to [0, 65535].
/// The scaling is recorded in a comment line; a constant band maps to
/// mid-gray (32768).
inline void export_band_pgm(std::ostream &os, const DataCube &cube, Index t) {
  require(t >= 0 && t < cube.bands(), "export: band index out of range");
  auto band = cube.band(t);
  const auto [lo_it, hi_it] = std::minmax_element(band.begin(), band.end());
  const double lo = *lo_it, hi = *hi_it;
  os << "P5\n"
     << std::setprecision(std::numeric_limits<double>::max_digits10)
     << "# band=" << t + 1 << " min=" << lo << " max=" << hi << "\n"
     << cube.cols() << " " << cube.rows() << "\n65535\n";
  std::vector<unsigned char> bytes;
  bytes.reserve(band.size() * 2);
  for (double v : band) {
    std::uint16_t q = 32768;
    if (hi > lo)
      q = static_cast<std::uint16_t>(std::lround((v - lo) / (hi - lo) * 65535.0));
    bytes.push_back(static_cast<unsigned char>(q >> 8)); // PGM is MSB first
    bytes.push_back(static_cast<unsigned char>(q & 0xff));
  }
  os.write(reinterpret_cast<const char *>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os)
    throw IoError("PGM: write failed");
}

/// One CSV row per image row, 17 significant digits so values round-trip.
inline void export_band_csv(std::ostream &os, const DataCube &cube, Index t) {
  require(t >= 0 && t < cube.bands(), "export: band index out of range");
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index r = 0; r < cube.rows(); ++r) {
    for (Index c = 0; c < cube.cols(); ++c) {
      if (c)
        os << ',';
      os << cube(r, c, t);
    }
    os << '\n';
  }
  if (!os)
    throw IoError("CSV: write failed");
}

} // namespace sldmm::io
