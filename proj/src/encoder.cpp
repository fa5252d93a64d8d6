#include "limg/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "limg/rng.hpp"

namespace limg {

namespace {

std::string describe(const EncoderConfig& cfg) {
  return "(d=" + std::to_string(cfg.dim) + ", M=" + std::to_string(cfg.frame_size) +
         ", type=" + std::string(to_string(cfg.type)) + ")";
}

std::vector<double> tau(std::span<const double> x, double y) {
  std::vector<double> t(x.begin(), x.end());
  t.push_back(y);
  return t;
}

// Row with [x, y, y, ..., y].
void write_replicated_value(float* row, std::span<const double> x, double y, int m) {
  const int d = static_cast<int>(x.size());
  for (int c = 0; c < d; ++c) row[c] = static_cast<float>(x[c]);
  for (int c = d; c < m; ++c) row[c] = static_cast<float>(y);
}

// Row with tau repeated left to right, the last copy truncated.
void write_repeated_tau(float* row, std::span<const double> x, double y, int m) {
  const auto t = tau(x, y);
  const int width = static_cast<int>(t.size());
  for (int c = 0; c < m; ++c) row[c] = static_cast<float>(t[c % width]);
}

void check_inputs(std::span<const std::vector<double>> samples, std::span<const double> values,
                  const EncoderConfig& cfg) {
  cfg.validate();
  if (samples.size() != values.size()) {
    throw std::invalid_argument("samples and values differ in length");
  }
  if (cfg.type != ImageType::Type5 && static_cast<int>(samples.size()) != cfg.sample_size) {
    throw std::invalid_argument("expected " + std::to_string(cfg.sample_size) + " samples");
  }
  for (const auto& s : samples) {
    if (static_cast<int>(s.size()) != cfg.dim) throw std::invalid_argument("sample of wrong dimension");
  }
}

using RowWriter = void (*)(float*, std::span<const double>, double, int);

// Shared frame for Types 1-4: N sample rows, then probe rows. With
// `rotation_probes` the probe rows cycle 0, e_1, ..., e_d; otherwise all are 0.
Pixels encode_rows(std::span<const std::vector<double>> samples, std::span<const double> values,
                   const ProbeValues& probes, const EncoderConfig& cfg, RowWriter write,
                   bool rotation_probes) {
  check_inputs(samples, values, cfg);
  const int m = cfg.frame_size;
  const int n = cfg.sample_size;
  const int d = cfg.dim;
  Pixels px(static_cast<std::size_t>(m) * m);
  for (int r = 0; r < n; ++r) write(&px[static_cast<std::size_t>(r) * m], samples[r], values[r], m);

  const ProbeSet set = ProbeSet::make(d);
  for (int j = 0; j < m - n; ++j) {
    float* row = &px[static_cast<std::size_t>(n + j) * m];
    const int p = rotation_probes ? j % (d + 1) : 0;
    if (p == 0) {
      write(row, set.zero, probes.zero, m);
    } else {
      if (static_cast<int>(probes.units.size()) < p) {
        throw std::invalid_argument("missing value for unit probe e_" + std::to_string(p));
      }
      write(row, set.units[p - 1], probes.units[p - 1], m);
    }
  }
  return px;
}

}  // namespace

std::string_view to_string(ImageType type) {
  switch (type) {
    case ImageType::Type1: return "Type1";
    case ImageType::Type2: return "Type2";
    case ImageType::Type3: return "Type3";
    case ImageType::Type4: return "Type4";
    case ImageType::Type5: return "Type5";
  }
  return "?";
}

std::string_view to_string(DomainMap map) {
  return map == DomainMap::UnitCube ? "UnitCube" : "AffineToBBOBBox";
}

std::string_view to_string(PixelMode mode) {
  return mode == PixelMode::Raw ? "Raw" : "MinMaxPerImage";
}

ImageType parse_image_type(std::string_view text) {
  if (text.starts_with("Type")) text.remove_prefix(4);
  if (text.size() == 1 && text[0] >= '1' && text[0] <= '5') {
    return static_cast<ImageType>(text[0] - '0');
  }
  throw std::invalid_argument("unknown image type '" + std::string(text) + "'");
}

DomainMap parse_domain_map(std::string_view text) {
  if (text == "UnitCube" || text == "unit") return DomainMap::UnitCube;
  if (text == "AffineToBBOBBox" || text == "bbob-box") return DomainMap::AffineToBBOBBox;
  throw std::invalid_argument("unknown domain map '" + std::string(text) + "'");
}

PixelMode parse_pixel_mode(std::string_view text) {
  if (text == "Raw" || text == "raw") return PixelMode::Raw;
  if (text == "MinMaxPerImage" || text == "minmax") return PixelMode::MinMaxPerImage;
  throw std::invalid_argument("unknown pixel mode '" + std::string(text) + "'");
}

void EncoderConfig::validate() const {
  if (frame_size < 1) throw CapacityError("frame size must be positive " + describe(*this));
  if (dim < 1) throw CapacityError("dimension must be positive " + describe(*this));
  if (sample_size < 1) throw CapacityError("sample size must be positive " + describe(*this));
  const long long d_prime = dim + 1;
  if (type == ImageType::Type5) {
    if (d_prime > static_cast<long long>(frame_size) * frame_size) {
      throw CapacityError("sample vector longer than M*M " + describe(*this));
    }
    return;
  }
  if (d_prime > frame_size) throw CapacityError("sample vector longer than M " + describe(*this));
  if (sample_size > frame_size) {
    throw CapacityError("N=" + std::to_string(sample_size) + " exceeds the frame " + describe(*this));
  }
}

std::vector<double> SampleVector::concat() const { return tau(point, value); }

ProbeSet ProbeSet::make(int d) {
  ProbeSet set;
  set.zero.assign(d, 0.0);
  set.units.assign(d, std::vector<double>(d, 0.0));
  for (int i = 0; i < d; ++i) set.units[i][i] = 1.0;
  return set;
}

std::vector<std::vector<double>> sample_points(int d, int n, std::uint64_t seed, DomainMap map) {
  if (d < 1 || n < 0) throw std::invalid_argument("sample_points needs d >= 1 and n >= 0");
  Rng rng(seed);
  std::vector<std::vector<double>> pts(n, std::vector<double>(d));
  for (auto& p : pts) {
    for (auto& v : p) {
      v = rng.uniform();
      if (map == DomainMap::AffineToBBOBBox) v = 10.0 * v - 5.0;
    }
  }
  return pts;
}

int random_sample_count(const EncoderConfig& cfg) {
  if (cfg.type != ImageType::Type5) return cfg.sample_size;
  const int d_prime = cfg.dim + 1;
  const int free = cfg.frame_size * cfg.frame_size - 2 * d_prime;
  return free > 0 ? (free + d_prime - 1) / d_prime : 0;
}

int unit_probe_count(const EncoderConfig& cfg) {
  switch (cfg.type) {
    case ImageType::Type3:
    case ImageType::Type4:
      return std::clamp(cfg.frame_size - cfg.sample_size - 1, 0, cfg.dim);
    case ImageType::Type5:
      return 1;
    default:
      return 0;
  }
}

Pixels encode_type1(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg) {
  return encode_rows(samples, values, probes, cfg, write_replicated_value, false);
}

Pixels encode_type2(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg) {
  return encode_rows(samples, values, probes, cfg, write_repeated_tau, false);
}

Pixels encode_type3(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg) {
  return encode_rows(samples, values, probes, cfg, write_replicated_value, true);
}

Pixels encode_type4(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg) {
  return encode_rows(samples, values, probes, cfg, write_repeated_tau, true);
}

Pixels encode_type5(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg) {
  check_inputs(samples, values, cfg);
  if (probes.units.empty()) throw std::invalid_argument("Type-5 needs f(e_1)");
  const std::size_t total = static_cast<std::size_t>(cfg.frame_size) * cfg.frame_size;
  const ProbeSet set = ProbeSet::make(cfg.dim);

  Pixels eta;
  eta.reserve(total);
  auto append = [&](std::span<const double> x, double y) {
    for (double v : tau(x, y)) {
      if (eta.size() == total) return;
      eta.push_back(static_cast<float>(v));
    }
  };
  append(set.zero, probes.zero);
  append(set.units[0], probes.units[0]);
  for (std::size_t j = 0; j < samples.size() && eta.size() < total; ++j) append(samples[j], values[j]);
  if (eta.size() != total) {
    throw std::invalid_argument("Type-5 needs " + std::to_string(random_sample_count(cfg)) +
                                " samples to fill the frame");
  }
  // Row-major storage makes the reshape a no-op.
  return eta;
}

Pixels encode(std::span<const std::vector<double>> samples, std::span<const double> values,
              const ProbeValues& probes, const EncoderConfig& cfg) {
  switch (cfg.type) {
    case ImageType::Type1: return encode_type1(samples, values, probes, cfg);
    case ImageType::Type2: return encode_type2(samples, values, probes, cfg);
    case ImageType::Type3: return encode_type3(samples, values, probes, cfg);
    case ImageType::Type4: return encode_type4(samples, values, probes, cfg);
    case ImageType::Type5: return encode_type5(samples, values, probes, cfg);
  }
  throw std::invalid_argument("unknown image type");
}

LandscapeImage construct_image(const FunctionInstance& instance, const EncoderConfig& cfg,
                               std::uint64_t sample_seed) {
  cfg.validate();
  if (instance.dim() != cfg.dim) {
    throw std::invalid_argument("instance dimension " + std::to_string(instance.dim()) +
                                " differs from encoder dimension " + std::to_string(cfg.dim));
  }
  const bool binary = instance.problem().suite == Suite::DiscretePB;
  auto points = sample_points(cfg.dim, random_sample_count(cfg), sample_seed,
                              binary ? DomainMap::UnitCube : cfg.domain_map);
  if (binary) {
    for (auto& p : points)
      for (auto& v : p) v = v < 0.5 ? 0.0 : 1.0;
  }

  EvalCounter counter;
  std::vector<double> values;
  values.reserve(points.size());
  for (const auto& p : points) values.push_back(evaluate(instance, p, counter));

  const ProbeSet set = ProbeSet::make(cfg.dim);
  ProbeValues probes;
  probes.zero = evaluate(instance, set.zero, counter);
  const int units = unit_probe_count(cfg);
  for (int i = 0; i < units; ++i) probes.units.push_back(evaluate(instance, set.units[i], counter));

  LandscapeImage img;
  img.pixels = encode(points, values, probes, cfg);
  img.frame_size = cfg.frame_size;
  img.label = instance.problem().index - 1;
  img.instance_seed = instance.instance_seed();
  img.type = cfg.type;
  img.query_cost = counter.snapshot();
  for (float v : img.pixels) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("non-finite pixel for " + instance.problem().display_name + " " +
                               describe(cfg));
    }
  }
  return img;
}

Pixels finalize_pixels(std::span<const float> pixels, PixelMode mode) {
  for (float v : pixels) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite pixel");
  }
  Pixels out(pixels.begin(), pixels.end());
  if (mode == PixelMode::Raw || out.empty()) return out;
  const auto [lo, hi] = std::minmax_element(out.begin(), out.end());
  const double min = *lo;
  const double range = static_cast<double>(*hi) - min;
  for (auto& v : out) v = range > 0 ? static_cast<float>((v - min) / range) : 0.0f;
  return out;
}

void write_pgm(const std::filesystem::path& path, std::span<const float> pixels, int frame_size) {
  const Pixels scaled = finalize_pixels(pixels, PixelMode::MinMaxPerImage);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << "P5\n" << frame_size << ' ' << frame_size << "\n255\n";
  for (float v : scaled) out.put(static_cast<char>(std::lround(v * 255.0f)));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace limg
