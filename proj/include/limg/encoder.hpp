#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "limg/functions.hpp"

namespace limg {

enum class ImageType { Type1 = 1, Type2, Type3, Type4, Type5 };
enum class DomainMap { UnitCube, AffineToBBOBBox };
enum class PixelMode { Raw, MinMaxPerImage };

std::string_view to_string(ImageType type);
std::string_view to_string(DomainMap map);
std::string_view to_string(PixelMode mode);
ImageType parse_image_type(std::string_view text);
DomainMap parse_domain_map(std::string_view text);
PixelMode parse_pixel_mode(std::string_view text);

// The sample vectors do not fit the frame.
class CapacityError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct EncoderConfig {
  int frame_size = 32;   // M
  int sample_size = 24;  // N, ignored by Type-5 which fills the frame
  ImageType type = ImageType::Type1;
  int dim = 22;
  DomainMap domain_map = DomainMap::UnitCube;

  // Throws CapacityError naming (d, M, type) on violation.
  void validate() const;
};

// One row of the core image: [x^T, f(x)].
struct SampleVector {
  std::vector<double> point;
  double value = 0.0;

  std::vector<double> concat() const;
};

// Zero vector and e_1..e_d.
struct ProbeSet {
  std::vector<double> zero;
  std::vector<std::vector<double>> units;

  static ProbeSet make(int d);
};

// Objective values at the probes. `units[i]` is f(e_{i+1}); only the prefix an
// encoder actually uses has to be present.
struct ProbeValues {
  double zero = 0.0;
  std::vector<double> units;
};

// Row-major M x M frame.
using Pixels = std::vector<float>;

struct LandscapeImage {
  Pixels pixels;
  int frame_size = 0;
  int label = 0;
  std::uint64_t instance_seed = 0;
  ImageType type = ImageType::Type1;
  EvalCounter::Snapshot query_cost;
};

// N i.i.d. points in [0,1)^d, or mapped affinely onto [-5,5)^d.
std::vector<std::vector<double>> sample_points(int d, int n, std::uint64_t seed,
                                               DomainMap map = DomainMap::UnitCube);

// Number of random samples each layout consumes: N for Types 1-4, and for
// Type-5 however many (full or partial) sample vectors fit after the two probes.
int random_sample_count(const EncoderConfig& cfg);

// How many of e_1..e_d an encoder evaluates.
int unit_probe_count(const EncoderConfig& cfg);

Pixels encode_type1(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg);
Pixels encode_type2(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg);
Pixels encode_type3(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg);
Pixels encode_type4(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg);
Pixels encode_type5(std::span<const std::vector<double>> samples, std::span<const double> values,
                    const ProbeValues& probes, const EncoderConfig& cfg);

Pixels encode(std::span<const std::vector<double>> samples, std::span<const double> values,
              const ProbeValues& probes, const EncoderConfig& cfg);

// Samples, evaluates (with memoized query counting) and encodes one image.
// Pseudo-Boolean instances get bitstrings: each uniform coordinate is
// thresholded at 0.5 and the domain map is ignored.
LandscapeImage construct_image(const FunctionInstance& instance, const EncoderConfig& cfg,
                               std::uint64_t sample_seed);

// Raw is the identity; MinMaxPerImage maps onto [0,1], constant frames to 0.
Pixels finalize_pixels(std::span<const float> pixels, PixelMode mode);

// Binary 8-bit PGM, min-max scaled.
void write_pgm(const std::filesystem::path& path, std::span<const float> pixels, int frame_size);

}  // namespace limg
