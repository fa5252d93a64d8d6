#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "limg/dataset.hpp"

namespace limg {

namespace {

constexpr char kMagic[4] = {'L', 'I', 'M', 'G'};
constexpr std::uint16_t kVersion = 1;
constexpr std::size_t kHeaderSize = 4 + 2 + 2 + 2 + 8;

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& data() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}
  std::uint64_t uint(int width) {
    need(width);
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += width;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = data_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw DatasetError(DatasetError::Kind::Truncated, "dataset file is truncated");
  }
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

}  // namespace

nlohmann::json to_json(const DatasetSpec& spec) {
  return {
      {"suite", to_string(spec.suite)},
      {"encoder",
       {{"frame_size", spec.encoder.frame_size},
        {"sample_size", spec.encoder.sample_size},
        {"image_type", to_string(spec.encoder.type)},
        {"dim", spec.encoder.dim},
        {"domain_map", to_string(spec.encoder.domain_map)}}},
      {"regime", to_string(spec.regime)},
      {"per_class", {{"train", spec.per_class.train}, {"val", spec.per_class.val}, {"test", spec.per_class.test}}},
      {"instances_per_function", spec.instances_per_function},
      {"unseen_instances_per_function", spec.unseen_instances_per_function},
      {"master_seed", spec.master_seed},
      {"noise",
       {{"kind", to_string(spec.noise.kind)},
        {"uniform_lo", spec.noise.uniform_lo},
        {"uniform_hi", spec.noise.uniform_hi},
        {"test_only", spec.noise.test_only}}},
  };
}

DatasetSpec spec_from_json(const nlohmann::json& j) {
  DatasetSpec s;
  s.suite = parse_suite(j.at("suite").get<std::string>());
  const auto& e = j.at("encoder");
  s.encoder.frame_size = e.at("frame_size").get<int>();
  s.encoder.sample_size = e.at("sample_size").get<int>();
  s.encoder.type = parse_image_type(e.at("image_type").get<std::string>());
  s.encoder.dim = e.at("dim").get<int>();
  s.encoder.domain_map = parse_domain_map(e.at("domain_map").get<std::string>());
  s.regime = parse_regime(j.at("regime").get<std::string>());
  const auto& pc = j.at("per_class");
  s.per_class = {pc.at("train").get<int>(), pc.at("val").get<int>(), pc.at("test").get<int>()};
  s.instances_per_function = j.at("instances_per_function").get<int>();
  s.unseen_instances_per_function = j.at("unseen_instances_per_function").get<int>();
  s.master_seed = j.at("master_seed").get<std::uint64_t>();
  const auto& n = j.at("noise");
  s.noise.kind = parse_noise_kind(n.at("kind").get<std::string>());
  s.noise.uniform_lo = n.at("uniform_lo").get<double>();
  s.noise.uniform_hi = n.at("uniform_hi").get<double>();
  s.noise.test_only = n.at("test_only").get<bool>();
  return s;
}

nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json seeds = nlohmann::json::object();
  for (const auto& [k, v] : m.instance_seeds) seeds[std::to_string(k)] = v;
  return {
      {"spec", to_json(m.spec)},
      {"split", m.split},
      {"totals", {{"train", m.totals.train}, {"val", m.totals.val}, {"test", m.totals.test}}},
      {"instance_seeds", seeds},
      {"noise_applied", m.noise_applied},
      {"digest", m.digest},
  };
}

DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  m.spec = spec_from_json(j.at("spec"));
  m.split = j.at("split").get<std::string>();
  const auto& t = j.at("totals");
  m.totals = {t.at("train").get<int>(), t.at("val").get<int>(), t.at("test").get<int>()};
  for (const auto& [k, v] : j.at("instance_seeds").items()) {
    m.instance_seeds[std::stoi(k)] = v.get<std::vector<std::uint64_t>>();
  }
  m.noise_applied = j.at("noise_applied").get<std::vector<std::string>>();
  m.digest = j.at("digest").get<std::string>();
  return m;
}

void save(const Dataset& ds, const std::filesystem::path& path) {
  if (ds.images.size() != ds.labels.size()) throw std::invalid_argument("images and labels differ in length");
  const std::size_t pixels = static_cast<std::size_t>(ds.frame_size) * ds.frame_size;
  Writer w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u16(static_cast<std::uint16_t>(ds.frame_size));
  w.u16(static_cast<std::uint16_t>(ds.class_count));
  w.u64(ds.labels.size());
  for (std::size_t i = 0; i < ds.labels.size(); ++i) {
    if (ds.images[i].pixels.size() != pixels) throw std::invalid_argument("image of wrong size");
    w.u16(static_cast<std::uint16_t>(ds.labels[i]));
    for (float v : ds.images[i].pixels) w.u32(std::bit_cast<std::uint32_t>(v));
  }
  const Digest digest = ds.content_digest();
  w.bytes(digest.data(), digest.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(DatasetError::Kind::Io, "cannot open " + path.string());
  out.write(reinterpret_cast<const char*>(w.data().data()), static_cast<std::streamsize>(w.data().size()));
  if (!out) throw DatasetError(DatasetError::Kind::Io, "write failed for " + path.string());

  DatasetManifest manifest = ds.manifest;
  manifest.digest = to_hex(digest);
  std::ofstream side(sidecar(path));
  side << to_json(manifest).dump(2) << '\n';
  if (!side) throw DatasetError(DatasetError::Kind::Io, "write failed for " + sidecar(path).string());
}

Dataset load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetError::Kind::Io, "cannot open " + path.string());
  const std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r(data);
  const auto magic = r.take(4);
  if (std::memcmp(magic.data(), kMagic, 4) != 0) {
    throw DatasetError(DatasetError::Kind::BadMagic, path.string() + " is not a landscape image dataset");
  }
  const auto version = r.uint(2);
  if (version != kVersion) {
    throw DatasetError(DatasetError::Kind::VersionMismatch, "unsupported dataset version " + std::to_string(version));
  }
  Dataset ds;
  ds.frame_size = static_cast<int>(r.uint(2));
  ds.class_count = static_cast<int>(r.uint(2));
  const std::uint64_t count = r.uint(8);
  const std::size_t pixels = static_cast<std::size_t>(ds.frame_size) * ds.frame_size;
  const std::size_t record = 2 + 4 * pixels;
  if (count > (data.size() - kHeaderSize) / record) {
    throw DatasetError(DatasetError::Kind::Truncated, "dataset file is truncated");
  }
  ds.images.resize(count);
  ds.labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(r.uint(2));
    auto& img = ds.images[i];
    img.frame_size = ds.frame_size;
    img.label = label;
    img.pixels.resize(pixels);
    for (auto& v : img.pixels) v = std::bit_cast<float>(static_cast<std::uint32_t>(r.uint(4)));
    ds.labels[i] = label;
  }
  Digest stored{};
  const auto tail = r.take(stored.size());
  std::copy(tail.begin(), tail.end(), stored.begin());
  const Digest actual = ds.content_digest();
  if (actual != stored) throw DatasetError(DatasetError::Kind::DigestMismatch, "digest mismatch in " + path.string());
  for (int l : ds.labels) {
    if (l >= ds.class_count) throw DatasetError(DatasetError::Kind::BadContent, "label out of range");
  }

  if (std::filesystem::exists(sidecar(path))) {
    std::ifstream side(sidecar(path));
    ds.manifest = manifest_from_json(nlohmann::json::parse(side));
    if (ds.manifest.digest != to_hex(actual)) {
      throw DatasetError(DatasetError::Kind::DigestMismatch, "manifest digest does not match " + path.string());
    }
    ds.manifest.spec.encoder.frame_size = ds.frame_size;
    for (auto& img : ds.images) img.type = ds.manifest.spec.encoder.type;
  } else {
    ds.manifest.digest = to_hex(actual);
  }
  return ds;
}

}  // namespace limg
