#include "iaeilm/dataset.hpp"

#include "json_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace iaeilm {

namespace detail {

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot open " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw IoError("cannot open " + p.string() + " for writing");
  os << text;
  if (!os) throw IoError("write failed: " + p.string());
}

}  // namespace detail

namespace data {

namespace {

constexpr char kSplitMagic[8] = {'I', 'A', 'E', 'D', 'S', 'E', 'T', '1'};
const char* const kSplits[] = {"train", "val", "test"};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("dataset: truncated record");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("dataset: truncated record");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

const std::vector<synth::SynthSample>& Dataset::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw ConfigError("unknown split '" + name + "'");
}

Dataset generate(const DatasetConfig& config) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.hash = config_hash(config);
  const int sizes[3] = {config.n_train, config.n_val, config.n_test};
  std::vector<synth::SynthSample>* outs[3] = {&ds.train, &ds.val, &ds.test};
  std::uint64_t index = 0;
  for (int s = 0; s < 3; ++s) {
    outs[s]->resize(static_cast<std::size_t>(sizes[s]));
    const std::uint64_t base = index;
    parallel_for(sizes[s], worker_threads(), [&](int i) {
      (*outs[s])[static_cast<std::size_t>(i)] =
          synth::random_sample(config.synth, derive_seed(config.synth.seed, base + static_cast<std::uint64_t>(i)));
    });
    index += static_cast<std::uint64_t>(sizes[s]);
  }
  return ds;
}

void write_record(std::ostream& os, const synth::SynthSample& s, const synth::SynthConfig& cfg) {
  if (s.x0.cols() != cfg.latent_dim()) throw ShapeError("write_record: latent width does not match synth config");
  put_u32(os, static_cast<std::uint32_t>(s.x0.rows()));
  put_u32(os, static_cast<std::uint32_t>(cfg.pitch_bins));
  put_u32(os, static_cast<std::uint32_t>(cfg.style_channels));
  put_u32(os, static_cast<std::uint32_t>(s.style_id));
  put_u64(os, s.seed);
  for (Index i = 0; i < s.x0.size(); ++i) put_u32(os, std::bit_cast<std::uint32_t>(s.x0.data()[i]));
  std::ostringstream csv;
  melody::write_pitch_csv(csv, s.pitch);
  const std::string text = csv.str();
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

synth::SynthSample read_record(std::istream& is) {
  synth::SynthSample s;
  const auto frames = get_u32(is);
  const auto p = get_u32(is);
  const auto sc = get_u32(is);
  s.style_id = static_cast<int>(get_u32(is));
  s.seed = get_u64(is);
  const Index width = static_cast<Index>(p) + sc;
  s.x0.resize(frames, width);
  for (Index i = 0; i < s.x0.size(); ++i) s.x0.data()[i] = std::bit_cast<float>(get_u32(is));
  const auto len = get_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError("dataset: truncated pitch CSV block");
  std::istringstream csv(text);
  s.pitch = melody::read_pitch_csv(csv);
  if (s.pitch.size() != static_cast<Index>(frames)) throw IoError("dataset: pitch CSV length does not match latent frames");
  return s;
}

void save(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  nlohmann::json splits = nlohmann::json::object();
  for (const char* name : kSplits) {
    const auto& samples = ds.split(name);
    const std::string file = std::string(name) + ".rec";
    const auto path = dir / file;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open " + path.string() + " for writing");
    os.write(kSplitMagic, sizeof kSplitMagic);
    put_u32(os, static_cast<std::uint32_t>(samples.size()));
    for (const auto& s : samples) write_record(os, s, ds.config.synth);
    if (!os) throw IoError("write failed: " + path.string());
    splits[name] = {{"file", file}, {"count", samples.size()}};
  }
  nlohmann::json manifest = {{"format", "iaeilm-dataset-1"},
                             {"dataset_hash", ds.hash},
                             {"config", detail::to_json_value(ds.config)},
                             {"splits", splits}};
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::size_t count_records(const std::filesystem::path& split_file) {
  std::ifstream is(split_file, std::ios::binary);
  if (!is) throw IoError("cannot open " + split_file.string());
  char magic[8];
  if (!is.read(magic, 8) || std::memcmp(magic, kSplitMagic, 8) != 0) throw IoError(split_file.string() + ": bad split magic");
  get_u32(is);  // declared count
  std::size_t n = 0;
  while (is.peek() != std::char_traits<char>::eof()) {
    const auto frames = get_u32(is);
    const auto p = get_u32(is);
    const auto sc = get_u32(is);
    get_u32(is);
    get_u64(is);
    is.seekg(static_cast<std::streamoff>(4) * frames * (p + sc), std::ios::cur);
    const auto len = get_u32(is);
    is.seekg(len, std::ios::cur);
    if (!is) throw IoError(split_file.string() + ": truncated record " + std::to_string(n));
    ++n;
  }
  return n;
}

Dataset load(const std::filesystem::path& dir) {
  const auto manifest = detail::parse_json(detail::read_text(dir / "manifest.json"));
  Dataset ds;
  try {
    detail::from_json_value(manifest.at("config"), ds.config);
    ds.hash = manifest.at("dataset_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError((dir / "manifest.json").string() + ": " + e.what());
  }
  if (ds.hash != config_hash(ds.config)) {
    throw IoError((dir / "manifest.json").string() + ": dataset hash does not match its config");
  }
  for (const char* name : kSplits) {
    const auto& entry = manifest.at("splits").at(name);
    const auto path = dir / entry.at("file").get<std::string>();
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kSplitMagic, 8) != 0) throw IoError(path.string() + ": bad split magic");
    const auto count = get_u32(is);
    if (count != entry.at("count").get<std::uint32_t>()) throw IoError(path.string() + ": record count disagrees with manifest");
    auto& out = const_cast<std::vector<synth::SynthSample>&>(ds.split(name));
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      try {
        out.push_back(read_record(is));
      } catch (const IoError& e) {
        throw IoError(path.string() + ": record " + std::to_string(i) + ": " + e.what());
      }
      if (out.back().x0.rows() != ds.config.synth.frames || out.back().x0.cols() != ds.config.synth.latent_dim()) {
        throw IoError(path.string() + ": record " + std::to_string(i) + " has the wrong latent shape");
      }
    }
  }
  return ds;
}

}  // namespace data
}  // namespace iaeilm
