#include "owdetr/protocol/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "owdetr/errors.hpp"

namespace owdetr::protocol {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'O', 'W', 'D', 'E', 'T', 'R', 'C', 'K'};
constexpr std::size_t kPrefixSize = 40;

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const std::string& in, std::size_t at) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[at + i])) << (8 * i);
  }
  return static_cast<T>(v);
}

void put_doubles(std::string& out, std::span<const double> values) {
  for (double d : values) put_le(out, std::bit_cast<std::uint64_t>(d));
}

std::vector<double> get_doubles(const std::string& in, std::size_t at, std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = std::bit_cast<double>(get_le<std::uint64_t>(in, at + 8 * i));
  }
  return v;
}

std::uint32_t crc(const char* data, std::size_t n) {
  uLong c = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    c = crc32(c, reinterpret_cast<const Bytef*>(data), chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(c);
}

json model_config_json(const model::ModelConfig& c) {
  return {{"d_model", c.d_model},       {"num_queries", c.num_queries},
          {"num_levels", c.num_levels}, {"num_points", c.num_points},
          {"num_heads", c.num_heads},   {"enc_layers", c.enc_layers},
          {"dec_layers", c.dec_layers}, {"ffn_dim", c.ffn_dim},
          {"backbone_width", c.backbone_width},
          {"attention_stage", c.attention_stage},
          {"seed", c.seed}};
}

model::ModelConfig model_config_from(const json& j) {
  model::ModelConfig c;
  c.d_model = j.at("d_model");
  c.num_queries = j.at("num_queries");
  c.num_levels = j.at("num_levels");
  c.num_points = j.at("num_points");
  c.num_heads = j.at("num_heads");
  c.enc_layers = j.at("enc_layers");
  c.dec_layers = j.at("dec_layers");
  c.ffn_dim = j.at("ffn_dim");
  c.backbone_width = j.at("backbone_width");
  c.attention_stage = j.at("attention_stage");
  c.seed = j.at("seed");
  return c;
}

json instances_json(const std::vector<data::Instance>& instances) {
  json arr = json::array();
  for (const auto& inst : instances) {
    // Bit patterns keep the boxes exact.
    arr.push_back({{"label", inst.label},
                   {"box", {std::bit_cast<std::uint64_t>(inst.box.cx),
                            std::bit_cast<std::uint64_t>(inst.box.cy),
                            std::bit_cast<std::uint64_t>(inst.box.w),
                            std::bit_cast<std::uint64_t>(inst.box.h)}}});
  }
  return arr;
}

std::vector<data::Instance> instances_from(const json& arr) {
  std::vector<data::Instance> out;
  for (const auto& j : arr) {
    const auto& b = j.at("box");
    out.push_back({j.at("label").get<int>(),
                   {std::bit_cast<double>(b.at(0).get<std::uint64_t>()),
                    std::bit_cast<double>(b.at(1).get<std::uint64_t>()),
                    std::bit_cast<double>(b.at(2).get<std::uint64_t>()),
                    std::bit_cast<double>(b.at(3).get<std::uint64_t>())}});
  }
  return out;
}

struct BlobWriter {
  std::string blobs;
  json directory = json::array();

  void add(const std::string& name, const numerics::Shape& shape,
           std::span<const double> values) {
    directory.push_back({{"name", name},
                         {"shape", shape},
                         {"offset", blobs.size()},
                         {"count", values.size()}});
    put_doubles(blobs, values);
  }
};

}  // namespace

std::uint32_t config_hash(const model::ModelConfig& cfg) {
  const std::string text = model_config_json(cfg).dump();
  return crc(text.data(), text.size());
}

std::string encode_checkpoint(const EpisodeState& state) {
  auto& net = const_cast<model::Network&>(state.network);  // visit only reads
  BlobWriter params;
  net.visit([&](const std::string& name, Tensor& t) { params.add(name, t.shape(), t.data()); });
  BlobWriter& blobs = params;
  json moments = json::array();
  for (const auto& [name, mom] : state.optimizer.moments()) {
    const std::size_t m_at = blobs.blobs.size();
    put_doubles(blobs.blobs, mom.m);
    const std::size_t v_at = blobs.blobs.size();
    put_doubles(blobs.blobs, mom.v);
    moments.push_back({{"name", name},
                       {"shape", mom.shape},
                       {"m_offset", m_at},
                       {"v_offset", v_at},
                       {"count", mom.m.size()}});
  }
  json exemplars = json::array();
  for (const auto& [c, items] : state.exemplars.by_class) {
    json list = json::array();
    for (const auto& item : items) {
      list.push_back({{"image_id", item.image_id}, {"instances", instances_json(item.instances)}});
    }
    exemplars.push_back({{"class", c}, {"items", list}});
  }
  const json header = {
      {"schema", kCheckpointVersion},
      {"config_hash", config_hash(state.network.config())},
      {"model", model_config_json(state.network.config())},
      {"num_known", state.network.num_known()},
      {"tensors", params.directory},
      {"label_space", state.labels.history()},
      {"optimizer", {{"steps", state.optimizer.steps()}, {"moments", moments}}},
      {"rng", state.rng.state()},
      {"counters", {{"epochs", state.counters.epochs}, {"steps", state.counters.steps}}},
      {"exemplars", exemplars},
  };
  const std::string head = header.dump();
  std::string payload = head + blobs.blobs;

  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, 0);
  put_le<std::uint64_t>(out, head.size());
  put_le<std::uint64_t>(out, payload.size());
  put_le<std::uint32_t>(out, crc(payload.data(), payload.size()));
  put_le<std::uint32_t>(out, 0);
  out += payload;
  return out;
}

EpisodeState decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < kPrefixSize) {
    throw TruncatedError("checkpoint: " + std::to_string(bytes.size()) +
                         " bytes is shorter than the fixed header");
  }
  if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw ParseError("checkpoint: bad magic, not an owdetr checkpoint");
  }
  const auto version = get_le<std::uint32_t>(bytes, 8);
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint: version " + std::to_string(version) + ", expected " +
                       std::to_string(kCheckpointVersion));
  }
  const auto head_len = get_le<std::uint64_t>(bytes, 16);
  const auto payload_len = get_le<std::uint64_t>(bytes, 24);
  const auto expected_crc = get_le<std::uint32_t>(bytes, 32);
  if (bytes.size() - kPrefixSize < payload_len) {
    throw TruncatedError("checkpoint: payload has " + std::to_string(bytes.size() - kPrefixSize) +
                         " of " + std::to_string(payload_len) + " bytes");
  }
  if (bytes.size() - kPrefixSize > payload_len) {
    throw ParseError("checkpoint: trailing bytes after payload");
  }
  if (crc(bytes.data() + kPrefixSize, payload_len) != expected_crc) {
    throw ChecksumError("checkpoint: checksum mismatch");
  }
  if (head_len > payload_len) throw ParseError("checkpoint: header length exceeds payload");
  const std::size_t blob_base = kPrefixSize + head_len;
  const std::size_t blob_len = payload_len - head_len;

  try {
    const json header = json::parse(bytes.begin() + kPrefixSize,
                                    bytes.begin() + static_cast<long>(blob_base));
    if (header.at("schema").get<std::uint32_t>() != kCheckpointVersion) {
      throw VersionError("checkpoint: header schema mismatch");
    }
    const model::ModelConfig cfg = model_config_from(header.at("model"));
    if (header.at("config_hash").get<std::uint32_t>() != config_hash(cfg)) {
      throw ParseError("checkpoint: config hash does not match the stored model config");
    }
    auto blob = [&](std::size_t offset, std::size_t count) {
      if (offset > blob_len || count > (blob_len - offset) / 8) {
        throw ParseError("checkpoint: tensor blob out of range");
      }
      return get_doubles(bytes, blob_base + offset, count);
    };

    const auto history = header.at("label_space").get<std::vector<std::vector<int>>>();
    EpisodeState state{model::Network(cfg, header.at("num_known").get<std::size_t>()),
                       {}, {}, {}, numerics::Rng(0), {}};
    for (const auto& task : history) state.labels.add(task);

    std::map<std::string, json> directory;
    for (const auto& entry : header.at("tensors")) {
      directory[entry.at("name").get<std::string>()] = entry;
    }
    std::size_t restored = 0;
    state.network.visit([&](const std::string& name, Tensor& t) {
      const auto it = directory.find(name);
      if (it == directory.end()) throw ParseError("checkpoint: missing tensor " + name);
      const auto shape = it->second.at("shape").get<numerics::Shape>();
      if (shape != t.shape()) {
        throw ParseError("checkpoint: tensor " + name + " has shape " +
                         numerics::shape_str(shape) + ", model expects " +
                         numerics::shape_str(t.shape()));
      }
      t = Tensor::from(shape,
                       blob(it->second.at("offset"), numerics::shape_numel(shape)), true);
      ++restored;
    });
    if (restored != directory.size()) {
      throw ParseError("checkpoint: tensor directory has entries the model does not use");
    }

    std::map<std::string, Moments> moments;
    for (const auto& entry : header.at("optimizer").at("moments")) {
      const std::size_t count = entry.at("count");
      moments[entry.at("name").get<std::string>()] = {
          entry.at("shape").get<numerics::Shape>(), blob(entry.at("m_offset"), count),
          blob(entry.at("v_offset"), count)};
    }
    state.optimizer.restore(header.at("optimizer").at("steps"), std::move(moments));
    state.rng.restore(header.at("rng").get<std::string>());
    state.counters.epochs = header.at("counters").at("epochs");
    state.counters.steps = header.at("counters").at("steps");
    for (const auto& entry : header.at("exemplars")) {
      auto& items = state.exemplars.by_class[entry.at("class").get<int>()];
      for (const auto& item : entry.at("items")) {
        items.push_back({item.at("image_id").get<std::int64_t>(),
                         instances_from(item.at("instances"))});
      }
    }
    return state;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed header: ") + e.what());
  }
}

void checkpoint_save(const EpisodeState& state, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(state);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to checkpoint " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

EpisodeState checkpoint_load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace owdetr::protocol
