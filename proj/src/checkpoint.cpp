#include "checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "error.hpp"

namespace rmae {

namespace {

constexpr char kMagic[4] = {'R', 'M', 'A', 'E'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) { put_u64(out, std::bit_cast<uint64_t>(d)); }

uint32_t get_u32(const std::string& in, size_t off) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<uint32_t>(static_cast<unsigned char>(in[off + static_cast<size_t>(i)]))
         << (8 * i);
  return v;
}

uint64_t get_u64(const std::string& in, size_t off) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<uint64_t>(static_cast<unsigned char>(in[off + static_cast<size_t>(i)]))
         << (8 * i);
  return v;
}

double get_f64(const std::string& in, size_t off) {
  return std::bit_cast<double>(get_u64(in, off));
}

uint64_t fnv1a64(uint64_t h, const void* bytes, size_t n) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

struct ArrayRef {
  std::string name;
  std::vector<int64_t> shape;
  const std::vector<double>* data;
};

std::vector<ArrayRef> collect_arrays(const Checkpoint& ckpt) {
  std::vector<ArrayRef> arrays;
  auto params = ckpt.params.named();
  for (auto& [name, t] : params) arrays.push_back({name, t.shape(), &t.data()});
  if (ckpt.optimizer.has_value()) {
    const auto& opt = *ckpt.optimizer;
    for (size_t i = 0; i < params.size(); ++i)
      arrays.push_back({"optim.m." + params[i].first, {static_cast<int64_t>(opt.first_moment[i].size())},
                        &opt.first_moment[i]});
    for (size_t i = 0; i < params.size(); ++i)
      arrays.push_back({"optim.v." + params[i].first, {static_cast<int64_t>(opt.second_moment[i].size())},
                        &opt.second_moment[i]});
  }
  return arrays;
}

}  // namespace

std::string Checkpoint::content_id() const {
  uint64_t h = 0xcbf29ce484222325ULL;
  const std::string cfg = config.render();
  h = fnv1a64(h, cfg.data(), cfg.size());
  for (const auto& tok : vocab.tokens()) {
    h = fnv1a64(h, tok.data(), tok.size());
    h = fnv1a64(h, "\n", 1);
  }
  for (auto& [name, t] : params.named()) {
    h = fnv1a64(h, name.data(), name.size());
    h = fnv1a64(h, t.data().data(), t.data().size() * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const auto arrays = collect_arrays(ckpt);

  nlohmann::json meta;
  meta["step"] = ckpt.step;
  meta["seed"] = ckpt.seed;
  meta["stage"] = ckpt.stage;
  meta["lineage"] = ckpt.lineage;
  meta["config"] = nlohmann::json(ckpt.config.entries());
  meta["vocab"] = ckpt.vocab.tokens();
  if (ckpt.optimizer.has_value()) {
    const auto& opt = *ckpt.optimizer;
    meta["optimizer"] = {{"lr", opt.lr},
                         {"beta1", opt.beta1},
                         {"beta2", opt.beta2},
                         {"eps", opt.eps},
                         {"step_count", opt.step_count}};
  } else {
    meta["optimizer"] = nullptr;
  }
  nlohmann::json manifest = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& a : arrays) {
    manifest.push_back({{"name", a.name}, {"shape", a.shape}, {"offset", offset}});
    offset += a.data->size() * sizeof(double);
  }
  meta["arrays"] = manifest;

  const std::string meta_bytes = meta.dump();
  std::string out;
  out.reserve(16 + meta_bytes.size() + offset);
  out.append(kMagic, 4);
  put_u32(out, ckpt.version);
  put_u64(out, meta_bytes.size());
  out += meta_bytes;
  for (const auto& a : arrays)
    for (double d : *a.data) put_f64(out, d);

  // write-temp-then-rename keeps readers from seeing a half-written file
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("checkpoint: cannot write '" + tmp + "'");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("checkpoint: write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("checkpoint: cannot rename '" + tmp + "' to '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("checkpoint: cannot read '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("checkpoint: read error in '" + path + "'");

  if (bytes.size() < 16)
    throw FormatError("checkpoint: truncated header, file ends at byte offset " +
                      std::to_string(bytes.size()) + " (need 16)");
  if (bytes.compare(0, 4, kMagic, 4) != 0)
    throw FormatError("checkpoint: bad magic in '" + path + "' (expected RMAE)");
  const uint32_t version = get_u32(bytes, 4);
  if (version != 1)
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  const uint64_t meta_len = get_u64(bytes, 8);
  if (16 + meta_len > bytes.size())
    throw FormatError("checkpoint: truncated metadata, file ends at byte offset " +
                      std::to_string(bytes.size()) + " (need " +
                      std::to_string(16 + meta_len) + ")");

  nlohmann::json meta = nlohmann::json::parse(bytes.substr(16, meta_len), nullptr, false);
  if (meta.is_discarded())
    throw FormatError("checkpoint: metadata is not valid JSON in '" + path + "'");

  Checkpoint ckpt;
  ckpt.version = version;
  try {
    ckpt.step = meta.at("step").get<uint64_t>();
    ckpt.seed = meta.at("seed").get<uint64_t>();
    ckpt.stage = meta.at("stage").get<std::string>();
    ckpt.lineage = meta.at("lineage").get<std::string>();
    for (auto& [k, v] : meta.at("config").items())
      ckpt.config.set(k, v.get<std::string>());
    ckpt.vocab = Vocab::from_tokens(meta.at("vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad metadata record: ") + e.what());
  }

  const size_t data_start = 16 + meta_len;
  const size_t data_size = bytes.size() - data_start;

  struct Entry {
    std::vector<int64_t> shape;
    uint64_t offset;
  };
  std::map<std::string, Entry> entries;
  for (const auto& a : meta.at("arrays")) {
    entries[a.at("name").get<std::string>()] = {
        a.at("shape").get<std::vector<int64_t>>(), a.at("offset").get<uint64_t>()};
  }

  auto read_array = [&](const std::string& name, const std::vector<int64_t>& want_shape,
                        std::vector<double>& dst) {
    auto it = entries.find(name);
    if (it == entries.end())
      throw CompatError("checkpoint: missing array '" + name + "' in '" + path + "'");
    if (!want_shape.empty() && it->second.shape != want_shape)
      throw CompatError("checkpoint: array '" + name + "' has unexpected shape");
    uint64_t count = 1;
    for (int64_t d : it->second.shape) count *= static_cast<uint64_t>(d);
    const uint64_t need = it->second.offset + count * sizeof(double);
    if (need > data_size)
      throw FormatError("checkpoint: truncated array '" + name +
                        "', file ends at byte offset " + std::to_string(bytes.size()) +
                        " (need " + std::to_string(data_start + need) + ")");
    dst.resize(count);
    for (uint64_t i = 0; i < count; ++i)
      dst[i] = get_f64(bytes, data_start + it->second.offset + i * sizeof(double));
  };

  const ModelConfig mc =
      model_config_from(ckpt.config, static_cast<int64_t>(ckpt.vocab.size()));
  Rng scratch(0);
  ckpt.params = ModelParams::init(mc, scratch);
  size_t param_count = 0;
  auto named = ckpt.params.named();
  for (auto& [name, t] : named) {
    read_array(name, t.shape(), t.data());
    ++param_count;
  }

  if (!meta.at("optimizer").is_null()) {
    AdamState opt;
    const auto& o = meta.at("optimizer");
    opt.lr = o.at("lr").get<double>();
    opt.beta1 = o.at("beta1").get<double>();
    opt.beta2 = o.at("beta2").get<double>();
    opt.eps = o.at("eps").get<double>();
    opt.step_count = o.at("step_count").get<uint64_t>();
    opt.first_moment.resize(param_count);
    opt.second_moment.resize(param_count);
    for (size_t i = 0; i < named.size(); ++i) {
      read_array("optim.m." + named[i].first, {}, opt.first_moment[i]);
      read_array("optim.v." + named[i].first, {}, opt.second_moment[i]);
    }
    ckpt.optimizer = std::move(opt);
  }

  // arrays beyond the expected set mean the metadata and the model shape
  // disagree (e.g. more layers on disk than the config declares)
  size_t expected = param_count + (ckpt.optimizer ? 2 * param_count : 0);
  if (entries.size() != expected)
    throw CompatError("checkpoint: manifest lists " + std::to_string(entries.size()) +
                      " arrays, model shape expects " + std::to_string(expected));
  return ckpt;
}

void check_model_compat(const ModelConfig& from_checkpoint, const ModelConfig& expected) {
  auto fail = [](const char* field, int64_t a, int64_t b) {
    throw CompatError(std::string("checkpoint incompatible with requested model: field '") +
                      field + "' is " + std::to_string(a) + " in the checkpoint but " +
                      std::to_string(b) + " was requested");
  };
  if (from_checkpoint.vocab_size != expected.vocab_size)
    fail("vocab_size", from_checkpoint.vocab_size, expected.vocab_size);
  if (from_checkpoint.d_model != expected.d_model)
    fail("d_model", from_checkpoint.d_model, expected.d_model);
  if (from_checkpoint.n_heads != expected.n_heads)
    fail("n_heads", from_checkpoint.n_heads, expected.n_heads);
  if (from_checkpoint.n_encoder_layers != expected.n_encoder_layers)
    fail("n_encoder_layers", from_checkpoint.n_encoder_layers, expected.n_encoder_layers);
  if (from_checkpoint.d_ff != expected.d_ff)
    fail("d_ff", from_checkpoint.d_ff, expected.d_ff);
  if (from_checkpoint.max_len != expected.max_len)
    fail("max_len", from_checkpoint.max_len, expected.max_len);
  if (from_checkpoint.dec_variant != expected.dec_variant)
    throw CompatError(
        "checkpoint incompatible with requested model: field 'dec_variant' differs");
}

ModelConfig model_config_from(const Config& cfg, int64_t vocab_size) {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.d_model = cfg.get_int("d_model", 64);
  mc.n_heads = cfg.get_int("n_heads", 4);
  mc.n_encoder_layers = cfg.get_int("n_encoder_layers", 2);
  mc.d_ff = cfg.get_int("d_ff", 4 * mc.d_model);
  mc.max_len = cfg.get_int("max_len", 128);
  mc.dec_variant = dec_variant_from(cfg.get_str("dec_variant", "enhanced"));
  mc.validate();
  return mc;
}

}  // namespace rmae
