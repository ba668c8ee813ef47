#include "aligntk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <map>
#include <utility>

#include "aligntk/hash.hpp"
#include "json.hpp"

namespace aligntk {
namespace {

constexpr char kMagic[8] = {'A', 'T', 'A', 'L', 'I', 'G', 'N', '1'};
constexpr std::int64_t kFormatVersion = 1;
constexpr std::uint32_t kMaxNameLen = 4096;
constexpr std::int64_t kMaxElements = 1LL << 30;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>(v >> (8 * i)));
}

class Reader {
 public:
  Reader(std::ifstream& in, std::string path)
      : in_(in), path_(std::move(path)) {}

  void bytes(void* dst, std::size_t n) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw DataError("truncated checkpoint " + path_);
    }
  }

  std::uint32_t u32() {
    unsigned char b[4];
    bytes(b, 4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  std::uint64_t u64() {
    unsigned char b[8];
    bytes(b, 8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
  }

  bool at_eof() {
    in_.peek();
    return in_.eof();
  }

 private:
  std::ifstream& in_;
  std::string path_;
};

void append_record(std::string& out, const std::string& name, const Tensor& t) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out.append(name);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (std::int64_t i = 0; i < t.rank(); ++i) {
    put_u64(out, static_cast<std::uint64_t>(t.dim(i)));
  }
  for (std::int64_t i = 0; i < t.size(); ++i) {
    put_u64(out, std::bit_cast<std::uint64_t>(t.at(i)));
  }
}

nlohmann::json config_json(const ModelConfig& cfg) {
  return {{"d_model", cfg.d_model},       {"heads", cfg.heads},
          {"enc_layers", cfg.enc_layers}, {"dec_layers", cfg.dec_layers},
          {"src_vocab", cfg.src_vocab},   {"tgt_vocab", cfg.tgt_vocab},
          {"max_len", cfg.max_len},       {"dropout", cfg.dropout}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<std::int64_t>();
  cfg.heads = j.at("heads").get<std::int64_t>();
  cfg.enc_layers = j.at("enc_layers").get<std::int64_t>();
  cfg.dec_layers = j.at("dec_layers").get<std::int64_t>();
  cfg.src_vocab = j.at("src_vocab").get<std::int64_t>();
  cfg.tgt_vocab = j.at("tgt_vocab").get<std::int64_t>();
  cfg.max_len = j.at("max_len").get<std::int64_t>();
  cfg.dropout = j.at("dropout").get<double>();
  return cfg;
}

Vocab vocab_from_tokens(const std::vector<std::string>& tokens,
                        const std::string& which) {
  Vocab v;
  if (tokens.size() < 4) {
    throw DataError("checkpoint " + which + " vocabulary is too small");
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (tokens[i] != v.tokens[i]) {
      throw DataError("checkpoint " + which +
                      " vocabulary does not start with the special tokens");
    }
  }
  for (std::size_t i = 4; i < tokens.size(); ++i) {
    if (v.add(tokens[i]) != static_cast<std::int64_t>(i)) {
      throw DataError("checkpoint " + which +
                      " vocabulary contains a duplicate token");
    }
  }
  return v;
}

// Pull each visited tensor out of the record map, checking shapes.
void fill_params(
    const std::function<void(
        const std::function<void(const std::string&, const VarPtr&)>&)>& visit,
    std::map<std::string, Tensor>& records, const std::string& path) {
  visit([&](const std::string& name, const VarPtr& var) {
    auto it = records.find(name);
    if (it == records.end()) {
      throw DataError("checkpoint " + path + " is missing tensor " + name);
    }
    if (!var->value.same_shape(it->second)) {
      throw DataError("checkpoint " + path + " tensor " + name +
                      " has shape " + it->second.shape_str() + ", expected " +
                      var->value.shape_str());
    }
    var->value = std::move(it->second);
    var->requires_grad = false;
    records.erase(it);
  });
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  ck.config.validate();
  nlohmann::json header;
  header["version"] = kFormatVersion;
  header["config"] = config_json(ck.config);
  header["src_tokens"] = ck.src_vocab.tokens;
  header["tgt_tokens"] = ck.tgt_vocab.tokens;
  header["base_hash"] = hex64(ck.base.content_hash());
  if (ck.has_align) header["align_mode"] = repr_mode_name(ck.align_mode);
  std::string header_text = header.dump();

  std::string blob;
  blob.append(kMagic, sizeof(kMagic));
  put_u32(blob, static_cast<std::uint32_t>(header_text.size()));
  blob.append(header_text);
  ck.base.visit([&](const std::string& name, const VarPtr& var) {
    append_record(blob, name, var->value);
  });
  if (ck.has_align) {
    ck.align.visit([&](const std::string& name, const VarPtr& var) {
      append_record(blob, name, var->value);
    });
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open checkpoint " + path + " for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  Reader r(in, path);

  char magic[8];
  r.bytes(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw DataError(path + " is not a checkpoint file (bad magic)");
  }

  std::uint32_t header_len = r.u32();
  if (header_len > (64u << 20)) {
    throw DataError("checkpoint " + path + " header length is implausible");
  }
  std::string header_text(header_len, '\0');
  r.bytes(header_text.data(), header_len);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + " header is not valid JSON: " +
                    e.what());
  }

  Checkpoint ck;
  try {
    std::int64_t version = header.at("version").get<std::int64_t>();
    if (version != kFormatVersion) {
      throw DataError("checkpoint " + path + " has unknown format version " +
                      std::to_string(version));
    }
    ck.config = config_from_json(header.at("config"));
    ck.src_vocab = vocab_from_tokens(
        header.at("src_tokens").get<std::vector<std::string>>(), "source");
    ck.tgt_vocab = vocab_from_tokens(
        header.at("tgt_tokens").get<std::vector<std::string>>(), "target");
    ck.base_hash = std::stoull(header.at("base_hash").get<std::string>(),
                               nullptr, 16);
    if (header.contains("align_mode")) {
      ck.has_align = true;
      ck.align_mode =
          repr_mode_from_name(header.at("align_mode").get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("checkpoint " + path + " header is malformed: " + e.what());
  }
  ck.config.validate();
  if (ck.config.src_vocab != ck.src_vocab.size() ||
      ck.config.tgt_vocab != ck.tgt_vocab.size()) {
    throw DataError("checkpoint " + path +
                    " vocabulary sizes disagree with the config");
  }

  std::map<std::string, Tensor> records;
  while (!r.at_eof()) {
    std::uint32_t name_len = r.u32();
    if (name_len == 0 || name_len > kMaxNameLen) {
      throw DataError("checkpoint " + path + " has a corrupt tensor name");
    }
    std::string name(name_len, '\0');
    r.bytes(name.data(), name_len);
    std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 3) {
      throw DataError("checkpoint " + path + " tensor " + name +
                      " has unsupported rank " + std::to_string(rank));
    }
    std::vector<std::int64_t> shape;
    std::int64_t total = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      std::uint64_t d = r.u64();
      if (d == 0 || static_cast<std::int64_t>(d) > kMaxElements ||
          total > kMaxElements / static_cast<std::int64_t>(d)) {
        throw DataError("checkpoint " + path + " tensor " + name +
                        " has corrupt dimensions");
      }
      shape.push_back(static_cast<std::int64_t>(d));
      total *= static_cast<std::int64_t>(d);
    }
    Tensor t(shape);
    for (std::int64_t i = 0; i < total; ++i) {
      t.at(i) = std::bit_cast<double>(r.u64());
    }
    if (!records.emplace(std::move(name), std::move(t)).second) {
      throw DataError("checkpoint " + path + " has a duplicate tensor record");
    }
  }

  ck.base = TransformerParams::init(ck.config, 0);
  fill_params([&](const auto& fn) { ck.base.visit(fn); }, records, path);
  if (ck.has_align) {
    ck.align = AlignLayerParams::init(ck.config.d_model, ck.config.tgt_vocab, 0);
    fill_params([&](const auto& fn) { ck.align.visit(fn); }, records, path);
  }
  if (!records.empty()) {
    throw DataError("checkpoint " + path + " has an unexpected tensor " +
                    records.begin()->first);
  }
  if (ck.base.content_hash() != ck.base_hash) {
    throw DataError("checkpoint " + path +
                    " base tensors do not match the stored hash");
  }
  return ck;
}

}  // namespace aligntk
