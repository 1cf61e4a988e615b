#include "wdis/checkpoint.hpp"

#include <openssl/evp.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <memory>

#include "wdis/error.hpp"

namespace wdis {

namespace {

constexpr char kMagic[4] = {'W', 'D', 'C', 'K'};
constexpr std::uint32_t kMaxRank = 8;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }

  std::vector<unsigned char> bytes;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + static_cast<std::size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  std::string raw(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n)
      throw DataError(std::string("checkpoint truncated while reading ") + what + " at byte " + std::to_string(pos_));
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t narrow(std::size_t v, const char* what) {
  if (v > 0xffffffffULL) throw DataError(std::string(what) + " does not fit the checkpoint format");
  return static_cast<std::uint32_t>(v);
}

void write_arch(Writer& w, const ArchConfig& a) {
  w.u32(narrow(a.latent_dim, "latent_dim"));
  w.u32(narrow(a.height, "height"));
  w.u32(narrow(a.width, "width"));
  w.u32(narrow(a.channels, "channels"));
  w.u32(narrow(a.conv_channels.size(), "conv layer count"));
  for (auto c : a.conv_channels) w.u32(narrow(c, "conv channels"));
  w.u32(narrow(a.kernel, "kernel"));
  w.u32(narrow(a.stride, "stride"));
  w.u32(narrow(a.mlp_width, "mlp_width"));
  w.u32(narrow(a.mlp_depth, "mlp_depth"));
  w.u32(narrow(a.relation_code_dim, "relation_code_dim"));
  w.u32(narrow(a.relation_arity, "relation_arity"));
}

ArchConfig read_arch(Reader& r) {
  ArchConfig a;
  a.latent_dim = r.u32("architecture latent_dim");
  a.height = r.u32("architecture height");
  a.width = r.u32("architecture width");
  a.channels = r.u32("architecture channels");
  const std::uint32_t layers = r.u32("architecture conv layer count");
  if (layers > 64) throw DataError("checkpoint architecture declares " + std::to_string(layers) + " conv layers");
  a.conv_channels.clear();
  for (std::uint32_t i = 0; i < layers; ++i) a.conv_channels.push_back(r.u32("architecture conv channels"));
  a.kernel = r.u32("architecture kernel");
  a.stride = r.u32("architecture stride");
  a.mlp_width = r.u32("architecture mlp_width");
  a.mlp_depth = r.u32("architecture mlp_depth");
  a.relation_code_dim = r.u32("architecture relation_code_dim");
  a.relation_arity = r.u32("architecture relation_arity");
  return a;
}

std::string shape_string(const std::vector<std::uint32_t>& dims) {
  std::string s = "[";
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "," : "") + std::to_string(dims[i]);
  return s + "]";
}

}  // namespace

const Block* Checkpoint::find(std::string_view name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

const Block& Checkpoint::at(std::string_view name) const {
  if (const auto* b = find(name)) return *b;
  throw DataError("checkpoint has no block '" + std::string(name) + "'");
}

void Checkpoint::put(Block block) {
  for (auto& b : blocks) {
    if (b.name == block.name) {
      b = std::move(block);
      return;
    }
  }
  blocks.push_back(std::move(block));
}

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& checkpoint) {
  Writer w;
  w.raw(std::string_view(kMagic, 4));
  w.u32(kCheckpointVersion);
  write_arch(w, checkpoint.arch);
  w.u32(narrow(checkpoint.blocks.size(), "block count"));
  for (const auto& b : checkpoint.blocks) {
    std::size_t count = 1;
    for (auto d : b.dims) count *= d;
    if (count != b.data.size()) throw DataError("block '" + b.name + "' data does not match its shape");
    w.u32(narrow(b.name.size(), "block name"));
    w.raw(b.name);
    w.u32(narrow(b.dims.size(), "block rank"));
    for (auto d : b.dims) w.u32(d);
    for (float v : b.data) w.f32(v);
  }
  return std::move(w.bytes);
}

void write_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  // Write to a sibling file first so an interrupted write never clobbers the
  // previous checkpoint.
  const std::string tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint '" + path + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing checkpoint '" + path + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw DataError("cannot move checkpoint into place at '" + path + "'");
}

Checkpoint parse_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (r.raw(4 <= bytes.size() ? 4 : bytes.size(), "magic") != std::string_view(kMagic, 4))
    throw DataError("not a checkpoint: bad magic (expected WDCK)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  Checkpoint c;
  c.arch = read_arch(r);
  const std::uint32_t count = r.u32("block count");
  for (std::uint32_t i = 0; i < count; ++i) {
    Block b;
    const std::uint32_t name_len = r.u32("block name length");
    if (name_len > 4096) throw DataError("checkpoint block " + std::to_string(i) + " has an implausible name length");
    b.name = r.raw(name_len, "block name");
    const std::uint32_t rank = r.u32("block rank");
    if (rank > kMaxRank) throw DataError("checkpoint block '" + b.name + "' has rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      b.dims.push_back(r.u32("block dims"));
      n *= b.dims.back();
    }
    if (n > r.remaining() / 4)
      throw DataError("checkpoint truncated in block '" + b.name + "' of shape " + shape_string(b.dims));
    b.data.resize(n);
    for (auto& v : b.data) v = r.f32("block data");
    c.blocks.push_back(std::move(b));
  }
  if (r.remaining() != 0) throw DataError("checkpoint has " + std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path + "'");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_checkpoint(bytes);
  } catch (const DataError& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

void put_parameters(Checkpoint& checkpoint, std::string_view prefix, const nn::ParameterSet<float>& params) {
  for (const auto& p : params) {
    Block b;
    b.name = std::string(prefix) + p.name;
    for (auto d : p.shape) b.dims.push_back(narrow(d, "parameter dimension"));
    b.data.assign(p.value.data(), p.value.data() + p.value.size());
    checkpoint.put(std::move(b));
  }
}

void get_parameters(const Checkpoint& checkpoint, std::string_view prefix, nn::ParameterSet<float>& params) {
  for (auto& p : params) {
    const auto& b = checkpoint.at(std::string(prefix) + p.name);
    std::vector<std::uint32_t> want;
    for (auto d : p.shape) want.push_back(static_cast<std::uint32_t>(d));
    if (b.dims != want)
      throw ConfigError("checkpoint block '" + b.name + "' has shape " + shape_string(b.dims) +
                        " but the architecture expects " + shape_string(want));
    p.value = Eigen::Map<const nn::Vector<float>>(b.data.data(), static_cast<Eigen::Index>(b.data.size()));
  }
}

void put_network(Checkpoint& checkpoint, const NetworkParams<float>& params) {
  put_parameters(checkpoint, "", params.encoder);
  put_parameters(checkpoint, "", params.decoder);
  put_parameters(checkpoint, "", params.discriminator);
  put_parameters(checkpoint, "", params.relational);
}

NetworkParams<float> get_network(const Checkpoint& checkpoint, const Architecture& arch) {
  if (!(checkpoint.arch == arch.config)) throw ConfigError("checkpoint architecture does not match the configuration");
  NetworkParams<float> p{nn::make_parameters<float>(arch.encoder), nn::make_parameters<float>(arch.decoder),
                         nn::make_parameters<float>(arch.discriminator), nn::make_parameters<float>(arch.relational)};
  get_parameters(checkpoint, "", p.encoder);
  get_parameters(checkpoint, "", p.decoder);
  get_parameters(checkpoint, "", p.discriminator);
  get_parameters(checkpoint, "", p.relational);
  return p;
}

void put_prior(Checkpoint& checkpoint, const GMPrior& prior) {
  const auto n = narrow(prior.num_components(), "component count");
  const auto dim = narrow(prior.latent_dim(), "latent dimension");
  auto matrix_block = [&](std::string name, const Eigen::MatrixXd& m) {
    Block b{std::move(name), {n, dim}, {}};
    b.data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) b.data.push_back(static_cast<float>(m(i, j)));
    checkpoint.put(std::move(b));
  };
  matrix_block("prior.means", prior.means);
  matrix_block("prior.variances", prior.variances);
  checkpoint.put({"prior.variance_floor", {1}, {static_cast<float>(prior.variance_floor)}});
  put_counters(checkpoint, "prior.support", {prior.support.begin(), prior.support.end()});
}

bool has_prior(const Checkpoint& checkpoint) { return checkpoint.find("prior.means") != nullptr; }

GMPrior get_prior(const Checkpoint& checkpoint) {
  const auto& means = checkpoint.at("prior.means");
  const auto& vars = checkpoint.at("prior.variances");
  if (means.dims.size() != 2 || means.dims != vars.dims) throw DataError("checkpoint prior blocks have inconsistent shapes");
  GMPrior prior;
  const auto n = static_cast<Eigen::Index>(means.dims[0]), dim = static_cast<Eigen::Index>(means.dims[1]);
  prior.means.resize(n, dim);
  prior.variances.resize(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) {
      const auto k = static_cast<std::size_t>(i * dim + j);
      prior.means(i, j) = means.data[k];
      prior.variances(i, j) = vars.data[k];
    }
  }
  if (!prior.means.allFinite() || !(prior.variances.array() > 0).all())
    throw DataError("checkpoint prior has non-finite means or non-positive variances");
  if (const auto* floor = checkpoint.find("prior.variance_floor"); floor && !floor->data.empty())
    prior.variance_floor = floor->data[0];
  if (checkpoint.find("prior.support")) {
    const auto support = get_counters(checkpoint, "prior.support");
    prior.support.assign(support.begin(), support.end());
  }
  return prior;
}

void put_counters(Checkpoint& checkpoint, std::string_view name, const std::vector<std::uint64_t>& values) {
  Block b{std::string(name), {narrow(values.size(), "counter count"), 4}, {}};
  for (auto v : values)
    for (int i = 0; i < 4; ++i) b.data.push_back(static_cast<float>((v >> (16 * i)) & 0xffffU));
  checkpoint.put(std::move(b));
}

std::vector<std::uint64_t> get_counters(const Checkpoint& checkpoint, std::string_view name) {
  const auto& b = checkpoint.at(name);
  if (b.dims.size() != 2 || b.dims[1] != 4) throw DataError("block '" + b.name + "' is not a counter block");
  std::vector<std::uint64_t> out(b.dims[0], 0);
  for (std::size_t k = 0; k < out.size(); ++k) {
    for (int i = 0; i < 4; ++i) {
      const float chunk = b.data[k * 4 + static_cast<std::size_t>(i)];
      if (!(chunk >= 0.0f && chunk <= 65535.0f) || std::floor(chunk) != chunk)
        throw DataError("block '" + b.name + "' holds a malformed counter");
      out[k] |= static_cast<std::uint64_t>(chunk) << (16 * i);
    }
  }
  return out;
}

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1)
    throw std::runtime_error("SHA-256 computation failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for hashing");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return sha256_hex(bytes);
}

}  // namespace wdis
