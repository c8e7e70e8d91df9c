#include "pathvit/model.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "pathvit/ops.hpp"
#include "pathvit/rng.hpp"

namespace pathvit {

template <typename T>
model<T> model<T>::init(const encoder_config& ecfg, const head_config& hcfg, std::uint64_t seed) {
  ecfg.validate();
  hcfg.validate();
  if (hcfg.embed_dim != ecfg.embed_dim) {
    throw config_error("model: head embed_dim " + std::to_string(hcfg.embed_dim) +
                       " differs from encoder embed_dim " + std::to_string(ecfg.embed_dim));
  }
  return {ecfg, hcfg, encoder_weights<T>::init(ecfg, derive_seed({seed, 1})),
          head_weights<T>::init(hcfg, derive_seed({seed, 2}))};
}

template <typename T>
basic_tensor<T> model<T>::forward(std::span<const basic_tensor<T>> images, run_mode mode,
                                  std::uint64_t dropout_seed) const {
  if (images.empty()) throw dimension_error("model: empty batch");
  std::vector<basic_tensor<T>> features;
  features.reserve(images.size());
  for (const auto& img : images) features.push_back(aggregate_features(encode(img, encoder, encoder_cfg)));
  return head_forward(concat(features, 0), head, head_cfg, mode, dropout_seed);
}

template <typename T>
std::vector<named_tensor<T>> model<T>::parameters() const {
  auto out = encoder.parameters();
  for (auto& p : head.parameters()) out.push_back(p);
  return out;
}

template <typename T>
void model<T>::set_encoder_trainable(bool on) {
  encoder.visit([on](const std::string&, basic_tensor<T>& t) { t.set_requires_grad(on); });
}

template <typename To, typename From>
model<To> cast_model(const model<From>& m, bool requires_grad) {
  return {m.encoder_cfg, m.head_cfg, cast_weights<To>(m.encoder, requires_grad),
          cast_weights<To>(m.head, requires_grad)};
}

template struct model<float>;
template struct model<double>;
template model<double> cast_model(const model<float>&, bool);
template model<float> cast_model(const model<double>&, bool);
template model<float> cast_model(const model<float>&, bool);

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* checkpoint_magic = "pathvit-checkpoint 1";

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void put_le(std::string& out, float v) {
  auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::size_t parse_size(const std::string& token, const std::string& what, std::size_t offset) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw parse_error("checkpoint: bad " + what + " '" + token + "'", offset);
  }
  return v;
}

// Reads "key value key value ..." after a leading tag.
std::map<std::string, std::string> parse_fields(std::istringstream& line) {
  std::map<std::string, std::string> out;
  std::string key, value;
  while (line >> key >> value) out[key] = value;
  return out;
}

}  // namespace

void save_checkpoint(const model<float>& m, const std::filesystem::path& path) {
  const auto& e = m.encoder_cfg;
  const auto& h = m.head_cfg;
  std::ostringstream header;
  header << checkpoint_magic << "\n";
  header << "encoder image_size " << e.image_size << " tile_size " << e.tile_size << " channels "
         << e.channels << " embed_dim " << e.embed_dim << " depth " << e.depth << " heads " << e.heads
         << " registers " << e.registers << " mlp_ratio " << e.mlp_ratio << "\n";
  header << "head embed_dim " << h.embed_dim << " bottleneck " << h.bottleneck << " classes " << h.classes
         << " dropout_rate " << format_double(h.dropout_rate) << "\n";
  const auto params = m.parameters();
  header << "tensors " << params.size() << "\n";
  std::string payload;
  for (const auto& p : params) {
    header << p.name << " " << p.value.rank();
    for (auto d : p.value.shape()) header << " " << d;
    header << " " << payload.size() << "\n";
    for (float v : p.value.data()) put_le(payload, v);
  }
  header << "bytes " << payload.size() << "\n---\n";

  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("checkpoint: cannot open " + tmp + " for writing");
    const auto text = header.str();
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw io_error("checkpoint: write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

model<float> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("checkpoint: cannot open " + path.string());
  const std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  std::size_t pos = 0;
  auto next_line = [&]() {
    const auto nl = blob.find('\n', pos);
    if (nl == std::string::npos) throw parse_error("checkpoint: truncated header", pos);
    std::string line = blob.substr(pos, nl - pos);
    pos = nl + 1;
    return line;
  };

  if (next_line() != checkpoint_magic) throw parse_error("checkpoint: bad magic", 0);

  encoder_config ecfg;
  head_config hcfg;
  {
    const std::size_t at = pos;
    std::istringstream line(next_line());
    std::string tag;
    line >> tag;
    if (tag != "encoder") throw parse_error("checkpoint: expected encoder line", at);
    auto f = parse_fields(line);
    auto get = [&](const char* k) {
      if (!f.count(k)) throw parse_error(std::string("checkpoint: encoder field missing: ") + k, at);
      return parse_size(f[k], k, at);
    };
    ecfg.image_size = get("image_size");
    ecfg.tile_size = get("tile_size");
    ecfg.channels = get("channels");
    ecfg.embed_dim = get("embed_dim");
    ecfg.depth = get("depth");
    ecfg.heads = get("heads");
    ecfg.registers = get("registers");
    ecfg.mlp_ratio = get("mlp_ratio");
  }
  {
    const std::size_t at = pos;
    std::istringstream line(next_line());
    std::string tag;
    line >> tag;
    if (tag != "head") throw parse_error("checkpoint: expected head line", at);
    auto f = parse_fields(line);
    for (const char* k : {"embed_dim", "bottleneck", "classes", "dropout_rate"}) {
      if (!f.count(k)) throw parse_error(std::string("checkpoint: head field missing: ") + k, at);
    }
    hcfg.embed_dim = parse_size(f["embed_dim"], "embed_dim", at);
    hcfg.bottleneck = parse_size(f["bottleneck"], "bottleneck", at);
    hcfg.classes = parse_size(f["classes"], "classes", at);
    const auto& rate = f["dropout_rate"];
    auto [ptr, ec] = std::from_chars(rate.data(), rate.data() + rate.size(), hcfg.dropout_rate);
    if (ec != std::errc()) throw parse_error("checkpoint: bad dropout_rate", at);
  }

  // Shapes the stored configs imply; every stored tensor must match one.
  model<float> m;
  try {
    m = model<float>::init(ecfg, hcfg, 0);
  } catch (const config_error& err) {
    throw parse_error(std::string("checkpoint: invalid stored config: ") + err.what());
  }
  std::map<std::string, basic_tensor<float>> expected;
  for (auto& p : m.parameters()) expected.emplace(p.name, p.value);

  struct entry {
    std::string name;
    shape_t shape;
    std::size_t offset;
  };
  std::vector<entry> entries;
  std::size_t count = 0;
  {
    const std::size_t at = pos;
    std::istringstream line(next_line());
    std::string tag, n;
    line >> tag >> n;
    if (tag != "tensors") throw parse_error("checkpoint: expected tensors line", at);
    count = parse_size(n, "tensor count", at);
  }
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t at = pos;
    std::istringstream line(next_line());
    entry e;
    std::string rank;
    line >> e.name >> rank;
    const auto r = parse_size(rank, "rank", at);
    for (std::size_t d = 0; d < r; ++d) {
      std::string dim;
      line >> dim;
      e.shape.push_back(parse_size(dim, "extent", at));
    }
    std::string off;
    line >> off;
    e.offset = parse_size(off, "offset", at);
    entries.push_back(std::move(e));
  }
  std::size_t data_bytes = 0;
  {
    const std::size_t at = pos;
    std::istringstream line(next_line());
    std::string tag, n;
    line >> tag >> n;
    if (tag != "bytes") throw parse_error("checkpoint: expected bytes line", at);
    data_bytes = parse_size(n, "byte count", at);
  }
  if (next_line() != "---") throw parse_error("checkpoint: missing header terminator", pos);
  const std::size_t data_start = pos;
  if (blob.size() - data_start != data_bytes) {
    throw parse_error("checkpoint: payload has " + std::to_string(blob.size() - data_start) +
                          " bytes, header declares " + std::to_string(data_bytes),
                      blob.size());
  }
  if (entries.size() != expected.size()) {
    throw dimension_error("checkpoint: " + std::to_string(entries.size()) + " tensors stored, config implies " +
                          std::to_string(expected.size()));
  }

  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data()) + data_start;
  std::map<std::string, bool> seen;
  for (const auto& e : entries) {
    auto it = expected.find(e.name);
    if (it == expected.end()) throw dimension_error("checkpoint: unexpected tensor '" + e.name + "'");
    if (seen[e.name]) throw parse_error("checkpoint: tensor '" + e.name + "' stored twice");
    seen[e.name] = true;
    auto& t = it->second;
    if (t.shape() != e.shape) {
      throw dimension_error("checkpoint: tensor '" + e.name + "' stored as " + shape_string(e.shape) +
                            ", config expects " + shape_string(t.shape()));
    }
    if (e.offset + 4 * t.size() > data_bytes) {
      throw parse_error("checkpoint: tensor '" + e.name + "' runs past the payload", data_start + e.offset);
    }
    auto dst = t.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = get_le(bytes + e.offset + 4 * i);
  }
  return m;
}

}  // namespace pathvit
