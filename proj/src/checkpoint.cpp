#include "prqa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "prqa/error.hpp"

namespace prqa {

static_assert(std::endian::native == std::endian::little,
              "checkpoint encoding assumes a little-endian host");

namespace {

constexpr char magic[8] = {'P', 'R', 'Q', 'A', 'C', 'K', 'P', 'T'};

class Writer {
 public:
  template <typename T>
  void pod(T v) {
    out_.append(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void bytes(const std::string& s) { out_ += s; }
  void str32(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(const std::string& in) : in_(in) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof v);
    pos_ += sizeof v;
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str32() { return bytes(pod<std::uint32_t>()); }
  void doubles(std::span<double> out) {
    need(out.size() * sizeof(double));
    std::memcpy(out.data(), in_.data() + pos_, out.size() * sizeof(double));
    pos_ += out.size() * sizeof(double);
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > in_.size()) fail(ErrorKind::parse, "checkpoint truncated");
  }
  const std::string& in_;
  std::size_t pos_ = 0;
};

nlohmann::ordered_json config_json(const ModelConfig& c) {
  return {{"embedding_dim", c.embedding_dim},     {"hidden", c.hidden},
          {"head_hidden1", c.head_hidden1},       {"head_hidden2", c.head_hidden2},
          {"max_question_len", c.max_question_len},
          {"max_candidate_len", c.max_candidate_len}};
}

ModelConfig config_from_json(const nlohmann::ordered_json& j) {
  ModelConfig c;
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.hidden = j.at("hidden").get<std::size_t>();
  c.head_hidden1 = j.at("head_hidden1").get<std::size_t>();
  c.head_hidden2 = j.at("head_hidden2").get<std::size_t>();
  c.max_question_len = j.at("max_question_len").get<std::size_t>();
  c.max_candidate_len = j.at("max_candidate_len").get<std::size_t>();
  return c;
}

}  // namespace

std::string serialize_checkpoint(const ModelParams& params, const std::string& metadata_json) {
  nlohmann::ordered_json header;
  header["model"] = config_json(params.config);
  try {
    header["metadata"] = nlohmann::ordered_json::parse(metadata_json);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::usage, std::string("checkpoint metadata is not JSON: ") + e.what());
  }

  Writer w;
  w.bytes(std::string(magic, sizeof magic));
  w.pod(checkpoint_version);
  const std::string head = header.dump();
  w.pod(static_cast<std::uint64_t>(head.size()));
  w.bytes(head);

  w.pod(static_cast<std::uint64_t>(params.vocab.size()));
  for (const std::string& t : params.vocab.tokens()) w.str32(t);

  w.pod(static_cast<std::uint64_t>(params.embeddings.pretrained.size()));
  for (bool b : params.embeddings.pretrained) w.pod(static_cast<std::uint8_t>(b));

  const auto tensors = params.all();
  w.pod(static_cast<std::uint64_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    w.str32(t.name);
    w.pod(static_cast<std::uint32_t>(t.tensor.rank()));
    for (std::size_t d : t.tensor.shape()) w.pod(static_cast<std::uint64_t>(d));
    auto v = t.tensor.values();
    w.bytes(std::string(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)));
  }
  return w.take();
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(sizeof magic) != std::string(magic, sizeof magic)) {
    fail(ErrorKind::parse, "not a checkpoint (bad magic)");
  }
  const auto version = r.pod<std::uint32_t>();
  if (version != checkpoint_version) {
    fail(ErrorKind::parse, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ModelConfig config;
  try {
    const auto header = nlohmann::ordered_json::parse(r.bytes(r.pod<std::uint64_t>()));
    config = config_from_json(header.at("model"));
    ckpt.metadata_json = header.at("metadata").dump();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("checkpoint header: ") + e.what());
  }

  std::vector<std::string> tokens(r.pod<std::uint64_t>());
  for (std::string& t : tokens) t = r.str32();
  Vocabulary vocab = Vocabulary::from_tokens(std::move(tokens));

  std::vector<bool> pretrained(r.pod<std::uint64_t>());
  for (std::size_t i = 0; i < pretrained.size(); ++i) pretrained[i] = r.pod<std::uint8_t>() != 0;

  // Allocate a correctly shaped model, then fill it tensor by tensor.
  EmbeddingTable emb{Tensor(Shape{vocab.size(), config.embedding_dim}), pretrained};
  ckpt.params = init_model(config, std::move(vocab), std::move(emb), 0);
  const auto expected = ckpt.params.all();
  const auto count = r.pod<std::uint64_t>();
  if (count != expected.size()) {
    fail(ErrorKind::parse, "checkpoint holds " + std::to_string(count) +
                               " tensors, model needs " + std::to_string(expected.size()));
  }
  for (const NamedTensor& slot : expected) {
    const std::string name = r.str32();
    if (name != slot.name) {
      fail(ErrorKind::parse, "checkpoint tensor '" + name + "' where '" + slot.name +
                                 "' was expected");
    }
    Shape shape(r.pod<std::uint32_t>());
    for (std::size_t& d : shape) d = r.pod<std::uint64_t>();
    if (shape != slot.tensor.shape()) {
      fail(ErrorKind::parse, "checkpoint tensor '" + name + "' has shape " +
                                 to_string(shape) + ", expected " +
                                 to_string(slot.tensor.shape()));
    }
    Tensor t = slot.tensor;
    r.doubles(t.values());
  }
  if (!r.done()) fail(ErrorKind::parse, "trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const std::string& metadata_json) {
  const std::string bytes = serialize_checkpoint(params, metadata_json);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot write checkpoint " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::io, "error writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace prqa
