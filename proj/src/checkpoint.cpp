#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "noctl/network.hpp"

namespace noctl {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[5] = {'N', 'O', 'C', 'T', 'L'};

class Writer {
 public:
  template <class T>
  void put(T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    bytes_.insert(bytes_.end(), buf, buf + sizeof(T));
  }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  explicit Reader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}
  template <class T>
  T get() {
    if (pos_ + sizeof(T) > bytes_.size()) throw CheckpointTruncatedError("checkpoint truncated");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  bool starts_with_magic() const {
    return bytes_.size() >= sizeof(kMagic) && std::memcmp(bytes_.data(), kMagic, sizeof(kMagic)) == 0;
  }
  void skip(std::size_t n) { pos_ += n; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

void put_spec(Writer& w, const NetworkSpec& s) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.kind));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.input_width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.hidden_width));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.depth));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(s.output_width));
}

NetworkSpec get_spec(Reader& r) {
  NetworkSpec s;
  const auto kind = r.get<std::uint32_t>();
  if (kind > 1) throw CheckpointShapeError("checkpoint: unknown network kind " + std::to_string(kind));
  s.kind = static_cast<NetKind>(kind);
  s.input_width = static_cast<int>(r.get<std::uint32_t>());
  s.hidden_width = static_cast<int>(r.get<std::uint32_t>());
  s.depth = static_cast<int>(r.get<std::uint32_t>());
  s.output_width = static_cast<int>(r.get<std::uint32_t>());
  return s;
}

}  // namespace

void save_checkpoint(const DeepOnetModel& model, const std::string& path) {
  model.validate();
  Writer w;
  w.raw(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kCheckpointVersion);
  put_spec(w, model.branch);
  put_spec(w, model.trunk);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.sensors));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.query_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.params.tensors()));
  for (std::size_t i = 0; i < model.params.tensors(); ++i) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.params.at(i).rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(model.params.at(i).cols()));
  }
  for (double v : model.params.flatten()) w.put<double>(v);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

DeepOnetModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path + "'");
  Reader r(std::vector<char>(std::istreambuf_iterator<char>(in), {}));
  if (!r.starts_with_magic()) throw CheckpointVersionError("'" + path + "' is not a checkpoint (bad magic)");
  r.skip(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointVersionError("checkpoint format version " + std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  DeepOnetModel model;
  model.branch = get_spec(r);
  model.trunk = get_spec(r);
  model.sensors = static_cast<int>(r.get<std::uint32_t>());
  model.query_dim = static_cast<int>(r.get<std::uint32_t>());
  const auto tensors = r.get<std::uint32_t>();

  std::vector<TensorShape> layout;
  try {
    layout = parameter_layout(model.branch, "branch.");
    const auto trunk = parameter_layout(model.trunk, "trunk.");
    layout.insert(layout.end(), trunk.begin(), trunk.end());
  } catch (const ArgumentError& e) {
    throw CheckpointShapeError(std::string("checkpoint: ") + e.what());
  }
  layout.push_back({"bias", 1, 1});
  if (tensors != layout.size())
    throw CheckpointShapeError("checkpoint declares " + std::to_string(tensors) + " tensors, architecture has " +
                               std::to_string(layout.size()));
  for (const auto& t : layout) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (rows != static_cast<std::uint32_t>(t.rows) || cols != static_cast<std::uint32_t>(t.cols))
      throw CheckpointShapeError("checkpoint tensor " + t.name + " has shape " + std::to_string(rows) + "x" +
                                 std::to_string(cols));
  }
  for (const auto& t : layout) {
    Matrix m(t.rows, t.cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = r.get<double>();
    model.params.add(t.name, std::move(m));
  }
  if (!r.done()) throw CheckpointShapeError("checkpoint has trailing bytes");
  try {
    model.validate();
  } catch (const ArgumentError& e) {
    throw CheckpointShapeError(std::string("checkpoint: ") + e.what());
  }
  return model;
}

}  // namespace noctl
