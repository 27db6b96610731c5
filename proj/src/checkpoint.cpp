#include "qadb/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "qadb/report.hpp"

namespace qadb {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_record(std::string& out, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (Index d : t.dims()) put<std::uint64_t>(out, static_cast<std::uint64_t>(d));
  for (Index i = 0; i < t.size(); ++i) put<double>(out, t[i]);
}

class Reader {
 public:
  Reader(const std::string& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  bool done() const { return pos_ == bytes_.size(); }

  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string take(std::size_t n, const char* what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::pair<std::string, Tensor> record() {
    const auto len = get<std::uint32_t>("name length");
    std::string name = take(len, "name");
    const auto rank = get<std::uint32_t>("rank");
    if (rank > 8) throw FormatError(source_ + ": implausible rank " + std::to_string(rank) + " for " + name);
    Shape dims;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const auto d = get<std::uint64_t>("dims");
      if (d > (std::uint64_t{1} << 32)) throw FormatError(source_ + ": implausible dimension in " + name);
      count *= d;
      dims.push_back(static_cast<Index>(d));
    }
    need(count * sizeof(double), "payload");
    Tensor t(dims);
    for (Index i = 0; i < t.size(); ++i) t[i] = get<double>("payload");
    return {std::move(name), std::move(t)};
  }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) throw FormatError(source_ + ": truncated checkpoint (" + what + ")");
  }

  const std::string& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const HybridModel& model) {
  check_model(model);
  std::string out(kCheckpointMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put_record(out, "model.shape",
             Tensor({3}, {static_cast<double>(model.shape.n_qubits), static_cast<double>(model.shape.n_classes),
                          model.shape.per_qubit_angles ? 1.0 : 0.0}));
  for_each_parameter(model, [&](const char* name, const Tensor& t) { put_record(out, name, t); });
  return out;
}

HybridModel deserialize_checkpoint(const std::string& bytes, const std::string& source) {
  Reader in(bytes, source);
  if (in.take(4, "magic") != std::string(kCheckpointMagic, 4)) throw FormatError(source + ": bad checkpoint magic");
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unknown checkpoint version " + std::to_string(version));
  }
  auto [shape_name, shape] = in.record();
  if (shape_name != "model.shape" || shape.size() != 3) throw FormatError(source + ": missing model.shape record");
  HybridModel model;
  model.shape.n_qubits = static_cast<int>(shape[0]);
  model.shape.n_classes = static_cast<int>(shape[1]);
  model.shape.per_qubit_angles = shape[2] != 0.0;

  std::map<std::string, Tensor> records;
  while (!in.done()) {
    auto [name, t] = in.record();
    if (!records.emplace(name, std::move(t)).second) throw FormatError(source + ": duplicate record " + name);
  }
  for_each_parameter(model, [&](const char* name, Tensor& t) {
    auto it = records.find(name);
    if (it == records.end()) throw FormatError(source + ": missing record " + name);
    t = std::move(it->second);
    records.erase(it);
  });
  if (!records.empty()) throw FormatError(source + ": unexpected record " + records.begin()->first);
  try {
    check_model(model);
  } catch (const ValidationError& e) {
    throw FormatError(source + ": " + e.what());
  }
  return model;
}

void save_checkpoint(const HybridModel& model, const std::filesystem::path& path) {
  write_text(path, serialize_checkpoint(model));
}

HybridModel load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_text(path), path.string());
}

}  // namespace qadb
