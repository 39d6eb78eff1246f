#include "aip/checkpoint.hpp"

#include "aip/errors.hpp"
#include "aip/io.hpp"

#include <cstdint>
#include <cstring>
#include <sstream>

namespace aip {
namespace {

constexpr char kMagic[] = "AIPCKPT1\n";

class Writer {
 public:
  template <typename T>
  void pod(const T& v) {
    buf_.append(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void text(const std::string& s) {
    pod(static_cast<std::uint64_t>(s.size()));
    buf_ += s;
  }
  void matrix(const Matrix<float>& m) {
    pod(static_cast<std::int64_t>(m.rows()));
    pod(static_cast<std::int64_t>(m.cols()));
    buf_.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(float));
  }
  void raw(const char* s) { buf_ += s; }
  const std::string& str() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}
  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string text() {
    const auto n = pod<std::uint64_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  Matrix<float> matrix() {
    const auto rows = pod<std::int64_t>();
    const auto cols = pod<std::int64_t>();
    if (rows < 0 || cols < 0) throw std::runtime_error("corrupt checkpoint matrix header");
    Matrix<float> m(rows, cols);
    const std::size_t bytes = static_cast<std::size_t>(rows * cols) * sizeof(float);
    need(bytes);
    std::memcpy(m.data(), data_.data() + pos_, bytes);
    pos_ += bytes;
    return m;
  }
  void expect(const char* s) {
    const std::size_t n = std::strlen(s);
    need(n);
    if (data_.compare(pos_, n, s) != 0) throw std::runtime_error("not a checkpoint file");
    pos_ += n;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw std::runtime_error("truncated checkpoint");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  Writer w;
  w.raw(kMagic);
  w.text(serialize(ckpt.network.descriptor()));
  w.text(ckpt.config_snapshot);
  w.pod(static_cast<std::int64_t>(ckpt.epoch));
  w.text(ckpt.metrics_summary);
  for (const auto& p : ckpt.network.params()) {
    w.pod(static_cast<std::uint32_t>(p.values.size()));
    for (const auto& v : p.values) w.matrix(v);
    w.pod(static_cast<std::uint32_t>(p.buffers.size()));
    for (const auto& b : p.buffers) w.matrix(b);
  }
  w.pod(static_cast<std::uint8_t>(ckpt.discriminator ? 1 : 0));
  if (ckpt.discriminator) {
    w.pod(static_cast<std::int32_t>(ckpt.discriminator->input_width()));
    for (std::size_t i = 0; i < ckpt.discriminator->weights().size(); ++i) {
      w.matrix(ckpt.discriminator->weights()[i]);
      w.matrix(ckpt.discriminator->biases()[i]);
    }
  }
  write_atomic(path, w.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingArtifact(path.string());
  Reader r(read_text(path));
  r.expect(kMagic);
  NetworkDescriptor desc = parse_descriptor(r.text());
  Checkpoint ckpt;
  ckpt.config_snapshot = r.text();
  ckpt.epoch = static_cast<int>(r.pod<std::int64_t>());
  ckpt.metrics_summary = r.text();
  std::vector<LayerParams<float>> params(desc.layers.size());
  for (auto& p : params) {
    const auto nv = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < nv; ++i) p.values.push_back(r.matrix());
    const auto nb = r.pod<std::uint32_t>();
    for (std::uint32_t i = 0; i < nb; ++i) p.buffers.push_back(r.matrix());
  }
  ckpt.network = Network<float>(std::move(desc), std::move(params));
  if (r.pod<std::uint8_t>()) {
    const int width = r.pod<std::int32_t>();
    Discriminator<float> d(width, 0);
    for (std::size_t i = 0; i < d.weights().size(); ++i) {
      Matrix<float> wm = r.matrix();
      Matrix<float> bm = r.matrix();
      if (wm.rows() != d.weights()[i].rows() || wm.cols() != d.weights()[i].cols() ||
          bm.rows() != d.biases()[i].rows())
        throw ShapeMismatch("discriminator shape mismatch in checkpoint");
      d.weights()[i] = std::move(wm);
      d.biases()[i] = std::move(bm);
    }
    ckpt.discriminator = std::move(d);
  }
  return ckpt;
}

std::optional<double> summary_value(const std::string& summary, const std::string& key) {
  std::istringstream is(summary);
  std::string line;
  const std::string prefix = key + ": ";
  while (std::getline(is, line)) {
    if (line.rfind(prefix, 0) == 0) return std::stod(line.substr(prefix.size()));
  }
  return std::nullopt;
}

}  // namespace aip
