// SPDX-License-Identifier: Apache-2.0
#include "treenmt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "treenmt/error.hpp"

namespace treenmt {

namespace {

enum : std::uint8_t { kF64 = 0, kF32 = 1, kText = 2 };

struct Entry {
  std::uint8_t dtype = kF64;
  std::uint64_t rows = 0, cols = 0;
  std::vector<double> values;
  std::string text;
};

class Writer {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void bytes(std::string_view s) { buf_.append(s); }

  void name(std::string_view n) {
    u32(static_cast<std::uint32_t>(n.size()));
    bytes(n);
  }
  void text(std::string_view n, std::string_view body) {
    name(n);
    u8(kText);
    u64(body.size());
    u64(1);
    bytes(body);
  }
  void matrix(std::string_view n, const Matrix& m, StorageType st) {
    name(n);
    u8(st == StorageType::F32 ? kF32 : kF64);
    u64(m.rows());
    u64(m.cols());
    for (double v : m.values()) {
      if (st == StorageType::F32) u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      else u64(std::bit_cast<std::uint64_t>(v));
    }
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string data) : data_(std::move(data)) {}

  std::uint64_t un(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(bytes);
    return v;
  }
  std::string bytes(std::uint64_t n) {
    need(n);
    std::string out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::string line() {
    const auto nl = data_.find('\n', pos_);
    if (nl == std::string::npos) corrupt("missing header line");
    std::string out = data_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    return out;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

  [[noreturn]] static void corrupt(const std::string& what) {
    throw Error(ErrorKind::CorruptCheckpoint, "corrupt checkpoint: " + what);
  }

 private:
  void need(std::uint64_t n) const {
    if (n > data_.size() - pos_) corrupt("truncated");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

std::map<std::string, Entry> read_entries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open checkpoint " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  Reader r(ss.str());

  const std::string magic = r.line();
  if (magic != kCheckpointMagic) {
    if (magic.rfind("treenmt-ckpt-", 0) == 0)
      throw Error(ErrorKind::VersionMismatch, "checkpoint version '" + magic + "', expected '" +
                                                  std::string(kCheckpointMagic) + "'");
    Reader::corrupt("bad magic");
  }
  const std::uint64_t count = r.un(8);
  std::map<std::string, Entry> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint64_t name_len = r.un(4);
    std::string name = r.bytes(name_len);
    Entry e;
    e.dtype = static_cast<std::uint8_t>(r.un(1));
    e.rows = r.un(8);
    e.cols = r.un(8);
    if (e.dtype == kText) {
      if (e.cols != 1) Reader::corrupt("text entry " + name);
      e.text = r.bytes(e.rows);
    } else if (e.dtype == kF64 || e.dtype == kF32) {
      const int width = e.dtype == kF64 ? 8 : 4;
      if (e.cols != 0 && e.rows > r.remaining() / e.cols / static_cast<std::uint64_t>(width))
        Reader::corrupt("entry " + name + " larger than file");
      e.values.resize(e.rows * e.cols);
      for (double& v : e.values) {
        if (width == 8) v = std::bit_cast<double>(r.un(8));
        else v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(r.un(4))));
      }
    } else {
      Reader::corrupt("unknown dtype in entry " + name);
    }
    if (!out.emplace(std::move(name), std::move(e)).second) Reader::corrupt("duplicate entry");
  }
  if (!r.at_end()) Reader::corrupt("trailing bytes");
  return out;
}

Matrix to_matrix(const Entry& e) {
  Matrix m(e.rows, e.cols);
  std::copy(e.values.begin(), e.values.end(), m.data());
  return m;
}

void fill(ParamStore& params, const std::map<std::string, Entry>& entries, const std::string& prefix,
          std::vector<Matrix>* out) {
  for (ParamId id = 0; id < params.size(); ++id) {
    const std::string key = prefix + params.name(id);
    const auto it = entries.find(key);
    if (it == entries.end() || it->second.dtype == kText)
      throw Error(ErrorKind::MissingParameter, "checkpoint lacks parameter " + key);
    const Matrix& want = params.value(id);
    if (it->second.rows != want.rows() || it->second.cols != want.cols())
      throw Error(ErrorKind::ShapeMismatch, "checkpoint parameter " + key + " is " + std::to_string(it->second.rows) +
                                                "x" + std::to_string(it->second.cols) + ", model expects " +
                                                std::to_string(want.rows()) + "x" + std::to_string(want.cols()));
    if (out) (*out)[id] = to_matrix(it->second);
    else params.value(id) = to_matrix(it->second);
  }
}

const Entry& text_entry(const std::map<std::string, Entry>& entries, const std::string& name) {
  const auto it = entries.find(name);
  if (it == entries.end() || it->second.dtype != kText)
    throw Error(ErrorKind::CorruptCheckpoint, "corrupt checkpoint: missing " + name);
  return it->second;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const OptState* opt, const std::string& progress,
                     StorageType storage) {
  const ParamStore& p = model.params();
  std::uint64_t count = 2 + p.size();
  if (opt) count += 1 + 2 * p.size();

  Writer w;
  w.bytes(kCheckpointMagic);
  w.bytes("\n");
  w.u64(count);
  w.text("meta.config", model.config().to_text());
  w.text("meta.progress", progress);
  for (ParamId id = 0; id < p.size(); ++id) w.matrix(p.name(id), p.value(id), storage);
  if (opt) {
    if (opt->mean_sq_grad.size() != p.size() || opt->mean_sq_delta.size() != p.size())
      throw Error(ErrorKind::ShapeMismatch, "save_checkpoint: optimizer state does not match parameters");
    std::ostringstream os;
    os.precision(17);
    os << "rho=" << opt->config.rho << "\neps=" << opt->config.eps << "\nsteps=" << opt->steps << '\n';
    w.text("meta.opt", os.str());
    // Accumulators stay 64-bit so a resumed run continues exactly.
    for (ParamId id = 0; id < p.size(); ++id) w.matrix("opt.eg2/" + p.name(id), opt->mean_sq_grad[id], StorageType::F64);
    for (ParamId id = 0; id < p.size(); ++id)
      w.matrix("opt.edx2/" + p.name(id), opt->mean_sq_delta[id], StorageType::F64);
  }

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write checkpoint " + tmp);
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
    if (!out) throw Error(ErrorKind::IoError, "write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw Error(ErrorKind::IoError, "cannot rename to " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto entries = read_entries(path);
  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_text(text_entry(entries, "meta.config").text);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::CorruptCheckpoint) throw;
    throw Error(ErrorKind::CorruptCheckpoint, std::string("corrupt checkpoint: ") + e.what());
  }
  Checkpoint ck{Model::zeros(cfg), std::nullopt, text_entry(entries, "meta.progress").text};
  fill(ck.model.params(), entries, "", nullptr);

  if (entries.count("meta.opt")) {
    OptState st(ck.model.params());
    std::istringstream is(text_entry(entries, "meta.opt").text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "rho") st.config.rho = std::stod(value);
      else if (key == "eps") st.config.eps = std::stod(value);
      else if (key == "steps") st.steps = std::stoull(value);
    }
    fill(ck.model.params(), entries, "opt.eg2/", &st.mean_sq_grad);
    fill(ck.model.params(), entries, "opt.edx2/", &st.mean_sq_delta);
    ck.opt = std::move(st);
  }
  return ck;
}

void load_parameters_into(Model& model, const std::string& path) {
  fill(model.params(), read_entries(path), "", nullptr);
}

}  // namespace treenmt
