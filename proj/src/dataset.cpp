#include "wwm/dataset.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace wwm::io {

namespace {
constexpr char kMagic[4] = {'W', 'W', 'M', 'D'};
constexpr uint32_t kVersion = 1;

std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kI64: return 8;
  }
  throw std::runtime_error("container: unknown dtype");
}
}  // namespace

struct ContainerWriter::Impl {
  std::ofstream out;
  uint32_t count = 0;
  bool closed = false;
};

ContainerWriter::ContainerWriter(const std::string& path) : impl_(new Impl) {
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out)
    throw std::runtime_error("container: cannot open for write: " + path);
  impl_->out.write(kMagic, 4);
  const uint32_t ver = kVersion;
  impl_->out.write(reinterpret_cast<const char*>(&ver), 4);
  const uint32_t zero = 0;
  impl_->out.write(reinterpret_cast<const char*>(&zero), 4);
}

ContainerWriter::~ContainerWriter() {
  try {
    close();
  } catch (...) {
  }
  delete impl_;
}

void ContainerWriter::write_header(const std::string& name, DType dtype,
                                   const std::vector<uint64_t>& dims) {
  if (name.size() > 0xFFFF) throw std::runtime_error("container: name too long");
  const uint16_t len = static_cast<uint16_t>(name.size());
  impl_->out.write(reinterpret_cast<const char*>(&len), 2);
  impl_->out.write(name.data(), len);
  const uint8_t dt = static_cast<uint8_t>(dtype);
  impl_->out.write(reinterpret_cast<const char*>(&dt), 1);
  const uint8_t nd = static_cast<uint8_t>(dims.size());
  impl_->out.write(reinterpret_cast<const char*>(&nd), 1);
  for (uint64_t d : dims) impl_->out.write(reinterpret_cast<const char*>(&d), 8);
  ++impl_->count;
}

void ContainerWriter::add_f32(const std::string& name,
                              const std::vector<uint64_t>& dims,
                              const float* data) {
  write_header(name, DType::kF32, dims);
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  impl_->out.write(reinterpret_cast<const char*>(data), n * 4);
}

void ContainerWriter::add_f64(const std::string& name,
                              const std::vector<uint64_t>& dims,
                              const double* data) {
  write_header(name, DType::kF64, dims);
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  impl_->out.write(reinterpret_cast<const char*>(data), n * 8);
}

void ContainerWriter::add_i64(const std::string& name,
                              const std::vector<uint64_t>& dims,
                              const int64_t* data) {
  write_header(name, DType::kI64, dims);
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  impl_->out.write(reinterpret_cast<const char*>(data), n * 8);
}

void ContainerWriter::close() {
  if (impl_->closed) return;
  impl_->out.seekp(8);
  impl_->out.write(reinterpret_cast<const char*>(&impl_->count), 4);
  impl_->out.close();
  if (!impl_->out) throw std::runtime_error("container: write failed on close");
  impl_->closed = true;
}

std::vector<TensorRecord> read_container(
    const std::string& path, const std::function<bool(const std::string&)>& want) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("container: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("container: bad magic in " + path);
  uint32_t version = 0, count = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || version != kVersion)
    throw std::runtime_error("container: unsupported version in " + path);

  std::vector<TensorRecord> out;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 2);
    if (!in) throw std::runtime_error("container: truncated header in " + path);
    std::string name(len, '\0');
    in.read(name.data(), len);
    uint8_t dt = 0, nd = 0;
    in.read(reinterpret_cast<char*>(&dt), 1);
    in.read(reinterpret_cast<char*>(&nd), 1);
    if (!in) throw std::runtime_error("container: truncated header in " + path);
    if (dt > 2)
      throw std::runtime_error("container: corrupt tensor header in " + path);
    std::vector<uint64_t> dims(nd);
    for (auto& d : dims) in.read(reinterpret_cast<char*>(&d), 8);
    if (!in) throw std::runtime_error("container: truncated dims in " + path);
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    const DType dtype = static_cast<DType>(dt);
    const std::size_t bytes = n * dtype_size(dtype);
    const bool take = !want || want(name);
    if (!take) {
      in.seekg(static_cast<std::streamoff>(bytes), std::ios::cur);
      if (!in) throw std::runtime_error("container: truncated payload in " + path);
      continue;
    }
    TensorRecord rec;
    rec.name = std::move(name);
    rec.dtype = dtype;
    rec.dims = std::move(dims);
    switch (dtype) {
      case DType::kF32:
        rec.f32.resize(n);
        in.read(reinterpret_cast<char*>(rec.f32.data()), bytes);
        break;
      case DType::kF64:
        rec.f64.resize(n);
        in.read(reinterpret_cast<char*>(rec.f64.data()), bytes);
        break;
      case DType::kI64:
        rec.i64.resize(n);
        in.read(reinterpret_cast<char*>(rec.i64.data()), bytes);
        break;
    }
    if (!in) throw std::runtime_error("container: truncated payload in " + path);
    out.push_back(std::move(rec));
  }
  return out;
}

uint32_t container_tensor_count(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("container: cannot open: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("container: bad magic in " + path);
  uint32_t version = 0, count = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in || version != kVersion)
    throw std::runtime_error("container: unsupported version in " + path);
  return count;
}

}  // namespace wwm::io

namespace wwm {

namespace {
std::string sname(std::size_t i, const char* field) {
  return "s" + std::to_string(i) + "." + field;
}
}  // namespace

void write_scenario_file(const std::string& path, const std::vector<Sample>& samples) {
  io::ContainerWriter w(path);
  const int64_t n = static_cast<int64_t>(samples.size());
  w.add_i64("n_samples", {1}, &n);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    w.add_f32(sname(i, "csi"),
              {s.csi.shape[0], s.csi.shape[1], s.csi.shape[2], s.csi.shape[3]},
              s.csi.v.data());
    w.add_f32(sname(i, "pc"), {s.pc.size(), 3},
              reinterpret_cast<const float*>(s.pc.data()));
    w.add_f32(sname(i, "traj"), {s.traj.shape[0], s.traj.shape[1]}, s.traj.v.data());
    w.add_f32(sname(i, "pos"), {2}, s.pos2d.data());
    w.add_f32(sname(i, "raw"),
              {s.raw.shape[0], s.raw.shape[1], s.raw.shape[2], s.raw.shape[3]},
              s.raw.v.data());
    w.add_f32(sname(i, "u6g"), {s.u6g.shape[0], s.u6g.shape[1], s.u6g.shape[2]},
              s.u6g.v.data());
    const int64_t los = s.los ? 1 : 0;
    w.add_i64(sname(i, "los"), {1}, &los);
  }
  w.close();
}

std::vector<Sample> read_scenario_file(const std::string& path,
                                       const LoadOptions& opt) {
  auto want = [&opt](const std::string& name) {
    if (!opt.with_raw && name.size() > 4 &&
        name.compare(name.size() - 4, 4, ".raw") == 0)
      return false;
    if (!opt.with_u6g && name.size() > 4 &&
        name.compare(name.size() - 4, 4, ".u6g") == 0)
      return false;
    return true;
  };
  auto recs = io::read_container(path, want);
  std::size_t n = 0;
  for (const auto& r : recs)
    if (r.name == "n_samples") n = static_cast<std::size_t>(r.i64.at(0));
  std::vector<Sample> samples(n);
  for (auto& r : recs) {
    if (r.name == "n_samples") continue;
    if (r.name[0] != 's') throw std::runtime_error("dataset: unknown tensor " + r.name);
    const auto dotpos = r.name.find('.');
    const std::size_t idx = std::stoull(r.name.substr(1, dotpos - 1));
    const std::string field = r.name.substr(dotpos + 1);
    if (idx >= n) throw std::runtime_error("dataset: sample index out of range");
    Sample& s = samples[idx];
    std::vector<std::size_t> shape(r.dims.begin(), r.dims.end());
    if (field == "csi") {
      s.csi = TensorF(shape, std::move(r.f32));
    } else if (field == "pc") {
      s.pc.resize(r.dims[0]);
      std::memcpy(s.pc.data(), r.f32.data(), r.f32.size() * 4);
    } else if (field == "traj") {
      s.traj = TensorF(shape, std::move(r.f32));
    } else if (field == "pos") {
      s.pos2d = {r.f32.at(0), r.f32.at(1)};
    } else if (field == "raw") {
      s.raw = TensorF(shape, std::move(r.f32));
    } else if (field == "u6g") {
      s.u6g = TensorF(shape, std::move(r.f32));
    } else if (field == "los") {
      s.los = r.i64.at(0) != 0;
    } else {
      throw std::runtime_error("dataset: unknown field " + field);
    }
  }
  return samples;
}

}  // namespace wwm
