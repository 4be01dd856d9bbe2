/**
 * @file dataset.hpp
 * @brief Binary tensor container and dataset records.
 *
 * Container layout (little-endian):
 *   magic "WWMD" | u32 version=1 | u32 tensor_count
 *   per tensor: u16 name_len | name | u8 dtype (0=f32,1=f64,2=i64) |
 *               u8 ndim | u64 dims[ndim] | row-major payload
 */
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "wwm/pointcloud.hpp"
#include "wwm/tensor.hpp"

namespace wwm::io {

enum class DType : uint8_t { kF32 = 0, kF64 = 1, kI64 = 2 };

struct TensorRecord {
  std::string name;
  DType dtype = DType::kF32;
  std::vector<uint64_t> dims;
  std::vector<float> f32;
  std::vector<double> f64;
  std::vector<int64_t> i64;

  std::size_t numel() const {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }
};

class ContainerWriter {
 public:
  explicit ContainerWriter(const std::string& path);
  ~ContainerWriter();
  ContainerWriter(const ContainerWriter&) = delete;
  ContainerWriter& operator=(const ContainerWriter&) = delete;

  void add_f32(const std::string& name, const std::vector<uint64_t>& dims,
               const float* data);
  void add_f64(const std::string& name, const std::vector<uint64_t>& dims,
               const double* data);
  void add_i64(const std::string& name, const std::vector<uint64_t>& dims,
               const int64_t* data);
  void close();  // patches the tensor count; idempotent

 private:
  void write_header(const std::string& name, DType dtype,
                    const std::vector<uint64_t>& dims);
  struct Impl;
  Impl* impl_;
};

/// Reads every tensor whose name passes the filter (empty filter = all).
/// Filtered-out payloads are skipped without allocation. Throws on magic or
/// version mismatch and on truncation.
std::vector<TensorRecord> read_container(
    const std::string& path,
    const std::function<bool(const std::string&)>& want = {});

/// Tensor count recorded in the header, without reading payloads.
uint32_t container_tensor_count(const std::string& path);

}  // namespace wwm::io

namespace wwm {

/// One stored training example. Raw label channels load on demand.
struct Sample {
  TensorF csi;              // (2,T,N_t,N_r') standardized signed-log
  std::vector<Point3f> pc;  // BS-centered crop
  TensorF traj;             // (T,3) BS-centered
  std::array<float, 2> pos2d{0, 0};
  TensorF raw;   // (T,N_t,N_r',2) complex subband at f_c, raw scale
  TensorF u6g;   // (N_t,N_r',2) last-step channel at the U6G carrier
  bool los = false;
};

inline constexpr std::size_t kTensorsPerSample = 7;

void write_scenario_file(const std::string& path, const std::vector<Sample>& samples);

struct LoadOptions {
  bool with_raw = false;
  bool with_u6g = false;
};
std::vector<Sample> read_scenario_file(const std::string& path,
                                       const LoadOptions& opt = {});

}  // namespace wwm
