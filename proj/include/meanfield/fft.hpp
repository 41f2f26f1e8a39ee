#pragma once

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>
#include <vector>

namespace meanfield::detail {

/// FFTW's planner is not thread safe; executing distinct plans is. Plans are
/// cached per thread on fftw-owned scratch buffers, so caller arrays need no
/// alignment guarantees and concurrent sweep cells never share scratch space.
/// FFTW_ESTIMATE keeps planning deterministic (no runtime measurement), which
/// the bitwise reproducibility contract of the CLI relies on.
class FftCache {
 public:
  FftCache() = default;
  FftCache(const FftCache&) = delete;
  FftCache& operator=(const FftCache&) = delete;

  ~FftCache() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    for (auto& [key, entry] : entries_) {
      fftw_destroy_plan(entry.plan);
      fftw_free(entry.buffer);
    }
  }

  void run(std::vector<std::complex<double>>& data,
           const std::vector<int>& dims, int sign) {
    std::size_t len = 1;
    for (int n : dims) len *= static_cast<std::size_t>(n);
    if (data.size() != len)
      throw std::invalid_argument("fft: data length does not match dims");

    Entry& entry = lookup(dims, sign, len);
    std::memcpy(entry.buffer, data.data(), len * sizeof(fftw_complex));
    fftw_execute(entry.plan);
    std::memcpy(data.data(), entry.buffer, len * sizeof(fftw_complex));
  }

  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }

 private:
  struct Entry {
    fftw_plan plan = nullptr;
    fftw_complex* buffer = nullptr;
  };

  Entry& lookup(const std::vector<int>& dims, int sign, std::size_t len) {
    auto key = std::make_pair(dims, sign);
    auto it = entries_.find(key);
    if (it != entries_.end()) return it->second;

    std::lock_guard<std::mutex> lock(planner_mutex());
    Entry entry;
    entry.buffer = fftw_alloc_complex(len);
    if (entry.buffer == nullptr)
      throw std::bad_alloc();
    entry.plan =
        fftw_plan_dft(static_cast<int>(dims.size()),
                      const_cast<int*>(dims.data()), entry.buffer,
                      entry.buffer, sign, FFTW_ESTIMATE);
    if (entry.plan == nullptr) {
      fftw_free(entry.buffer);
      throw std::runtime_error("fft: plan creation failed");
    }
    return entries_.emplace(std::move(key), entry).first->second;
  }

  std::map<std::pair<std::vector<int>, int>, Entry> entries_;
};

/// In-place unnormalized DFT over a row-major array (dims[0] slowest).
/// sign: FFTW_FORWARD (-1) or FFTW_BACKWARD (+1).
inline void fft(std::vector<std::complex<double>>& data,
                const std::vector<int>& dims, int sign) {
  thread_local FftCache cache;
  cache.run(data, dims, sign);
}

}  // namespace meanfield::detail
