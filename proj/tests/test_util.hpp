#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "xmodal/canvas.hpp"
#include "xmodal/embedding.hpp"
#include "xmodal/rng.hpp"

namespace testutil {

// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(counter++) + "-" +
             std::to_string(reinterpret_cast<std::uintptr_t>(this) & 0xffff));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const {
    return path_ / name;
  }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline void write_file(const std::filesystem::path& path,
                       const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline xmodal::Canvas random_canvas(int h, int w, xmodal::Rng& rng) {
  xmodal::Canvas c(h, w);
  for (auto& b : c.data) b = static_cast<std::uint8_t>(rng.below(256));
  return c;
}

// Random vector whose components are exact 6-decimal values, so the
// 9-significant-digit text serialization is lossless.
inline std::vector<double> random_grid_vector(std::size_t dim,
                                              xmodal::Rng& rng) {
  std::vector<double> v(dim);
  for (double& x : v) {
    x = (static_cast<double>(rng.below(2000001)) - 1000000.0) / 1000000.0;
  }
  return v;
}

}  // namespace testutil
