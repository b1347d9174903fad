#pragma once

#include <filesystem>
#include <string>
#include <unistd.h>

#include "polytx/rng.hpp"

#ifndef POLYTX_DATA_DIR
#define POLYTX_DATA_DIR "data"
#endif

namespace polytx::testing {

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(POLYTX_DATA_DIR) / name; }

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("polytx_test_" + tag + "_" + std::to_string(hash_bytes(tag, static_cast<std::uint64_t>(::getpid()))));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace polytx::testing
