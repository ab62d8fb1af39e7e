#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "pivotcap/config.hpp"

namespace pivotcap::cli {

inline constexpr const char* kRunRecordSchema = "pivotcap.run/1";

// SHA-1 of "blob <size>\0" followed by the file bytes, as `git hash-object` prints it.
std::string git_blob_sha1(const std::filesystem::path& path);
std::string git_blob_sha1_bytes(const std::string& bytes);

struct RunRecord {
  std::string command;
  std::vector<std::string> argv;
  TrainingConfig config;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
};

// Writes the record as JSON and returns its path.
std::filesystem::path write_run_record(const RunRecord& r, const std::filesystem::path& path);

}  // namespace pivotcap::cli
