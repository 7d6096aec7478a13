// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "trajsig/triage.hpp"

namespace trajsig::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct IngestOptions {
  std::vector<std::filesystem::path> inputs;
  std::string format = "auto";  // auto | tau-bench | canonical
  std::string default_domain = "unknown";
  std::filesystem::path output;
  std::optional<std::filesystem::path> violations;
  bool lenient = false;
};

struct DetectOptions {
  std::filesystem::path pool;
  std::filesystem::path output;
  std::optional<std::filesystem::path> lexicons;
  std::optional<std::filesystem::path> thresholds;
  std::optional<double> baseline;
  unsigned workers = 1;
};

struct SampleOptions {
  std::filesystem::path pool;
  std::optional<std::filesystem::path> reports;
  std::string strategy;
  std::size_t n = 100;
  std::uint64_t seed = 0;
  double exemplar_fraction = 0.2;
  std::size_t min_user_msgs = 10;
  bool flat = false;
  std::filesystem::path output;
  std::optional<std::filesystem::path> manifest;
};

struct QueueOptions {
  std::vector<std::filesystem::path> samples;
  std::filesystem::path pool;
  std::optional<std::filesystem::path> reports;
  std::vector<std::string> annotators;
  std::uint64_t seed = 0;
  bool global_order = false;
  std::filesystem::path output;
};

struct ServeOptions {
  std::filesystem::path manifest;
  std::filesystem::path store;
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string admin_token;
  std::optional<std::filesystem::path> static_dir;
};

struct ExportOptions {
  std::filesystem::path manifest;
  std::filesystem::path store;
  std::optional<std::filesystem::path> output;
};

struct AnalyzeOptions {
  std::filesystem::path export_path;
  std::optional<std::filesystem::path> output;
  std::optional<std::filesystem::path> tables;
  std::optional<std::filesystem::path> check_against;
  bool full = false;
};

std::vector<Trajectory> read_pool(const std::filesystem::path& path);
std::vector<SignalReport> read_reports(const std::filesystem::path& path);
std::vector<SampleSet> read_samples(const std::filesystem::path& path);

/// Each command reports progress on `out`, problems on `err`, and returns an
/// exit code.
int cmd_ingest(const IngestOptions& o, std::ostream& out, std::ostream& err);
int cmd_detect(const DetectOptions& o, std::ostream& out, std::ostream& err);
int cmd_sample(const SampleOptions& o, std::ostream& out, std::ostream& err);
int cmd_queue(const QueueOptions& o, std::ostream& out, std::ostream& err);
int cmd_serve(const ServeOptions& o, std::ostream& out, std::ostream& err);
int cmd_export(const ExportOptions& o, std::ostream& out, std::ostream& err);
int cmd_analyze(const AnalyzeOptions& o, std::ostream& out, std::ostream& err);

/// Full command-line entry point, including option parsing.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace trajsig::cli
