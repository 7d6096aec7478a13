// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajsig/triage.hpp"

namespace trajsig {

enum class MainReason { ActionToolUse, Conversation, ExternalSystem, SuccessExemplar, NoneUnclear, Other };

inline constexpr MainReason kAllReasons[] = {
    MainReason::ActionToolUse,   MainReason::Conversation, MainReason::ExternalSystem,
    MainReason::SuccessExemplar, MainReason::NoneUnclear,  MainReason::Other,
};

std::string_view to_string(MainReason r);
std::optional<MainReason> main_reason_from_string(std::string_view s);

class AnnotationError : public std::runtime_error {
 public:
  enum class Code {
    EmptySamples,
    UnknownAnnotator,
    UnknownItem,
    DuplicateLabel,
    InvalidCategory,
    InvalidRequest,
    Unauthorized,
    CorruptStore,
  };
  AnnotationError(Code code, const std::string& message) : std::runtime_error(message), code_(code) {}
  Code code() const noexcept { return code_; }

 private:
  Code code_;
};

std::string_view to_string(AnnotationError::Code c);
int http_status(AnnotationError::Code c);

struct ProvenanceLink {
  Strategy strategy = Strategy::Random;
  Stream stream = Stream::NotApplicable;

  auto operator<=>(const ProvenanceLink&) const = default;
};

struct ManifestItem {
  std::string blinded_id;
  std::string trajectory_id;
  std::vector<ProvenanceLink> provenance;
  std::optional<long long> reward;
  std::string domain;
  std::vector<std::string> activations;
  // Messages only; nothing about how or why the item was sampled.
  nlohmann::ordered_json payload;

  bool operator==(const ManifestItem&) const = default;
};

/// Server-side queue description. Holds the blinded-id mapping, so it must
/// never be served as is.
struct QueueManifest {
  std::uint64_t seed = 0;
  bool global_order = false;
  std::vector<std::string> annotators;
  std::vector<ManifestItem> items;  // sorted by trajectory_id
  std::map<std::string, std::vector<std::string>> orders;  // annotator -> blinded ids

  const ManifestItem* find(std::string_view blinded_id) const;
  bool operator==(const QueueManifest&) const = default;
};

nlohmann::ordered_json to_json(const QueueManifest& m);
QueueManifest queue_manifest_from_json(const nlohmann::ordered_json& j);

/// Blinded view of a trajectory: message index, role, text, tool calls and
/// observations.
nlohmann::ordered_json blinded_payload(const Trajectory& t);

/// One item per unique trajectory across `samples`, keeping every provenance
/// link. Each annotator gets an independent seeded shuffle unless
/// `global_order` is set. `reports` may be empty.
QueueManifest build_queue(const std::vector<SampleSet>& samples, const std::vector<Trajectory>& pool,
                          const std::vector<SignalReport>& reports, const std::vector<std::string>& annotators,
                          std::uint64_t seed, bool global_order = false);

struct LabelSubmission {
  std::string annotator_id;
  std::string blinded_id;
  bool informative = false;
  MainReason main_reason = MainReason::NoneUnclear;
  std::optional<std::string> note;
};

inline constexpr std::size_t kMaxNoteChars = 500;

/// Validates the wire form {annotator_id, blinded_id, informative, main_reason, note}.
LabelSubmission label_submission_from_json(const nlohmann::json& j);

struct LabelRecord {
  std::uint64_t seq = 0;
  LabelSubmission label;
  std::string submitted_at;
};

/// Append-only JSONL label log. Every append is fsync'd before it returns. A
/// torn final line left by a crash is discarded on open; damage anywhere else
/// raises CorruptStore.
class LabelStore {
 public:
  explicit LabelStore(std::filesystem::path path);
  ~LabelStore();
  LabelStore(const LabelStore&) = delete;
  LabelStore& operator=(const LabelStore&) = delete;

  const LabelRecord* find(std::string_view annotator, std::string_view blinded_id) const;
  LabelRecord append(const LabelSubmission& l, std::string submitted_at);
  /// Admin escape hatch: appends a tombstone so the pair can be relabeled.
  std::uint64_t revoke(std::string_view annotator, std::string_view blinded_id);

  /// Live labels in sequence order.
  std::vector<LabelRecord> labels() const;
  std::uint64_t last_seq() const { return last_seq_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  void write_line(const std::string& line);

  std::filesystem::path path_;
  int fd_ = -1;
  std::uint64_t last_seq_ = 0;
  std::map<std::pair<std::string, std::string>, LabelRecord> live_;
};

struct Progress {
  std::size_t labeled = 0;
  std::size_t total = 0;
};

class AnnotationService {
 public:
  using Clock = std::function<std::string()>;

  AnnotationService(QueueManifest manifest, const std::filesystem::path& store_path, Clock clock = {});

  /// Lowest-position unlabeled item for the annotator as
  /// {blinded_id, position, total, payload}, or {done, labeled, total}.
  nlohmann::ordered_json next_item(const std::string& annotator) const;
  nlohmann::ordered_json item(const std::string& blinded_id) const;
  nlohmann::ordered_json submit_label(const LabelSubmission& l);
  Progress progress(const std::string& annotator) const;
  void revoke(const std::string& annotator, const std::string& blinded_id);

  /// Header line then one record per live label, joined with the unblinded
  /// item metadata. Deterministic for a given store.
  std::string export_labels() const;

  const QueueManifest& manifest() const { return manifest_; }

 private:
  void require_annotator(const std::string& annotator) const;

  QueueManifest manifest_;
  std::map<std::string, std::size_t, std::less<>> item_index_;
  Clock clock_;
  mutable std::shared_mutex mutex_;
  LabelStore store_;
};

/// Annotator guidelines, including the priority rules for multi-issue items.
nlohmann::ordered_json annotator_guidelines();

}  // namespace trajsig
