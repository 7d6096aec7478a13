// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace trajsig {

using OrderedJson = nlohmann::ordered_json;

enum class Role { User, Assistant, Tool };
enum class ObservationStatus { Ok, Error, Unknown };
enum class TraceFormat { TauBenchV1, CanonicalV1 };

std::string_view to_string(Role role);
std::string_view to_string(ObservationStatus status);
std::optional<Role> role_from_string(std::string_view s);
std::optional<ObservationStatus> status_from_string(std::string_view s);

struct ToolInvocation {
  std::string call_id;
  std::string tool_name;
  // Key order as it appeared in the source; equality checks use
  // canonical_arguments().
  OrderedJson arguments = OrderedJson::object();

  bool operator==(const ToolInvocation&) const = default;
};

struct ToolObservation {
  std::string call_id;
  ObservationStatus status = ObservationStatus::Unknown;
  std::string payload;

  bool operator==(const ToolObservation&) const = default;
};

struct Message {
  std::size_t index = 0;
  Role role = Role::User;
  std::string text;
  std::vector<ToolInvocation> tool_calls;
  std::optional<ToolObservation> observation;

  bool operator==(const Message&) const = default;
};

struct Trajectory {
  std::string id;
  std::string domain;
  std::vector<Message> messages;
  // Kept as a wide integer so out-of-range source values survive ingestion
  // and can be reported by validate_pool.
  std::optional<long long> reward;
  std::map<std::string, std::string> meta;

  bool operator==(const Trajectory&) const = default;
};

/// Thrown by the parsers. Exactly one of byte_offset / message_index is
/// usually set, depending on whether the failure is syntactic or structural.
class ParseError : public std::runtime_error {
 public:
  enum class Kind { MalformedInput, SchemaViolation };

  ParseError(Kind kind, std::string message,
             std::optional<std::size_t> byte_offset = std::nullopt,
             std::optional<std::size_t> message_index = std::nullopt);

  Kind kind() const noexcept { return kind_; }
  std::optional<std::size_t> byte_offset() const noexcept { return byte_offset_; }
  std::optional<std::size_t> message_index() const noexcept { return message_index_; }

 private:
  Kind kind_;
  std::optional<std::size_t> byte_offset_;
  std::optional<std::size_t> message_index_;
};

/// Parses one trajectory document.
///
/// TauBenchV1 accepts a single result object (`task_id`, `reward`, `info`,
/// `traj`, `trial`) as published with the benchmark's historical runs. The
/// `system` prompt is dropped and the simulator's `###STOP###` control token
/// is stripped from user turns; both facts are recorded in `meta`.
///
/// Observations are linked to invocations by call id when present. Without a
/// call id an observation links to the nearest preceding unlinked invocation of
/// the same tool, and failing that to the oldest unlinked invocation.
Trajectory parse_trajectory(std::string_view raw, TraceFormat format);

/// Splits a TauBenchV1 results file (a JSON array of result objects) into
/// trajectories. Ids are derived from `id_stem`, suffixed with the array
/// position when the array holds more than one result.
std::vector<Trajectory> parse_tau_bench_file(std::string_view raw, const std::string& id_stem,
                                             const std::string& default_domain);

OrderedJson to_canonical_json(const Trajectory& t);
std::string to_canonical_line(const Trajectory& t);

std::size_t user_message_count(const Trajectory& t);

struct InvocationRef {
  const ToolInvocation* invocation = nullptr;
  const ToolObservation* observation = nullptr;  // null when unlinked
  std::size_t message_index = 0;                 // hosting assistant message
  std::size_t observation_index = 0;             // valid when observation != null
};

/// Invocations in trajectory order, each paired with its observation.
/// References point into `t`, which must outlive the result.
std::vector<InvocationRef> invocation_stream(const Trajectory& t);

/// Sorted keys, integral floats collapsed to integers, recursively.
nlohmann::json canonical_arguments(const OrderedJson& args);
std::string canonical_arguments_string(const OrderedJson& args);

struct PoolViolation {
  enum class Kind { DuplicateId, RewardOutOfRange, MissingReward, InvariantViolation };
  Kind kind;
  std::string trajectory_id;
  std::string detail;
};

std::string_view to_string(PoolViolation::Kind kind);

std::vector<PoolViolation> validate_pool(const std::vector<Trajectory>& pool);

/// Structural invariants of a single trajectory; empty when clean.
std::vector<std::string> check_invariants(const Trajectory& t);

}  // namespace trajsig
