// SPDX-License-Identifier: Apache-2.0
#include "trajsig/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <limits>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace trajsig {

namespace {

constexpr std::string_view kTauStopToken = "###STOP###";

[[noreturn]] void schema_error(std::string message,
                               std::optional<std::size_t> message_index = std::nullopt) {
  throw ParseError(ParseError::Kind::SchemaViolation, std::move(message), std::nullopt,
                   message_index);
}

OrderedJson parse_json(std::string_view raw) {
  try {
    return OrderedJson::parse(raw.begin(), raw.end());
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(ParseError::Kind::MalformedInput, e.what(), e.byte);
  }
}

std::string scalar_to_string(const OrderedJson& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::optional<long long> parse_reward(const OrderedJson& v) {
  if (v.is_null()) return std::nullopt;
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    if (std::isfinite(d) && std::floor(d) == d && std::fabs(d) < 1e15)
      return static_cast<long long>(d);
  }
  schema_error("reward must be an integer, got " + v.dump());
}

// Text fields in traces are sometimes null (assistant turns that only call
// tools). Non-string content is kept in its JSON rendering.
std::string text_of(const OrderedJson& msg, const char* key) {
  auto it = msg.find(key);
  if (it == msg.end() || it->is_null()) return {};
  return scalar_to_string(*it);
}

struct PendingObservation {
  std::optional<std::string> call_id;
  std::optional<std::string> tool_name;
};

// Links every Tool message of `messages` to an earlier invocation. Pending
// entries are indexed by message position.
void link_observations(std::vector<Message>& messages,
                       const std::unordered_map<std::size_t, PendingObservation>& pending) {
  struct OpenCall {
    std::string call_id;
    std::string tool_name;
    bool linked = false;
  };
  std::vector<OpenCall> calls;
  std::unordered_map<std::string, std::size_t> by_id;

  for (auto& msg : messages) {
    for (const auto& inv : msg.tool_calls) {
      by_id.emplace(inv.call_id, calls.size());
      calls.push_back({inv.call_id, inv.tool_name, false});
    }
    if (msg.role != Role::Tool) continue;

    const auto& p = pending.at(msg.index);
    std::optional<std::size_t> target;
    if (p.call_id && !p.call_id->empty()) {
      auto it = by_id.find(*p.call_id);
      if (it == by_id.end())
        schema_error("observation references unknown or later call id '" + *p.call_id + "'",
                     msg.index);
      target = it->second;
    } else {
      if (p.tool_name) {
        for (std::size_t i = calls.size(); i-- > 0;) {
          if (!calls[i].linked && calls[i].tool_name == *p.tool_name) {
            target = i;
            break;
          }
        }
      }
      if (!target) {
        for (std::size_t i = 0; i < calls.size(); ++i) {
          if (!calls[i].linked) {
            target = i;
            break;
          }
        }
      }
      if (!target) schema_error("observation has no preceding invocation to link to", msg.index);
    }
    calls[*target].linked = true;
    msg.observation->call_id = calls[*target].call_id;
  }
}

// Assigns synthetic ids to invocations that lack one and rejects duplicates.
void assign_call_ids(std::vector<Message>& messages) {
  std::unordered_set<std::string> seen;
  for (const auto& msg : messages)
    for (const auto& inv : msg.tool_calls)
      if (!inv.call_id.empty() && !seen.insert(inv.call_id).second)
        schema_error("duplicate call id '" + inv.call_id + "'", msg.index);

  for (auto& msg : messages) {
    for (std::size_t k = 0; k < msg.tool_calls.size(); ++k) {
      auto& inv = msg.tool_calls[k];
      if (!inv.call_id.empty()) continue;
      std::string id = "call-" + std::to_string(msg.index) + "-" + std::to_string(k);
      while (seen.contains(id)) id += "x";
      seen.insert(id);
      inv.call_id = std::move(id);
    }
  }
}

OrderedJson arguments_of(const OrderedJson& raw, std::size_t message_index) {
  if (raw.is_null()) return OrderedJson::object();
  if (raw.is_string()) {
    // OpenAI-style traces carry arguments as an encoded JSON string.
    const auto s = raw.get<std::string>();
    if (s.empty()) return OrderedJson::object();
    try {
      return OrderedJson::parse(s);
    } catch (const nlohmann::json::parse_error&) {
      schema_error("tool call arguments are not valid JSON", message_index);
    }
  }
  return raw;
}

Trajectory finish(Trajectory t, const std::unordered_map<std::size_t, PendingObservation>& pending) {
  assign_call_ids(t.messages);
  link_observations(t.messages, pending);
  return t;
}

Trajectory parse_canonical(const OrderedJson& doc) {
  if (!doc.is_object()) schema_error("top-level value must be an object");
  Trajectory t;

  auto id = doc.find("id");
  if (id == doc.end() || !id->is_string() || id->get<std::string>().empty())
    schema_error("missing or empty 'id'");
  t.id = id->get<std::string>();
  if (auto d = doc.find("domain"); d != doc.end() && d->is_string()) t.domain = d->get<std::string>();
  if (auto r = doc.find("reward"); r != doc.end()) t.reward = parse_reward(*r);
  if (auto m = doc.find("meta"); m != doc.end() && m->is_object())
    for (const auto& [k, v] : m->items()) t.meta[k] = scalar_to_string(v);

  auto msgs = doc.find("messages");
  if (msgs == doc.end() || !msgs->is_array()) schema_error("missing 'messages' array");

  std::unordered_map<std::size_t, PendingObservation> pending;
  for (std::size_t pos = 0; pos < msgs->size(); ++pos) {
    const auto& m = (*msgs)[pos];
    if (!m.is_object()) schema_error("message is not an object", pos);
    Message msg;
    msg.index = pos;
    if (auto ix = m.find("index"); ix != m.end()) {
      if (!ix->is_number_unsigned() || ix->get<std::size_t>() != pos)
        schema_error("message indices must be contiguous from 0", pos);
    }
    auto role = m.find("role");
    if (role == m.end() || !role->is_string()) schema_error("message without role", pos);
    auto parsed_role = role_from_string(role->get<std::string>());
    if (!parsed_role) schema_error("unknown role '" + role->get<std::string>() + "'", pos);
    msg.role = *parsed_role;

    const bool has_text = m.contains("text") && !m["text"].is_null();
    msg.text = text_of(m, "text");

    if (auto calls = m.find("tool_calls"); calls != m.end() && !calls->is_null()) {
      if (!calls->is_array()) schema_error("'tool_calls' must be an array", pos);
      if (msg.role != Role::Assistant && !calls->empty())
        schema_error("tool_calls only allowed on assistant messages", pos);
      for (const auto& c : *calls) {
        ToolInvocation inv;
        if (auto cid = c.find("call_id"); cid != c.end() && cid->is_string())
          inv.call_id = cid->get<std::string>();
        if (auto name = c.find("tool_name"); name != c.end() && name->is_string())
          inv.tool_name = name->get<std::string>();
        if (inv.tool_name.empty()) schema_error("tool call without tool_name", pos);
        inv.arguments = arguments_of(c.contains("arguments") ? c["arguments"] : OrderedJson(), pos);
        msg.tool_calls.push_back(std::move(inv));
      }
    }

    auto obs = m.find("observation");
    const bool has_obs = obs != m.end() && !obs->is_null();
    if (msg.role == Role::Tool) {
      if (!has_obs) schema_error("tool message without observation", pos);
      if (!obs->is_object()) schema_error("'observation' must be an object", pos);
      ToolObservation o;
      PendingObservation p;
      if (auto cid = obs->find("call_id"); cid != obs->end() && cid->is_string())
        p.call_id = cid->get<std::string>();
      if (auto st = obs->find("status"); st != obs->end() && !st->is_null()) {
        auto parsed = st->is_string() ? status_from_string(st->get<std::string>()) : std::nullopt;
        if (!parsed) schema_error("invalid observation status " + st->dump(), pos);
        o.status = *parsed;
      }
      o.payload = text_of(*obs, "payload");
      msg.observation = std::move(o);
      pending.emplace(pos, std::move(p));
    } else {
      if (has_obs) schema_error("observation only allowed on tool messages", pos);
      if (!has_text && msg.tool_calls.empty()) schema_error("message without text", pos);
    }
    t.messages.push_back(std::move(msg));
  }
  return finish(std::move(t), pending);
}

std::string strip_stop_token(std::string text, bool& stripped) {
  for (auto pos = text.find(kTauStopToken); pos != std::string::npos;
       pos = text.find(kTauStopToken)) {
    text.erase(pos, kTauStopToken.size());
    stripped = true;
  }
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  text.erase(text.begin(), std::find_if(text.begin(), text.end(), not_space));
  text.erase(std::find_if(text.rbegin(), text.rend(), not_space).base(), text.end());
  return text;
}

Trajectory parse_tau_result(const OrderedJson& doc) {
  if (!doc.is_object()) schema_error("result entry must be an object");
  Trajectory t;
  auto traj = doc.find("traj");
  if (traj == doc.end() || !traj->is_array()) schema_error("missing 'traj' array");

  if (auto r = doc.find("reward"); r != doc.end()) t.reward = parse_reward(*r);
  if (auto d = doc.find("domain"); d != doc.end() && d->is_string()) t.domain = d->get<std::string>();
  if (auto task = doc.find("task_id"); task != doc.end()) t.meta["task_id"] = scalar_to_string(*task);
  if (auto trial = doc.find("trial"); trial != doc.end()) t.meta["trial"] = scalar_to_string(*trial);
  t.id = "task-" + (t.meta.contains("task_id") ? t.meta["task_id"] : std::string("unknown"));
  if (t.meta.contains("trial")) t.id += "-trial-" + t.meta["trial"];

  std::unordered_map<std::size_t, PendingObservation> pending;
  std::size_t dropped_system = 0;
  bool stripped_stop = false;
  for (std::size_t pos = 0; pos < traj->size(); ++pos) {
    const auto& m = (*traj)[pos];
    const std::size_t index = t.messages.size();
    if (!m.is_object()) schema_error("message is not an object", pos);
    auto role = m.find("role");
    if (role == m.end() || !role->is_string()) schema_error("message without role", pos);
    const auto role_name = role->get<std::string>();
    if (role_name == "system") {
      ++dropped_system;
      continue;
    }
    auto parsed_role = role_from_string(role_name);
    if (!parsed_role) schema_error("unknown role '" + role_name + "'", pos);

    Message msg;
    msg.index = index;
    msg.role = *parsed_role;
    if (!m.contains("content") && msg.role != Role::Assistant)
      schema_error("message without content", pos);
    msg.text = text_of(m, "content");

    if (msg.role == Role::User) msg.text = strip_stop_token(std::move(msg.text), stripped_stop);

    if (auto calls = m.find("tool_calls"); calls != m.end() && !calls->is_null()) {
      if (!calls->is_array()) schema_error("'tool_calls' must be an array", pos);
      if (msg.role != Role::Assistant && !calls->empty())
        schema_error("tool_calls only allowed on assistant messages", pos);
      for (const auto& c : *calls) {
        ToolInvocation inv;
        if (auto cid = c.find("id"); cid != c.end() && cid->is_string())
          inv.call_id = cid->get<std::string>();
        const auto fn = c.find("function");
        if (fn == c.end() || !fn->is_object()) schema_error("tool call without function", pos);
        if (auto name = fn->find("name"); name != fn->end() && name->is_string())
          inv.tool_name = name->get<std::string>();
        if (inv.tool_name.empty()) schema_error("tool call without name", pos);
        inv.arguments =
            arguments_of(fn->contains("arguments") ? (*fn)["arguments"] : OrderedJson(), pos);
        msg.tool_calls.push_back(std::move(inv));
      }
    }
    if (msg.role == Role::Tool) {
      PendingObservation p;
      if (auto cid = m.find("tool_call_id"); cid != m.end() && cid->is_string())
        p.call_id = cid->get<std::string>();
      if (auto name = m.find("name"); name != m.end() && name->is_string())
        p.tool_name = name->get<std::string>();
      msg.observation = ToolObservation{"", ObservationStatus::Unknown, msg.text};
      msg.text.clear();
      pending.emplace(index, std::move(p));
    }
    t.messages.push_back(std::move(msg));
  }
  if (dropped_system > 0) t.meta["dropped_system_messages"] = std::to_string(dropped_system);
  if (stripped_stop) t.meta["user_stop_token"] = "1";
  return finish(std::move(t), pending);
}

nlohmann::json to_canonical_value(const OrderedJson& v) {
  switch (v.type()) {
    case OrderedJson::value_t::object: {
      nlohmann::json out = nlohmann::json::object();
      for (const auto& [k, child] : v.items()) out[k] = to_canonical_value(child);
      return out;
    }
    case OrderedJson::value_t::array: {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& child : v) out.push_back(to_canonical_value(child));
      return out;
    }
    case OrderedJson::value_t::number_float: {
      const double d = v.get<double>();
      if (std::isfinite(d) && std::floor(d) == d &&
          std::fabs(d) <= static_cast<double>(std::numeric_limits<std::int64_t>::max() / 2))
        return static_cast<std::int64_t>(d);
      return d;
    }
    case OrderedJson::value_t::number_unsigned:
      return v.get<std::uint64_t>();
    case OrderedJson::value_t::number_integer:
      return v.get<std::int64_t>();
    case OrderedJson::value_t::string:
      return v.get<std::string>();
    case OrderedJson::value_t::boolean:
      return v.get<bool>();
    default:
      return nullptr;
  }
}

}  // namespace

ParseError::ParseError(Kind kind, std::string message, std::optional<std::size_t> byte_offset,
                       std::optional<std::size_t> message_index)
    : std::runtime_error(std::move(message)),
      kind_(kind),
      byte_offset_(byte_offset),
      message_index_(message_index) {}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    case Role::Tool: return "tool";
  }
  return "user";
}

std::string_view to_string(ObservationStatus status) {
  switch (status) {
    case ObservationStatus::Ok: return "ok";
    case ObservationStatus::Error: return "error";
    case ObservationStatus::Unknown: return "unknown";
  }
  return "unknown";
}

std::optional<Role> role_from_string(std::string_view s) {
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  if (s == "tool") return Role::Tool;
  return std::nullopt;
}

std::optional<ObservationStatus> status_from_string(std::string_view s) {
  if (s == "ok") return ObservationStatus::Ok;
  if (s == "error") return ObservationStatus::Error;
  if (s == "unknown") return ObservationStatus::Unknown;
  return std::nullopt;
}

Trajectory parse_trajectory(std::string_view raw, TraceFormat format) {
  const auto doc = parse_json(raw);
  return format == TraceFormat::CanonicalV1 ? parse_canonical(doc) : parse_tau_result(doc);
}

std::vector<Trajectory> parse_tau_bench_file(std::string_view raw, const std::string& id_stem,
                                             const std::string& default_domain) {
  const auto doc = parse_json(raw);
  std::vector<Trajectory> out;
  auto adopt = [&](Trajectory t, std::optional<std::size_t> position) {
    t.meta["source"] = id_stem;
    t.id = position ? id_stem + "#" + std::to_string(*position) : id_stem;
    if (t.domain.empty()) t.domain = default_domain;
    out.push_back(std::move(t));
  };
  if (doc.is_array()) {
    for (std::size_t i = 0; i < doc.size(); ++i) {
      adopt(parse_tau_result(doc[i]), doc.size() > 1 ? std::optional(i) : std::nullopt);
    }
  } else {
    adopt(parse_tau_result(doc), std::nullopt);
  }
  return out;
}

OrderedJson to_canonical_json(const Trajectory& t) {
  OrderedJson doc = OrderedJson::object();
  doc["id"] = t.id;
  doc["domain"] = t.domain;
  if (t.reward) doc["reward"] = *t.reward;
  doc["meta"] = OrderedJson::object();
  for (const auto& [k, v] : t.meta) doc["meta"][k] = v;
  doc["messages"] = OrderedJson::array();
  for (const auto& m : t.messages) {
    OrderedJson jm = OrderedJson::object();
    jm["index"] = m.index;
    jm["role"] = to_string(m.role);
    jm["text"] = m.text;
    if (!m.tool_calls.empty()) {
      jm["tool_calls"] = OrderedJson::array();
      for (const auto& c : m.tool_calls) {
        jm["tool_calls"].push_back(
            {{"call_id", c.call_id}, {"tool_name", c.tool_name}, {"arguments", c.arguments}});
      }
    }
    if (m.observation) {
      jm["observation"] = {{"call_id", m.observation->call_id},
                           {"status", to_string(m.observation->status)},
                           {"payload", m.observation->payload}};
    }
    doc["messages"].push_back(std::move(jm));
  }
  return doc;
}

std::string to_canonical_line(const Trajectory& t) {
  return to_canonical_json(t).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::size_t user_message_count(const Trajectory& t) {
  return static_cast<std::size_t>(std::count_if(
      t.messages.begin(), t.messages.end(), [](const Message& m) { return m.role == Role::User; }));
}

std::vector<InvocationRef> invocation_stream(const Trajectory& t) {
  std::unordered_map<std::string_view, std::size_t> first_observation;
  for (const auto& m : t.messages)
    if (m.observation) first_observation.emplace(m.observation->call_id, m.index);

  std::vector<InvocationRef> out;
  for (const auto& m : t.messages) {
    for (const auto& inv : m.tool_calls) {
      InvocationRef ref;
      ref.invocation = &inv;
      ref.message_index = m.index;
      if (auto it = first_observation.find(inv.call_id);
          it != first_observation.end() && it->second > m.index) {
        ref.observation = &*t.messages[it->second].observation;
        ref.observation_index = it->second;
      }
      out.push_back(ref);
    }
  }
  return out;
}

nlohmann::json canonical_arguments(const OrderedJson& args) { return to_canonical_value(args); }

std::string canonical_arguments_string(const OrderedJson& args) {
  return canonical_arguments(args).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

std::string_view to_string(PoolViolation::Kind kind) {
  switch (kind) {
    case PoolViolation::Kind::DuplicateId: return "DuplicateId";
    case PoolViolation::Kind::RewardOutOfRange: return "RewardOutOfRange";
    case PoolViolation::Kind::MissingReward: return "MissingReward";
    case PoolViolation::Kind::InvariantViolation: return "InvariantViolation";
  }
  return "InvariantViolation";
}

std::vector<std::string> check_invariants(const Trajectory& t) {
  std::vector<std::string> problems;
  std::unordered_set<std::string_view> seen_calls;
  for (std::size_t i = 0; i < t.messages.size(); ++i) {
    const auto& m = t.messages[i];
    const auto where = "message " + std::to_string(i) + ": ";
    if (m.index != i) problems.push_back(where + "index " + std::to_string(m.index) + " out of sequence");
    if (m.role != Role::Assistant && !m.tool_calls.empty())
      problems.push_back(where + "tool calls on non-assistant message");
    if ((m.role == Role::Tool) != m.observation.has_value())
      problems.push_back(where + "observation present iff role is tool");
    if (m.observation && !seen_calls.contains(m.observation->call_id))
      problems.push_back(where + "observation references unknown call '" + m.observation->call_id + "'");
    for (const auto& c : m.tool_calls) {
      if (c.tool_name.empty()) problems.push_back(where + "tool call without name");
      if (!seen_calls.insert(c.call_id).second)
        problems.push_back(where + "duplicate call id '" + c.call_id + "'");
    }
  }
  return problems;
}

std::vector<PoolViolation> validate_pool(const std::vector<Trajectory>& pool) {
  std::vector<PoolViolation> out;
  std::set<std::string> seen;
  for (const auto& t : pool) {
    if (!seen.insert(t.id).second)
      out.push_back({PoolViolation::Kind::DuplicateId, t.id, "id appears more than once"});
    if (!t.reward) {
      out.push_back({PoolViolation::Kind::MissingReward, t.id, "no reward"});
    } else if (*t.reward != 0 && *t.reward != 1) {
      out.push_back({PoolViolation::Kind::RewardOutOfRange, t.id,
                     "reward " + std::to_string(*t.reward) + " not in {0,1}"});
    }
    for (auto& p : check_invariants(t))
      out.push_back({PoolViolation::Kind::InvariantViolation, t.id, std::move(p)});
  }
  return out;
}

}  // namespace trajsig
