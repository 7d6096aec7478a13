// SPDX-License-Identifier: Apache-2.0
#include "trajsig/annotation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <fstream>
#include <set>
#include <sstream>

#include "trajsig/textmatch.hpp"

namespace trajsig {

namespace {

using OJson = nlohmann::ordered_json;

constexpr std::string_view kReasonNames[] = {
    "ActionToolUse", "Conversation", "ExternalSystem", "SuccessExemplar", "NoneUnclear", "Other",
};

std::string hex12(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf + 4, 12);
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

OJson provenance_json(const std::vector<ProvenanceLink>& links) {
  OJson out = OJson::array();
  for (const auto& p : links)
    out.push_back(OJson{{"strategy", to_string(p.strategy)}, {"stream", to_string(p.stream)}});
  return out;
}

OJson reward_json(const std::optional<long long>& r) { return r ? OJson(*r) : OJson(nullptr); }

OJson label_json(const LabelRecord& r) {
  OJson j{{"type", "label"},
          {"seq", r.seq},
          {"annotator_id", r.label.annotator_id},
          {"blinded_id", r.label.blinded_id},
          {"informative", r.label.informative ? "YES" : "NO"},
          {"main_reason", to_string(r.label.main_reason)}};
  if (r.label.note) j["note"] = *r.label.note;
  j["submitted_at"] = r.submitted_at;
  return j;
}

void write_all(int fd, const std::string& data) {
  std::size_t done = 0;
  while (done < data.size()) {
    const auto n = ::write(fd, data.data() + done, data.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("label store write failed: ") + std::strerror(errno));
    }
    done += static_cast<std::size_t>(n);
  }
}

}  // namespace

std::string_view to_string(MainReason r) { return kReasonNames[static_cast<std::size_t>(r)]; }

std::optional<MainReason> main_reason_from_string(std::string_view s) {
  for (auto r : kAllReasons)
    if (to_string(r) == s) return r;
  return std::nullopt;
}

std::string_view to_string(AnnotationError::Code c) {
  switch (c) {
    case AnnotationError::Code::EmptySamples: return "EmptySamples";
    case AnnotationError::Code::UnknownAnnotator: return "UnknownAnnotator";
    case AnnotationError::Code::UnknownItem: return "UnknownItem";
    case AnnotationError::Code::DuplicateLabel: return "DuplicateLabel";
    case AnnotationError::Code::InvalidCategory: return "InvalidCategory";
    case AnnotationError::Code::InvalidRequest: return "InvalidRequest";
    case AnnotationError::Code::Unauthorized: return "Unauthorized";
    case AnnotationError::Code::CorruptStore: return "CorruptStore";
  }
  return "Unknown";
}

int http_status(AnnotationError::Code c) {
  switch (c) {
    case AnnotationError::Code::UnknownAnnotator:
    case AnnotationError::Code::UnknownItem: return 404;
    case AnnotationError::Code::DuplicateLabel: return 409;
    case AnnotationError::Code::Unauthorized: return 401;
    case AnnotationError::Code::CorruptStore: return 500;
    default: return 400;
  }
}

const ManifestItem* QueueManifest::find(std::string_view blinded_id) const {
  for (const auto& it : items)
    if (it.blinded_id == blinded_id) return &it;
  return nullptr;
}

OJson to_json(const QueueManifest& m) {
  OJson items = OJson::array();
  for (const auto& it : m.items) {
    items.push_back(OJson{{"blinded_id", it.blinded_id},
                          {"trajectory_id", it.trajectory_id},
                          {"provenance", provenance_json(it.provenance)},
                          {"reward", reward_json(it.reward)},
                          {"domain", it.domain},
                          {"activations", it.activations},
                          {"payload", it.payload}});
  }
  OJson orders = OJson::object();
  for (const auto& [a, ids] : m.orders) orders[a] = ids;
  return OJson{{"format", "trajsig-queue/1"}, {"seed", m.seed},   {"global_order", m.global_order},
               {"annotators", m.annotators},  {"items", items},   {"orders", orders}};
}

QueueManifest queue_manifest_from_json(const OJson& j) {
  try {
    if (j.value("format", "") != "trajsig-queue/1")
      throw AnnotationError(AnnotationError::Code::InvalidRequest, "not a queue manifest");
    QueueManifest m;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.global_order = j.at("global_order").get<bool>();
    m.annotators = j.at("annotators").get<std::vector<std::string>>();
    for (const auto& ji : j.at("items")) {
      ManifestItem it;
      it.blinded_id = ji.at("blinded_id").get<std::string>();
      it.trajectory_id = ji.at("trajectory_id").get<std::string>();
      for (const auto& p : ji.at("provenance")) {
        auto s = strategy_from_string(p.at("strategy").get<std::string>());
        auto st = stream_from_string(p.at("stream").get<std::string>());
        if (!s || !st) throw AnnotationError(AnnotationError::Code::InvalidRequest, "bad provenance link");
        it.provenance.push_back({*s, *st});
      }
      if (!ji.at("reward").is_null()) it.reward = ji.at("reward").get<long long>();
      it.domain = ji.at("domain").get<std::string>();
      it.activations = ji.at("activations").get<std::vector<std::string>>();
      it.payload = ji.at("payload");
      m.items.push_back(std::move(it));
    }
    for (const auto& [a, ids] : j.at("orders").items()) m.orders[a] = ids.get<std::vector<std::string>>();
    for (const auto& a : m.annotators) {
      const auto o = m.orders.find(a);
      if (o == m.orders.end() || o->second.size() != m.items.size())
        throw AnnotationError(AnnotationError::Code::InvalidRequest, "manifest order missing for " + a);
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw AnnotationError(AnnotationError::Code::InvalidRequest, std::string("bad manifest: ") + e.what());
  }
}

OJson blinded_payload(const Trajectory& t) {
  OJson messages = OJson::array();
  for (const auto& m : t.messages) {
    OJson jm{{"index", m.index}, {"role", to_string(m.role)}, {"text", m.text}};
    if (!m.tool_calls.empty()) {
      OJson calls = OJson::array();
      for (const auto& c : m.tool_calls)
        calls.push_back(OJson{{"call_id", c.call_id}, {"name", c.tool_name}, {"arguments", c.arguments}});
      jm["tool_calls"] = calls;
    }
    if (m.observation) {
      jm["observation"] = OJson{{"call_id", m.observation->call_id},
                                {"status", to_string(m.observation->status)},
                                {"payload", m.observation->payload}};
    }
    messages.push_back(std::move(jm));
  }
  return OJson{{"messages", messages}};
}

QueueManifest build_queue(const std::vector<SampleSet>& samples, const std::vector<Trajectory>& pool,
                          const std::vector<SignalReport>& reports, const std::vector<std::string>& annotators,
                          std::uint64_t seed, bool global_order) {
  std::size_t total = 0;
  for (const auto& s : samples) total += s.trajectory_ids.size();
  if (samples.empty() || total == 0)
    throw AnnotationError(AnnotationError::Code::EmptySamples, "no sampled trajectories to queue");
  if (annotators.empty())
    throw AnnotationError(AnnotationError::Code::InvalidRequest, "at least one annotator is required");
  if (std::set<std::string>(annotators.begin(), annotators.end()).size() != annotators.size())
    throw AnnotationError(AnnotationError::Code::InvalidRequest, "annotator ids must be unique");

  std::map<std::string_view, const Trajectory*> by_id;
  for (const auto& t : pool) by_id.emplace(t.id, &t);
  std::map<std::string_view, const SignalReport*> report_by_id;
  for (const auto& r : reports) report_by_id.emplace(r.trajectory_id, &r);

  std::map<std::string, std::set<ProvenanceLink>> links;
  for (const auto& s : samples) {
    for (std::size_t i = 0; i < s.trajectory_ids.size(); ++i) {
      const auto stream = i < s.provenance.size() ? s.provenance[i] : Stream::NotApplicable;
      links[s.trajectory_ids[i]].insert({s.strategy, stream});
    }
  }

  QueueManifest m;
  m.seed = seed;
  m.global_order = global_order;
  m.annotators = annotators;
  std::set<std::string> used;
  for (const auto& [id, prov] : links) {
    const auto t = by_id.find(id);
    if (t == by_id.end())
      throw AnnotationError(AnnotationError::Code::UnknownItem, "sampled trajectory '" + id + "' is not in the pool");
    ManifestItem it;
    it.trajectory_id = id;
    for (std::uint64_t salt = 0;; ++salt) {
      it.blinded_id = hex12(seeded_rank(seed, "blind/" + std::to_string(salt) + "/" + id));
      if (used.insert(it.blinded_id).second) break;
    }
    it.provenance.assign(prov.begin(), prov.end());
    it.reward = t->second->reward;
    it.domain = t->second->domain;
    if (const auto r = report_by_id.find(id); r != report_by_id.end())
      for (auto c : r->second->activations) it.activations.emplace_back(to_string(c));
    it.payload = blinded_payload(*t->second);
    m.items.push_back(std::move(it));
  }

  for (const auto& a : annotators) {
    const std::uint64_t key = global_order ? seed : seeded_rank(seed, "annotator/" + a);
    std::vector<std::pair<std::uint64_t, std::string>> ranked;
    for (const auto& it : m.items) ranked.emplace_back(seeded_rank(key, it.blinded_id), it.blinded_id);
    std::sort(ranked.begin(), ranked.end());
    auto& order = m.orders[a];
    for (auto& [rank, bid] : ranked) order.push_back(std::move(bid));
  }
  return m;
}

LabelSubmission label_submission_from_json(const nlohmann::json& j) {
  using Code = AnnotationError::Code;
  if (!j.is_object()) throw AnnotationError(Code::InvalidRequest, "label must be a JSON object");
  auto str = [&](const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string() || it->get<std::string>().empty())
      throw AnnotationError(Code::InvalidRequest, std::string("missing field '") + key + "'");
    return it->get<std::string>();
  };
  LabelSubmission l;
  l.annotator_id = str("annotator_id");
  l.blinded_id = str("blinded_id");
  const auto informative = str("informative");
  if (informative != "YES" && informative != "NO")
    throw AnnotationError(Code::InvalidCategory, "informative must be YES or NO, got '" + informative + "'");
  l.informative = informative == "YES";
  const auto reason = str("main_reason");
  const auto r = main_reason_from_string(reason);
  if (!r) throw AnnotationError(Code::InvalidCategory, "unknown main_reason '" + reason + "'");
  l.main_reason = *r;
  if (const auto n = j.find("note"); n != j.end() && !n->is_null()) {
    if (!n->is_string()) throw AnnotationError(Code::InvalidRequest, "note must be a string");
    auto note = n->get<std::string>();
    if (to_u32(note).size() > kMaxNoteChars)
      throw AnnotationError(Code::InvalidRequest, "note exceeds 500 characters");
    if (!note.empty()) l.note = std::move(note);
  }
  return l;
}

LabelStore::LabelStore(std::filesystem::path path) : path_(std::move(path)) {
  std::string content;
  if (std::filesystem::exists(path_)) {
    std::ifstream in(path_, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    content = ss.str();
  }
  std::size_t pos = 0, line_no = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    if (nl == std::string::npos) break;  // torn tail, truncated below
    const auto line = std::string_view(content).substr(pos, nl - pos);
    ++line_no;
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto seq = j.at("seq").get<std::uint64_t>();
      if (seq <= last_seq_) throw std::runtime_error("sequence numbers must increase");
      last_seq_ = seq;
      const auto type = j.at("type").get<std::string>();
      std::pair<std::string, std::string> key{j.at("annotator_id").get<std::string>(),
                                              j.at("blinded_id").get<std::string>()};
      if (type == "revoke") {
        live_.erase(key);
      } else if (type == "label") {
        LabelRecord r;
        r.seq = seq;
        r.label = label_submission_from_json(j);
        r.submitted_at = j.at("submitted_at").get<std::string>();
        live_[key] = std::move(r);
      } else {
        throw std::runtime_error("unknown record type '" + type + "'");
      }
    } catch (const std::exception& e) {
      throw AnnotationError(AnnotationError::Code::CorruptStore,
                            path_.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
  if (fd_ < 0) throw std::runtime_error("cannot open label store " + path_.string() + ": " + std::strerror(errno));
  if (pos < content.size()) {
    if (::ftruncate(fd_, static_cast<off_t>(pos)) != 0 || ::fsync(fd_) != 0)
      throw std::runtime_error("cannot drop torn record from " + path_.string());
  }
}

LabelStore::~LabelStore() {
  if (fd_ >= 0) ::close(fd_);
}

const LabelRecord* LabelStore::find(std::string_view annotator, std::string_view blinded_id) const {
  const auto it = live_.find({std::string(annotator), std::string(blinded_id)});
  return it == live_.end() ? nullptr : &it->second;
}

void LabelStore::write_line(const std::string& line) {
  write_all(fd_, line + "\n");
  if (::fsync(fd_) != 0) throw std::runtime_error(std::string("label store fsync failed: ") + std::strerror(errno));
}

LabelRecord LabelStore::append(const LabelSubmission& l, std::string submitted_at) {
  if (find(l.annotator_id, l.blinded_id))
    throw AnnotationError(AnnotationError::Code::DuplicateLabel,
                          l.annotator_id + " already labeled " + l.blinded_id);
  LabelRecord r{last_seq_ + 1, l, std::move(submitted_at)};
  write_line(label_json(r).dump());
  last_seq_ = r.seq;
  live_[{l.annotator_id, l.blinded_id}] = r;
  return r;
}

std::uint64_t LabelStore::revoke(std::string_view annotator, std::string_view blinded_id) {
  if (!find(annotator, blinded_id))
    throw AnnotationError(AnnotationError::Code::UnknownItem, "no label to revoke");
  const auto seq = last_seq_ + 1;
  write_line(OJson{{"type", "revoke"}, {"seq", seq}, {"annotator_id", annotator}, {"blinded_id", blinded_id}}.dump());
  last_seq_ = seq;
  live_.erase({std::string(annotator), std::string(blinded_id)});
  return seq;
}

std::vector<LabelRecord> LabelStore::labels() const {
  std::vector<LabelRecord> out;
  for (const auto& [key, r] : live_) out.push_back(r);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.seq < b.seq; });
  return out;
}

AnnotationService::AnnotationService(QueueManifest manifest, const std::filesystem::path& store_path, Clock clock)
    : manifest_(std::move(manifest)), clock_(clock ? std::move(clock) : Clock(utc_now)), store_(store_path) {
  for (std::size_t i = 0; i < manifest_.items.size(); ++i) item_index_.emplace(manifest_.items[i].blinded_id, i);
  for (const auto& r : store_.labels()) {
    if (!item_index_.contains(r.label.blinded_id) || !manifest_.orders.contains(r.label.annotator_id))
      throw AnnotationError(AnnotationError::Code::CorruptStore, "label store does not belong to this queue");
  }
}

void AnnotationService::require_annotator(const std::string& annotator) const {
  if (!manifest_.orders.contains(annotator))
    throw AnnotationError(AnnotationError::Code::UnknownAnnotator, "unknown annotator '" + annotator + "'");
}

OJson AnnotationService::next_item(const std::string& annotator) const {
  std::shared_lock lock(mutex_);
  require_annotator(annotator);
  const auto& order = manifest_.orders.at(annotator);
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    if (store_.find(annotator, order[pos])) continue;
    const auto& it = manifest_.items[item_index_.find(order[pos])->second];
    return OJson{{"done", false},
                 {"blinded_id", it.blinded_id},
                 {"position", pos},
                 {"total", order.size()},
                 {"payload", it.payload}};
  }
  return OJson{{"done", true}, {"labeled", order.size()}, {"total", order.size()}};
}

OJson AnnotationService::item(const std::string& blinded_id) const {
  const auto it = item_index_.find(blinded_id);
  if (it == item_index_.end())
    throw AnnotationError(AnnotationError::Code::UnknownItem, "unknown item '" + blinded_id + "'");
  const auto& m = manifest_.items[it->second];
  return OJson{{"blinded_id", m.blinded_id}, {"payload", m.payload}};
}

OJson AnnotationService::submit_label(const LabelSubmission& l) {
  std::unique_lock lock(mutex_);
  require_annotator(l.annotator_id);
  if (!item_index_.contains(l.blinded_id))
    throw AnnotationError(AnnotationError::Code::UnknownItem, "unknown item '" + l.blinded_id + "'");
  const auto r = store_.append(l, clock_());
  return OJson{{"seq", r.seq}, {"blinded_id", r.label.blinded_id}, {"annotator_id", r.label.annotator_id}};
}

Progress AnnotationService::progress(const std::string& annotator) const {
  std::shared_lock lock(mutex_);
  require_annotator(annotator);
  Progress p{0, manifest_.items.size()};
  for (const auto& bid : manifest_.orders.at(annotator))
    if (store_.find(annotator, bid)) ++p.labeled;
  return p;
}

void AnnotationService::revoke(const std::string& annotator, const std::string& blinded_id) {
  std::unique_lock lock(mutex_);
  require_annotator(annotator);
  store_.revoke(annotator, blinded_id);
}

std::string AnnotationService::export_labels() const {
  std::shared_lock lock(mutex_);
  const auto labels = store_.labels();
  OJson roster = OJson::array();
  for (const auto& it : manifest_.items) {
    roster.push_back(OJson{{"trajectory_id", it.trajectory_id},
                           {"blinded_id", it.blinded_id},
                           {"provenance", provenance_json(it.provenance)},
                           {"reward", reward_json(it.reward)},
                           {"domain", it.domain},
                           {"activations", it.activations}});
  }
  std::string out = OJson{{"type", "header"},
                          {"format", "trajsig-labels/1"},
                          {"seed", manifest_.seed},
                          {"annotators", manifest_.annotators},
                          {"label_count", labels.size()},
                          {"items", roster}}
                        .dump();
  out += '\n';
  for (const auto& r : labels) {
    const auto& it = manifest_.items[item_index_.find(r.label.blinded_id)->second];
    auto j = label_json(r);
    j["trajectory_id"] = it.trajectory_id;
    j["provenance"] = provenance_json(it.provenance);
    j["reward"] = reward_json(it.reward);
    j["domain"] = it.domain;
    j["activations"] = it.activations;
    out += j.dump();
    out += '\n';
  }
  return out;
}

OJson annotator_guidelines() {
  OJson reasons = OJson::array();
  const char* labels[] = {"Action / tool-use behavior issue", "Conversation issue", "External system issue",
                          "Success exemplar",                 "None / unclear",     "Other"};
  for (std::size_t i = 0; i < std::size(kAllReasons); ++i)
    reasons.push_back(OJson{{"id", to_string(kAllReasons[i])}, {"label", labels[i]}});
  return OJson{
      {"informative",
       "Answer YES if the trajectory contains enough concrete evidence for a developer to form at least one "
       "plausible hypothesis about how to improve the agent's behavior, including both failures and strong "
       "successes."},
      {"main_reasons", reasons},
      {"priority_rules",
       {"External system issues are selected only when an external dependency failure is the dominant driver.",
        "Action/tool-use issues take priority over conversation issues when execution is the key failure mode."}},
      {"note", "Optional: one sentence explaining the choice (at most 500 characters)."}};
}

}  // namespace trajsig
