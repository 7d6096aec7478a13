// SPDX-License-Identifier: Apache-2.0
#include "trajsig/commands.hpp"

#include <pthread.h>
#include <signal.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "trajsig/analysis.hpp"
#include "trajsig/annotation.hpp"
#include "trajsig/http_server.hpp"

namespace trajsig::cli {

namespace fs = std::filesystem;

namespace {

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + p.string());
  out << content;
  if (!out.flush()) throw ValidationError("write failed for " + p.string());
}

template <class F>
void for_each_line(const fs::path& p, F&& f) {
  const auto content = read_file(p);
  std::istringstream in(content);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      f(line);
    } catch (const std::exception& e) {
      throw ValidationError(p.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

std::vector<fs::path> expand_inputs(const std::vector<fs::path>& inputs) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::recursive_directory_iterator(in)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".json" || ext == ".jsonl")) found.push_back(e.path());
      }
      std::sort(found.begin(), found.end());
      files.insert(files.end(), found.begin(), found.end());
    } else if (fs::is_regular_file(in)) {
      files.push_back(in);
    } else {
      throw ValidationError("input does not exist: " + in.string());
    }
  }
  return files;
}

std::string percent(std::size_t k, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", n == 0 ? 0.0 : 100.0 * static_cast<double>(k) / static_cast<double>(n));
  return buf;
}

template <class F>
int guarded(std::ostream& err, F&& f) {
  try {
    return f();
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const stats::StatsError& e) {
    err << to_string(e.code()) << ": " << e.what() << '\n';
    return kExitValidation;
  } catch (const AnnotationError& e) {
    err << to_string(e.code()) << ": " << e.what() << '\n';
    return kExitValidation;
  } catch (const PoolTooSmall& e) {
    err << "PoolTooSmall: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}

}  // namespace

std::vector<Trajectory> read_pool(const fs::path& path) {
  std::vector<Trajectory> pool;
  for_each_line(path, [&](const std::string& line) { pool.push_back(parse_trajectory(line, TraceFormat::CanonicalV1)); });
  return pool;
}

std::vector<SignalReport> read_reports(const fs::path& path) {
  std::vector<SignalReport> reports;
  for_each_line(path, [&](const std::string& line) { reports.push_back(signal_report_from_json(nlohmann::json::parse(line))); });
  return reports;
}

std::vector<SampleSet> read_samples(const fs::path& path) {
  std::vector<SampleSet> sets;
  for_each_line(path, [&](const std::string& line) { sets.push_back(sample_set_from_json(nlohmann::json::parse(line))); });
  return sets;
}

int cmd_ingest(const IngestOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.format != "auto" && o.format != "tau-bench" && o.format != "canonical")
      throw UsageError("--format must be auto, tau-bench or canonical");
    const auto files = expand_inputs(o.inputs);
    std::vector<Trajectory> pool;
    std::vector<std::string> problems;
    for (const auto& f : files) {
      const bool canonical = o.format == "canonical" || (o.format == "auto" && f.extension() == ".jsonl");
      try {
        if (canonical) {
          for_each_line(f, [&](const std::string& line) { pool.push_back(parse_trajectory(line, TraceFormat::CanonicalV1)); });
        } else {
          for (auto& t : parse_tau_bench_file(read_file(f), f.stem().string(), o.default_domain)) pool.push_back(std::move(t));
        }
      } catch (const std::exception& e) {
        problems.push_back(f.string() + ": " + e.what());
      }
    }
    for (const auto& v : validate_pool(pool))
      problems.push_back(v.trajectory_id + ": " + std::string(to_string(v.kind)) + ": " + v.detail);

    std::string lines;
    for (const auto& t : pool) lines += to_canonical_line(t) + "\n";
    write_file(o.output, lines);
    if (o.violations) {
      std::string report;
      for (const auto& p : problems) report += nlohmann::json{{"violation", p}}.dump() + "\n";
      write_file(*o.violations, report);
    }
    for (const auto& p : problems) err << "violation: " << p << '\n';
    out << "ingested " << pool.size() << " trajectories from " << files.size() << " files; " << problems.size()
        << " violations\n";
    return problems.empty() || o.lenient ? kExitOk : kExitValidation;
  });
}

int cmd_detect(const DetectOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.workers < 1) throw UsageError("--workers must be at least 1");
    const auto pool = read_pool(o.pool);
    for (const auto& v : validate_pool(pool))
      if (v.kind == PoolViolation::Kind::DuplicateId || v.kind == PoolViolation::Kind::InvariantViolation)
        throw ValidationError("pool is not valid: " + v.trajectory_id + ": " + v.detail);
    auto cfg = load_detector_config(o.lexicons ? *o.lexicons : default_lexicon_dir());
    if (o.thresholds) apply_threshold_overrides(cfg, nlohmann::json::parse(read_file(*o.thresholds)));
    cfg.interaction.baseline_user_turns = o.baseline ? *o.baseline : median_user_turns(pool);
    cfg.interaction.validate();
    cfg.execution.validate();

    std::vector<std::string> lines(pool.size());
    std::vector<SignalReport> reports(pool.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
      for (std::size_t i; (i = next.fetch_add(1)) < pool.size();) {
        try {
          reports[i] = build_report(pool[i], cfg);
          lines[i] = to_json(reports[i]).dump();
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    std::vector<std::thread> threads;
    for (unsigned w = 1; w < o.workers; ++w) threads.emplace_back(work);
    work();
    for (auto& t : threads) t.join();
    if (failure) std::rethrow_exception(failure);

    std::string content;
    for (const auto& l : lines) content += l + "\n";
    write_file(o.output, content);

    out << "baseline user turns: " << cfg.interaction.baseline_user_turns << '\n';
    char row[96];
    std::snprintf(row, sizeof row, "%-15s %12s %10s\n", "category", "trajectories", "instances");
    out << row;
    for (auto c : kAllCategories) {
      std::size_t active = 0, instances = 0;
      for (const auto& r : reports) {
        active += r.active(c) ? 1 : 0;
        if (auto it = r.counts.find(c); it != r.counts.end()) instances += it->second;
      }
      std::snprintf(row, sizeof row, "%-15s %12zu %10zu\n", std::string(to_string(c)).c_str(), active, instances);
      out << row;
    }
    return kExitOk;
  });
}

int cmd_sample(const SampleOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto strategy = strategy_from_string(o.strategy);
    if (!strategy) throw UsageError("--strategy must be random, heuristic or signal");
    if (o.n < 1) throw UsageError("--n must be at least 1");
    const auto pool = read_pool(o.pool);
    TriageConfig cfg;
    cfg.seed = o.seed;
    cfg.sample_size = o.n;
    cfg.exemplar_fraction = o.exemplar_fraction;
    cfg.heuristic_min_user_msgs = o.min_user_msgs;
    cfg.flat = o.flat;
    cfg.validate();

    SampleSet s;
    switch (*strategy) {
      case Strategy::Random: s = sample_random(pool, o.n, o.seed); break;
      case Strategy::Heuristic: s = sample_heuristic(pool, cfg); break;
      case Strategy::Signal:
        if (!o.reports) throw UsageError("--reports is required for the signal strategy");
        s = sample_signal(pool, read_reports(*o.reports), cfg);
        break;
    }
    write_file(o.output, to_json(s).dump() + "\n");

    std::map<std::string, const Trajectory*> by_id;
    for (const auto& t : pool) by_id[t.id] = &t;
    std::size_t failed = 0, succeeded = 0, unrewarded = 0, failure_stream = 0, exemplar_stream = 0;
    for (std::size_t i = 0; i < s.trajectory_ids.size(); ++i) {
      const auto& r = by_id.at(s.trajectory_ids[i])->reward;
      if (!r) ++unrewarded;
      else if (*r == 0) ++failed;
      else ++succeeded;
      if (s.provenance[i] == Stream::Failure) ++failure_stream;
      if (s.provenance[i] == Stream::Exemplar) ++exemplar_stream;
    }
    const auto n = s.trajectory_ids.size();
    std::ostringstream m;
    m << "strategy: " << to_string(s.strategy) << '\n'
      << "seed: " << s.seed << '\n'
      << "n: " << n << '\n'
      << "pool: " << pool.size() << '\n'
      << "qualifying: " << s.qualifying << '\n'
      << "reward mix: " << failed << " failed (" << percent(failed, n) << "), " << succeeded << " successful ("
      << percent(succeeded, n) << "), " << unrewarded << " unrewarded\n";
    if (s.strategy == Strategy::Heuristic) m << "filter: at least " << o.min_user_msgs << " user messages\n";
    if (s.strategy == Strategy::Signal)
      m << "provenance: failure-stream " << failure_stream << ", exemplar-stream " << exemplar_stream << '\n';
    if (o.manifest) write_file(*o.manifest, m.str());
    out << m.str();
    return kExitOk;
  });
}

int cmd_queue(const QueueOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (o.samples.empty()) throw UsageError("at least one --samples file is required");
    std::vector<SampleSet> sets;
    for (const auto& p : o.samples)
      for (auto& s : read_samples(p)) sets.push_back(std::move(s));
    const auto pool = read_pool(o.pool);
    const auto reports = o.reports ? read_reports(*o.reports) : std::vector<SignalReport>{};
    const auto m = build_queue(sets, pool, reports, o.annotators, o.seed, o.global_order);
    write_file(o.output, to_json(m).dump() + "\n");
    out << "queued " << m.items.size() << " items for " << m.annotators.size() << " annotators\n";
    return kExitOk;
  });
}

int cmd_serve(const ServeOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!fs::exists(o.manifest)) throw ValidationError("manifest missing: " + o.manifest.string());
    AnnotationService service(queue_manifest_from_json(nlohmann::ordered_json::parse(read_file(o.manifest))), o.store);
    ServerOptions so;
    so.admin_token = o.admin_token;
    if (o.static_dir) so.static_dir = *o.static_dir;
    HttpServer server(service, so);

    // Handle SIGINT/SIGTERM on a dedicated thread so shutdown never interrupts
    // a label append.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    sigset_t previous;
    pthread_sigmask(SIG_BLOCK, &set, &previous);

    const int port = server.bind(o.host, o.port);
    if (port < 0) {
      pthread_sigmask(SIG_SETMASK, &previous, nullptr);
      throw ValidationError("cannot bind " + o.host + ":" + std::to_string(o.port) + " (port busy?)");
    }
    out << "listening on " << o.host << ":" << port << std::endl;
    std::atomic<bool> stopping{false};
    std::thread watcher([&] {
      int sig = 0;
      sigwait(&set, &sig);
      stopping = true;
      server.stop();
    });
    server.listen_after_bind();
    if (!stopping) pthread_kill(watcher.native_handle(), SIGTERM);
    watcher.join();
    pthread_sigmask(SIG_SETMASK, &previous, nullptr);
    out << "stopped\n";
    return kExitOk;
  });
}

int cmd_export(const ExportOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    AnnotationService service(queue_manifest_from_json(nlohmann::ordered_json::parse(read_file(o.manifest))), o.store);
    const auto text = service.export_labels();
    if (o.output) write_file(*o.output, text);
    else out << text;
    return kExitOk;
  });
}

int cmd_analyze(const AnalyzeOptions& o, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto report = compute_report(parse_export(read_file(o.export_path)));
    const auto json = to_json(report);
    if (o.output) write_file(*o.output, json.dump(2) + "\n");
    const auto text = o.full ? render_report(report) : render_tables(report);
    if (o.tables) write_file(*o.tables, text);
    out << text;
    if (o.check_against) {
      const auto mismatches = check_against(json, nlohmann::json::parse(read_file(*o.check_against)));
      for (const auto& m : mismatches) err << "mismatch: " << m << '\n';
      if (!mismatches.empty()) return kExitValidation;
      out << "check passed\n";
    }
    return kExitOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trajectory signal extraction, triage sampling and annotation study tooling", "trajsig"};
  app.set_config("--config", "", "TOML/INI file supplying option defaults; flags override it");
  app.require_subcommand(1);

  IngestOptions ingest;
  auto* c_ingest = app.add_subcommand("ingest", "Validate traces and write a canonical pool JSONL");
  c_ingest->add_option("inputs", ingest.inputs, "Trace files or directories")->required();
  c_ingest->add_option("--format", ingest.format, "auto, tau-bench or canonical")->capture_default_str();
  c_ingest->add_option("--domain", ingest.default_domain, "Domain for traces that do not name one")->capture_default_str();
  c_ingest->add_option("-o,--output", ingest.output, "Pool JSONL to write")->required();
  c_ingest->add_option("--violations", ingest.violations, "Write violations as JSONL");
  c_ingest->add_flag("--lenient", ingest.lenient, "Exit 0 even when violations were found");

  DetectOptions detect;
  auto* c_detect = app.add_subcommand("detect", "Run all detectors and write SignalReport JSONL");
  c_detect->add_option("--pool", detect.pool, "Pool JSONL")->required();
  c_detect->add_option("-o,--output", detect.output, "Report JSONL to write")->required();
  c_detect->add_option("--lexicons", detect.lexicons, "Lexicon directory");
  c_detect->add_option("--thresholds", detect.thresholds, "Threshold override JSON");
  c_detect->add_option("--baseline", detect.baseline, "Baseline user turns (default: pool median)");
  c_detect->add_option("--workers", detect.workers, "Worker threads")->capture_default_str();

  SampleOptions sample;
  auto* c_sample = app.add_subcommand("sample", "Draw a review sample");
  c_sample->add_option("--pool", sample.pool, "Pool JSONL")->required();
  c_sample->add_option("--reports", sample.reports, "SignalReport JSONL (signal strategy)");
  c_sample->add_option("--strategy", sample.strategy, "random, heuristic or signal")->required();
  c_sample->add_option("--n", sample.n, "Sample size")->capture_default_str();
  c_sample->add_option("--seed", sample.seed, "Sampling seed")->required();
  c_sample->add_option("--exemplar-fraction", sample.exemplar_fraction, "Share of exemplar slots")->capture_default_str();
  c_sample->add_option("--min-user-msgs", sample.min_user_msgs, "Heuristic user-message threshold")->capture_default_str();
  c_sample->add_flag("--flat", sample.flat, "Rank signal qualifiers by seeded hash only");
  c_sample->add_option("-o,--output", sample.output, "SampleSet JSONL to write")->required();
  c_sample->add_option("--manifest", sample.manifest, "Human-readable manifest to write");

  QueueOptions queue;
  auto* c_queue = app.add_subcommand("queue", "Build the blinded annotation queue");
  c_queue->add_option("--samples", queue.samples, "SampleSet JSONL files")->required();
  c_queue->add_option("--pool", queue.pool, "Pool JSONL")->required();
  c_queue->add_option("--reports", queue.reports, "SignalReport JSONL");
  c_queue->add_option("--annotators", queue.annotators, "Annotator ids")->required()->delimiter(',');
  c_queue->add_option("--seed", queue.seed, "Shuffle seed")->required();
  c_queue->add_flag("--global-order", queue.global_order, "Give every annotator the same order");
  c_queue->add_option("-o,--output", queue.output, "Queue manifest to write")->required();

  ServeOptions serve;
  auto* c_serve = app.add_subcommand("serve", "Serve the annotation API");
  c_serve->add_option("--manifest", serve.manifest, "Queue manifest")->required();
  c_serve->add_option("--store", serve.store, "Label store JSONL")->required();
  c_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  c_serve->add_option("--port", serve.port, "Port (0 picks a free one)")->capture_default_str();
  c_serve->add_option("--static-dir", serve.static_dir, "Review UI bundle to mount at /");

  ExportOptions exp;
  auto* c_export = app.add_subcommand("export", "Export labels joined with provenance");
  c_export->add_option("--manifest", exp.manifest, "Queue manifest")->required();
  c_export->add_option("--store", exp.store, "Label store JSONL")->required();
  c_export->add_option("-o,--output", exp.output, "Export JSONL to write (default stdout)");

  AnalyzeOptions analyze;
  auto* c_analyze = app.add_subcommand("analyze", "Compute the study report from a label export");
  c_analyze->add_option("--export", analyze.export_path, "Label export JSONL")->required();
  c_analyze->add_option("-o,--output", analyze.output, "Report JSON to write");
  c_analyze->add_option("--tables", analyze.tables, "Rendered tables to write");
  c_analyze->add_option("--check-against", analyze.check_against, "Golden expected-values JSON");
  c_analyze->add_flag("--full", analyze.full, "Render every report section");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (c_ingest->parsed()) return cmd_ingest(ingest, out, err);
  if (c_detect->parsed()) return cmd_detect(detect, out, err);
  if (c_sample->parsed()) return cmd_sample(sample, out, err);
  if (c_queue->parsed()) return cmd_queue(queue, out, err);
  if (c_serve->parsed()) {
    if (const char* token = std::getenv("TRIAGE_ADMIN_TOKEN")) serve.admin_token = token;
    return cmd_serve(serve, out, err);
  }
  if (c_export->parsed()) return cmd_export(exp, out, err);
  if (c_analyze->parsed()) return cmd_analyze(analyze, out, err);
  return kExitUsage;
}

}  // namespace trajsig::cli
