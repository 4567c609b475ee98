#include "msprt/cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "msprt/engine.hpp"
#include "msprt/prior_io.hpp"
#include "msprt/simulator.hpp"

namespace msprt::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// A usage or configuration problem; maps to kExitConfigError.
struct UsageError : Error {
  using Error::Error;
};

fs::path resolve_path(const std::string& text) {
  fs::path p(text);
  if (p.is_relative() && !fs::exists(p)) {
    if (const char* dir = std::getenv(kConfigDirEnv); dir != nullptr && *dir != '\0') {
      fs::path alt = fs::path(dir) / p;
      if (fs::exists(alt)) return alt;
    }
  }
  return p;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError(path.string() + ": invalid JSON: " + e.what());
  }
}

struct ConfigFlags {
  std::optional<std::string> config_file;
  std::optional<std::string> metric;
  std::optional<double> alpha;
  std::optional<std::size_t> arms;
  std::optional<std::string> prior_file;
  std::optional<std::uint64_t> batch_size;
  std::optional<std::uint64_t> burn_in;
  std::optional<std::string> sigma_mode;

  bool any_test_setting() const {
    return config_file || metric || alpha || arms || prior_file || batch_size || burn_in ||
           sigma_mode;
  }
};

void add_config_flags(CLI::App* app, ConfigFlags& f) {
  app->add_option("--config", f.config_file, "JSON test configuration (flags override it)");
  app->add_option("--metric", f.metric, "risk_ratio | odds_ratio | prop_diff | mean_diff | auc");
  app->add_option("--alpha", f.alpha, "type-I error level (default 0.05)");
  app->add_option("--arms", f.arms, "number of arms including the baseline (default 2)");
  app->add_option("--prior", f.prior_file, "prior JSON file");
  app->add_option("--batch-size", f.batch_size, "observations between evaluations (default 100)");
  app->add_option("--burn-in", f.burn_in, "minimum total n before a rejection (default 100*arms)");
  app->add_option("--sigma-mode", f.sigma_mode, "none | baseline | pooled");
}

/// Config file fields, overridden by flags. `arms_hint` fills arms when
/// neither source sets it.
TestConfig build_config(const ConfigFlags& f, std::optional<std::size_t> arms_hint) {
  json file;
  fs::path file_dir;
  if (f.config_file) {
    const fs::path path = resolve_path(*f.config_file);
    file = read_json_file(path);
    if (!file.is_object()) throw UsageError("config file must be a JSON object");
    file_dir = path.parent_path();
  }
  auto from_file = [&file](const char* key) -> const json* {
    return file.is_object() && file.contains(key) ? &file[key] : nullptr;
  };

  TestConfig c;
  try {
    std::optional<std::string> metric = f.metric;
    if (!metric && from_file("metric")) metric = from_file("metric")->get<std::string>();
    if (!metric) throw UsageError("--metric is required");
    c.metric = parse_metric(*metric);

    c.alpha = f.alpha ? *f.alpha : from_file("alpha") ? from_file("alpha")->get<double>() : 0.05;
    if (f.arms) {
      c.arms = *f.arms;
    } else if (from_file("arms")) {
      c.arms = from_file("arms")->get<std::size_t>();
    } else {
      c.arms = arms_hint.value_or(2);
    }
    c.batch_interval = f.batch_size               ? *f.batch_size
                       : from_file("batch_size") ? from_file("batch_size")->get<std::uint64_t>()
                                                 : kDefaultBatchInterval;
    c.burn_in = f.burn_in              ? *f.burn_in
                : from_file("burn_in") ? from_file("burn_in")->get<std::uint64_t>()
                                       : std::max(default_burn_in(c.arms), c.batch_interval);
    if (f.sigma_mode) {
      c.sigma_mode = parse_sigma_mode(*f.sigma_mode);
    } else if (from_file("sigma_mode")) {
      c.sigma_mode = parse_sigma_mode(from_file("sigma_mode")->get<std::string>());
    } else {
      c.sigma_mode = default_sigma_mode(c.metric);
    }
  } catch (const json::exception& e) {
    throw UsageError(std::string("config file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  if (f.prior_file) {
    c.prior = load_prior_file(resolve_path(*f.prior_file));
  } else if (const json* p = from_file("prior")) {
    if (p->is_string()) {
      fs::path path(p->get<std::string>());
      if (path.is_relative() && !file_dir.empty() && fs::exists(file_dir / path)) path = file_dir / path;
      c.prior = load_prior_file(resolve_path(path.string()));
    } else {
      c.prior = prior_from_json(*p);
    }
  } else {
    throw UsageError("--prior is required");
  }
  validate_config(c);
  return c;
}

// ---------------------------------------------------------------------------
// Event stream parsing

struct ParsedEvent {
  std::size_t arm;  // 1-based as written
  double value;
};

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  s = trim(s);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

std::optional<ParsedEvent> parse_csv(std::string_view line) {
  const auto comma = line.find(',');
  if (comma == std::string_view::npos) return std::nullopt;
  const auto arm = parse_number<long long>(line.substr(0, comma));
  const auto value = parse_number<double>(line.substr(comma + 1));
  if (!arm || !value || *arm < 1) return std::nullopt;
  return ParsedEvent{static_cast<std::size_t>(*arm), *value};
}

std::optional<ParsedEvent> parse_jsonl(std::string_view line) {
  const json doc = json::parse(line, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  const auto arm = doc.find("arm");
  const auto value = doc.find("value");
  if (arm == doc.end() || value == doc.end() || !arm->is_number_integer() || !value->is_number()) {
    return std::nullopt;
  }
  const auto a = arm->get<long long>();
  if (a < 1) return std::nullopt;
  return ParsedEvent{static_cast<std::size_t>(a), value->get<double>()};
}

void write_snapshot(const fs::path& path, const SequentialTest& test) {
  const auto bytes = test.snapshot();
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write snapshot " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
  fs::rename(tmp, path);
}

SequentialTest read_snapshot(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot open snapshot " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return SequentialTest::restore(bytes);
}

struct RunOptions {
  std::string stream;
  ConfigFlags config;
  std::optional<std::string> out_file;
  std::optional<std::uint64_t> snapshot_every;
  std::optional<std::string> snapshot_file;
  std::optional<std::string> resume_file;
  std::uint64_t max_malformed = 0;
};

int cmd_run(const RunOptions& o, std::ostream& out, std::ostream& err) {
  if (o.snapshot_every && (!o.snapshot_file || *o.snapshot_every == 0)) {
    throw UsageError("--snapshot-every needs a positive K and --snapshot FILE");
  }
  std::optional<SequentialTest> test;
  if (o.resume_file) {
    if (o.config.any_test_setting()) {
      throw UsageError("--resume takes the test configuration from the snapshot; drop config flags");
    }
    test.emplace(read_snapshot(o.resume_file->c_str()));
  } else {
    test.emplace(build_config(o.config, std::nullopt));
  }

  std::ifstream in(o.stream);
  if (!in) throw UsageError("cannot open stream " + o.stream);

  std::ofstream file_out;
  if (o.out_file) {
    file_out.open(*o.out_file, std::ios::trunc);
    if (!file_out) throw UsageError("cannot open output " + *o.out_file);
  }
  std::ostream& records = o.out_file ? file_out : out;

  if (test->decision() == Decision::reject) return kExitRejected;

  const std::uint64_t skip = test->n();
  std::uint64_t valid = 0;
  std::uint64_t malformed = 0;
  std::uint64_t line_no = 0;
  bool jsonl = false;
  bool first = true;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    if (first) {
      jsonl = body.front() == '{';
    }
    std::optional<ParsedEvent> ev = jsonl ? parse_jsonl(body) : parse_csv(body);
    if (first) {
      first = false;
      // CSV header row
      if (!ev && !jsonl && !parse_number<long long>(body.substr(0, body.find(',')))) continue;
    }
    if (ev && ev->arm > test->config().arms) ev.reset();
    if (ev && is_binary(test->config().metric) && ev->value != 0.0 && ev->value != 1.0) ev.reset();
    if (!ev || !std::isfinite(ev->value)) {
      ++malformed;
      err << "line " << line_no << ": malformed record\n";
      if (malformed > o.max_malformed) {
        err << "error: " << malformed << " malformed record(s) exceed tolerance "
            << o.max_malformed << '\n';
        return kExitDataError;
      }
      continue;
    }
    if (++valid <= skip) continue;

    const auto e = test->ingest(ev->arm - 1, ev->value);
    if (e) records << to_json(*e).dump() << '\n';
    if (o.snapshot_every && test->n() % *o.snapshot_every == 0) {
      write_snapshot(*o.snapshot_file, *test);
    }
    if (test->decision() == Decision::reject) break;
  }
  records.flush();
  if (malformed > 0) err << malformed << " malformed record(s) skipped\n";
  return test->decision() == Decision::reject ? kExitRejected : kExitCompleted;
}

struct SimulateOptions {
  std::string scenario;
  ConfigFlags config;
  std::optional<std::string> out_file;
  bool table = false;
  bool records = false;
  unsigned threads = 0;
};

int cmd_simulate(const SimulateOptions& o, std::ostream& out, std::ostream&) {
  ScenarioSpec spec;
  try {
    spec = scenario_from_json(read_json_file(resolve_path(o.scenario)));
  } catch (const json::exception& e) {
    throw UsageError(std::string("scenario: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string("scenario: ") + e.what());
  }
  const TestConfig config = build_config(o.config, generator_arms(spec.generator));

  SimulationReport report;
  try {
    report = run_scenario(spec, config, {o.threads, o.records});
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const std::string doc = report_to_json(report).dump(2) + "\n";
  if (o.out_file) {
    std::ofstream f(*o.out_file, std::ios::trunc);
    if (!f) throw UsageError("cannot open output " + *o.out_file);
    f << doc;
    if (o.table) out << report_table(report);
  } else {
    out << (o.table ? report_table(report) : doc);
  }
  return kExitCompleted;
}

struct CheckOptions {
  std::optional<std::string> prior_file;
  std::optional<std::string> config_file;
};

int cmd_check(const CheckOptions& o, std::ostream& out) {
  if (o.prior_file.has_value() == o.config_file.has_value()) {
    throw UsageError("check takes exactly one of --prior or --config");
  }
  if (o.prior_file) {
    const MixtureNormalPrior prior = load_prior_file(resolve_path(*o.prior_file));
    out << "ok: prior with " << prior.components.size() << " component(s), dimension "
        << prior.dimension << ", scale " << to_string(prior.scale) << '\n';
  } else {
    ConfigFlags flags;
    flags.config_file = o.config_file;
    const TestConfig c = build_config(flags, std::nullopt);
    out << "ok: " << to_string(c.metric) << " test, " << c.arms << " arms, alpha " << c.alpha
        << '\n';
  }
  return kExitCompleted;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sequential mixture-likelihood-ratio tests for multi-arm experiments", "msprt"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run a sequential test over a recorded event stream");
  run_cmd->add_option("stream", run.stream, "CSV (arm,value) or JSONL event file")->required();
  add_config_flags(run_cmd, run.config);
  run_cmd->add_option("--out", run.out_file, "write JSONL evaluation records here");
  run_cmd->add_option("--snapshot-every", run.snapshot_every, "snapshot after every K events");
  run_cmd->add_option("--snapshot", run.snapshot_file, "snapshot file path");
  run_cmd->add_option("--resume", run.resume_file, "continue from a snapshot");
  run_cmd->add_option("--max-malformed", run.max_malformed,
                      "malformed lines tolerated before failing (default 0)");

  SimulateOptions sim;
  auto* sim_cmd = app.add_subcommand("simulate", "run a Monte Carlo scenario");
  sim_cmd->add_option("scenario", sim.scenario, "scenario JSON file")->required();
  add_config_flags(sim_cmd, sim.config);
  sim_cmd->add_option("--out", sim.out_file, "write the JSON report here");
  sim_cmd->add_flag("--table", sim.table, "print an aligned text table");
  sim_cmd->add_flag("--records", sim.records, "include per-replication records");
  sim_cmd->add_option("--threads", sim.threads, "worker threads (default: all cores)");

  CheckOptions check;
  auto* check_cmd = app.add_subcommand("check", "validate a prior or config without running");
  check_cmd->add_option("--prior", check.prior_file, "prior JSON file");
  check_cmd->add_option("--config", check.config_file, "test configuration JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitCompleted : kExitConfigError;
  }

  try {
    if (*run_cmd) return cmd_run(run, out, err);
    if (*sim_cmd) return cmd_simulate(sim, out, err);
    return cmd_check(check, out);
  } catch (const CorruptSnapshotError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const PriorFormatError& e) {
    err << "error: prior: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const ConfigError& e) {
    err << "error: config: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfigError;
  }
}

}  // namespace msprt::cli
