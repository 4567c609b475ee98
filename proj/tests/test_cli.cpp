#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>
#include <unistd.h>

#include "msprt/cli.hpp"

namespace fs = std::filesystem;
using msprt::cli::run_cli;

namespace {

const fs::path kData = MSPRT_TEST_DATA_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  args.insert(args.begin(), "msprt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string data(const char* name) { return (kData / name).string(); }

class TempDir {
 public:
  TempDir() {
    static int counter = 0;
    path_ = fs::temp_directory_path() / ("msprt_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name, const std::string& content = "") const {
    const auto p = path_ / name;
    if (!content.empty()) std::ofstream(p) << content;
    return p.string();
  }

 private:
  fs::path path_;
};

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST_SUITE("run") {
  TEST_CASE("null-centred stream with a point-mass prior") {
    const auto r = cli({"run", data("balanced_stream.csv"), "--metric", "risk_ratio", "--prior",
                        data("prior_point_mass.json")});
    CHECK(r.code == msprt::cli::kExitCompleted);
    const auto recs = lines_of(r.out);
    CHECK(recs.size() == 10);
    for (const auto& l : recs) {
      const auto j = nlohmann::json::parse(l);
      CHECK(j["log_lambda"] == 0.0);
      CHECK(j["p"] == 1.0);
      CHECK(j["decision"] == "continue");
    }
  }

  TEST_CASE("golden stream reproduces the committed records") {
    TempDir tmp;
    const auto out = tmp.file("records.jsonl");
    const auto r = cli({"run", data("golden_stream.csv"), "--config", data("golden_config.json"), "--out", out});
    CHECK(r.code == msprt::cli::kExitRejected);
    CHECK(slurp(out) == slurp(kData / "golden_output.jsonl"));
    const auto last = nlohmann::json::parse(lines_of(slurp(out)).back());
    CHECK(last["n"] == 225);
    CHECK(last["decision"] == "reject");
  }

  TEST_CASE("record keys follow the documented order") {
    const auto first = lines_of(slurp(kData / "golden_output.jsonl")).front();
    CHECK(first.find("{\"n\":") == 0);
    CHECK(first.find("\"log_lambda\"") < first.find("\"p\""));
    CHECK(first.find("\"p\"") < first.find("\"decision\""));
  }

  TEST_CASE("invalid priors exit with a configuration error") {
    auto r = cli({"run", data("balanced_stream.csv"), "--metric", "risk_ratio", "--prior", data("prior_broken.json")});
    CHECK(r.code == msprt::cli::kExitConfigError);
    CHECK(r.err.find("invalid JSON") != std::string::npos);

    r = cli({"run", data("balanced_stream.csv"), "--metric", "risk_ratio", "--prior", data("prior_weights_1_2.json")});
    CHECK(r.code == msprt::cli::kExitConfigError);
    CHECK(r.err.find("weights sum to 1.2") != std::string::npos);

    r = cli({"run", data("balanced_stream.csv"), "--metric", "risk_ratio", "--arms", "3", "--prior",
             data("prior_point_mass.json")});
    CHECK(r.code == msprt::cli::kExitConfigError);
    CHECK(r.err.find("prior") != std::string::npos);

    r = cli({"run", data("balanced_stream.csv"), "--metric", "lift", "--prior", data("prior_point_mass.json")});
    CHECK(r.code == msprt::cli::kExitConfigError);

    r = cli({"run", data("balanced_stream.csv"), "--metric", "risk_ratio"});
    CHECK(r.code == msprt::cli::kExitConfigError);
  }

  TEST_CASE("config directory from the environment") {
    ::setenv(msprt::cli::kConfigDirEnv, kData.c_str(), 1);
    const auto r = cli({"run", data("balanced_stream.csv"), "--metric", "risk_ratio", "--prior", "prior_point_mass.json"});
    ::unsetenv(msprt::cli::kConfigDirEnv);
    CHECK(r.code == msprt::cli::kExitCompleted);
  }

  TEST_CASE("JSONL input matches CSV input") {
    TempDir tmp;
    std::ostringstream jsonl;
    for (const auto& l : lines_of(slurp(kData / "balanced_stream.csv"))) {
      const auto comma = l.find(',');
      jsonl << "{\"arm\": " << l.substr(0, comma) << ", \"value\": " << l.substr(comma + 1) << "}\n";
    }
    const auto path = tmp.file("stream.jsonl", jsonl.str());
    const std::vector<std::string> flags{"--metric", "prop_diff", "--prior", data("prior_effect_size.json"),
                                         "--batch-size", "50"};
    auto a = std::vector<std::string>{"run", path};
    auto b = std::vector<std::string>{"run", data("balanced_stream.csv")};
    a.insert(a.end(), flags.begin(), flags.end());
    b.insert(b.end(), flags.begin(), flags.end());
    const auto ra = cli(a), rb = cli(b);
    CHECK(ra.code == 0);
    CHECK(ra.out == rb.out);
    CHECK(lines_of(ra.out).size() == 20);
  }

  TEST_CASE("malformed lines against the tolerance") {
    TempDir tmp;
    std::string body = "arm,value\n";
    for (int i = 0; i < 300; ++i) body += std::to_string(1 + i % 2) + "," + std::to_string((i / 2) % 3 == 0) + "\n";
    body += "2,abc\n";
    body += "7,1\n";
    for (int i = 0; i < 100; ++i) body += std::to_string(1 + i % 2) + ",0\n";
    const auto path = tmp.file("stream.csv", body);
    const std::vector<std::string> base{"run", path, "--metric", "risk_ratio", "--prior", data("prior_point_mass.json")};

    auto r = cli(base);
    CHECK(r.code == msprt::cli::kExitDataError);
    CHECK(r.err.find("line 302") != std::string::npos);
    CHECK(lines_of(r.out).size() == 3);

    auto tolerant = base;
    tolerant.insert(tolerant.end(), {"--max-malformed", "1"});
    CHECK(cli(tolerant).code == msprt::cli::kExitDataError);

    tolerant.back() = "2";
    r = cli(tolerant);
    CHECK(r.code == msprt::cli::kExitCompleted);
    CHECK(lines_of(r.out).size() == 4);
    CHECK(r.err.find("2 malformed record(s) skipped") != std::string::npos);
  }

  TEST_CASE("resume reproduces the unsegmented run") {
    TempDir tmp;
    const auto all = lines_of(slurp(kData / "golden_stream.csv"));
    std::string head;
    for (std::size_t i = 0; i <= 160; ++i) head += all[i] + "\n";  // header + 160 events
    const auto partial = tmp.file("partial.csv", head);
    const auto snap = tmp.file("state.bin");
    const auto out1 = tmp.file("part1.jsonl"), out2 = tmp.file("part2.jsonl");

    auto r = cli({"run", partial, "--config", data("golden_config.json"), "--snapshot-every", "40", "--snapshot",
                  snap, "--out", out1});
    CHECK(r.code == msprt::cli::kExitCompleted);
    REQUIRE(fs::exists(snap));

    r = cli({"run", data("golden_stream.csv"), "--resume", snap, "--out", out2});
    CHECK(r.code == msprt::cli::kExitRejected);
    CHECK(slurp(out1) + slurp(out2) == slurp(kData / "golden_output.jsonl"));

    r = cli({"run", data("golden_stream.csv"), "--resume", snap, "--alpha", "0.1"});
    CHECK(r.code == msprt::cli::kExitConfigError);

    const auto junk = tmp.file("junk.bin", "MSPRnot really a snapshot");
    r = cli({"run", data("golden_stream.csv"), "--resume", junk});
    CHECK(r.code == msprt::cli::kExitConfigError);
  }

  TEST_CASE("replay is byte-identical") {
    const std::vector<std::string> args{"run", data("golden_stream.csv"), "--metric", "odds_ratio", "--prior",
                                        data("prior_point_mass.json"), "--batch-size", "250", "--burn-in", "500"};
    const auto a = cli(args), b = cli(args);
    CHECK(a.code == 0);
    CHECK(a.out == b.out);
    CHECK(lines_of(a.out).size() == 40);
  }
}

TEST_SUITE("check") {
  TEST_CASE("valid prior and config") {
    auto r = cli({"check", "--prior", data("prior_effect_size.json")});
    CHECK(r.code == 0);
    CHECK(r.out.rfind("ok:", 0) == 0);
    r = cli({"check", "--config", data("golden_config.json")});
    CHECK(r.code == 0);
  }

  TEST_CASE("weights summing to 1.2") {
    const auto r = cli({"check", "--prior", data("prior_weights_1_2.json")});
    CHECK(r.code == msprt::cli::kExitConfigError);
    CHECK(r.err.find("weights sum to 1.2") != std::string::npos);
  }

  TEST_CASE("non-PSD component names its index") {
    const auto r = cli({"check", "--prior", data("prior_not_psd.json")});
    CHECK(r.code == msprt::cli::kExitConfigError);
    CHECK(r.err.find("components[1]") != std::string::npos);
  }

  TEST_CASE("needs exactly one input") {
    CHECK(cli({"check"}).code == msprt::cli::kExitConfigError);
    CHECK(cli({"check", "--prior", data("prior_point_mass.json"), "--config", data("golden_config.json")}).code ==
          msprt::cli::kExitConfigError);
  }
}

TEST_SUITE("simulate") {
  const char* kScenario = R"({
    "generator": {"type": "bernoulli", "p": [0.3, 0.3]},
    "max_n": 2000, "replications": 40, "seed": 12, "checkpoints": [500, 2000]})";

  TEST_CASE("seed repeat gives a byte-identical report") {
    TempDir tmp;
    const auto scen = tmp.file("scenario.json", kScenario);
    const std::vector<std::string> args{"simulate", scen, "--metric", "prop_diff", "--prior",
                                        data("prior_effect_size.json"), "--threads", "2"};
    const auto a = cli(args), b = cli(args);
    REQUIRE(a.code == 0);
    CHECK(a.out == b.out);
    const auto report = nlohmann::json::parse(a.out);
    CHECK(report["replications"] == 40);
    CHECK(report["lambda_mean_at"].size() == 2);

    auto single = args;
    single.back() = "1";
    CHECK(cli(single).out == a.out);

    auto table = args;
    table.push_back("--table");
    CHECK(cli(table).out.find("rejection rate") != std::string::npos);
  }

  TEST_CASE("mismatched arm counts") {
    TempDir tmp;
    const auto scen = tmp.file("scenario.json", kScenario);
    const auto r = cli({"simulate", scen, "--metric", "prop_diff", "--arms", "3", "--prior",
                        data("prior_effect_size.json")});
    CHECK(r.code == msprt::cli::kExitConfigError);
  }

  TEST_CASE("bad scenario") {
    TempDir tmp;
    const auto scen = tmp.file("scenario.json", R"({"generator": {"type": "bernoulli", "p": [0.3, 0.3]}})");
    CHECK(cli({"simulate", scen, "--metric", "prop_diff", "--prior", data("prior_effect_size.json")}).code ==
          msprt::cli::kExitConfigError);
  }
}

TEST_CASE("unknown subcommand") { CHECK(cli({"frobnicate"}).code == msprt::cli::kExitConfigError); }
