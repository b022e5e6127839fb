#include <CLI11.hpp>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "scsb/scsb.h"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Options& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "experiment config (JSON)");
  if (config_required) c->required()->check(CLI::ExistingFile);
  else c->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "output directory for report.json and CSVs");
  cmd->add_option("--seed", o.seed, "Monte Carlo seed (overrides mc.seed)");
  cmd->add_option("--workers", o.workers, "worker threads (0 = config or hardware)");
  cmd->add_flag("--quiet", o.quiet, "print only the status line");
}

void print_summary(const std::string& command, const std::string& report, bool quiet) {
  const auto j = nlohmann::json::parse(report);
  std::ostringstream line;
  line << command << ": " << j.value("status", std::string("?"));
  if (j.contains("slope") && j["slope"].is_number()) {
    line << "  slope=" << j["slope"].get<double>() << "  r2=" << j["r2"].get<double>();
  }
  line << "  (" << j.value("runtime_s", 0.0) << " s)";
  std::cout << line.str() << '\n';
  if (quiet) return;
  for (const auto& row : j["per_k"]) std::cout << "  " << row.dump() << '\n';
  for (const auto& note : j["notes"]) std::cout << "  note: " << note.get<std::string>() << '\n';
  if (j.contains("checks")) {
    for (const auto& c : j["checks"]) {
      std::cout << "  " << (c["pass"].get<bool>() ? "ok   " : "FAIL ") << c["name"].get<std::string>() << '\n';
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Soft-constrained Schrodinger bridge solver and rate harness"};
  app.require_subcommand(1);
  Options opts;
  const char* commands[][2] = {
      {"bridge", "solve one bridge and export its control field"},
      {"sweep-control", "control convergence rate over k"},
      {"sweep-value", "value convergence rate over k"},
      {"sweep-terminal", "terminal-law W2 rate over k"},
      {"finetune", "reward-tilted target scenario"},
      {"transfer", "transfer-learning bound scenario"},
      {"simulate", "Euler-Maruyama simulation of a solved bridge"},
      {"selftest", "quick internal consistency checks"},
  };
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c[0], c[1]);
    add_common(sub, opts, std::string(c[0]) != "selftest");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 3;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  std::string config = "{}";
  if (!opts.config.empty()) {
    std::ifstream in(opts.config);
    if (!in) {
      std::cerr << "error: cannot read " << opts.config << '\n';
      return 3;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    config = ss.str();
  }
  bool has_seed = false;
  for (const auto* sub : app.get_subcommands()) has_seed = has_seed || sub->count("--seed") > 0;

  char* report = nullptr;
  int verdict = 1;
  const scsb_status st = scsb_run(command.c_str(), config.c_str(), opts.out.c_str(), opts.seed, has_seed ? 1 : 0,
                                  opts.workers, &report, &verdict);
  if (st != SCSB_OK) {
    std::cerr << "error [" << scsb_status_name(st) << "]: " << scsb_last_error() << '\n';
    return scsb_exit_code(st);
  }
  print_summary(command, report, opts.quiet);
  if (!opts.out.empty()) std::cout << "report: " << opts.out << "/report.json\n";
  scsb_string_free(report);
  return verdict;
}
