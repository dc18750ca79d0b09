#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "packgen/packgen.h"

namespace {

struct Common {
  std::string config;
  std::string preset = "desk";
  std::string out;
  std::vector<std::string> sets;
  long long seed = -1;
  bool force = false;
  bool quiet = false;
};

int fail(pg_status st) {
  std::cerr << "packgen: error (" << pg_status_name(st) << "): " << pg_last_error() << '\n';
  return static_cast<int>(st);
}

void print_line(const char* message, void* quiet) {
  if (!*static_cast<bool*>(quiet)) std::cerr << message << '\n';
}

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Configuration file (key = value lines)")->check(CLI::ExistingFile);
  app->add_option("--preset", c.preset, "Built-in defaults when no --config is given")
      ->check(CLI::IsMember({"desk", "full"}));
  app->add_option("--seed", c.seed, "Root seed (overrides the config)")->check(CLI::NonNegativeNumber);
  app->add_option("--out", c.out, "Output directory (overrides PACKGEN_OUT and the config)");
  app->add_option("--set", c.sets, "Extra key=value assignment, repeatable");
  app->add_flag("--force", c.force, "Replace outputs produced by a different configuration");
  app->add_flag("-q,--quiet", c.quiet, "Only print errors");
}

// Loads the configuration and applies overrides in order: file, --set,
// environment, flags.
pg_status make_config(const Common& c, pg_config** cfg) {
  auto st = c.config.empty() ? pg_config_preset(c.preset.c_str(), cfg) : pg_config_load(c.config.c_str(), cfg);
  if (st != PG_OK) return st;
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      std::cerr << "packgen: --set expects key=value, got '" << s << "'\n";
      return PG_ERR_INVALID_ARGUMENT;
    }
    auto trim = [](std::string v) {
      v.erase(0, v.find_first_not_of(" \t"));
      v.erase(v.find_last_not_of(" \t") + 1);
      return v;
    };
    if ((st = pg_config_set(*cfg, trim(s.substr(0, eq)).c_str(), trim(s.substr(eq + 1)).c_str())) != PG_OK) return st;
  }
  if (const char* t = std::getenv("PACKGEN_THREADS"); t && *t) {
    if ((st = pg_config_set(*cfg, "threads", t)) != PG_OK) return st;
  }
  if (c.seed >= 0) {
    if ((st = pg_config_set(*cfg, "seed", std::to_string(c.seed).c_str())) != PG_OK) return st;
  }
  return pg_config_validate(*cfg);
}

template <typename F>
int with_pipeline(Common& c, F&& body) {
  pg_config* cfg = nullptr;
  auto st = make_config(c, &cfg);
  if (st != PG_OK) {
    pg_config_free(cfg);
    return fail(st);
  }
  std::string out = c.out;
  if (out.empty())
    if (const char* e = std::getenv("PACKGEN_OUT"); e && *e) out = e;
  pg_pipeline* p = nullptr;
  st = pg_pipeline_open(cfg, out.c_str(), c.force ? 1 : 0, print_line, &c.quiet, &p);
  pg_config_free(cfg);
  if (st != PG_OK) return fail(st);
  st = body(p);
  pg_pipeline_close(p);
  return st == PG_OK ? 0 : fail(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial packet generation: datasets, classifiers, agent training and evaluation"};
  app.require_subcommand(1);
  Common c;

  auto* build = app.add_subcommand("build-dataset", "Parse, label, balance and split traffic");
  auto* classify = app.add_subcommand("train-classifiers", "Train surrogate and held-out classifiers");
  auto* train = app.add_subcommand("train-agent", "Train the perturbation agent for one attack class");
  auto* eval = app.add_subcommand("evaluate", "Attack held-out classifiers and write reports");
  auto* synth = app.add_subcommand("gen-synthetic", "Write a synthetic capture and its label rules");
  auto* all = app.add_subcommand("run-all", "Run every stage in order");
  auto* verify = app.add_subcommand("verify", "Re-check hashes and split disjointness of a finished run");
  auto* schema = app.add_subcommand("schema", "List every configuration key");
  auto* show = app.add_subcommand("show-config", "Print the effective configuration after overrides");
  std::string attack;
  train->add_option("--attack", attack, "Attack class, e.g. DoS")->required();
  for (auto* s : {build, classify, train, eval, synth, all, verify, show}) add_common(s, c);

  CLI11_PARSE(app, argc, argv);

  if (*schema) {
    size_t n = 0;
    pg_config_schema(nullptr, 0, &n);
    std::string text(n, '\0');
    pg_config_schema(text.data(), n, &n);
    std::cout << text.c_str();
    return 0;
  }
  if (*show) {
    pg_config* cfg = nullptr;
    const auto st = make_config(c, &cfg);
    if (st != PG_OK) {
      pg_config_free(cfg);
      return fail(st);
    }
    size_t n = 0;
    pg_config_dump(cfg, nullptr, 0, &n);
    std::string text(n, '\0');
    pg_config_dump(cfg, text.data(), n, &n);
    pg_config_free(cfg);
    std::cout << text.c_str();
    return 0;
  }
  if (*build) return with_pipeline(c, [](pg_pipeline* p) { return pg_pipeline_run(p, "ingest"); });
  if (*classify) return with_pipeline(c, [](pg_pipeline* p) { return pg_pipeline_run(p, "classify"); });
  if (*train) return with_pipeline(c, [&](pg_pipeline* p) { return pg_pipeline_train_agent(p, attack.c_str()); });
  if (*eval) return with_pipeline(c, [](pg_pipeline* p) { return pg_pipeline_run(p, "evaluate"); });
  if (*synth) return with_pipeline(c, [](pg_pipeline* p) { return pg_pipeline_gen_synthetic(p); });
  if (*all) return with_pipeline(c, [](pg_pipeline* p) { return pg_pipeline_run(p, "all"); });
  if (*verify) {
    size_t issues = 0;
    const int rc = with_pipeline(c, [&](pg_pipeline* p) {
      return pg_pipeline_verify(p, [](const char* m, void*) { std::cout << m << '\n'; }, nullptr, &issues);
    });
    if (rc != 0) return rc;
    std::cout << (issues ? std::to_string(issues) + " problem(s) found" : "run verified") << '\n';
    return issues ? 1 : 0;
  }
  return 0;
}
