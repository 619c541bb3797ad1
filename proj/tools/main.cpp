// cycconf command-line front end. Everything goes through the C API in
// cycconf.h; exit codes: 0 success, 1 runtime failure, 2 usage error or
// missing input.

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cycconf.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

int exit_code_for(ccf_code code) {
  switch (code) {
    case CCF_OK: return kExitOk;
    case CCF_EINVAL: return kExitUsage;
    case CCF_ENOTFOUND: return kExitUsage;
    default: return kExitRuntime;
  }
}

int report(ccf_code code, const std::string& what) {
  if (code == CCF_OK) return kExitOk;
  std::cerr << "error: " << what << ": " << ccf_last_error() << "\n";
  return exit_code_for(code);
}

// Seed precedence: explicit flag, then config file, then CYCCONF_SEED, then 1.
uint64_t resolve_seed(const std::optional<uint64_t>& flag_seed,
                      const ccf_config* cfg) {
  if (flag_seed) return *flag_seed;
  if (cfg) {
    if (const char* v = ccf_config_get(cfg, "seed"))
      return std::strtoull(v, nullptr, 10);
  }
  if (const char* env = std::getenv("CYCCONF_SEED"))
    return std::strtoull(env, nullptr, 10);
  return 1;
}

struct ConfigHandle {
  ccf_config* ptr = nullptr;
  ConfigHandle() { ccf_config_create(&ptr); }
  ~ConfigHandle() { ccf_config_destroy(ptr); }
};

struct DatasetHandle {
  ccf_dataset* ptr = nullptr;
  ~DatasetHandle() { ccf_dataset_close(ptr); }
};

struct ModelHandle {
  ccf_model* ptr = nullptr;
  ~ModelHandle() { ccf_model_destroy(ptr); }
};

int apply_overrides(ccf_config* cfg, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::cerr << "error: --set expects key=value, got '" << kv << "'\n";
      return kExitUsage;
    }
    ccf_config_set(cfg, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
  }
  return kExitOk;
}

void print_file(const std::string& path) {
  std::ifstream in(path);
  std::cout << in.rdbuf();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cycconf: instance-level temporal cycle confusion laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ccf_version()));

  // ---- generate-data ----
  auto* gen = app.add_subcommand("generate-data", "Generate the synthetic video benchmark");
  std::string gen_spec, gen_out;
  std::optional<uint64_t> gen_seed;
  bool gen_force = false;
  gen->add_option("--spec", gen_spec, "Benchmark spec file (key=value); defaults built in");
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Master seed");
  gen->add_flag("--force", gen_force, "Overwrite a non-empty output directory");

  // ---- train ----
  auto* train = app.add_subcommand("train", "Train the detector with an auxiliary task");
  std::string tr_data, tr_target, tr_config, tr_out;
  std::string tr_task = "cycconf", tr_mode = "ood";
  std::optional<uint64_t> tr_seed;
  std::vector<std::string> tr_sets;
  train->add_option("--data", tr_data, "Training dataset directory")->required();
  train->add_option("--task", tr_task,
                    "Auxiliary task: cycconf|cycle_consistency|rotation|jigsaw|none");
  train->add_option("--mode", tr_mode, "ood (labeled source only) or uda");
  train->add_option("--target-data", tr_target, "Unlabeled target dataset (uda mode)");
  train->add_option("--config", tr_config, "key=value config file");
  train->add_option("--out", tr_out, "Output directory")->required();
  train->add_option("--seed", tr_seed, "Training seed (overrides config)");
  train->add_option("--set", tr_sets, "Override config entries, key=value")
      ->take_all();

  // ---- eval ----
  auto* eval = app.add_subcommand("eval", "Out-of-domain evaluation report");
  std::string ev_ckpt, ev_train, ev_test, ev_out;
  eval->add_option("--ckpt", ev_ckpt, "Checkpoint file")->required();
  eval->add_option("--train-domain", ev_train, "In-domain dataset directory")->required();
  eval->add_option("--test-domain", ev_test, "Out-of-domain dataset directory")->required();
  eval->add_option("--out", ev_out, "Output directory")->required();

  // ---- inspect-matching ----
  auto* inspect = app.add_subcommand("inspect-matching",
                                     "Export match weights, entropies and embeddings");
  std::string in_ckpt, in_data, in_out, in_task;
  int in_pairs = 8;
  std::optional<uint64_t> in_seed;
  inspect->add_option("--ckpt", in_ckpt, "Checkpoint file")->required();
  inspect->add_option("--data", in_data, "Dataset directory")->required();
  inspect->add_option("--pairs", in_pairs, "Number of frame pairs to sample");
  inspect->add_option("--out", in_out, "Output directory")->required();
  inspect->add_option("--task", in_task,
                      "Matching mode override: cycconf|cycle_consistency");
  inspect->add_option("--seed", in_seed, "Sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  if (gen->parsed()) {
    ConfigHandle spec;
    bool have_spec = false;
    if (!gen_spec.empty()) {
      const ccf_code rc = ccf_config_load_file(spec.ptr, gen_spec.c_str());
      if (rc != CCF_OK) return report(rc, "loading spec " + gen_spec);
      have_spec = true;
    }
    const uint64_t seed = resolve_seed(gen_seed, have_spec ? spec.ptr : nullptr);
    const ccf_code rc = ccf_generate_benchmark(have_spec ? spec.ptr : nullptr,
                                               gen_out.c_str(), seed, gen_force);
    if (rc != CCF_OK) return report(rc, "generating benchmark");
    std::cout << "benchmark written to " << gen_out << " (seed " << seed << ")\n";
    return kExitOk;
  }

  if (train->parsed()) {
    if (tr_mode != "ood" && tr_mode != "uda") {
      std::cerr << "error: --mode must be ood or uda\n";
      return kExitUsage;
    }
    if (tr_mode == "uda" && tr_target.empty()) {
      std::cerr << "error: --mode uda requires --target-data\n";
      return kExitUsage;
    }
    if (tr_mode == "ood" && !tr_target.empty()) {
      std::cerr << "error: --target-data is only valid with --mode uda\n";
      return kExitUsage;
    }

    ConfigHandle cfg;
    if (!tr_config.empty()) {
      const ccf_code rc = ccf_config_load_file(cfg.ptr, tr_config.c_str());
      if (rc != CCF_OK) return report(rc, "loading config " + tr_config);
    }
    if (const int rc = apply_overrides(cfg.ptr, tr_sets); rc != kExitOk) return rc;
    ccf_config_set(cfg.ptr, "ssl_task", tr_task.c_str());
    const uint64_t seed = resolve_seed(tr_seed, cfg.ptr);
    ccf_config_set(cfg.ptr, "seed", std::to_string(seed).c_str());

    DatasetHandle source;
    ccf_code rc = ccf_dataset_open(tr_data.c_str(), &source.ptr);
    if (rc != CCF_OK) return report(rc, "opening dataset " + tr_data);

    DatasetHandle target;
    if (tr_mode == "uda") {
      rc = ccf_dataset_open(tr_target.c_str(), &target.ptr);
      if (rc != CCF_OK) return report(rc, "opening target dataset " + tr_target);
    }

    ModelHandle model;
    rc = ccf_model_create(cfg.ptr, seed, &model.ptr);
    if (rc != CCF_OK) return report(rc, "creating model");

    rc = ccf_train(model.ptr, source.ptr, target.ptr, cfg.ptr, tr_out.c_str());
    if (rc != CCF_OK) return report(rc, "training");
    std::cout << "trained task=" << tr_task << " seed=" << seed << " -> " << tr_out
              << "\n";
    return kExitOk;
  }

  if (eval->parsed()) {
    ModelHandle model;
    ccf_code rc = ccf_model_load(ev_ckpt.c_str(), &model.ptr);
    if (rc != CCF_OK) return report(rc, "loading checkpoint " + ev_ckpt);

    DatasetHandle train_dom, test_dom;
    rc = ccf_dataset_open(ev_train.c_str(), &train_dom.ptr);
    if (rc != CCF_OK) return report(rc, "opening dataset " + ev_train);
    rc = ccf_dataset_open(ev_test.c_str(), &test_dom.ptr);
    if (rc != CCF_OK) return report(rc, "opening dataset " + ev_test);

    rc = ccf_ood_report(model.ptr, train_dom.ptr, test_dom.ptr, ev_out.c_str());
    if (rc != CCF_OK) return report(rc, "evaluating");
    print_file(ev_out + "/report.txt");
    return kExitOk;
  }

  if (inspect->parsed()) {
    ModelHandle model;
    ccf_code rc = ccf_model_load(in_ckpt.c_str(), &model.ptr);
    if (rc != CCF_OK) return report(rc, "loading checkpoint " + in_ckpt);

    DatasetHandle data;
    rc = ccf_dataset_open(in_data.c_str(), &data.ptr);
    if (rc != CCF_OK) return report(rc, "opening dataset " + in_data);

    double mean_entropy = 0.0;
    rc = ccf_inspect_matching(model.ptr, data.ptr, in_pairs,
                              resolve_seed(in_seed, nullptr),
                              in_task.empty() ? nullptr : in_task.c_str(),
                              in_out.c_str(), &mean_entropy);
    if (rc != CCF_OK) return report(rc, "inspecting matching");
    std::cout << "pairs=" << in_pairs << " mean_entropy=" << mean_entropy << " -> "
              << in_out << "\n";
    return kExitOk;
  }

  return kExitUsage;
}
