#include "cycconf.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "cycconf/datapipe.hpp"
#include "cycconf/detector.hpp"
#include "cycconf/evalkit.hpp"
#include "cycconf/inspect.hpp"
#include "cycconf/kvconfig.hpp"
#include "cycconf/synthvid.hpp"
#include "cycconf/trainer.hpp"
#include "cycconf/util.hpp"

namespace fs = std::filesystem;

struct ccf_config {
  cycconf::KvConfig kv;
  mutable std::string scratch;  // backs ccf_config_get
};

struct ccf_dataset {
  cycconf::datapipe::DatasetIndex index;
};

struct ccf_model {
  std::unique_ptr<cycconf::det::DetectorModel> model;
  cycconf::KvConfig meta;  // checkpoint extra entries
  mutable std::string scratch;
};

namespace {

thread_local std::string g_last_error;

ccf_code fail(ccf_code code, const std::string& message) {
  g_last_error = message;
  return code;
}

// Exceptions stop at the C boundary.
template <typename Fn>
ccf_code guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const cycconf::ContractError& e) {
    return fail(CCF_EINVAL, e.what());
  } catch (const cycconf::IoError& e) {
    return fail(CCF_ERROR, e.what());
  } catch (const cycconf::DataError& e) {
    return fail(CCF_ERROR, e.what());
  } catch (const std::exception& e) {
    return fail(CCF_ERROR, e.what());
  }
}

ccf_code require(bool ok, const char* what) {
  return ok ? CCF_OK : fail(CCF_EINVAL, std::string("null argument: ") + what);
}

}  // namespace

extern "C" {

const char* ccf_version(void) { return "0.1.0"; }

const char* ccf_last_error(void) { return g_last_error.c_str(); }

ccf_code ccf_config_create(ccf_config** out) {
  if (require(out != nullptr, "out") != CCF_OK) return CCF_EINVAL;
  *out = new ccf_config();
  return CCF_OK;
}

ccf_code ccf_config_load_file(ccf_config* cfg, const char* path) {
  if (require(cfg && path, "cfg/path") != CCF_OK) return CCF_EINVAL;
  return guarded([&] {
    cfg->kv.merge_from(cycconf::KvConfig::load_file(path));
    return CCF_OK;
  });
}

ccf_code ccf_config_set(ccf_config* cfg, const char* key, const char* value) {
  if (require(cfg && key && value, "cfg/key/value") != CCF_OK) return CCF_EINVAL;
  cfg->kv.set(key, value);
  return CCF_OK;
}

const char* ccf_config_get(const ccf_config* cfg, const char* key) {
  if (!cfg || !key) return nullptr;
  auto v = cfg->kv.get(key);
  if (!v) return nullptr;
  cfg->scratch = *v;
  return cfg->scratch.c_str();
}

void ccf_config_destroy(ccf_config* cfg) { delete cfg; }

ccf_code ccf_generate_benchmark(const ccf_config* spec, const char* out_dir,
                                uint64_t seed, int force) {
  if (require(out_dir != nullptr, "out_dir") != CCF_OK) return CCF_EINVAL;
  return guarded([&] {
    const auto bench = spec ? cycconf::synthvid::BenchmarkSpec::from_kv(spec->kv)
                            : cycconf::synthvid::BenchmarkSpec::default_spec();
    cycconf::synthvid::generate_benchmark(bench, out_dir, seed, force != 0);
    return CCF_OK;
  });
}

ccf_code ccf_dataset_open(const char* dir, ccf_dataset** out) {
  if (require(dir && out, "dir/out") != CCF_OK) return CCF_EINVAL;
  *out = nullptr;
  if (!fs::exists(dir)) return fail(CCF_ENOTFOUND, std::string("no such directory: ") + dir);
  return guarded([&] {
    auto ds = std::make_unique<ccf_dataset>();
    ds->index = cycconf::datapipe::load_dataset(dir);
    *out = ds.release();
    return CCF_OK;
  });
}

size_t ccf_dataset_num_sequences(const ccf_dataset* ds) {
  return ds ? ds->index.sequences.size() : 0;
}

size_t ccf_dataset_num_frames(const ccf_dataset* ds) {
  return ds ? ds->index.total_frames() : 0;
}

ccf_code ccf_dataset_split(const ccf_dataset* ds, const char* attribute,
                           const char* value, ccf_dataset** out) {
  if (require(ds && attribute && value && out, "ds/attribute/value/out") != CCF_OK)
    return CCF_EINVAL;
  *out = nullptr;
  return guarded([&] {
    auto split = std::make_unique<ccf_dataset>();
    split->index = cycconf::datapipe::split_by_attribute(ds->index, attribute, value);
    *out = split.release();
    return CCF_OK;
  });
}

uint64_t ccf_dataset_manifest_hash(const ccf_dataset* ds) {
  return ds ? ds->index.manifest_hash : 0;
}

void ccf_dataset_close(ccf_dataset* ds) { delete ds; }

ccf_code ccf_model_create(const ccf_config* cfg, uint64_t seed, ccf_model** out) {
  if (require(out != nullptr, "out") != CCF_OK) return CCF_EINVAL;
  *out = nullptr;
  return guarded([&] {
    const auto dcfg = cfg ? cycconf::det::DetectorConfig::from_kv(cfg->kv)
                          : cycconf::det::DetectorConfig{};
    auto m = std::make_unique<ccf_model>();
    m->model = std::make_unique<cycconf::det::DetectorModel>(dcfg, seed);
    *out = m.release();
    return CCF_OK;
  });
}

ccf_code ccf_model_load(const char* checkpoint_path, ccf_model** out) {
  if (require(checkpoint_path && out, "checkpoint_path/out") != CCF_OK)
    return CCF_EINVAL;
  *out = nullptr;
  if (!fs::exists(checkpoint_path))
    return fail(CCF_ENOTFOUND, std::string("no such checkpoint: ") + checkpoint_path);
  return guarded([&] {
    auto m = std::make_unique<ccf_model>();
    m->model = std::make_unique<cycconf::det::DetectorModel>(
        cycconf::det::DetectorModel::load(checkpoint_path, &m->meta));
    *out = m.release();
    return CCF_OK;
  });
}

ccf_code ccf_model_save(const ccf_model* m, const char* checkpoint_path) {
  if (require(m && checkpoint_path, "model/checkpoint_path") != CCF_OK)
    return CCF_EINVAL;
  return guarded([&] {
    m->model->save(checkpoint_path, m->meta);
    return CCF_OK;
  });
}

int ccf_model_embedding_dim(const ccf_model* m) {
  return m ? m->model->config().embedding_dim : 0;
}

const char* ccf_model_meta(const ccf_model* m, const char* key) {
  if (!m || !key) return nullptr;
  auto v = m->meta.get(key);
  if (!v) return nullptr;
  m->scratch = *v;
  return m->scratch.c_str();
}

void ccf_model_destroy(ccf_model* m) { delete m; }

ccf_code ccf_train(ccf_model* m, const ccf_dataset* source,
                   const ccf_dataset* target, const ccf_config* cfg,
                   const char* out_dir) {
  if (require(m && source && out_dir, "model/source/out_dir") != CCF_OK)
    return CCF_EINVAL;
  return guarded([&] {
    const auto tcfg = cfg ? cycconf::trainer::TrainConfig::from_kv(cfg->kv)
                          : cycconf::trainer::TrainConfig{};
    cycconf::trainer::train(*m->model, source->index,
                            target ? &target->index : nullptr, tcfg, out_dir);
    m->meta.set("trained_task", cycconf::trainer::task_name(tcfg.ssl_task));
    m->meta.set("objectness_threshold",
                cycconf::format_double(tcfg.objectness_threshold));
    m->meta.set("temperature", cycconf::format_double(tcfg.temperature));
    return CCF_OK;
  });
}

ccf_code ccf_evaluate(const ccf_model* m, const ccf_dataset* ds,
                      const char* json_out_path, const char* table_out_path) {
  if (require(m && ds, "model/dataset") != CCF_OK) return CCF_EINVAL;
  return guarded([&] {
    const auto report = cycconf::evalkit::evaluate(*m->model, ds->index);
    if (json_out_path) cycconf::atomic_write_file(json_out_path, report.to_json());
    if (table_out_path) {
      cycconf::evalkit::OodReport wrap;
      wrap.in_domain = report;
      wrap.out_domain = report;
      cycconf::atomic_write_file(table_out_path, wrap.to_table());
    }
    return CCF_OK;
  });
}

ccf_code ccf_ood_report(const ccf_model* m, const ccf_dataset* train_domain,
                        const ccf_dataset* test_domain, const char* out_dir) {
  if (require(m && train_domain && test_domain && out_dir,
              "model/train_domain/test_domain/out_dir") != CCF_OK)
    return CCF_EINVAL;
  return guarded([&] {
    const auto report =
        cycconf::evalkit::ood_report(*m->model, train_domain->index, test_domain->index);
    fs::create_directories(out_dir);
    cycconf::atomic_write_file((fs::path(out_dir) / "report.json").string(),
                               report.to_json());
    cycconf::atomic_write_file((fs::path(out_dir) / "report.txt").string(),
                               report.to_table());
    cycconf::atomic_write_file((fs::path(out_dir) / "per_class.csv").string(),
                               report.to_csv());
    return CCF_OK;
  });
}

ccf_code ccf_inspect_matching(const ccf_model* m, const ccf_dataset* ds,
                              int pairs, uint64_t seed, const char* mode,
                              const char* out_dir, double* mean_entropy_out) {
  if (require(m && ds && out_dir, "model/dataset/out_dir") != CCF_OK)
    return CCF_EINVAL;
  return guarded([&] {
    std::string mode_name = mode ? mode : "";
    if (mode_name.empty()) {
      auto trained = m->meta.get("trained_task");
      mode_name = trained ? *trained : "cycconf";
    }
    cycconf::cycmatch::MatchMode match_mode;
    if (mode_name == "cycconf")
      match_mode = cycconf::cycmatch::MatchMode::kConfusion;
    else if (mode_name == "cycle_consistency")
      match_mode = cycconf::cycmatch::MatchMode::kConsistency;
    else
      return fail(CCF_EINVAL, "inspect mode must be cycconf or cycle_consistency, got '" +
                                  mode_name + "'");

    const double threshold =
        m->meta.get("objectness_threshold")
            ? std::stod(*m->meta.get("objectness_threshold"))
            : 0.8;
    const double temperature =
        m->meta.get("temperature") ? std::stod(*m->meta.get("temperature")) : 1.0;
    const auto summary = cycconf::inspect::inspect_matching(
        *m->model, ds->index, pairs, seed, 1, threshold, match_mode, temperature,
        out_dir);
    if (mean_entropy_out) *mean_entropy_out = summary.mean_entropy;
    return CCF_OK;
  });
}

}  // extern "C"
