#include "hcost/hcost.h"

#include <array>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "json.hpp"

#include "hcost/eval.hpp"
#include "hcost/gradcheck.hpp"
#include "hcost/scene.hpp"
#include "hcost/trainer.hpp"

using nlohmann::ordered_json;

struct hcost_dataset {
    hcost::Dataset data;
    std::string path;
    std::uint64_t fingerprint = 0;
};

struct hcost_model {
    hcost::GroundingNetwork net;
    hcost::CheckpointMeta meta;
};

namespace {

thread_local std::string g_last_error;

hcost_status fail(hcost_status code, const std::string& msg) {
    g_last_error = msg;
    return code;
}

template <typename Fn>
hcost_status guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const hcost::ConfigError& e) {
        return fail(HCOST_ERR_CONFIG, e.what());
    } catch (const hcost::NumericError& e) {
        return fail(HCOST_ERR_NUMERIC, e.what());
    } catch (const hcost::TensorError& e) {
        return fail(HCOST_ERR_NUMERIC, e.what());
    } catch (const hcost::DataError& e) {
        return fail(HCOST_ERR_DATA, e.what());
    } catch (const std::exception& e) {
        return fail(HCOST_ERR_DATA, e.what());
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

}  // namespace

extern "C" {

const char* hcost_status_name(hcost_status status) {
    switch (status) {
        case HCOST_OK: return "ok";
        case HCOST_ERR_CONFIG: return "config-error";
        case HCOST_ERR_DATA: return "data-error";
        case HCOST_ERR_NUMERIC: return "numeric-error";
    }
    return "unknown";
}

const char* hcost_last_error(void) { return g_last_error.c_str(); }

void hcost_string_free(char* s) { std::free(s); }

hcost_status hcost_generate_dataset(const char* config_json, unsigned long long seed,
                                    const char* out_path) {
    return guarded([&] {
        if (!out_path) return fail(HCOST_ERR_CONFIG, "output path is required");
        hcost::GenConfig cfg;
        if (config_json && *config_json) cfg = hcost::gen_config_from_json(config_json);
        const hcost::Dataset ds = hcost::generate_dataset(cfg, seed);
        hcost::write_dataset(ds, out_path);
        return HCOST_OK;
    });
}

hcost_status hcost_dataset_open(const char* path, hcost_dataset** out) {
    return guarded([&] {
        if (!path || !out) return fail(HCOST_ERR_CONFIG, "path and out handle required");
        auto handle = std::make_unique<hcost_dataset>();
        handle->data = hcost::read_dataset(path);
        handle->path = path;
        handle->fingerprint = hcost::file_fingerprint(path);
        *out = handle.release();
        return HCOST_OK;
    });
}

void hcost_dataset_close(hcost_dataset* ds) { delete ds; }

hcost_status hcost_dataset_summary_json(const hcost_dataset* ds, char** out_json) {
    return guarded([&] {
        if (!ds || !out_json) return fail(HCOST_ERR_CONFIG, "handle and out pointer required");
        ordered_json j;
        j["scenes"] = ds->data.scenes.size();
        j["queries"] = ds->data.query_count();
        ordered_json subsets = ordered_json::object();
        std::array<std::size_t, hcost::kSubsetCount> counts{};
        for (const auto& s : ds->data.scenes)
            for (const auto& q : s.queries) ++counts[static_cast<int>(q.subset)];
        for (int i = 0; i < hcost::kSubsetCount; ++i)
            subsets[hcost::subset_name(static_cast<hcost::Subset>(i))] = counts[i];
        j["subsets"] = std::move(subsets);
        j["fingerprint"] = ds->fingerprint;
        *out_json = dup_string(j.dump(2));
        return HCOST_OK;
    });
}

hcost_status hcost_model_open(const char* checkpoint_path, hcost_model** out) {
    return guarded([&] {
        if (!checkpoint_path || !out)
            return fail(HCOST_ERR_CONFIG, "path and out handle required");
        auto handle = std::make_unique<hcost_model>();
        handle->net = hcost::load_checkpoint(checkpoint_path, &handle->meta);
        *out = handle.release();
        return HCOST_OK;
    });
}

void hcost_model_close(hcost_model* model) { delete model; }

hcost_status hcost_model_meta_json(const hcost_model* model, char** out_json) {
    return guarded([&] {
        if (!model || !out_json)
            return fail(HCOST_ERR_CONFIG, "handle and out pointer required");
        ordered_json j;
        j["mode"] = hcost::input_mode_name(model->meta.mode);
        j["epoch"] = model->meta.epoch;
        j["seed"] = model->meta.seed;
        j["dataset_fingerprint"] = model->meta.dataset_fingerprint;
        j["alpha"] = model->meta.loss.alpha;
        j["beta"] = model->meta.loss.beta;
        j["margin"] = model->meta.loss.margin;
        j["deltas"] = model->meta.loss.deltas;
        j["predict_threshold"] = model->meta.loss.predict_threshold;
        *out_json = dup_string(j.dump(2));
        return HCOST_OK;
    });
}

hcost_status hcost_train(const hcost_dataset* ds, const char* config_json,
                         const hcost_model* aux_model, const char* out_checkpoint,
                         const char* log_path) {
    return guarded([&] {
        if (!ds || !config_json || !out_checkpoint)
            return fail(HCOST_ERR_CONFIG, "dataset, config, and output path required");
        ordered_json j;
        try {
            j = ordered_json::parse(config_json);
        } catch (const nlohmann::json::exception& e) {
            return fail(HCOST_ERR_CONFIG, std::string("bad train config: ") + e.what());
        }
        const std::string phase = j.value("phase", "aux");
        if (phase != "aux" && phase != "inf")
            return fail(HCOST_ERR_CONFIG, "phase must be \"aux\" or \"inf\"");
        if (phase == "inf" && !aux_model)
            return fail(HCOST_ERR_CONFIG, "phase \"inf\" requires an auxiliary checkpoint");

        hcost::TrainConfig cfg;
        cfg.epochs = j.value("epochs", cfg.epochs);
        cfg.batch_size = j.value("batch_size", cfg.batch_size);
        cfg.lr = j.value("lr", cfg.lr);
        cfg.seed = j.value("seed", std::uint64_t{0});
        cfg.loss.alpha = j.value("alpha", cfg.loss.alpha);
        cfg.loss.beta = j.value("beta", cfg.loss.beta);
        cfg.loss.margin = j.value("margin", cfg.loss.margin);
        if (j.contains("deltas")) cfg.loss.deltas = j.at("deltas").get<std::vector<double>>();
        cfg.loss.predict_threshold = j.value("threshold", cfg.loss.predict_threshold);
        cfg.loss.validate();
        cfg.model.blocks = cfg.loss.deltas.size();

        std::ofstream log;
        if (log_path) {
            log.open(log_path, std::ios::binary);
            if (!log) return fail(HCOST_ERR_DATA, std::string("cannot open log: ") + log_path);
        }
        auto on_epoch = [&](const hcost::EpochRecord& r) {
            if (log.is_open()) log << hcost::epoch_record_to_json(r) << "\n";
        };

        hcost::GroundingNetwork net =
            phase == "aux"
                ? hcost::train_auxiliary(ds->data, cfg, on_epoch)
                : hcost::train_inference(ds->data, aux_model->net, cfg, on_epoch);

        hcost::CheckpointMeta meta;
        meta.model = cfg.model;
        meta.mode = net.mode();
        meta.loss = cfg.loss;
        meta.epoch = cfg.epochs;
        meta.seed = cfg.seed;
        meta.dataset_fingerprint = ds->fingerprint;
        hcost::save_checkpoint(out_checkpoint, net, meta);
        return HCOST_OK;
    });
}

hcost_status hcost_evaluate(const hcost_dataset* ds, const hcost_model* model,
                            double threshold, int oracle_gt, const char* csv_out,
                            double* all_f1_out) {
    return guarded([&] {
        if (!ds) return fail(HCOST_ERR_CONFIG, "dataset handle required");
        if (!model && !oracle_gt)
            return fail(HCOST_ERR_CONFIG, "a model is required unless oracle_gt is set");
        hcost::MetricsTable table;
        if (oracle_gt) {
            // Oracle path needs no network; reuse evaluate with a throwaway net.
            static const hcost::GroundingNetwork dummy(hcost::ModelConfig{}, hcost::InputMode::Semantic, 0);
            table = hcost::evaluate(ds->data, model ? model->net : dummy, threshold, true);
        } else {
            table = hcost::evaluate(ds->data, model->net, threshold, false);
        }
        if (csv_out) {
            std::ofstream out(csv_out, std::ios::binary);
            if (!out) return fail(HCOST_ERR_DATA, std::string("cannot open csv: ") + csv_out);
            out << hcost::metrics_to_csv(table);
        }
        if (all_f1_out) *all_f1_out = table.all.f1;
        return HCOST_OK;
    });
}

hcost_status hcost_gradcheck(unsigned long long seed, int points_per_op,
                             const char* report_path, int* all_passed) {
    return guarded([&] {
        const auto entries =
            hcost::run_gradcheck_suite(seed, points_per_op > 0 ? points_per_op : 100);
        const bool ok = hcost::gradcheck_all_passed(entries);
        const std::string report = hcost::gradcheck_report(entries);
        if (report_path) {
            std::ofstream out(report_path, std::ios::binary);
            if (!out)
                return fail(HCOST_ERR_DATA, std::string("cannot open report: ") + report_path);
            out << report;
        }
        if (all_passed) *all_passed = ok ? 1 : 0;
        if (!ok) return fail(HCOST_ERR_NUMERIC, "gradient checks failed:\n" + report);
        return HCOST_OK;
    });
}

}  // extern "C"
