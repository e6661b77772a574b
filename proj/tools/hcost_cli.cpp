// Command-line front end. Links only against the shared C API.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "hcost/hcost.h"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

int report_failure(hcost_status status) {
    std::fprintf(stderr, "error (%s): %s\n", hcost_status_name(status), hcost_last_error());
    return static_cast<int>(status);
}

int config_failure(const std::string& msg) {
    std::fprintf(stderr, "error (config-error): %s\n", msg.c_str());
    return static_cast<int>(HCOST_ERR_CONFIG);
}

bool require_out_dir(const std::string& out, int& rc) {
    if (!fs::is_directory(out)) {
        rc = config_failure("output directory does not exist: " + out);
        return false;
    }
    return true;
}

void write_run_config(const std::string& out_dir, const ordered_json& resolved) {
    std::ofstream f(out_dir + "/run_config.json", std::ios::binary);
    f << resolved.dump(2) << "\n";
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(item);
    return parts;
}

std::optional<std::vector<double>> parse_double_list(const std::string& s) {
    std::vector<double> out;
    for (const auto& part : split(s, ',')) {
        try {
            std::size_t pos = 0;
            out.push_back(std::stod(part, &pos));
            if (pos != part.size()) return std::nullopt;
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }
    if (out.empty()) return std::nullopt;
    return out;
}

struct ManagedDataset {
    hcost_dataset* handle = nullptr;
    ~ManagedDataset() { hcost_dataset_close(handle); }
};

struct ManagedModel {
    hcost_model* handle = nullptr;
    ~ManagedModel() { hcost_model_close(handle); }
};

// ---- gen -------------------------------------------------------------------

struct GenFlags {
    std::size_t scenes = 100;
    unsigned long long seed = 0;
    std::string mix;
    std::string out;
};

int run_gen(const GenFlags& f) {
    int rc = 0;
    if (!require_out_dir(f.out, rc)) return rc;

    ordered_json cfg;
    cfg["scenes"] = f.scenes;
    if (!f.mix.empty()) {
        ordered_json mix = ordered_json::object();
        for (const auto& part : split(f.mix, ',')) {
            const auto eq = part.find('=');
            if (eq == std::string::npos)
                return config_failure("bad --mix entry (want name=weight): " + part);
            const std::string key = part.substr(0, eq);
            const auto weight = parse_double_list(part.substr(eq + 1));
            if (!weight || weight->size() != 1)
                return config_failure("bad --mix weight in: " + part);
            mix[key] = (*weight)[0];
        }
        cfg["mix"] = mix;
    }

    const std::string data_path = f.out + "/scenes.jsonl";
    hcost_status st = hcost_generate_dataset(cfg.dump().c_str(), f.seed, data_path.c_str());
    if (st != HCOST_OK) return report_failure(st);

    ManagedDataset ds;
    st = hcost_dataset_open(data_path.c_str(), &ds.handle);
    if (st != HCOST_OK) return report_failure(st);
    char* summary = nullptr;
    st = hcost_dataset_summary_json(ds.handle, &summary);
    if (st != HCOST_OK) return report_failure(st);
    std::printf("%s\n", summary);
    hcost_string_free(summary);

    ordered_json resolved;
    resolved["command"] = "gen";
    resolved["scenes"] = f.scenes;
    resolved["seed"] = f.seed;
    resolved["mix"] = f.mix;
    resolved["out"] = f.out;
    resolved["data_path"] = data_path;
    write_run_config(f.out, resolved);
    return 0;
}

// ---- train -----------------------------------------------------------------

struct TrainFlags {
    std::string data;
    std::string phase = "aux";
    std::string aux_ckpt;
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    double lr = 0.0005;
    double alpha = 0.2;
    double beta = 0.1;
    double margin = 1.0;
    std::string deltas = "1.0,0.5,0.0";
    double threshold = 0.5;
    unsigned long long seed = 0;
    std::string out;
};

ordered_json train_config_json(const TrainFlags& f, const std::vector<double>& deltas) {
    ordered_json cfg;
    cfg["phase"] = f.phase;
    cfg["epochs"] = f.epochs;
    cfg["batch_size"] = f.batch_size;
    cfg["lr"] = f.lr;
    cfg["seed"] = f.seed;
    cfg["alpha"] = f.alpha;
    cfg["beta"] = f.beta;
    cfg["margin"] = f.margin;
    cfg["deltas"] = deltas;
    cfg["threshold"] = f.threshold;
    return cfg;
}

int run_train(const TrainFlags& f) {
    int rc = 0;
    if (!require_out_dir(f.out, rc)) return rc;
    if (f.phase != "aux" && f.phase != "inf")
        return config_failure("--phase must be aux or inf, got: " + f.phase);
    if (f.phase == "inf" && f.aux_ckpt.empty())
        return config_failure("--phase inf requires --aux-ckpt");
    const auto deltas = parse_double_list(f.deltas);
    if (!deltas) return config_failure("bad --deltas list: " + f.deltas);

    ManagedDataset ds;
    hcost_status st = hcost_dataset_open(f.data.c_str(), &ds.handle);
    if (st != HCOST_OK) return report_failure(st);

    ManagedModel aux;
    if (!f.aux_ckpt.empty()) {
        st = hcost_model_open(f.aux_ckpt.c_str(), &aux.handle);
        if (st != HCOST_OK) return report_failure(st);
    }

    const ordered_json cfg = train_config_json(f, *deltas);
    const std::string ckpt_path = f.out + "/checkpoint.json";
    const std::string log_path = f.out + "/train_log.jsonl";
    st = hcost_train(ds.handle, cfg.dump().c_str(), aux.handle, ckpt_path.c_str(),
                     log_path.c_str());
    if (st != HCOST_OK) return report_failure(st);

    ordered_json resolved = cfg;
    resolved["command"] = "train";
    resolved["data"] = f.data;
    resolved["aux_ckpt"] = f.aux_ckpt;
    resolved["out"] = f.out;
    resolved["checkpoint"] = ckpt_path;
    resolved["log"] = log_path;
    write_run_config(f.out, resolved);
    std::printf("checkpoint: %s\nlog: %s\n", ckpt_path.c_str(), log_path.c_str());
    return 0;
}

// ---- eval ------------------------------------------------------------------

struct EvalFlags {
    std::string data;
    std::string ckpt;
    double threshold = 0.5;
    bool oracle_gt = false;
    std::string out;
};

int run_eval(const EvalFlags& f) {
    int rc = 0;
    if (!require_out_dir(f.out, rc)) return rc;
    if (f.ckpt.empty() && !f.oracle_gt)
        return config_failure("--ckpt is required unless --oracle-gt is set");

    ManagedDataset ds;
    hcost_status st = hcost_dataset_open(f.data.c_str(), &ds.handle);
    if (st != HCOST_OK) return report_failure(st);

    ManagedModel model;
    if (!f.ckpt.empty()) {
        st = hcost_model_open(f.ckpt.c_str(), &model.handle);
        if (st != HCOST_OK) return report_failure(st);
    }

    const std::string csv_path = f.out + "/metrics.csv";
    double all_f1 = 0.0;
    st = hcost_evaluate(ds.handle, model.handle, f.threshold, f.oracle_gt ? 1 : 0,
                        csv_path.c_str(), &all_f1);
    if (st != HCOST_OK) return report_failure(st);

    std::printf("all,f1_at_0.5,%.17g\n", all_f1);

    ordered_json resolved;
    resolved["command"] = "eval";
    resolved["data"] = f.data;
    resolved["ckpt"] = f.ckpt;
    resolved["threshold"] = f.threshold;
    resolved["oracle_gt"] = f.oracle_gt;
    resolved["out"] = f.out;
    resolved["csv"] = csv_path;
    write_run_config(f.out, resolved);
    return 0;
}

// ---- gradcheck -------------------------------------------------------------

struct GradcheckFlags {
    unsigned long long seed = 0;
    int points_per_op = 100;
    std::string out;
};

int run_gradcheck(const GradcheckFlags& f) {
    int rc = 0;
    if (!require_out_dir(f.out, rc)) return rc;
    const std::string report_path = f.out + "/gradcheck_report.txt";
    int all_passed = 0;
    const hcost_status st =
        hcost_gradcheck(f.seed, f.points_per_op, report_path.c_str(), &all_passed);

    std::ifstream report(report_path, std::ios::binary);
    std::stringstream buf;
    buf << report.rdbuf();
    std::printf("%s", buf.str().c_str());

    ordered_json resolved;
    resolved["command"] = "gradcheck";
    resolved["seed"] = f.seed;
    resolved["points_per_op"] = f.points_per_op;
    resolved["out"] = f.out;
    resolved["report"] = report_path;
    resolved["all_passed"] = all_passed != 0;
    write_run_config(f.out, resolved);

    if (st != HCOST_OK) return report_failure(st);
    return 0;
}

// ---- ablate ----------------------------------------------------------------

struct AblateFlags {
    std::string data;
    std::string aux_ckpt;
    std::string alphas = "0,0.2";
    std::string betas = "0";
    std::size_t epochs = 50;
    std::size_t batch_size = 16;
    double lr = 0.0005;
    double margin = 1.0;
    std::string deltas = "1.0,0.5,0.0";
    double threshold = 0.5;
    unsigned long long seed = 0;
    std::string out;
};

// Tag for file names: drop the decimal point so values stay shell-friendly.
std::string value_tag(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    std::string s(buf);
    for (auto& c : s)
        if (c == '.') c = 'p';
    return s;
}

int run_ablate(const AblateFlags& f) {
    int rc = 0;
    if (!require_out_dir(f.out, rc)) return rc;
    if (f.aux_ckpt.empty()) return config_failure("--aux-ckpt is required for ablate");
    const auto alphas = parse_double_list(f.alphas);
    const auto betas = parse_double_list(f.betas);
    if (!alphas) return config_failure("bad --alphas list: " + f.alphas);
    if (!betas) return config_failure("bad --betas list: " + f.betas);
    const auto deltas = parse_double_list(f.deltas);
    if (!deltas) return config_failure("bad --deltas list: " + f.deltas);

    ManagedDataset ds;
    hcost_status st = hcost_dataset_open(f.data.c_str(), &ds.handle);
    if (st != HCOST_OK) return report_failure(st);
    ManagedModel aux;
    st = hcost_model_open(f.aux_ckpt.c_str(), &aux.handle);
    if (st != HCOST_OK) return report_failure(st);

    std::string grid = "alpha,beta,zt_wo_d,zt_w_d,st_wo_d,st_w_d,mt,all\n";

    for (double alpha : *alphas) {
        for (double beta : *betas) {
            const std::string tag = "a" + value_tag(alpha) + "_b" + value_tag(beta);
            TrainFlags tf;
            tf.phase = "inf";
            tf.epochs = f.epochs;
            tf.batch_size = f.batch_size;
            tf.lr = f.lr;
            tf.alpha = alpha;
            tf.beta = beta;
            tf.margin = f.margin;
            tf.threshold = f.threshold;
            tf.seed = f.seed;
            const ordered_json cfg = train_config_json(tf, *deltas);
            const std::string ckpt_path = f.out + "/checkpoint_" + tag + ".json";
            const std::string log_path = f.out + "/train_log_" + tag + ".jsonl";
            st = hcost_train(ds.handle, cfg.dump().c_str(), aux.handle, ckpt_path.c_str(),
                             log_path.c_str());
            if (st != HCOST_OK) return report_failure(st);

            ManagedModel model;
            st = hcost_model_open(ckpt_path.c_str(), &model.handle);
            if (st != HCOST_OK) return report_failure(st);
            const std::string csv_path = f.out + "/metrics_" + tag + ".csv";
            st = hcost_evaluate(ds.handle, model.handle, f.threshold, 0, csv_path.c_str(),
                                nullptr);
            if (st != HCOST_OK) return report_failure(st);

            // Pull the F1 column (subset rows in declaration order, then "all")
            // verbatim so the grid file matches the per-point files byte for byte.
            std::ifstream csv(csv_path, std::ios::binary);
            std::string line;
            std::getline(csv, line);  // header
            std::vector<std::string> f1s;
            while (std::getline(csv, line)) {
                const auto cols = split(line, ',');
                if (cols.size() == 3) f1s.push_back(cols[2]);
            }
            if (f1s.size() != 6)
                return config_failure("unexpected metrics layout in " + csv_path);
            char a[32], b[32];
            std::snprintf(a, sizeof(a), "%g", alpha);
            std::snprintf(b, sizeof(b), "%g", beta);
            std::string row = std::string(a) + "," + b;
            for (const auto& v : f1s) row += "," + v;
            grid += row + "\n";
        }
    }

    const std::string grid_path = f.out + "/ablation.csv";
    {
        std::ofstream gf(grid_path, std::ios::binary);
        if (!gf) return config_failure("cannot write " + grid_path);
        gf << grid;
    }
    std::printf("%s", grid.c_str());

    ordered_json resolved;
    resolved["command"] = "ablate";
    resolved["data"] = f.data;
    resolved["aux_ckpt"] = f.aux_ckpt;
    resolved["alphas"] = f.alphas;
    resolved["betas"] = f.betas;
    resolved["epochs"] = f.epochs;
    resolved["batch_size"] = f.batch_size;
    resolved["lr"] = f.lr;
    resolved["margin"] = f.margin;
    resolved["deltas"] = f.deltas;
    resolved["threshold"] = f.threshold;
    resolved["seed"] = f.seed;
    resolved["out"] = f.out;
    resolved["grid_csv"] = grid_path;
    write_run_config(f.out, resolved);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical multi-object 3D grounding toolkit"};
    app.require_subcommand(1);

    GenFlags gen;
    auto* cmd_gen = app.add_subcommand("gen", "generate a benchmark dataset");
    cmd_gen->add_option("--scenes", gen.scenes, "number of scenes");
    cmd_gen->add_option("--seed", gen.seed, "generator seed");
    cmd_gen->add_option("--mix", gen.mix, "subset mix, e.g. mt=0.5,st_w_d=0.5");
    cmd_gen->add_option("--out", gen.out, "output directory")->required();

    TrainFlags train;
    auto* cmd_train = app.add_subcommand("train", "train a network");
    cmd_train->add_option("--data", train.data, "dataset file")->required();
    cmd_train->add_option("--phase", train.phase, "aux or inf");
    cmd_train->add_option("--aux-ckpt", train.aux_ckpt, "teacher checkpoint (phase inf)");
    cmd_train->add_option("--epochs", train.epochs, "training epochs");
    cmd_train->add_option("--batch-size", train.batch_size, "minibatch size");
    cmd_train->add_option("--lr", train.lr, "learning rate");
    cmd_train->add_option("--alpha", train.alpha, "distinctiveness weight");
    cmd_train->add_option("--beta", train.beta, "hierarchical loss weight");
    cmd_train->add_option("--margin", train.margin, "contrastive margin");
    cmd_train->add_option("--deltas", train.deltas, "stage distance thresholds");
    cmd_train->add_option("--threshold", train.threshold, "prediction threshold");
    cmd_train->add_option("--seed", train.seed, "training seed");
    cmd_train->add_option("--out", train.out, "output directory")->required();

    EvalFlags eval;
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a checkpoint");
    cmd_eval->add_option("--data", eval.data, "dataset file")->required();
    cmd_eval->add_option("--ckpt", eval.ckpt, "checkpoint file");
    cmd_eval->add_option("--threshold", eval.threshold, "prediction threshold");
    cmd_eval->add_flag("--oracle-gt", eval.oracle_gt, "score exact targets, unjittered boxes");
    cmd_eval->add_option("--out", eval.out, "output directory")->required();

    GradcheckFlags gradcheck;
    auto* cmd_gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    cmd_gc->add_option("--seed", gradcheck.seed, "suite seed");
    cmd_gc->add_option("--points-per-op", gradcheck.points_per_op, "samples per op");
    cmd_gc->add_option("--out", gradcheck.out, "output directory")->required();

    AblateFlags ablate;
    auto* cmd_ablate = app.add_subcommand("ablate", "alpha/beta ablation grid");
    cmd_ablate->add_option("--data", ablate.data, "dataset file")->required();
    cmd_ablate->add_option("--aux-ckpt", ablate.aux_ckpt, "teacher checkpoint")->required();
    cmd_ablate->add_option("--alphas", ablate.alphas, "alpha values, comma separated");
    cmd_ablate->add_option("--betas", ablate.betas, "beta values, comma separated");
    cmd_ablate->add_option("--epochs", ablate.epochs, "epochs per grid point");
    cmd_ablate->add_option("--batch-size", ablate.batch_size, "minibatch size");
    cmd_ablate->add_option("--lr", ablate.lr, "learning rate");
    cmd_ablate->add_option("--margin", ablate.margin, "contrastive margin");
    cmd_ablate->add_option("--deltas", ablate.deltas, "stage distance thresholds");
    cmd_ablate->add_option("--threshold", ablate.threshold, "prediction threshold");
    cmd_ablate->add_option("--seed", ablate.seed, "training seed");
    cmd_ablate->add_option("--out", ablate.out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(HCOST_ERR_CONFIG);
    }

    if (cmd_gen->parsed()) return run_gen(gen);
    if (cmd_train->parsed()) return run_train(train);
    if (cmd_eval->parsed()) return run_eval(eval);
    if (cmd_gc->parsed()) return run_gradcheck(gradcheck);
    if (cmd_ablate->parsed()) return run_ablate(ablate);
    return static_cast<int>(HCOST_ERR_CONFIG);
}
