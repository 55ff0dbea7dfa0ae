#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include "idccp/checkpoint.hpp"
#include "idccp/config.hpp"
#include "idccp/dataset.hpp"
#include "idccp/selftest.hpp"
#include "idccp/trainer.hpp"

namespace fs = std::filesystem;
using namespace idccp;

namespace {

enum Exit { ok = 0, usage = 1, data = 2, divergence = 3 };

int run_train(const std::string& config_path, const std::string& resume, const std::string& out_dir) {
    const TrainConfig config = load_config(config_path);
    const Dataset ds = load_dataset(config);
    if (ds.skipped_files > 0) std::cerr << "warning: skipped " << ds.skipped_files << " unreadable file(s)\n";

    std::optional<Checkpoint> start;
    if (!resume.empty()) start = load_checkpoint(resume);

    fs::create_directories(out_dir);
    const auto csv_path = fs::path(out_dir) / "metrics.csv";
    std::ofstream csv(csv_path, start ? std::ios::app : std::ios::trunc);
    if (!csv) throw DataError("cannot write " + csv_path.string());
    if (!start) csv << metrics_csv_header();

    std::cout << std::left << std::setw(7) << "epoch" << std::setw(12) << "lr" << std::setw(14) << "loss"
              << std::setw(11) << "accuracy" << std::setw(14) << "invariance" << "seconds\n";
    auto on_epoch = [&](const Checkpoint& ck, const EpochMetrics& m) {
        std::cout << std::left << std::setw(7) << m.epoch << std::setw(12) << m.learning_rate << std::setw(14)
                  << m.loss << std::setw(11) << m.accuracy << std::setw(14) << m.invariance_error
                  << std::fixed << std::setprecision(2) << m.seconds << std::defaultfloat
                  << std::setprecision(6) << "\n";
        csv << metrics_csv_row(m) << std::flush;
        save_checkpoint((fs::path(out_dir) / "last.ckpt").string(), ck);
    };
    const auto result = train(config, ds, std::move(start), on_epoch);
    save_checkpoint((fs::path(out_dir) / "final.ckpt").string(), result.checkpoint);
    std::cout << "\nheld-out evaluation\n";
    print_eval(std::cout, result.final_metrics, ds.class_names);
    std::cout << "checkpoint: " << (fs::path(out_dir) / "final.ckpt").string() << "\n";
    return Exit::ok;
}

int run_eval(const std::string& ckpt_path, const std::string& data_source) {
    const Checkpoint ck = load_checkpoint(ckpt_path);
    const auto opts = pipeline_options(ck.config);
    Dataset ds;
    std::vector<std::size_t> indices;
    if (data_source == "synthetic") {
        ds = generate_synthetic_dataset(ck.config, ck.config.n_per_class);
        indices = stratified_split(ds, ck.config.train_ratio, ck.config.seed).test;
        std::cout << "synthetic held-out split of the checkpoint's config\n";
    } else {
        ds = load_image_folder(data_source, ck.config.image_size, ck.config.channels);
        if (ds.skipped_files > 0) std::cerr << "warning: skipped " << ds.skipped_files << " unreadable file(s)\n";
        indices.resize(ds.size());
        for (std::size_t i = 0; i < ds.size(); ++i) indices[i] = i;
    }
    const auto m = evaluate(ck.state.model, opts, ds, indices, indices.size());
    print_eval(std::cout, m, ds.class_names);
    return Exit::ok;
}

int run_report(const std::string& config_path) {
    print_report(std::cout, model_report(load_config(config_path)));
    return Exit::ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Invariant deep compressible covariance pooling"};
    app.require_subcommand(1);

    std::string config_path, resume, out_dir = "run";
    auto* train_cmd = app.add_subcommand("train", "Train a model from a config file");
    train_cmd->add_option("--config", config_path, "Config file")->required();
    train_cmd->add_option("--resume", resume, "Checkpoint to resume from");
    train_cmd->add_option("--out", out_dir, "Output directory for checkpoints and metrics.csv");

    std::string ckpt_path, data_source;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_cmd->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
    eval_cmd->add_option("--data", data_source, "Image folder or 'synthetic'")->required();

    std::string report_config;
    auto* report_cmd = app.add_subcommand("report", "Print parameter and complexity accounting");
    report_cmd->add_option("--config", report_config, "Config file")->required();

    auto* selftest_cmd = app.add_subcommand("selftest", "Run the invariant checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? Exit::ok : Exit::usage;
    }

    try {
        if (*train_cmd) return run_train(config_path, resume, out_dir);
        if (*eval_cmd) return run_eval(ckpt_path, data_source);
        if (*report_cmd) return run_report(report_config);
        if (*selftest_cmd) return run_selftest(std::cout) ? Exit::ok : Exit::divergence;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return Exit::usage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return Exit::data;
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << "\n";
        return Exit::divergence;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::divergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return Exit::data;
    }
    return Exit::usage;
}
