#include "skinbias/harness.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace fs = std::filesystem;
using namespace skinbias;

namespace {

struct Overrides {
    std::string config;
    std::string metadata, images, masks, out;
    std::optional<unsigned> workers;
    std::optional<std::uint64_t> seed;
    std::optional<int> reps, testsets;
    std::vector<double> ratios;
    bool force = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "config file")->check(CLI::ExistingFile);
    cmd->add_option("--metadata", o.metadata, "metadata CSV");
    cmd->add_option("--images", o.images, "image directory");
    cmd->add_option("--masks", o.masks, "mask directory");
    cmd->add_option("-o,--out", o.out, "output directory");
    cmd->add_option("-j,--workers", o.workers, "worker threads (0 = all cores)");
    cmd->add_option("--seed", o.seed, "master seed");
    cmd->add_option("--reps", o.reps, "repetitions per (test set, ratio)")->check(CLI::PositiveNumber);
    cmd->add_option("--testsets", o.testsets, "number of test sets")->check(CLI::PositiveNumber);
    cmd->add_option("--ratios", o.ratios, "female ratios")->delimiter(',')->check(CLI::Range(0.0, 1.0));
    cmd->add_flag("-f,--force", o.force, "recompute existing outputs");
    cmd->add_flag("-q,--quiet", o.quiet, "only print warnings and errors");
}

harness::RunConfig make_config(const Overrides& o) {
    harness::RunConfig c = o.config.empty() ? harness::RunConfig{} : harness::load_config(o.config);
    harness::apply_env_overrides(c);
    if (!o.metadata.empty()) c.metadata = o.metadata;
    if (!o.images.empty()) c.images = o.images;
    if (!o.masks.empty()) c.masks = o.masks;
    if (!o.out.empty()) c.output = o.out;
    if (o.workers) c.workers = *o.workers;
    if (o.seed) c.master_seed = *o.seed;
    if (o.reps) c.reps = *o.reps;
    if (o.testsets) c.testsets = *o.testsets;
    if (!o.ratios.empty()) c.ratios = o.ratios;
    c.force = o.force;
    set_quiet(o.quiet);
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sex-ratio robustness experiments for handcrafted-feature skin lesion classifiers"};
    app.require_subcommand(1);
    app.footer(harness::config_help());

    Overrides o;
    auto* audit = app.add_subcommand("audit", "report metadata and image inconsistencies");
    auto* extract = app.add_subcommand("extract", "ingest the dataset and compute lesion features");
    auto* split = app.add_subcommand("split", "build the test sets and trainval samples");
    auto* train = app.add_subcommand("train-lr", "train and predict every logistic-regression job");
    auto* evaluate = app.add_subcommand("evaluate", "score prediction files into metrics.csv");
    auto* stats = app.add_subcommand("stats", "slope and Mann-Whitney tests from metrics.csv");
    auto* report = app.add_subcommand("report", "summary table and plots from metrics.csv");
    auto* all = app.add_subcommand("all", "run every stage");
    for (auto* cmd : {audit, extract, split, train, evaluate, stats, report, all}) add_common(cmd, o);

    std::string audit_report, corrections_out;
    audit->add_option("--report", audit_report, "also write the findings table here");
    audit->add_option("--corrections-out", corrections_out, "write the suggested correction manifest here");

    std::vector<std::string> prediction_dirs;
    bool validate = false;
    std::string manifest;
    evaluate->add_option("--predictions", prediction_dirs, "extra prediction file or directory (repeatable)");
    evaluate->add_flag("--validate", validate, "only check the files against the format (and manifest)");
    evaluate->add_option("--manifest", manifest, "split manifest for --validate [<out>/split_manifest.json]");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        auto config = make_config(o);

        if (audit->parsed()) {
            if (config.metadata.empty() || config.images.empty()) {
                throw harness::ConfigError("audit needs --metadata and --images");
            }
            const auto result = dataset::audit(config.metadata, config.images, resolve_workers(config.workers));
            const auto table = dataset::format_findings(result.findings);
            std::cout << table;
            if (!audit_report.empty()) write_file_atomic(audit_report, table);
            if (!corrections_out.empty()) write_file_atomic(corrections_out, dataset::write_corrections(result.corrections));
            return result.findings.empty() ? 0 : 1;
        }

        if (evaluate->parsed() && validate) {
            std::vector<fs::path> dirs(prediction_dirs.begin(), prediction_dirs.end());
            if (dirs.empty()) dirs.push_back(harness::Paths{config.output}.predictions());
            std::optional<splits::SplitPlan> plan;
            const fs::path manifest_path = manifest.empty() ? harness::Paths{config.output}.manifest() : fs::path(manifest);
            if (!manifest.empty() || fs::exists(manifest_path)) plan = splits::from_json(read_file(manifest_path));
            const auto issues = harness::validate_predictions(dirs, plan ? &*plan : nullptr);
            for (const auto& i : issues) std::cout << i.file.string() << ": " << i.message << "\n";
            const auto files = harness::prediction_files(dirs).size();
            std::cout << files << " file(s), " << issues.size() << " issue(s)\n";
            return issues.empty() ? 0 : 1;
        }

        harness::Pipeline pipeline(config);
        int code = 0;
        try {
            if (extract->parsed()) {
                pipeline.extract();
                std::cout << read_file(pipeline.paths().dataset_summary());
            } else if (split->parsed()) {
                pipeline.split();
            } else if (train->parsed()) {
                pipeline.train_lr();
            } else if (evaluate->parsed()) {
                std::vector<fs::path> dirs(prediction_dirs.begin(), prediction_dirs.end());
                const auto results = pipeline.evaluate(dirs);
                std::cout << metrics::format_summary_table(metrics::aggregate(results));
            } else if (stats->parsed()) {
                std::cout << stats::format_report(pipeline.stats());
            } else if (report->parsed()) {
                pipeline.report();
                std::cout << read_file(pipeline.paths().summary());
            } else if (all->parsed()) {
                pipeline.run_all();
                std::cout << read_file(pipeline.paths().summary()) << "\n" << read_file(pipeline.paths().stats_text());
            }
        } catch (const harness::ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            code = 1;
        }
        pipeline.write_ledger();
        if (pipeline.ledger().failed()) code = 1;
        return code;
    } catch (const harness::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
