#include "skinbias/harness.hpp"

#include "skinbias/csv.hpp"

#include "cohort.hpp"
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <set>

using namespace skinbias;
using namespace skinbias::harness;
namespace fs = std::filesystem;

namespace {

struct SharedCohort {
    testing::TempDir dir{"harness"};
    testing::Cohort cohort;
    SharedCohort() {
        testing::CohortOptions o;
        o.image_size = 24;
        cohort = testing::write_cohort(dir.path() / "data", o);
    }
};

const SharedCohort& shared() {
    static SharedCohort c;
    return c;
}

RunConfig small_config(const fs::path& out) {
    RunConfig c;
    c.metadata = shared().cohort.metadata;
    c.images = shared().cohort.images;
    c.masks = shared().cohort.masks;
    c.output = out;
    c.testsets = 1;
    c.ratios = {0.0, 1.0};
    c.reps = 1;
    c.C_grid = {0.1, 1.0};
    c.folds = 3;
    c.workers = 2;
    return c;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SKINBIAS_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::size_t count(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
    return n;
}

metrics::MetricResult mr(const std::string& model, double ratio, int rep, Sex sex, std::optional<double> auc) {
    return {{model, 1, ratio, rep}, sex, 0.7, auc, 10};
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config parsing") {
    const auto c = parse_config(R"(
# comment
[paths]
metadata = meta/metadata.csv
images = /abs/images
[experiment]
master_seed = 42
ratios = 0, 0.5, 1
reps = 3
sample_size = 200
balance_classes = false
[lr]
C_grid = 0.1, 1
folds = 4
[features]
asymmetry_axis = both
kmeans_k = 3
[selection]
freeze_paper_features = yes
[stats]
pooled_slope_test = false
[dataset]
missing_sex = lesion
mask_patterns = {stem}_seg.png; {img_id}
)",
                                "/base");
    CHECK(c.metadata == fs::path("/base/meta/metadata.csv"));
    CHECK(c.images == fs::path("/abs/images"));
    CHECK(c.master_seed == 42);
    CHECK(c.ratios == std::vector<double>{0, 0.5, 1});
    CHECK(c.reps == 3);
    CHECK(c.sample_size == 200);
    CHECK_FALSE(c.balance_classes);
    CHECK(c.C_grid == std::vector<double>{0.1, 1});
    CHECK(c.folds == 4);
    CHECK(c.features.asymmetry_axis == features::FoldAxis::both);
    CHECK(c.features.kmeans.k == 3);
    CHECK(c.freeze_paper_features);
    CHECK_FALSE(c.pooled_slope_test);
    CHECK(c.missing_sex == dataset::MissingSexPolicy::drop_lesion);
    CHECK(c.mask_patterns == std::vector<std::string>{"{stem}_seg.png", "{img_id}"});
    CHECK(c.output == RunConfig{}.output);
}

TEST_CASE("config errors") {
    CHECK_THROWS_AS(parse_config("[lr]\nbogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("reps = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nreps = zero\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nreps = 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[experiment]\nratios = 0, 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("[features]\nasymmetry_axis = diagonal\n"), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/skinbias.ini"), ConfigError);
    const auto help = config_help();
    CHECK(help.find("[experiment]") != std::string::npos);
    CHECK(help.find("master_seed") != std::string::npos);
}

TEST_CASE("environment overrides") {
    RunConfig c;
    ::setenv("SKINBIAS_METADATA", "/env/meta.csv", 1);
    ::setenv("SKINBIAS_OUT", "/env/out", 1);
    apply_env_overrides(c);
    ::unsetenv("SKINBIAS_METADATA");
    ::unsetenv("SKINBIAS_OUT");
    CHECK(c.metadata == fs::path("/env/meta.csv"));
    CHECK(c.output == fs::path("/env/out"));
    CHECK(c.images.empty());
}

TEST_CASE("feature table round trip") {
    FeatureRow a;
    a.record.image_id = "x.png";
    a.record.lesion_id = "1";
    a.record.patient_id = "P";
    a.record.label = Label::cancer;
    for (const auto& n : features::canonical_names()) a.values.set(n, 0.1 * static_cast<double>(n.size()) / 3.0);
    FeatureRow b = a;
    b.record.image_id = "x.png#aug2";
    b.record.is_augmented = true;
    b.record.augment_parent = "x.png";
    b.copy = splits::AugmentedCopy{"x.png#aug2", "x.png", imaging::Transform::gaussian_blur, 9, 1.2345678901234567};
    const auto text = write_feature_table({a, b});
    const auto table = csv::parse(text);
    for (const char* col : {"image_id", "lesion_id", "patient_id", "sex", "label", "is_augmented"}) {
        CHECK(table.column(col).has_value());
    }
    const auto back = parse_feature_table(text);
    REQUIRE(back.size() == 2);
    CHECK(back[0].record == a.record);
    CHECK(back[0].values == a.values);
    CHECK(back[1].record == b.record);
    REQUIRE(back[1].copy);
    CHECK(back[1].copy->parameter == b.copy->parameter);
    CHECK_THROWS_AS(parse_feature_table("image_id\nx\n"), Error);
}

TEST_CASE("ledger") {
    RunLedger ledger;
    ledger.add({"train-lr", "1_0.00_1", "ok", 5, 0.1, {"predictions/LR/1_0.00_1.csv"}, ""});
    ledger.add({"extract", "a.png", "dropped", 0, 0.0, {}, "empty mask"});
    CHECK_FALSE(ledger.failed());
    ledger.add({"train-lr", "1_1.00_1", "failed", 6, 0.2, {}, "boom"});
    CHECK(ledger.failed());
    const auto jobs = ledger.jobs();
    CHECK(jobs.front().stage == "extract");
    const auto json = ledger.to_json(RunConfig{});
    CHECK(json.find("\"failed_jobs\"") != std::string::npos);
    CHECK(json.find("boom") != std::string::npos);
    CHECK(json.find("20250101") != std::string::npos);
}

TEST_CASE("plots and coverage") {
    std::vector<metrics::MetricResult> rs;
    for (double ratio : {0.0, 0.5, 1.0})
        for (int rep = 1; rep <= 2; ++rep) {
            rs.push_back(mr("LR", ratio, rep, Sex::female, 0.7 + 0.05 * ratio));
            rs.push_back(mr("LR", ratio, rep, Sex::male, std::nullopt));
        }
    const auto svg = render_panel(rs, "LR", Sex::female);
    CHECK(count(svg, "<circle") == 6);
    CHECK(svg.find("slope") != std::string::npos);
    CHECK(render_panel(rs, "LR", Sex::male).empty());
    CHECK(render_panel(rs, "CNN", Sex::female).empty());

    testing::TempDir dir("plots");
    const auto files = emit_plots(rs, dir.path());
    REQUIRE(files.size() == 1);
    CHECK(files[0].filename() == "auroc_LR_female.svg");
    CHECK(read_file(files[0]) == svg);

    const auto cov = coverage_summary(rs);
    CHECK(cov.find("LR") != std::string::npos);
}

TEST_CASE("pipeline on the synthetic cohort") {
    testing::TempDir dir("pipeline");
    const auto out = dir.path() / "out";
    Pipeline p(small_config(out));
    p.run_all();
    p.write_ledger();
    CHECK_FALSE(p.ledger().failed());

    const Paths paths{out};
    for (const auto& f : {paths.features(), paths.augmented_features(), paths.manifest(), paths.metrics(),
                          paths.summary(), paths.stats_text(), paths.stats_json(), paths.ledger(), paths.audit(),
                          paths.dataset_summary(), paths.cleaned_metadata()}) {
        CHECK_MESSAGE(fs::exists(f), f.string());
    }
    const auto plan = splits::from_json(read_file(paths.manifest()));
    CHECK(plan.samples.size() == 2);
    CHECK(plan.test_sets.size() == 1);
    const auto files = prediction_files({paths.predictions()});
    REQUIRE(files.size() == 2);
    CHECK(files[0].filename() == "1_0.00_1.csv");
    CHECK(validate_predictions({paths.predictions()}, &plan).empty());
    const auto ft = parse_feature_table(read_file(paths.features()));
    CHECK(ft.size() == 1179);
    CHECK(fs::exists(paths.runs() / "LR" / "1_0.00_1" / "model.json"));
    CHECK(fs::exists(paths.runs() / "LR" / "1_0.00_1" / "selection.json"));

    SUBCASE("resume regenerates only missing predictions") {
        const auto keep = read_file(files[1]);
        const auto gone = read_file(files[0]);
        fs::remove(files[0]);
        Pipeline again(small_config(out));
        again.train_lr();
        CHECK(read_file(files[0]) == gone);
        CHECK(read_file(files[1]) == keep);
        std::map<std::string, std::string> status;
        for (const auto& j : again.ledger().jobs())
            if (j.stage == "train-lr") status[j.key] = j.status;
        CHECK(status["1_0.00_1"] == "ok");
        CHECK(status["1_1.00_1"] == "skipped");
    }

    SUBCASE("external CNN predictions are evaluated") {
        const auto cnn = dir.path() / "cnn";
        fs::create_directories(cnn / "nested");
        auto set = metrics::read_predictions(files[0]);
        set.key.model_id = "CNN";
        set.key.rep = 1;
        for (auto& r : set.rows) r.prob_cancer = 1.0 - r.prob_cancer;
        write_file_atomic(cnn / "nested" / "1_0.00_1.csv", metrics::write_predictions(set));
        CHECK(validate_predictions({cnn}, &plan).empty());

        Pipeline again(small_config(out));
        const auto results = again.evaluate({cnn});
        std::set<std::string> models;
        for (const auto& r : results) models.insert(r.key.model_id);
        CHECK(models == std::set<std::string>{"CNN", "LR"});
        again.report();
        CHECK(fs::exists(paths.plots() / "auroc_CNN_female.svg"));
        const auto report = again.stats();
        CHECK(report.slopes.size() == 8);
        CHECK(report.mann_whitney.size() == 4);

        // The same run key twice is rejected without stopping the others.
        write_file_atomic(cnn / "copy.csv", metrics::write_predictions(set));
        Pipeline third(small_config(out));
        const auto r3 = third.evaluate({cnn});
        CHECK(third.ledger().failed());
        CHECK(r3.size() == results.size());
    }

    SUBCASE("validation reports coverage and schema problems") {
        const auto bad = dir.path() / "bad";
        fs::create_directories(bad);
        auto set = metrics::read_predictions(files[0]);
        set.key.model_id = "CNN";
        const auto dropped = set.rows.back().image_id;
        set.rows.pop_back();
        set.rows[0].sex = set.rows[0].sex == Sex::female ? Sex::male : Sex::female;
        write_file_atomic(bad / "a.csv", metrics::write_predictions(set));
        write_file_atomic(bad / "b.csv", "image_id,prob\nx,0.5\n");
        const auto issues = validate_predictions({bad}, &plan);
        std::string all;
        for (const auto& i : issues) all += i.file.filename().string() + ": " + i.message + "\n";
        CHECK_MESSAGE(all.find("test lesion " + dropped + " missing") != std::string::npos, all);
        CHECK_MESSAGE(all.find("disagrees with the manifest") != std::string::npos, all);
        CHECK_MESSAGE(all.find("b.csv: ") != std::string::npos, all);
        CHECK(validate_predictions({dir.path() / "empty"}).size() == 1);
    }

    SUBCASE("cli") {
        const std::string data = " --metadata " + shared().cohort.metadata.string() + " --images " +
                                 shared().cohort.images.string();
        CHECK(run_cli("audit" + data) == 1);
        CHECK(run_cli("evaluate --validate -o " + out.string()) == 0);
        CHECK(run_cli("evaluate --validate --predictions " + (dir.path() / "none").string() + " -o " + out.string()) == 1);
        CHECK(run_cli("stats -o " + out.string()) == 0);
        CHECK(run_cli("frobnicate") == 2);
        CHECK(run_cli("all --reps 0") == 2);
        write_file_atomic(dir.path() / "bad.ini", "[lr]\nbogus = 1\n");
        CHECK(run_cli("all -c " + (dir.path() / "bad.ini").string()) == 2);
        CHECK(run_cli("extract -o " + (dir.path() / "x").string()) == 2);
        CHECK(run_cli("stats -o " + (dir.path() / "nothing").string()) == 1);
    }
}

TEST_CASE("clean cohort audits clean") {
    testing::TempDir dir("clean");
    testing::CohortOptions o;
    o.image_size = 24;
    o.inject_errors = false;
    const auto c = testing::write_cohort(dir.path(), o);
    CHECK(run_cli("audit --metadata " + c.metadata.string() + " --images " + c.images.string()) == 0);
}

}
