#include "skinbias/splits.hpp"

#include "skinbias/common.hpp"

#include "doctest.h"

#include <algorithm>
#include <climits>
#include <cmath>
#include <set>

using namespace skinbias;
using namespace skinbias::splits;
using dataset::Diagnosis;

namespace {

// Patients per (label, sex) with 1-3 lesions each, plus a few female patients
// carrying one lesion of each label.
std::vector<LesionRecord> make_records(int nc_f = 160, int nc_m = 140, int c_f = 250, int c_m = 270, int mixed = 4) {
    std::vector<LesionRecord> out;
    Rng rng(17);
    int pid = 0, img = 0;
    auto add = [&](Sex sex, Label label, int lesions) {
        const std::string patient = "PAT_" + std::to_string(pid++);
        for (int k = 0; k < lesions; ++k) {
            LesionRecord r;
            r.image_id = "IMG_" + std::to_string(img++) + ".png";
            r.lesion_id = std::to_string(img);
            r.patient_id = patient;
            r.sex = sex;
            r.label = label;
            r.diagnosis = label == Label::cancer ? Diagnosis::BCC : Diagnosis::NEV;
            out.push_back(r);
        }
    };
    for (int i = 0; i < nc_f; ++i) add(Sex::female, Label::non_cancer, 1 + static_cast<int>(rng.below(2)));
    for (int i = 0; i < nc_m; ++i) add(Sex::male, Label::non_cancer, 1 + static_cast<int>(rng.below(2)));
    for (int i = 0; i < c_f; ++i) add(Sex::female, Label::cancer, 1 + static_cast<int>(rng.below(3)));
    for (int i = 0; i < c_m; ++i) add(Sex::male, Label::cancer, 1 + static_cast<int>(rng.below(3)));
    for (int i = 0; i < mixed; ++i) {
        add(Sex::female, Label::cancer, 1);
        --pid;
        add(Sex::female, Label::non_cancer, 1);
    }
    Rng shuffle(5);
    shuffle.shuffle(out);
    return out;
}

const std::vector<LesionRecord>& records() {
    static const auto r = make_records();
    return r;
}

std::map<std::string, const LesionRecord*> by_image(const std::vector<LesionRecord>& rs) {
    std::map<std::string, const LesionRecord*> m;
    for (const auto& r : rs) m[r.image_id] = &r;
    return m;
}

struct PatientFacts {
    Sex sex;
    bool cancer = false;
};

std::map<std::string, PatientFacts> patient_facts(const std::vector<LesionRecord>& rs) {
    std::map<std::string, PatientFacts> m;
    for (const auto& r : rs) {
        auto [it, fresh] = m.try_emplace(r.patient_id, PatientFacts{r.sex});
        it->second.cancer |= r.label == Label::cancer;
    }
    return m;
}

SplitParams small_params() {
    SplitParams p;
    p.master_seed = 99;
    return p;
}

}  // namespace

TEST_SUITE("splits") {

TEST_CASE("patient categories: cancer wins") {
    const auto ps = index_patients(records());
    const auto facts = patient_facts(records());
    CHECK(ps.size() == facts.size());
    int mixed = 0;
    for (const auto& p : ps) {
        CHECK(p.has_cancer == facts.at(p.patient_id).cancer);
        std::set<Label> labels;
        for (const auto& r : records())
            if (r.patient_id == p.patient_id) labels.insert(r.label);
        if (labels.size() == 2) {
            ++mixed;
            CHECK(p.category() == Category::cancer_female);
        }
    }
    CHECK(mixed == 4);
}

TEST_CASE("test sets: disjoint, 26 per category, deterministic") {
    const auto sets = build_test_sets(records(), 1234);
    REQUIRE(sets.size() == 5);
    const auto facts = patient_facts(records());
    std::set<std::string> seen;
    for (int i = 0; i < 5; ++i) {
        const auto& ts = sets[i];
        CHECK(ts.id == i + 1);
        CHECK(ts.patients.size() == 104);
        std::map<std::pair<bool, Sex>, int> cells;
        for (const auto& p : ts.patients) {
            CHECK(seen.insert(p).second);
            ++cells[{facts.at(p).cancer, facts.at(p).sex}];
        }
        CHECK(cells.size() == 4);
        for (const auto& [k, n] : cells) CHECK(n == 26);
        // Every lesion of every test patient is in the set.
        std::set<std::string> members(ts.patients.begin(), ts.patients.end());
        std::size_t expected = 0;
        for (const auto& r : records()) expected += members.contains(r.patient_id);
        CHECK(ts.lesions.size() == expected);
    }
    CHECK(build_test_sets(records(), 1234) == sets);
    CHECK(build_test_sets(records(), 1235) != sets);
}

TEST_CASE("test sets: too few patients is an error with counts") {
    const auto few = make_records(160, 100, 250, 270, 0);
    try {
        build_test_sets(few, 1);
        FAIL("expected an error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK_MESSAGE(msg.find("non_cancer_male") != std::string::npos, msg);
        CHECK_MESSAGE(msg.find("100") != std::string::npos, msg);
    }
}

TEST_CASE("feasible sample size") {
    const auto sets = build_test_sets(records(), 1);
    const auto facts = patient_facts(records());
    std::size_t oracle = SIZE_MAX;
    for (const auto& ts : sets) {
        std::set<std::string> out(ts.patients.begin(), ts.patients.end());
        std::size_t f = 0, m = 0;
        for (const auto& [p, fact] : facts) {
            if (out.contains(p)) continue;
            (fact.sex == Sex::female ? f : m) += 1;
        }
        oracle = std::min({oracle, f, m});
    }
    CHECK(feasible_sample_size(records(), sets) == oracle);
    // Males outside a test set: 140 + 270 - 2 * 26.
    CHECK(oracle == 358);
}

TEST_CASE("trainval composition") {
    const auto params = small_params();
    const auto sets = build_test_sets(records(), params.master_seed);
    const std::size_t size = feasible_sample_size(records(), sets);
    const auto facts = patient_facts(records());
    const auto img = by_image(records());
    for (double ratio : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const auto s = build_trainval(records(), sets[1], ratio, 3, size, params);
        CHECK(s.patients.size() == size);
        const auto females = static_cast<std::size_t>(std::count_if(
            s.patients.begin(), s.patients.end(), [&](const auto& p) { return facts.at(p).sex == Sex::female; }));
        CHECK(females == static_cast<std::size_t>(std::lround(ratio * static_cast<double>(size))));
        CHECK(s.n_female_patients == females);
        CHECK(s.n_male_patients == size - females);
        if (ratio == 0.0) CHECK(females == 0);
        if (ratio == 1.0) CHECK(females == size);

        const std::set<std::string> test(sets[1].patients.begin(), sets[1].patients.end());
        for (const auto& p : s.patients) CHECK_FALSE(test.contains(p));

        // Cancer share per sex follows the pool outside the test set.
        for (Sex sex : {Sex::female, Sex::male}) {
            std::size_t pool = 0, pool_cancer = 0, chosen = 0, chosen_cancer = 0;
            for (const auto& [p, f] : facts) {
                if (f.sex != sex || test.contains(p)) continue;
                ++pool, pool_cancer += f.cancer;
            }
            for (const auto& p : s.patients) {
                if (facts.at(p).sex != sex) continue;
                ++chosen, chosen_cancer += facts.at(p).cancer;
            }
            if (chosen == 0) continue;
            const double want = static_cast<double>(chosen) * pool_cancer / pool;
            CHECK(std::fabs(static_cast<double>(chosen_cancer) - want) <= 0.5 + 1e-9);
        }

        // All lesions of chosen patients, then balance by augmentation.
        const std::set<std::string> chosen(s.patients.begin(), s.patients.end());
        std::size_t cancer = 0, benign = 0, expected = 0;
        for (const auto& r : records()) expected += chosen.contains(r.patient_id);
        CHECK(s.lesions.size() == expected);
        for (const auto& l : s.lesions) (img.at(l)->label == Label::cancer ? cancer : benign) += 1;
        CHECK(benign + s.augmented.size() == std::max(cancer, benign));
        const std::set<std::string> lesions(s.lesions.begin(), s.lesions.end());
        std::map<std::string, int> copies;
        for (const auto& a : s.augmented) {
            CHECK(lesions.contains(a.parent));
            CHECK(img.at(a.parent)->label == Label::non_cancer);
            ++copies[a.parent];
        }
        // Round robin: copy counts differ by at most one.
        if (!copies.empty() && s.augmented.size() >= benign) {
            int lo = INT_MAX, hi = 0;
            for (const auto& l : s.lesions) {
                if (img.at(l)->label != Label::non_cancer) continue;
                lo = std::min(lo, copies[l]), hi = std::max(hi, copies[l]);
            }
            CHECK(hi - lo <= 1);
        }
    }
}

TEST_CASE("trainval is a pure function of its key") {
    const auto params = small_params();
    const auto sets = build_test_sets(records(), params.master_seed);
    const auto a = build_trainval(records(), sets[0], 0.25, 2, 200, params);
    const auto b = build_trainval(records(), sets[0], 0.25, 2, 200, params);
    CHECK(a == b);
    CHECK(a.seed == sample_seed(params.master_seed, 1, 0.25, 2));
    CHECK(build_trainval(records(), sets[0], 0.25, 3, 200, params).patients != a.patients);
    CHECK(sample_seed(1, 1, 0.5, 1) != sample_seed(1, 1, 0.5, 2));
    CHECK(sample_seed(1, 1, 0.5, 1) != sample_seed(1, 2, 0.5, 1));
    CHECK(sample_seed(1, 1, 0.5, 1) != sample_seed(2, 1, 0.5, 1));

    SplitParams unbalanced = params;
    unbalanced.balance_classes = false;
    CHECK(build_trainval(records(), sets[0], 0.25, 2, 200, unbalanced).augmented.empty());
    CHECK_THROWS_AS(build_trainval(records(), sets[0], 1.0, 1, 10000, params), Error);
}

TEST_CASE("augmented copies are keyed by parent and index") {
    const auto a = augmented_copy("IMG_1.png", 0, 7);
    CHECK(augmented_copy("IMG_1.png", 0, 7) == a);
    CHECK(a.parent == "IMG_1.png");
    CHECK(a.image_id == "IMG_1.png#aug0");
    CHECK(augmented_copy("IMG_1.png", 1, 7).image_id == "IMG_1.png#aug1");
    CHECK(augmented_copy("IMG_1.png", 1, 7).seed != a.seed);
    CHECK(augmented_copy("IMG_1.png", 0, 8).seed != a.seed);
    std::set<imaging::Transform> seen;
    for (int k = 0; k < 40; ++k) seen.insert(augmented_copy("IMG_2.png", k, 7).transform);
    CHECK(seen.size() == 4);
}

TEST_CASE("full plan") {
    SplitParams params = small_params();
    const auto plan = build_plan(records(), params);
    CHECK(plan.samples.size() == 125);
    CHECK(plan.test_sets.size() == 5);
    CHECK(plan.sample_size == feasible_sample_size(records(), plan.test_sets));
    std::set<std::tuple<int, double, int>> keys;
    for (const auto& s : plan.samples) {
        keys.insert({s.testset_id, s.ratio, s.rep});
        CHECK(s.rep >= 1);
        CHECK(s.rep <= 5);
    }
    CHECK(keys.size() == 125);
    CHECK(verify_no_leakage(plan, records()).empty());

    // Each sample matches the one built on its own.
    const auto& s = plan.samples[37];
    CHECK(build_trainval(records(), plan.test_set(s.testset_id), s.ratio, s.rep, plan.sample_size, params) == s);

    CHECK(build_plan(records(), params) == plan);
    params.master_seed = 100;
    CHECK(build_plan(records(), params).test_sets != plan.test_sets);
}

TEST_CASE("leakage faults are reported") {
    const auto plan = build_plan(records(), small_params());
    const auto img = by_image(records());

    SUBCASE("test lesion moved into a sample") {
        auto bad = plan;
        auto& ts = bad.test_sets[0];
        const auto moved = ts.lesions.back();
        ts.lesions.pop_back();
        auto it = std::find_if(bad.samples.begin(), bad.samples.end(), [](const auto& s) { return s.testset_id == 1; });
        it->lesions.push_back(moved);
        const auto v = verify_no_leakage(bad, records());
        REQUIRE(v.size() == 1);
        CHECK(v[0].kind == ViolationKind::patient_overlap);
        CHECK(v[0].lesion == moved);
    }
    SUBCASE("augmented lesion in a test set") {
        auto bad = plan;
        auto it = std::find_if(bad.samples.begin(), bad.samples.end(), [](const auto& s) { return !s.augmented.empty(); });
        REQUIRE(it != bad.samples.end());
        const auto copy = it->augmented.front().image_id;
        bad.test_sets[static_cast<std::size_t>(it->testset_id - 1)].lesions.push_back(copy);
        const auto v = verify_no_leakage(bad, records());
        CHECK(std::any_of(v.begin(), v.end(), [&](const Violation& x) {
            return x.kind == ViolationKind::augmented_in_test && x.lesion == copy;
        }));
    }
    SUBCASE("augmented lesion without its parent") {
        auto bad = plan;
        auto it = std::find_if(bad.samples.begin(), bad.samples.end(), [](const auto& s) { return !s.augmented.empty(); });
        const auto parent = it->augmented.front().parent;
        std::erase(it->lesions, parent);
        const auto v = verify_no_leakage(bad, records());
        CHECK_FALSE(v.empty());
        for (const auto& x : v) {
            CHECK(x.kind == ViolationKind::augmented_without_parent);
            CHECK(augmented_records(plan).size() > 0);
        }
    }
    SUBCASE("unknown lesion") {
        auto bad = plan;
        bad.samples[0].lesions.push_back("ghost.png");
        const auto v = verify_no_leakage(bad, records());
        REQUIRE(v.size() == 1);
        CHECK(v[0].kind == ViolationKind::unknown_lesion);
    }
}

TEST_CASE("augmented records") {
    const auto plan = build_plan(records(), small_params());
    const auto aug = augmented_records(plan);
    const auto img = by_image(records());
    std::set<std::string> ids;
    for (const auto& s : plan.samples)
        for (const auto& a : s.augmented) ids.insert(a.image_id);
    CHECK(aug.size() == ids.size());
    CHECK(std::is_sorted(aug.begin(), aug.end(), [](const auto& a, const auto& b) { return a.image_id < b.image_id; }));
    for (const auto& r : aug) {
        CHECK(r.is_augmented);
        REQUIRE(r.augment_parent);
        const auto& parent = *img.at(*r.augment_parent);
        CHECK(r.patient_id == parent.patient_id);
        CHECK(r.label == parent.label);
        CHECK(r.sex == parent.sex);
    }
}

TEST_CASE("manifest round trip") {
    const auto plan = build_plan(records(), small_params());
    const auto text = to_json(plan);
    CHECK(text.find("skinbias-split-manifest/1") != std::string::npos);
    CHECK(from_json(text) == plan);
    CHECK(to_json(from_json(text)) == text);
    CHECK_THROWS_AS(from_json("{\"format\": \"other\"}"), Error);
    CHECK_THROWS_AS(from_json("not json"), Error);
}

}
