#include "skinbias/splits.hpp"

#include "skinbias/common.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace skinbias::splits {

std::string_view to_string(Category c) {
    switch (c) {
        case Category::cancer_female: return "cancer_female";
        case Category::non_cancer_female: return "non_cancer_female";
        case Category::cancer_male: return "cancer_male";
        case Category::non_cancer_male: return "non_cancer_male";
    }
    return "?";
}

Category PatientInfo::category() const {
    if (sex == Sex::female) return has_cancer ? Category::cancer_female : Category::non_cancer_female;
    return has_cancer ? Category::cancer_male : Category::non_cancer_male;
}

std::vector<PatientInfo> index_patients(const std::vector<LesionRecord>& records) {
    std::vector<PatientInfo> out;
    std::unordered_map<std::string, std::size_t> pos;
    for (const auto& r : records) {
        if (r.is_augmented) continue;
        auto [it, inserted] = pos.try_emplace(r.patient_id, out.size());
        if (inserted) out.push_back({r.patient_id, r.sex, false, {}});
        auto& p = out[it->second];
        p.has_cancer = p.has_cancer || r.label == Label::cancer;
        p.image_ids.push_back(r.image_id);
    }
    return out;
}

AugmentedCopy augmented_copy(const std::string& parent_image_id, int copy_index, std::uint64_t master_seed,
                             const imaging::AugmentRanges& ranges) {
    AugmentedCopy c;
    c.parent = parent_image_id;
    c.image_id = parent_image_id + "#aug" + std::to_string(copy_index);
    c.seed = mix_seed(master_seed, "augment|" + c.image_id);
    Rng rng(c.seed);
    c.transform = imaging::all_transforms[rng.below(imaging::all_transforms.size())];
    c.parameter = imaging::draw_parameter(c.transform, mix_seed(c.seed, "parameter"), ranges);
    return c;
}

const TestSet& SplitPlan::test_set(int id) const {
    for (const auto& t : test_sets) {
        if (t.id == id) return t;
    }
    throw Error("split plan has no test set " + std::to_string(id));
}

std::vector<TestSet> build_test_sets(const std::vector<LesionRecord>& records, std::uint64_t master_seed,
                                     int testsets, int per_category) {
    const auto patients = index_patients(records);
    std::map<Category, std::vector<const PatientInfo*>> by_cat;
    for (const auto& p : patients) by_cat[p.category()].push_back(&p);

    const std::size_t need = static_cast<std::size_t>(testsets) * static_cast<std::size_t>(per_category);
    std::string shortage;
    for (auto c : {Category::cancer_female, Category::non_cancer_female, Category::cancer_male,
                   Category::non_cancer_male}) {
        if (by_cat[c].size() < need) {
            shortage += " " + std::string(to_string(c)) + "=" + std::to_string(by_cat[c].size());
        }
    }
    if (!shortage.empty()) {
        throw Error("not enough patients for " + std::to_string(testsets) + " test sets of " +
                    std::to_string(per_category) + " per category (need " + std::to_string(need) + "):" + shortage);
    }

    std::vector<TestSet> sets(static_cast<std::size_t>(testsets));
    for (int t = 0; t < testsets; ++t) sets[static_cast<std::size_t>(t)].id = t + 1;
    for (auto& [cat, list] : by_cat) {
        auto ordered = list;
        std::sort(ordered.begin(), ordered.end(),
                  [](const PatientInfo* a, const PatientInfo* b) { return a->patient_id < b->patient_id; });
        Rng rng(mix_seed(master_seed, "testsets|" + std::string(to_string(cat))));
        rng.shuffle(ordered);
        for (std::size_t i = 0; i < need; ++i) {
            auto& ts = sets[i / static_cast<std::size_t>(per_category)];
            ts.patients.push_back(ordered[i]->patient_id);
        }
    }
    std::unordered_map<std::string, const PatientInfo*> lookup;
    for (const auto& p : patients) lookup[p.patient_id] = &p;
    for (auto& ts : sets) {
        std::sort(ts.patients.begin(), ts.patients.end());
        std::unordered_set<std::string> members(ts.patients.begin(), ts.patients.end());
        for (const auto& r : records) {
            if (!r.is_augmented && members.contains(r.patient_id)) ts.lesions.push_back(r.image_id);
        }
    }
    return sets;
}

namespace {

struct Pools {
    std::vector<std::string> female_cancer, female_non, male_cancer, male_non;
};

Pools available_pools(const std::vector<PatientInfo>& patients, const TestSet& test_set) {
    std::unordered_set<std::string> excluded(test_set.patients.begin(), test_set.patients.end());
    Pools p;
    for (const auto& pi : patients) {
        if (excluded.contains(pi.patient_id)) continue;
        switch (pi.category()) {
            case Category::cancer_female: p.female_cancer.push_back(pi.patient_id); break;
            case Category::non_cancer_female: p.female_non.push_back(pi.patient_id); break;
            case Category::cancer_male: p.male_cancer.push_back(pi.patient_id); break;
            case Category::non_cancer_male: p.male_non.push_back(pi.patient_id); break;
        }
    }
    for (auto* v : {&p.female_cancer, &p.female_non, &p.male_cancer, &p.male_non}) std::sort(v->begin(), v->end());
    return p;
}

}  // namespace

std::size_t feasible_sample_size(const std::vector<LesionRecord>& records, const std::vector<TestSet>& test_sets) {
    const auto patients = index_patients(records);
    std::size_t size = SIZE_MAX;
    for (const auto& ts : test_sets) {
        const auto p = available_pools(patients, ts);
        const auto female = p.female_cancer.size() + p.female_non.size();
        const auto male = p.male_cancer.size() + p.male_non.size();
        size = std::min({size, female, male});
    }
    return size == SIZE_MAX ? 0 : size;
}

std::uint64_t sample_seed(std::uint64_t master_seed, int testset_id, double ratio, int rep) {
    return mix_seed(master_seed,
                    "trainval|" + std::to_string(testset_id) + "|" + format_ratio(ratio) + "|" + std::to_string(rep));
}

TrainvalSample build_trainval(const std::vector<LesionRecord>& records, const TestSet& test_set, double ratio, int rep,
                              std::size_t sample_size, const SplitParams& params) {
    if (ratio < 0.0 || ratio > 1.0) throw Error("trainval ratio must lie in [0, 1]");
    const auto patients = index_patients(records);
    const auto pools = available_pools(patients, test_set);

    TrainvalSample s;
    s.testset_id = test_set.id;
    s.ratio = ratio;
    s.rep = rep;
    s.seed = sample_seed(params.master_seed, test_set.id, ratio, rep);
    s.n_female_patients = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(sample_size)));
    s.n_male_patients = sample_size - s.n_female_patients;

    auto draw = [&](std::vector<std::string> cancer, std::vector<std::string> non, std::size_t count,
                    std::string_view tag) {
        const std::size_t total = cancer.size() + non.size();
        if (count > total) {
            throw Error("trainval composition unsatisfiable for test set " + std::to_string(test_set.id) + ", ratio " +
                        format_ratio(ratio) + ": need " + std::to_string(count) + " " + std::string(tag) +
                        " patients, " + std::to_string(total) + " available");
        }
        if (count == 0) return;
        // Keep the cancer share of the available pool as closely as rounding allows.
        std::size_t n_cancer = static_cast<std::size_t>(
            std::lround(static_cast<double>(count) * static_cast<double>(cancer.size()) / static_cast<double>(total)));
        n_cancer = std::min(n_cancer, cancer.size());
        std::size_t n_non = count - n_cancer;
        if (n_non > non.size()) {
            n_non = non.size();
            n_cancer = count - n_non;
        }
        Rng rng(mix_seed(s.seed, "patients|" + std::string(tag)));
        rng.shuffle(cancer);
        rng.shuffle(non);
        s.patients.insert(s.patients.end(), cancer.begin(), cancer.begin() + static_cast<std::ptrdiff_t>(n_cancer));
        s.patients.insert(s.patients.end(), non.begin(), non.begin() + static_cast<std::ptrdiff_t>(n_non));
    };
    draw(pools.female_cancer, pools.female_non, s.n_female_patients, "female");
    draw(pools.male_cancer, pools.male_non, s.n_male_patients, "male");
    std::sort(s.patients.begin(), s.patients.end());

    std::unordered_set<std::string> chosen(s.patients.begin(), s.patients.end());
    std::vector<std::string> non_cancer;
    std::size_t n_cancer_lesions = 0;
    for (const auto& r : records) {
        if (r.is_augmented || !chosen.contains(r.patient_id)) continue;
        s.lesions.push_back(r.image_id);
        if (r.label == Label::cancer) {
            ++n_cancer_lesions;
        } else {
            non_cancer.push_back(r.image_id);
        }
    }

    if (params.balance_classes && n_cancer_lesions > non_cancer.size()) {
        if (non_cancer.empty()) {
            log_warning("trainval sample " + std::to_string(test_set.id) + "/" + format_ratio(ratio) + "/" +
                        std::to_string(rep) + " has no non-cancerous lesions to upsample");
        } else {
            std::size_t need = n_cancer_lesions - non_cancer.size();
            Rng rng(mix_seed(s.seed, "upsample"));
            rng.shuffle(non_cancer);
            for (int k = 0; need > 0; ++k) {
                for (const auto& parent : non_cancer) {
                    if (need == 0) break;
                    s.augmented.push_back(augmented_copy(parent, k, params.master_seed, params.augment));
                    --need;
                }
            }
        }
    }
    return s;
}

SplitPlan build_plan(const std::vector<LesionRecord>& records, const SplitParams& params) {
    if (params.reps < 1) throw Error("split plan needs at least one repetition");
    SplitPlan plan;
    plan.master_seed = params.master_seed;
    plan.reps = params.reps;
    plan.ratios = params.ratios;
    for (const auto& r : records) {
        if (!r.is_augmented) plan.records.push_back(r);
    }
    plan.test_sets = build_test_sets(plan.records, params.master_seed, params.testsets, params.per_category);
    plan.sample_size = params.sample_size.value_or(feasible_sample_size(plan.records, plan.test_sets));
    if (plan.sample_size == 0) throw Error("split plan: no patients available for training");
    for (const auto& ts : plan.test_sets) {
        for (double ratio : params.ratios) {
            for (int rep = 1; rep <= params.reps; ++rep) {
                plan.samples.push_back(build_trainval(plan.records, ts, ratio, rep, plan.sample_size, params));
            }
        }
    }
    return plan;
}

std::string_view to_string(ViolationKind k) {
    switch (k) {
        case ViolationKind::patient_overlap: return "patient_overlap";
        case ViolationKind::augmented_without_parent: return "augmented_without_parent";
        case ViolationKind::augmented_in_test: return "augmented_in_test";
        case ViolationKind::unknown_lesion: return "unknown_lesion";
    }
    return "?";
}

std::vector<Violation> verify_no_leakage(const SplitPlan& plan, const std::vector<LesionRecord>& records) {
    std::unordered_map<std::string, std::string> patient_of;
    for (const auto& r : records) {
        if (!r.is_augmented) patient_of[r.image_id] = r.patient_id;
    }
    std::unordered_map<std::string, std::string> parent_of;
    for (const auto& s : plan.samples) {
        for (const auto& a : s.augmented) parent_of[a.image_id] = a.parent;
    }
    for (const auto& r : records) {
        if (r.is_augmented && r.augment_parent) parent_of[r.image_id] = *r.augment_parent;
    }
    auto resolve_patient = [&](const std::string& id) -> std::optional<std::string> {
        auto p = parent_of.find(id);
        const auto& base = p == parent_of.end() ? id : p->second;
        auto it = patient_of.find(base);
        if (it == patient_of.end()) return std::nullopt;
        return it->second;
    };

    std::vector<Violation> out;
    std::map<int, std::unordered_set<std::string>> test_patients;
    for (const auto& ts : plan.test_sets) {
        const auto where = "test " + std::to_string(ts.id);
        auto& members = test_patients[ts.id];
        members.insert(ts.patients.begin(), ts.patients.end());
        for (const auto& l : ts.lesions) {
            if (parent_of.contains(l)) out.push_back({ViolationKind::augmented_in_test, where, l});
            if (auto p = resolve_patient(l)) {
                members.insert(*p);
            } else {
                out.push_back({ViolationKind::unknown_lesion, where, l});
            }
        }
    }
    for (const auto& s : plan.samples) {
        const auto where =
            "sample " + std::to_string(s.testset_id) + "/" + format_ratio(s.ratio) + "/" + std::to_string(s.rep);
        const auto& members = test_patients[s.testset_id];
        std::unordered_set<std::string> present(s.lesions.begin(), s.lesions.end());
        auto check = [&](const std::string& l) {
            auto p = resolve_patient(l);
            if (!p) {
                out.push_back({ViolationKind::unknown_lesion, where, l});
            } else if (members.contains(*p)) {
                out.push_back({ViolationKind::patient_overlap, where, l});
            }
        };
        for (const auto& l : s.lesions) check(l);
        for (const auto& a : s.augmented) {
            check(a.image_id);
            if (!present.contains(a.parent)) out.push_back({ViolationKind::augmented_without_parent, where, a.image_id});
        }
    }
    return out;
}

std::vector<LesionRecord> augmented_records(const SplitPlan& plan) {
    std::unordered_map<std::string, const LesionRecord*> by_image;
    for (const auto& r : plan.records) by_image[r.image_id] = &r;
    std::map<std::string, LesionRecord> out;
    for (const auto& s : plan.samples) {
        for (const auto& a : s.augmented) {
            if (out.contains(a.image_id)) continue;
            auto it = by_image.find(a.parent);
            if (it == by_image.end()) throw Error("augmented copy " + a.image_id + " has unknown parent " + a.parent);
            LesionRecord r = *it->second;
            r.image_id = a.image_id;
            r.lesion_id = it->second->lesion_id + a.image_id.substr(a.parent.size());
            r.is_augmented = true;
            r.augment_parent = a.parent;
            out.emplace(a.image_id, std::move(r));
        }
    }
    std::vector<LesionRecord> v;
    for (auto& [k, r] : out) v.push_back(std::move(r));
    return v;
}

std::string to_json(const SplitPlan& plan) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["format"] = "skinbias-split-manifest/1";
    j["master_seed"] = plan.master_seed;
    j["reps"] = plan.reps;
    j["ratios"] = plan.ratios;
    j["sample_size"] = plan.sample_size;
    auto& recs = j["records"] = ordered_json::array();
    for (const auto& r : plan.records) {
        recs.push_back({{"image_id", r.image_id},
                        {"lesion_id", r.lesion_id},
                        {"patient_id", r.patient_id},
                        {"sex", std::string(to_string(r.sex))},
                        {"diagnosis", std::string(dataset::to_string(r.diagnosis))},
                        {"label", r.label == Label::cancer ? 1 : 0}});
    }
    auto& tests = j["test_sets"] = ordered_json::array();
    for (const auto& t : plan.test_sets) {
        tests.push_back({{"id", t.id}, {"patients", t.patients}, {"lesions", t.lesions}});
    }
    auto& samples = j["samples"] = ordered_json::array();
    for (const auto& s : plan.samples) {
        ordered_json aug = ordered_json::array();
        for (const auto& a : s.augmented) {
            aug.push_back({{"image_id", a.image_id},
                           {"parent", a.parent},
                           {"transform", std::string(imaging::to_string(a.transform))},
                           {"seed", a.seed},
                           {"parameter", a.parameter}});
        }
        samples.push_back({{"testset_id", s.testset_id},
                           {"ratio", s.ratio},
                           {"rep", s.rep},
                           {"seed", s.seed},
                           {"n_female_patients", s.n_female_patients},
                           {"n_male_patients", s.n_male_patients},
                           {"patients", s.patients},
                           {"lesions", s.lesions},
                           {"augmented", aug}});
    }
    return j.dump(1) + "\n";
}

SplitPlan from_json(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("split manifest: ") + e.what());
    }
    if (j.value("format", "") != "skinbias-split-manifest/1") throw Error("split manifest: unsupported format");
    SplitPlan plan;
    try {
        plan.master_seed = j.at("master_seed").get<std::uint64_t>();
        plan.reps = j.at("reps").get<int>();
        plan.ratios = j.at("ratios").get<std::vector<double>>();
        plan.sample_size = j.at("sample_size").get<std::size_t>();
        for (const auto& r : j.at("records")) {
            LesionRecord rec;
            rec.image_id = r.at("image_id").get<std::string>();
            rec.lesion_id = r.at("lesion_id").get<std::string>();
            rec.patient_id = r.at("patient_id").get<std::string>();
            rec.sex = parse_sex(r.at("sex").get<std::string>());
            auto d = dataset::parse_diagnosis(r.at("diagnosis").get<std::string>());
            if (!d) throw Error("split manifest: unknown diagnosis");
            rec.diagnosis = *d;
            rec.label = r.at("label").get<int>() ? Label::cancer : Label::non_cancer;
            plan.records.push_back(std::move(rec));
        }
        for (const auto& t : j.at("test_sets")) {
            plan.test_sets.push_back({t.at("id").get<int>(), t.at("patients").get<std::vector<std::string>>(),
                                      t.at("lesions").get<std::vector<std::string>>()});
        }
        for (const auto& s : j.at("samples")) {
            TrainvalSample ts;
            ts.testset_id = s.at("testset_id").get<int>();
            ts.ratio = s.at("ratio").get<double>();
            ts.rep = s.at("rep").get<int>();
            ts.seed = s.at("seed").get<std::uint64_t>();
            ts.n_female_patients = s.at("n_female_patients").get<std::size_t>();
            ts.n_male_patients = s.at("n_male_patients").get<std::size_t>();
            ts.patients = s.at("patients").get<std::vector<std::string>>();
            ts.lesions = s.at("lesions").get<std::vector<std::string>>();
            for (const auto& a : s.at("augmented")) {
                ts.augmented.push_back({a.at("image_id").get<std::string>(), a.at("parent").get<std::string>(),
                                        imaging::parse_transform(a.at("transform").get<std::string>()),
                                        a.at("seed").get<std::uint64_t>(), a.at("parameter").get<double>()});
            }
            plan.samples.push_back(std::move(ts));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("split manifest: ") + e.what());
    }
    return plan;
}

}  // namespace skinbias::splits
