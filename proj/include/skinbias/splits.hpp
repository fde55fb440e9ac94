#pragma once

#include "skinbias/dataset.hpp"
#include "skinbias/imaging.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skinbias::splits {

using dataset::LesionRecord;

enum class Category { cancer_female, non_cancer_female, cancer_male, non_cancer_male };
std::string_view to_string(Category c);

struct PatientInfo {
    std::string patient_id;
    Sex sex = Sex::female;
    bool has_cancer = false;             // any cancerous lesion: the patient counts as cancer
    std::vector<std::string> image_ids;  // record order
    Category category() const;
};

// Patients in order of first appearance; augmented records are ignored.
std::vector<PatientInfo> index_patients(const std::vector<LesionRecord>& records);

struct AugmentedCopy {
    std::string image_id;
    std::string parent;
    imaging::Transform transform = imaging::Transform::horizontal_flip;
    std::uint64_t seed = 0;
    double parameter = 0.0;
    bool operator==(const AugmentedCopy&) const = default;
};

// Copy k of a parent image is a pure function of (master_seed, parent, k).
AugmentedCopy augmented_copy(const std::string& parent_image_id, int copy_index, std::uint64_t master_seed,
                             const imaging::AugmentRanges& ranges = {});

struct TestSet {
    int id = 0;
    std::vector<std::string> patients;
    std::vector<std::string> lesions;  // image ids
    bool operator==(const TestSet&) const = default;
};

struct TrainvalSample {
    int testset_id = 0;
    double ratio = 0.0;
    int rep = 0;
    std::uint64_t seed = 0;
    std::size_t n_female_patients = 0;
    std::size_t n_male_patients = 0;
    std::vector<std::string> patients;
    std::vector<std::string> lesions;  // non-augmented image ids
    std::vector<AugmentedCopy> augmented;
    bool operator==(const TrainvalSample&) const = default;
};

struct SplitParams {
    std::uint64_t master_seed = 20250101;
    int testsets = 5;
    int per_category = 26;
    std::vector<double> ratios = {0.0, 0.25, 0.5, 0.75, 1.0};
    int reps = 5;
    std::optional<std::size_t> sample_size;  // default: largest size feasible for every ratio
    bool balance_classes = true;
    imaging::AugmentRanges augment{};
};

struct SplitPlan {
    std::uint64_t master_seed = 0;
    int reps = 0;
    std::vector<double> ratios;
    std::size_t sample_size = 0;
    std::vector<TestSet> test_sets;
    std::vector<TrainvalSample> samples;
    std::vector<LesionRecord> records;  // cleaned records the plan was built from

    const TestSet& test_set(int id) const;
    bool operator==(const SplitPlan&) const = default;
};

// Disjoint test sets of per_category patients from each category. Throws
// when any category has fewer than testsets * per_category patients.
std::vector<TestSet> build_test_sets(const std::vector<LesionRecord>& records, std::uint64_t master_seed,
                                     int testsets = 5, int per_category = 26);

// Largest patient count every ratio can reach for every test set.
std::size_t feasible_sample_size(const std::vector<LesionRecord>& records, const std::vector<TestSet>& test_sets);

std::uint64_t sample_seed(std::uint64_t master_seed, int testset_id, double ratio, int rep);

// Patients outside the test set, round(ratio * size) of them female, each sex
// stratified by cancer status, then non-cancerous lesions upsampled by
// augmentation until the lesion classes balance.
TrainvalSample build_trainval(const std::vector<LesionRecord>& records, const TestSet& test_set, double ratio,
                              int rep, std::size_t sample_size, const SplitParams& params);

SplitPlan build_plan(const std::vector<LesionRecord>& records, const SplitParams& params);

enum class ViolationKind { patient_overlap, augmented_without_parent, augmented_in_test, unknown_lesion };
std::string_view to_string(ViolationKind k);

struct Violation {
    ViolationKind kind;
    std::string where;  // "test N" or "sample N/ratio/rep"
    std::string lesion;
};

std::vector<Violation> verify_no_leakage(const SplitPlan& plan, const std::vector<LesionRecord>& records);

// Records for the augmented copies used anywhere in the plan, sorted by id.
std::vector<LesionRecord> augmented_records(const SplitPlan& plan);

std::string to_json(const SplitPlan& plan);
SplitPlan from_json(std::string_view text);

}  // namespace skinbias::splits
