#pragma once

#include "skinbias/dataset.hpp"

#include <cstdint>
#include <filesystem>

namespace skinbias::testing {

// Lesion counts per (label, sex) after cleaning, and how they are spread
// over patients. Every patient is single-category except `mixed_female`
// patients, who carry one cancerous and one non-cancerous lesion.
struct CohortOptions {
    std::size_t non_cancer_female = 198;
    std::size_t non_cancer_male = 148;
    std::size_t cancer_female = 401;
    std::size_t cancer_male = 432;
    std::size_t patients_non_cancer_female = 160;
    std::size_t patients_non_cancer_male = 140;
    std::size_t patients_cancer_female = 250;
    std::size_t patients_cancer_male = 270;
    std::size_t mixed_female = 4;
    int image_size = 40;
    bool inject_errors = true;  // patients without sex and repeated lesion ids
    std::uint64_t seed = 7;
};

struct Cohort {
    std::filesystem::path metadata;
    std::filesystem::path images;
    std::filesystem::path masks;
    std::size_t rows = 0;
    std::size_t missing_sex_patients = 0;
    std::size_t duplicate_rows = 0;
    dataset::DatasetSummary expected;
};

// Writes metadata.csv, images/ and masks/ under dir. Cancerous lesions are
// drawn with more irregular borders and darker, bluer, more varied colour so
// that a classifier has something to learn.
Cohort write_cohort(const std::filesystem::path& dir, const CohortOptions& options = {});

// Empty directory under the system temp dir, removed by the destructor.
class TempDir {
public:
    explicit TempDir(const std::string& tag);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace skinbias::testing
