#pragma once

#include "skinbias/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace skinbias::dataset {

enum class Diagnosis { BCC, SCC, MEL, ACK, NEV, SEK };

std::string_view to_string(Diagnosis d);
std::optional<Diagnosis> parse_diagnosis(std::string_view code);

using GroupingMap = std::map<Diagnosis, Label>;

// {BCC, SCC, MEL} are malignant, {ACK, NEV, SEK} benign.
GroupingMap default_grouping();

struct LesionRecord {
    std::string image_id;
    std::string lesion_id;
    std::string patient_id;
    Sex sex = Sex::female;
    Diagnosis diagnosis = Diagnosis::NEV;
    Label label = Label::non_cancer;
    bool is_augmented = false;
    std::optional<std::string> augment_parent;

    bool operator==(const LesionRecord&) const = default;
};

enum class MissingSexPolicy { drop_patient, drop_lesion };

struct Correction {
    std::string kind;    // reassign_lesion_id | drop
    std::string old_id;  // "patient:lesion", "lesion", or an image id for drop
    std::string new_id;
};

struct IngestOptions {
    GroupingMap grouping = default_grouping();
    MissingSexPolicy missing_sex = MissingSexPolicy::drop_patient;
    // Mask file name; "{stem}" is the image file name without extension and
    // "{img_id}" the full image id. The first existing candidate wins.
    std::vector<std::string> mask_patterns = {"{stem}_mask.png", "{img_id}", "{stem}.png"};
    bool verify_dimensions = true;
    std::vector<Correction> corrections;
};

// Throws skinbias::Error naming the offending path, diagnosis code, or ids.
std::vector<LesionRecord> ingest(const std::filesystem::path& metadata_file, const std::filesystem::path& image_dir,
                                 const std::filesystem::path& mask_dir, const IngestOptions& options = {});

std::filesystem::path resolve_mask(const std::filesystem::path& mask_dir, std::string_view image_id,
                                   const std::vector<std::string>& patterns);

// Minimal metadata serialization of cleaned records (img_id, lesion_id,
// patient_id, gender, diagnostic).
std::string write_metadata(const std::vector<LesionRecord>& records);

enum class FindingKind {
    duplicate_lesion_id_across_patients,
    identical_image_distinct_lesion_ids,
    missing_sex,
    duplicate_lesion_id_same_patient,
    undecodable_image,
};

enum class SuggestedFix { drop, reassign_lesion_id, keep_first };

std::string_view to_string(FindingKind k);
std::string_view to_string(SuggestedFix f);

struct AuditFinding {
    FindingKind kind;
    std::vector<std::string> offending_ids;
    SuggestedFix suggested_fix;

    bool operator==(const AuditFinding&) const = default;
};

struct AuditResult {
    std::vector<AuditFinding> findings;
    std::vector<Correction> corrections;
};

AuditResult audit(const std::filesystem::path& metadata_file, const std::filesystem::path& image_dir,
                  unsigned workers = 0);

std::string format_findings(const std::vector<AuditFinding>& findings);

std::vector<Correction> parse_corrections(std::string_view text);
std::vector<Correction> read_corrections(const std::filesystem::path& path);
std::string write_corrections(const std::vector<Correction>& corrections);

struct DatasetSummary {
    // counts[label][sex], label/sex in enum order
    std::size_t counts[2][2] = {{0, 0}, {0, 0}};
    std::size_t total = 0;

    std::size_t at(Label l, Sex s) const { return counts[static_cast<int>(l)][static_cast<int>(s)]; }
    bool operator==(const DatasetSummary&) const = default;
};

DatasetSummary summarize(const std::vector<LesionRecord>& records);
std::string format_summary(const DatasetSummary& summary);

}  // namespace skinbias::dataset
