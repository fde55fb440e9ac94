#include "skinbias/dataset.hpp"

#include "skinbias/csv.hpp"
#include "skinbias/imaging.hpp"

#include <algorithm>
#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace skinbias::dataset {

namespace fs = std::filesystem;

std::string_view to_string(Diagnosis d) {
    switch (d) {
        case Diagnosis::BCC: return "BCC";
        case Diagnosis::SCC: return "SCC";
        case Diagnosis::MEL: return "MEL";
        case Diagnosis::ACK: return "ACK";
        case Diagnosis::NEV: return "NEV";
        case Diagnosis::SEK: return "SEK";
    }
    return "?";
}

std::optional<Diagnosis> parse_diagnosis(std::string_view code) {
    const auto c = trim(code);
    for (auto d : {Diagnosis::BCC, Diagnosis::SCC, Diagnosis::MEL, Diagnosis::ACK, Diagnosis::NEV, Diagnosis::SEK}) {
        if (c == to_string(d)) return d;
    }
    return std::nullopt;
}

GroupingMap default_grouping() {
    return {{Diagnosis::BCC, Label::cancer},     {Diagnosis::SCC, Label::cancer},
            {Diagnosis::MEL, Label::cancer},     {Diagnosis::ACK, Label::non_cancer},
            {Diagnosis::NEV, Label::non_cancer}, {Diagnosis::SEK, Label::non_cancer}};
}

namespace {

bool is_missing(std::string_view value) {
    const auto v = to_lower(trim(value));
    return v.empty() || v == "unk" || v == "na" || v == "nan" || v == "none" || v == "null";
}

struct RawRow {
    std::string image_id, lesion_id, patient_id, gender, diagnostic;
};

std::vector<RawRow> read_raw(const fs::path& metadata_file) {
    const auto table = csv::read(metadata_file);
    const auto src = metadata_file.string();
    const auto c_img = table.require_column("img_id", src);
    const auto c_lesion = table.require_column("lesion_id", src);
    const auto c_patient = table.require_column("patient_id", src);
    const auto c_gender = table.require_column("gender", src);
    const auto c_diag = table.require_column("diagnostic", src);
    std::vector<RawRow> rows;
    rows.reserve(table.rows.size());
    for (const auto& r : table.rows) {
        rows.push_back({trim(r[c_img]), trim(r[c_lesion]), trim(r[c_patient]), trim(r[c_gender]), trim(r[c_diag])});
    }
    return rows;
}

void apply_corrections(std::vector<RawRow>& rows, const std::vector<Correction>& corrections) {
    for (const auto& c : corrections) {
        if (c.kind == "drop") {
            std::erase_if(rows, [&](const RawRow& r) { return r.image_id == c.old_id; });
        } else if (c.kind == "reassign_lesion_id") {
            const auto colon = c.old_id.find(':');
            for (auto& r : rows) {
                if (colon != std::string::npos) {
                    if (r.patient_id == c.old_id.substr(0, colon) && r.lesion_id == c.old_id.substr(colon + 1)) {
                        r.lesion_id = c.new_id;
                    }
                } else if (r.lesion_id == c.old_id) {
                    r.lesion_id = c.new_id;
                }
            }
        } else {
            throw Error("unknown correction kind '" + c.kind + "'");
        }
    }
}

std::string stem_of(std::string_view image_id) { return fs::path(image_id).stem().string(); }

std::string expand_pattern(std::string pattern, std::string_view image_id) {
    auto replace = [&](std::string_view key, const std::string& value) {
        for (auto pos = pattern.find(key); pos != std::string::npos; pos = pattern.find(key, pos + value.size())) {
            pattern.replace(pos, key.size(), value);
        }
    };
    replace("{stem}", stem_of(image_id));
    replace("{img_id}", std::string(image_id));
    return pattern;
}

}  // namespace

fs::path resolve_mask(const fs::path& mask_dir, std::string_view image_id, const std::vector<std::string>& patterns) {
    for (const auto& p : patterns) {
        auto candidate = mask_dir / expand_pattern(p, image_id);
        if (fs::exists(candidate)) return candidate;
    }
    throw Error("mask file not found for image " + std::string(image_id) + " in " + mask_dir.string());
}

std::vector<LesionRecord> ingest(const fs::path& metadata_file, const fs::path& image_dir, const fs::path& mask_dir,
                                 const IngestOptions& options) {
    if (!fs::exists(metadata_file)) throw Error("metadata file not found: " + metadata_file.string());
    if (!fs::is_directory(image_dir)) throw Error("image directory not found: " + image_dir.string());
    if (!fs::is_directory(mask_dir)) throw Error("mask directory not found: " + mask_dir.string());

    auto rows = read_raw(metadata_file);
    apply_corrections(rows, options.corrections);

    for (const auto& r : rows) {
        if (!parse_diagnosis(r.diagnostic)) {
            throw Error("unknown diagnosis code '" + r.diagnostic + "' (image " + r.image_id + ")");
        }
        if (!fs::exists(image_dir / r.image_id)) throw Error("image file not found: " + (image_dir / r.image_id).string());
    }

    std::unordered_set<std::string> patients_missing_sex;
    for (const auto& r : rows) {
        if (is_missing(r.gender)) patients_missing_sex.insert(r.patient_id);
    }

    std::vector<LesionRecord> out;
    std::unordered_set<std::string> seen_lesions;
    for (const auto& r : rows) {
        if (is_missing(r.gender)) continue;
        if (options.missing_sex == MissingSexPolicy::drop_patient && patients_missing_sex.contains(r.patient_id)) continue;
        if (!seen_lesions.insert(r.lesion_id).second) continue;

        LesionRecord rec;
        rec.image_id = r.image_id;
        rec.lesion_id = r.lesion_id;
        rec.patient_id = r.patient_id;
        rec.sex = parse_sex(r.gender);
        rec.diagnosis = *parse_diagnosis(r.diagnostic);
        auto it = options.grouping.find(rec.diagnosis);
        if (it == options.grouping.end()) {
            throw Error("diagnosis code '" + r.diagnostic + "' missing from grouping map");
        }
        rec.label = it->second;
        out.push_back(std::move(rec));
    }

    std::vector<std::string> errors(out.size());
    parallel_for(out.size(), 0, [&](std::size_t i) {
        try {
            const auto mask_path = resolve_mask(mask_dir, out[i].image_id, options.mask_patterns);
            if (!options.verify_dimensions) return;
            const auto img_dims = imaging::probe_dimensions(image_dir / out[i].image_id);
            const auto mask_dims = imaging::probe_dimensions(mask_path);
            if (img_dims != mask_dims) {
                errors[i] = "image/mask dimension mismatch for image " + out[i].image_id + " (lesion " +
                            out[i].lesion_id + ")";
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (const auto& e : errors) {
        if (!e.empty()) throw Error(e);
    }
    return out;
}

std::string write_metadata(const std::vector<LesionRecord>& records) {
    std::string out = csv::join_row({"img_id", "lesion_id", "patient_id", "gender", "diagnostic"});
    for (const auto& r : records) {
        out += csv::join_row({r.image_id, r.lesion_id, r.patient_id, r.sex == Sex::female ? "FEMALE" : "MALE",
                              std::string(to_string(r.diagnosis))});
    }
    return out;
}

std::string_view to_string(FindingKind k) {
    switch (k) {
        case FindingKind::duplicate_lesion_id_across_patients: return "duplicate_lesion_id_across_patients";
        case FindingKind::identical_image_distinct_lesion_ids: return "identical_image_distinct_lesion_ids";
        case FindingKind::missing_sex: return "missing_sex";
        case FindingKind::duplicate_lesion_id_same_patient: return "duplicate_lesion_id_same_patient";
        case FindingKind::undecodable_image: return "undecodable_image";
    }
    return "?";
}

std::string_view to_string(SuggestedFix f) {
    switch (f) {
        case SuggestedFix::drop: return "drop";
        case SuggestedFix::reassign_lesion_id: return "reassign_lesion_id";
        case SuggestedFix::keep_first: return "keep_first";
    }
    return "?";
}

AuditResult audit(const fs::path& metadata_file, const fs::path& image_dir, unsigned workers) {
    const auto rows = read_raw(metadata_file);
    AuditResult result;
    auto& findings = result.findings;

    // missing sex, one finding per patient
    {
        std::set<std::string> patients;
        for (const auto& r : rows) {
            if (is_missing(r.gender)) patients.insert(r.patient_id);
        }
        for (const auto& p : patients) findings.push_back({FindingKind::missing_sex, {p}, SuggestedFix::drop});
    }

    // lesion id reuse
    {
        std::map<std::string, std::vector<std::string>> patients_of;     // lesion -> patients, file order
        std::map<std::pair<std::string, std::string>, std::vector<std::string>> images_of;  // (lesion, patient) -> images
        for (const auto& r : rows) {
            auto& ps = patients_of[r.lesion_id];
            if (std::find(ps.begin(), ps.end(), r.patient_id) == ps.end()) ps.push_back(r.patient_id);
            images_of[{r.lesion_id, r.patient_id}].push_back(r.image_id);
        }
        for (const auto& [lesion, ps] : patients_of) {
            if (ps.size() < 2) continue;
            std::vector<std::string> ids{lesion};
            auto sorted = ps;
            std::sort(sorted.begin(), sorted.end());
            ids.insert(ids.end(), sorted.begin(), sorted.end());
            findings.push_back({FindingKind::duplicate_lesion_id_across_patients, ids, SuggestedFix::reassign_lesion_id});
            for (std::size_t i = 1; i < ps.size(); ++i) {
                result.corrections.push_back({"reassign_lesion_id", ps[i] + ":" + lesion, lesion + "@" + ps[i]});
            }
        }
        for (const auto& [key, imgs] : images_of) {
            if (imgs.size() < 2) continue;
            std::vector<std::string> ids{key.first};
            ids.insert(ids.end(), imgs.begin(), imgs.end());
            findings.push_back({FindingKind::duplicate_lesion_id_same_patient, ids, SuggestedFix::keep_first});
        }
    }

    // identical decoded images under different lesion ids
    {
        std::vector<std::optional<std::uint64_t>> hashes(rows.size());
        std::vector<std::string> decode_errors(rows.size());
        auto pixel_hash = [&](std::size_t i) {
            int w = 0, h = 0;
            const auto rgb = imaging::load_rgb(image_dir / rows[i].image_id, w, h);
            std::string_view bytes(reinterpret_cast<const char*>(rgb.data()), rgb.size());
            return mix_seed(stable_hash(bytes), std::to_string(w) + "x" + std::to_string(h));
        };
        parallel_for(rows.size(), workers, [&](std::size_t i) {
            try {
                hashes[i] = pixel_hash(i);
            } catch (const std::exception& e) {
                decode_errors[i] = e.what();
            }
        });
        std::set<std::string> undecodable;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (!hashes[i]) undecodable.insert(rows[i].image_id);
        }
        for (const auto& id : undecodable) {
            findings.push_back({FindingKind::undecodable_image, {id}, SuggestedFix::drop});
        }

        std::map<std::uint64_t, std::vector<std::size_t>> by_hash;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (hashes[i]) by_hash[*hashes[i]].push_back(i);
        }
        for (const auto& [hash, members] : by_hash) {
            if (members.size() < 2) continue;
            // Confirm the hash match with an exact pixel comparison.
            std::vector<std::vector<std::size_t>> groups;
            std::vector<std::vector<std::uint8_t>> reps;
            for (auto i : members) {
                int w = 0, h = 0;
                auto px = imaging::load_rgb(image_dir / rows[i].image_id, w, h);
                px.push_back(static_cast<std::uint8_t>(w & 0xff));
                px.push_back(static_cast<std::uint8_t>(h & 0xff));
                auto it = std::find(reps.begin(), reps.end(), px);
                if (it == reps.end()) {
                    reps.push_back(std::move(px));
                    groups.push_back({i});
                } else {
                    groups[static_cast<std::size_t>(it - reps.begin())].push_back(i);
                }
            }
            for (const auto& g : groups) {
                std::vector<std::string> lesions;  // file order
                for (auto i : g) {
                    if (std::find(lesions.begin(), lesions.end(), rows[i].lesion_id) == lesions.end()) {
                        lesions.push_back(rows[i].lesion_id);
                    }
                }
                if (lesions.size() < 2) continue;
                for (std::size_t k = 1; k < lesions.size(); ++k) {
                    result.corrections.push_back({"reassign_lesion_id", lesions[k], lesions[0]});
                }
                std::sort(lesions.begin(), lesions.end());
                findings.push_back(
                    {FindingKind::identical_image_distinct_lesion_ids, lesions, SuggestedFix::reassign_lesion_id});
            }
        }
    }

    std::sort(findings.begin(), findings.end(), [](const AuditFinding& a, const AuditFinding& b) {
        if (a.kind != b.kind) return a.kind < b.kind;
        return a.offending_ids < b.offending_ids;
    });
    return result;
}

std::string format_findings(const std::vector<AuditFinding>& findings) {
    std::ostringstream os;
    os << "kind\tsuggested_fix\toffending_ids\n";
    for (const auto& f : findings) {
        os << to_string(f.kind) << '\t' << to_string(f.suggested_fix) << '\t';
        for (std::size_t i = 0; i < f.offending_ids.size(); ++i) os << (i ? ";" : "") << f.offending_ids[i];
        os << '\n';
    }
    os << "# " << findings.size() << " finding(s)\n";
    return os.str();
}

std::vector<Correction> parse_corrections(std::string_view text) {
    std::vector<Correction> out;
    std::size_t line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto parts = split(t, ',');
        if (parts.size() != 3) {
            throw Error("correction manifest line " + std::to_string(line_no) + ": expected 'kind, old_id, new_id'");
        }
        out.push_back({trim(parts[0]), trim(parts[1]), trim(parts[2])});
    }
    return out;
}

std::vector<Correction> read_corrections(const fs::path& path) { return parse_corrections(read_file(path)); }

std::string write_corrections(const std::vector<Correction>& corrections) {
    std::string out = "# kind, old_id, new_id\n";
    for (const auto& c : corrections) out += c.kind + ", " + c.old_id + ", " + c.new_id + "\n";
    return out;
}

DatasetSummary summarize(const std::vector<LesionRecord>& records) {
    DatasetSummary s;
    for (const auto& r : records) {
        ++s.counts[static_cast<int>(r.label)][static_cast<int>(r.sex)];
        ++s.total;
    }
    return s;
}

std::string format_summary(const DatasetSummary& s) {
    std::ostringstream os;
    os << "lesion type\tfemale\tmale\ttotal\n";
    for (auto l : {Label::non_cancer, Label::cancer}) {
        const auto row = s.at(l, Sex::female) + s.at(l, Sex::male);
        os << to_string(l) << '\t' << s.at(l, Sex::female) << '\t' << s.at(l, Sex::male) << '\t' << row << '\n';
    }
    os << "total\t" << s.at(Label::non_cancer, Sex::female) + s.at(Label::cancer, Sex::female) << '\t'
       << s.at(Label::non_cancer, Sex::male) + s.at(Label::cancer, Sex::male) << '\t' << s.total << '\n';
    return os.str();
}

}  // namespace skinbias::dataset
