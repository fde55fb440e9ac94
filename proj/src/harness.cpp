#include "skinbias/harness.hpp"

#include "skinbias/csv.hpp"
#include "skinbias/imaging.hpp"
#include "skinbias/logreg.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace skinbias::harness {

namespace {

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size() && std::isfinite(d)) return d;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key " + key + ": expected a number, got '" + v + "'");
}

long long to_integer(const std::string& key, const std::string& v) {
    const double d = to_double(key, v);
    if (d != std::floor(d)) throw ConfigError("config key " + key + ": expected an integer, got '" + v + "'");
    return static_cast<long long>(d);
}

int to_positive_int(const std::string& key, const std::string& v) {
    const auto n = to_integer(key, v);
    if (n < 1) throw ConfigError("config key " + key + " must be at least 1");
    return static_cast<int>(n);
}

bool to_bool(const std::string& key, const std::string& v) {
    const auto s = to_lower(v);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("config key " + key + ": expected true or false, got '" + v + "'");
}

std::vector<double> to_double_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& part : split(v, ',')) {
        const auto t = trim(part);
        if (!t.empty()) out.push_back(to_double(key, t));
    }
    if (out.empty()) throw ConfigError("config key " + key + " must list at least one value");
    return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, const fs::path&)>;

fs::path resolve_path(const std::string& v, const fs::path& base) {
    if (v.empty()) return {};
    fs::path p(v);
    return p.is_relative() && !base.empty() ? base / p : p;
}

const std::map<std::string, std::pair<Setter, std::string>>& setters() {
    static const std::map<std::string, std::pair<Setter, std::string>> table = [] {
        std::map<std::string, std::pair<Setter, std::string>> t;
        auto path = [&](const char* key, fs::path RunConfig::*member, const char* help) {
            t[key] = {[member](RunConfig& c, const std::string& v, const fs::path& base) {
                          c.*member = resolve_path(v, base);
                      },
                      help};
        };
        path("paths.metadata", &RunConfig::metadata, "metadata CSV (img_id, lesion_id, patient_id, gender, diagnostic)");
        path("paths.images", &RunConfig::images, "image directory");
        path("paths.masks", &RunConfig::masks, "lesion mask directory");
        path("paths.output", &RunConfig::output, "output directory [out]");
        path("paths.corrections", &RunConfig::corrections, "correction manifest applied at ingest [none]");

        t["experiment.master_seed"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                           const auto n = to_integer("experiment.master_seed", v);
                                           if (n < 0) throw ConfigError("experiment.master_seed must be >= 0");
                                           c.master_seed = static_cast<std::uint64_t>(n);
                                       },
                                       "seed for every sampling step [20250101]"};
        t["experiment.ratios"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                      c.ratios = to_double_list("experiment.ratios", v);
                                      for (double r : c.ratios) {
                                          if (r < 0 || r > 1) throw ConfigError("experiment.ratios must lie in [0, 1]");
                                      }
                                  },
                                  "female-patient ratios [0,0.25,0.5,0.75,1]"};
        t["experiment.reps"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                    c.reps = to_positive_int("experiment.reps", v);
                                },
                                "repetitions per (test set, ratio) [5]"};
        t["experiment.testsets"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                        c.testsets = to_positive_int("experiment.testsets", v);
                                    },
                                    "number of held-out test sets [5]"};
        t["experiment.per_category"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                            c.per_category = to_positive_int("experiment.per_category", v);
                                        },
                                        "patients per (sex, cancer status) in each test set [26]"};
        t["experiment.sample_size"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                           if (v.empty() || to_lower(v) == "auto") {
                                               c.sample_size.reset();
                                           } else {
                                               c.sample_size = static_cast<std::size_t>(
                                                   to_positive_int("experiment.sample_size", v));
                                           }
                                       },
                                       "patients per trainval sample [auto: largest feasible]"};
        t["experiment.balance_classes"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                               c.balance_classes = to_bool("experiment.balance_classes", v);
                                           },
                                           "upsample non-cancerous lesions by augmentation [true]"};
        t["experiment.workers"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                       const auto n = to_integer("experiment.workers", v);
                                       if (n < 0) throw ConfigError("experiment.workers must be >= 0");
                                       c.workers = static_cast<unsigned>(n);
                                   },
                                   "worker threads, 0 = all cores [0]"};

        t["lr.C_grid"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                              c.C_grid = to_double_list("lr.C_grid", v);
                              for (double x : c.C_grid) {
                                  if (!(x > 0)) throw ConfigError("lr.C_grid values must be positive");
                              }
                          },
                          "inverse regularisation strengths [0.01,0.05,0.1,0.5,1,2,5]"};
        t["lr.folds"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                             c.folds = to_positive_int("lr.folds", v);
                             if (c.folds < 2) throw ConfigError("lr.folds must be at least 2");
                         },
                         "cross-validation folds for the C search [5]"};
        t["lr.tolerance"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                 c.tolerance = to_double("lr.tolerance", v);
                             },
                             "gradient-norm tolerance [1e-6]"};
        t["lr.max_iterations"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                      c.max_iterations = to_positive_int("lr.max_iterations", v);
                                  },
                                  "optimizer iteration cap [1000]"};

        t["features.kmeans_k"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                      c.features.kmeans.k = to_positive_int("features.kmeans_k", v);
                                  },
                                  "colour clusters for the dominant hue [5]"};
        t["features.kmeans_iterations"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                               c.features.kmeans.max_iterations =
                                                   to_positive_int("features.kmeans_iterations", v);
                                           },
                                           "k-means iteration cap [100]"};
        t["features.kmeans_seed"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                         c.features.kmeans.seed =
                                             static_cast<std::uint64_t>(to_integer("features.kmeans_seed", v));
                                     },
                                     "k-means++ seed [0]"};
        t["features.slic_segments"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                           c.features.slic.n_segments = to_positive_int("features.slic_segments", v);
                                       },
                                       "SLIC superpixels [100]"};
        t["features.slic_compactness"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                              c.features.slic.compactness = to_double("features.slic_compactness", v);
                                          },
                                          "SLIC compactness [10]"};
        t["features.slic_iterations"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                             c.features.slic.iterations = to_positive_int("features.slic_iterations", v);
                                         },
                                         "SLIC iterations [10]"};
        t["features.asymmetry_rotations"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                                 c.features.asymmetry_rotations =
                                                     to_positive_int("features.asymmetry_rotations", v);
                                             },
                                             "rotations averaged for mean_asymmetry [8]"};
        t["features.asymmetry_step"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                            c.features.asymmetry_step_degrees = to_double("features.asymmetry_step", v);
                                        },
                                        "rotation step in degrees [22.5]"};
        t["features.asymmetry_axis"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                            const auto s = to_lower(v);
                                            if (s == "vertical") {
                                                c.features.asymmetry_axis = features::FoldAxis::vertical;
                                            } else if (s == "horizontal") {
                                                c.features.asymmetry_axis = features::FoldAxis::horizontal;
                                            } else if (s == "both") {
                                                c.features.asymmetry_axis = features::FoldAxis::both;
                                            } else {
                                                throw ConfigError("features.asymmetry_axis: vertical, horizontal or both");
                                            }
                                        },
                                        "fold axis: vertical | horizontal | both [vertical]"};
        t["features.blue_veil_require_blue"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                                    c.features.blue_veil_require_blue =
                                                        to_bool("features.blue_veil_require_blue", v);
                                                },
                                                "additionally require B > R for blue-veil pixels [false]"};

        t["augment.blur_sigma_min"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                           c.augment.blur_sigma_min = to_double("augment.blur_sigma_min", v);
                                       },
                                       "Gaussian blur sigma lower bound [0.5]"};
        t["augment.blur_sigma_max"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                           c.augment.blur_sigma_max = to_double("augment.blur_sigma_max", v);
                                       },
                                       "Gaussian blur sigma upper bound [2.0]"};
        t["augment.sharpen_amount_min"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                               c.augment.sharpen_amount_min = to_double("augment.sharpen_amount_min", v);
                                           },
                                           "unsharp-mask amount lower bound [0.5]"};
        t["augment.sharpen_amount_max"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                               c.augment.sharpen_amount_max = to_double("augment.sharpen_amount_max", v);
                                           },
                                           "unsharp-mask amount upper bound [1.5]"};
        t["augment.sharpen_radius_sigma"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                                 c.augment.sharpen_radius_sigma =
                                                     to_double("augment.sharpen_radius_sigma", v);
                                             },
                                             "unsharp-mask blur sigma [1.0]"};

        t["selection.threshold"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                        c.selection.threshold = to_double("selection.threshold", v);
                                    },
                                    "redundancy correlation threshold [0.8]"};
        t["selection.max_partners"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                           c.selection.max_partners =
                                               static_cast<int>(to_integer("selection.max_partners", v));
                                       },
                                       "allowed highly correlated partners [3]"};
        t["selection.top_n"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                    c.selection.top_n = static_cast<std::size_t>(to_positive_int("selection.top_n", v));
                                },
                                "features kept after ranking [10]"};
        t["selection.freeze_paper_features"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                                    c.freeze_paper_features =
                                                        to_bool("selection.freeze_paper_features", v);
                                                },
                                                "use the fixed reference ten instead of per-sample selection [false]"};

        t["stats.alpha"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                c.alpha = to_double("stats.alpha", v);
                            },
                            "family-wise significance level [0.05]"};
        t["stats.pooled_slope_test"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                            c.pooled_slope_test = to_bool("stats.pooled_slope_test", v);
                                        },
                                        "regress on every run (true) or per (test set, ratio) means [true]"};
        t["stats.slope_family"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                       c.slope_family = to_positive_int("stats.slope_family", v);
                                   },
                                   "Bonferroni family size for slope tests [8]"};
        t["stats.mwu_family"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                     c.mwu_family = to_positive_int("stats.mwu_family", v);
                                 },
                                 "Bonferroni family size for Mann-Whitney tests [4]"};

        t["dataset.missing_sex"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                        const auto s = to_lower(v);
                                        if (s == "patient") {
                                            c.missing_sex = dataset::MissingSexPolicy::drop_patient;
                                        } else if (s == "lesion") {
                                            c.missing_sex = dataset::MissingSexPolicy::drop_lesion;
                                        } else {
                                            throw ConfigError("dataset.missing_sex: patient or lesion");
                                        }
                                    },
                                    "drop the whole patient or only the lesion when sex is missing [patient]"};
        t["dataset.mask_patterns"] = {[](RunConfig& c, const std::string& v, const fs::path&) {
                                          c.mask_patterns.clear();
                                          for (const auto& p : split(v, ';')) {
                                              if (!trim(p).empty()) c.mask_patterns.push_back(trim(p));
                                          }
                                          if (c.mask_patterns.empty()) {
                                              throw ConfigError("dataset.mask_patterns must not be empty");
                                          }
                                      },
                                      "';'-separated mask names, {stem} and {img_id} expand "
                                      "[{stem}_mask.png;{img_id};{stem}.png]"};
        return t;
    }();
    return table;
}

}  // namespace

RunConfig parse_config(std::string_view text, const fs::path& base_dir) {
    namespace pt = boost::property_tree;
    pt::ptree tree;
    std::istringstream in{std::string(text)};
    try {
        pt::ini_parser::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    RunConfig config;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config key '" + section + "' must be inside a [section]");
        for (const auto& [key, value] : body) {
            const auto full = section + "." + key;
            auto it = setters().find(full);
            if (it == setters().end()) throw ConfigError("unknown config key " + full);
            it->second.first(config, trim(value.data()), base_dir);
        }
    }
    return config;
}

RunConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse_config(read_file(path), fs::absolute(path).parent_path());
}

void apply_env_overrides(RunConfig& config) {
    auto env = [](const char* name, fs::path& target) {
        if (const char* v = std::getenv(name); v && *v) target = v;
    };
    env("SKINBIAS_METADATA", config.metadata);
    env("SKINBIAS_IMAGES", config.images);
    env("SKINBIAS_MASKS", config.masks);
    env("SKINBIAS_OUT", config.output);
}

std::string config_help() {
    std::string out = "Config file keys ([section] then key = value):\n";
    std::string current;
    for (const auto& [key, entry] : setters()) {
        const auto dot = key.find('.');
        const auto section = key.substr(0, dot);
        if (section != current) {
            out += "  [" + section + "]\n";
            current = section;
        }
        out += "    " + key.substr(dot + 1) + ": " + entry.second + "\n";
    }
    out += "Paths may be overridden with SKINBIAS_METADATA, SKINBIAS_IMAGES, SKINBIAS_MASKS, SKINBIAS_OUT.\n";
    return out;
}

void RunLedger::add(JobRecord job) {
    std::lock_guard lock(mutex_);
    jobs_.push_back(std::move(job));
}

bool RunLedger::failed() const {
    std::lock_guard lock(mutex_);
    return std::any_of(jobs_.begin(), jobs_.end(), [](const JobRecord& j) { return j.status == "failed"; });
}

std::vector<JobRecord> RunLedger::jobs() const {
    std::lock_guard lock(mutex_);
    auto out = jobs_;
    std::stable_sort(out.begin(), out.end(), [](const JobRecord& a, const JobRecord& b) {
        return std::tie(a.stage, a.key) < std::tie(b.stage, b.key);
    });
    return out;
}

std::string RunLedger::to_json(const RunConfig& config) const {
    nlohmann::ordered_json j;
    j["master_seed"] = config.master_seed;
    j["ratios"] = config.ratios;
    j["reps"] = config.reps;
    j["testsets"] = config.testsets;
    j["output"] = config.output.string();
    nlohmann::ordered_json jobs = nlohmann::ordered_json::array();
    std::set<std::string> artifacts;
    std::size_t failed = 0;
    for (const auto& job : this->jobs()) {
        nlohmann::ordered_json e;
        e["stage"] = job.stage;
        e["key"] = job.key;
        e["status"] = job.status;
        e["seed"] = job.seed;
        e["seconds"] = job.seconds;
        e["artifacts"] = job.artifacts;
        if (!job.error.empty()) e["error"] = job.error;
        jobs.push_back(std::move(e));
        artifacts.insert(job.artifacts.begin(), job.artifacts.end());
        failed += job.status == "failed";
    }
    j["failed_jobs"] = failed;
    j["artifacts"] = std::vector<std::string>(artifacts.begin(), artifacts.end());
    j["jobs"] = std::move(jobs);
    return j.dump(2) + "\n";
}

namespace {

const std::vector<std::string>& id_columns() {
    static const std::vector<std::string> cols = {"image_id", "lesion_id",    "patient_id", "sex",      "diagnostic",
                                                  "label",    "is_augmented", "parent",     "transform", "parameter"};
    return cols;
}

}  // namespace

std::string write_feature_table(const std::vector<FeatureRow>& rows) {
    const auto& names = features::canonical_names();
    auto header = id_columns();
    header.insert(header.end(), names.begin(), names.end());
    std::string out = csv::join_row(header);
    for (const auto& row : rows) {
        const auto& r = row.record;
        std::vector<std::string> f = {r.image_id,
                                      r.lesion_id,
                                      r.patient_id,
                                      std::string(to_string(r.sex)),
                                      std::string(dataset::to_string(r.diagnosis)),
                                      r.label == Label::cancer ? "1" : "0",
                                      r.is_augmented ? "1" : "0",
                                      row.copy ? row.copy->parent : "",
                                      row.copy ? std::string(imaging::to_string(row.copy->transform)) : "",
                                      row.copy ? format_double(row.copy->parameter, 17) : ""};
        for (const auto& n : names) f.push_back(format_double(row.values.at(n), 17));
        out += csv::join_row(f);
    }
    return out;
}

std::vector<FeatureRow> parse_feature_table(std::string_view text, std::string_view source) {
    const auto t = csv::parse(text);
    std::map<std::string, std::size_t> col;
    for (const auto& c : id_columns()) col[c] = t.require_column(c, source);
    for (const auto& n : features::canonical_names()) col[n] = t.require_column(n, source);
    std::vector<FeatureRow> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& f = t.rows[i];
        const auto where = std::string(source) + " line " + std::to_string(i + 2);
        auto number = [&](const std::string& name) {
            const auto& v = f[col.at(name)];
            try {
                std::size_t used = 0;
                const double d = std::stod(v, &used);
                if (used == v.size()) return d;
            } catch (const std::exception&) {
            }
            throw Error(where + ": bad value for " + name);
        };
        FeatureRow row;
        auto& r = row.record;
        r.image_id = f[col.at("image_id")];
        r.lesion_id = f[col.at("lesion_id")];
        r.patient_id = f[col.at("patient_id")];
        try {
            r.sex = parse_sex(f[col.at("sex")]);
        } catch (const Error& e) {
            throw Error(where + ": " + e.what());
        }
        const auto d = dataset::parse_diagnosis(f[col.at("diagnostic")]);
        if (!d) throw Error(where + ": unknown diagnosis");
        r.diagnosis = *d;
        r.label = number("label") != 0 ? Label::cancer : Label::non_cancer;
        r.is_augmented = number("is_augmented") != 0;
        if (r.is_augmented) {
            splits::AugmentedCopy c;
            c.image_id = r.image_id;
            c.parent = f[col.at("parent")];
            try {
                c.transform = imaging::parse_transform(f[col.at("transform")]);
            } catch (const Error& e) {
                throw Error(where + ": " + e.what());
            }
            c.parameter = number("parameter");
            r.augment_parent = c.parent;
            row.copy = std::move(c);
        }
        for (const auto& n : features::canonical_names()) row.values.set(n, number(n));
        out.push_back(std::move(row));
    }
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string rel(const fs::path& p, const fs::path& root) { return p.lexically_relative(root).generic_string(); }

}  // namespace

Pipeline::Pipeline(RunConfig config) : config_(std::move(config)), paths_{config_.output} {}

void Pipeline::require_dataset_paths(bool masks) const {
    if (config_.metadata.empty()) throw ConfigError("no metadata file configured (paths.metadata or --metadata)");
    if (config_.images.empty()) throw ConfigError("no image directory configured (paths.images or --images)");
    if (masks && config_.masks.empty()) throw ConfigError("no mask directory configured (paths.masks or --masks)");
    if (!fs::exists(config_.metadata)) throw Error("metadata file not found: " + config_.metadata.string());
    if (!fs::is_directory(config_.images)) throw Error("image directory not found: " + config_.images.string());
    if (masks && !fs::is_directory(config_.masks)) throw Error("mask directory not found: " + config_.masks.string());
}

dataset::AuditResult Pipeline::audit() {
    require_dataset_paths(false);
    const auto start = Clock::now();
    auto result = dataset::audit(config_.metadata, config_.images, resolve_workers(config_.workers));
    fs::create_directories(paths_.root);
    write_file_atomic(paths_.audit(), dataset::format_findings(result.findings));
    write_file_atomic(paths_.audit_corrections(), dataset::write_corrections(result.corrections));
    ledger_.add({"audit", "audit", "ok", 0, seconds_since(start),
                 {rel(paths_.audit(), paths_.root), rel(paths_.audit_corrections(), paths_.root)},
                 std::to_string(result.findings.size()) + " finding(s)"});
    return result;
}

std::vector<dataset::LesionRecord> Pipeline::ingest() {
    if (records_) return *records_;
    require_dataset_paths(true);
    const auto start = Clock::now();
    dataset::IngestOptions options;
    options.missing_sex = config_.missing_sex;
    options.mask_patterns = config_.mask_patterns;
    if (!config_.corrections.empty()) options.corrections = dataset::read_corrections(config_.corrections);
    auto records = dataset::ingest(config_.metadata, config_.images, config_.masks, options);
    const auto summary = dataset::summarize(records);
    fs::create_directories(paths_.root);
    write_file_atomic(paths_.dataset_summary(), dataset::format_summary(summary));
    write_file_atomic(paths_.cleaned_metadata(), dataset::write_metadata(records));
    ledger_.add({"ingest", "ingest", "ok", 0, seconds_since(start),
                 {rel(paths_.dataset_summary(), paths_.root), rel(paths_.cleaned_metadata(), paths_.root)},
                 ""});
    log_info("ingested " + std::to_string(records.size()) + " lesions");
    records_ = std::move(records);
    return *records_;
}

FeatureTable Pipeline::load_or_extract_features(const std::vector<dataset::LesionRecord>& records) {
    // Cached rows are reused only when they describe the same lesion record.
    std::map<std::string, FeatureRow> cache;
    if (!config_.force && fs::exists(paths_.features())) {
        try {
            for (auto& row : parse_feature_table(read_file(paths_.features()), paths_.features().string())) {
                cache.emplace(row.record.image_id, std::move(row));
            }
        } catch (const std::exception& e) {
            log_warning("ignoring unreadable feature cache: " + std::string(e.what()));
        }
    }
    std::vector<const dataset::LesionRecord*> todo;
    for (const auto& r : records) {
        auto it = cache.find(r.image_id);
        if (it == cache.end() || !(it->second.record == r)) todo.push_back(&r);
    }
    if (!todo.empty()) log_info("extracting features for " + std::to_string(todo.size()) + " lesions");
    std::vector<std::optional<features::FeatureVector>> results(todo.size());
    std::vector<std::string> errors(todo.size());
    parallel_for(todo.size(), resolve_workers(config_.workers), [&](std::size_t i) {
        const auto& r = *todo[i];
        try {
            const auto mask = dataset::resolve_mask(config_.masks, r.image_id, config_.mask_patterns);
            const auto image = imaging::load_masked_image(config_.images / r.image_id, mask);
            results[i] = features::extract_all(image, config_.features, r.lesion_id);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < todo.size(); ++i) {
        if (results[i]) {
            cache[todo[i]->image_id] = {*todo[i], std::nullopt, std::move(*results[i])};
        } else {
            cache.erase(todo[i]->image_id);
            log_warning("dropping " + todo[i]->image_id + ": " + errors[i]);
            ledger_.add({"extract", todo[i]->image_id, "dropped", 0, 0.0, {}, errors[i]});
        }
    }
    std::vector<FeatureRow> rows;
    FeatureTable out;
    for (const auto& r : records) {
        if (auto it = cache.find(r.image_id); it != cache.end()) {
            rows.push_back(it->second);
            out[r.image_id] = it->second.values;
        }
    }
    write_file_atomic(paths_.features(), write_feature_table(rows));
    return out;
}

FeatureTable Pipeline::extract() {
    if (features_) return *features_;
    const auto records = ingest();
    const auto start = Clock::now();
    auto table = load_or_extract_features(records);
    ledger_.add({"extract", "features", "ok", 0, seconds_since(start), {rel(paths_.features(), paths_.root)},
                 std::to_string(table.size()) + " of " + std::to_string(records.size()) + " lesions"});
    features_ = std::move(table);
    return *features_;
}

splits::SplitPlan Pipeline::split() {
    if (plan_) return *plan_;
    const auto records = ingest();
    const auto table = extract();
    std::vector<dataset::LesionRecord> usable;
    for (const auto& r : records) {
        if (table.contains(r.image_id)) usable.push_back(r);
    }
    const auto start = Clock::now();
    splits::SplitParams params;
    params.master_seed = config_.master_seed;
    params.testsets = config_.testsets;
    params.per_category = config_.per_category;
    params.ratios = config_.ratios;
    params.reps = config_.reps;
    params.sample_size = config_.sample_size;
    params.balance_classes = config_.balance_classes;
    params.augment = config_.augment;
    auto plan = splits::build_plan(usable, params);
    const auto violations = splits::verify_no_leakage(plan, usable);
    if (!violations.empty()) {
        std::string msg = "split plan violates leakage rules:";
        for (const auto& v : violations) {
            msg += " " + std::string(splits::to_string(v.kind)) + "(" + v.where + ", " + v.lesion + ")";
        }
        throw Error(msg);
    }
    write_file_atomic(paths_.manifest(), splits::to_json(plan));
    ledger_.add({"split", "plan", "ok", config_.master_seed, seconds_since(start),
                 {rel(paths_.manifest(), paths_.root)},
                 std::to_string(plan.samples.size()) + " samples, sample size " + std::to_string(plan.sample_size)});
    log_info("split plan: " + std::to_string(plan.test_sets.size()) + " test sets, " +
             std::to_string(plan.samples.size()) + " trainval samples of " + std::to_string(plan.sample_size) +
             " patients");
    plan_ = std::move(plan);
    return *plan_;
}

FeatureTable Pipeline::augmented_features(const splits::SplitPlan& plan) {
    const auto records = splits::augmented_records(plan);
    std::map<std::string, splits::AugmentedCopy> needed;
    for (const auto& s : plan.samples) {
        for (const auto& a : s.augmented) needed.emplace(a.image_id, a);
    }
    std::map<std::string, FeatureRow> cache;
    if (!config_.force && fs::exists(paths_.augmented_features())) {
        try {
            for (auto& row : parse_feature_table(read_file(paths_.augmented_features()),
                                                 paths_.augmented_features().string())) {
                if (row.copy) cache.emplace(row.record.image_id, std::move(row));
            }
        } catch (const std::exception& e) {
            log_warning("ignoring unreadable augmented feature cache: " + std::string(e.what()));
        }
    }
    std::vector<const dataset::LesionRecord*> todo;
    for (const auto& r : records) {
        const auto& copy = needed.at(r.image_id);
        auto it = cache.find(r.image_id);
        const bool fresh = it != cache.end() && it->second.record == r && it->second.copy->parent == copy.parent &&
                           it->second.copy->transform == copy.transform &&
                           format_double(it->second.copy->parameter, 17) == format_double(copy.parameter, 17);
        if (!fresh) todo.push_back(&r);
    }
    if (!todo.empty()) log_info("extracting features for " + std::to_string(todo.size()) + " augmented copies");
    std::vector<features::FeatureVector> results(todo.size());
    parallel_for(todo.size(), resolve_workers(config_.workers), [&](std::size_t i) {
        const auto& copy = needed.at(todo[i]->image_id);
        const auto mask = dataset::resolve_mask(config_.masks, copy.parent, config_.mask_patterns);
        const auto image = imaging::load_masked_image(config_.images / copy.parent, mask);
        const auto augmented = imaging::apply_transform(image, copy.transform, copy.parameter, config_.augment);
        results[i] = features::extract_all(augmented, config_.features, copy.image_id);
    });
    for (std::size_t i = 0; i < todo.size(); ++i) {
        cache[todo[i]->image_id] = {*todo[i], needed.at(todo[i]->image_id), std::move(results[i])};
    }
    std::vector<FeatureRow> rows;
    FeatureTable out;
    for (const auto& r : records) {
        rows.push_back(cache.at(r.image_id));
        out[r.image_id] = rows.back().values;
    }
    write_file_atomic(paths_.augmented_features(), write_feature_table(rows));
    return out;
}

namespace {

selection::FeatureMatrix matrix_of(const std::vector<const features::FeatureVector*>& rows) {
    selection::FeatureMatrix m;
    m.names = features::canonical_names();
    m.columns.assign(m.names.size(), std::vector<double>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < m.names.size(); ++j) m.columns[j][i] = rows[i]->at(m.names[j]);
    }
    return m;
}

logreg::Matrix to_eigen(const selection::FeatureMatrix& m) {
    logreg::Matrix X(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.names.size()));
    for (std::size_t j = 0; j < m.names.size(); ++j) {
        for (std::size_t i = 0; i < m.rows(); ++i) {
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m.columns[j][i];
        }
    }
    return X;
}

}  // namespace

void Pipeline::run_job(const splits::SplitPlan& plan, const splits::TrainvalSample& sample, const FeatureTable& base,
                       const FeatureTable& augmented) {
    const metrics::RunKey key{"LR", sample.testset_id, sample.ratio, sample.rep};
    const auto stem = key.file_stem();
    const auto prediction_path = paths_.predictions() / "LR" / (stem + ".csv");
    const auto run_dir = paths_.runs() / "LR" / stem;
    const std::vector<std::string> artifacts = {rel(prediction_path, paths_.root),
                                                rel(run_dir / "model.json", paths_.root),
                                                rel(run_dir / "selection.json", paths_.root)};
    if (!config_.force && fs::exists(prediction_path)) {
        ledger_.add({"train-lr", stem, "skipped", sample.seed, 0.0, artifacts, "prediction file exists"});
        return;
    }
    const auto start = Clock::now();
    try {
        std::unordered_map<std::string, const dataset::LesionRecord*> by_image;
        for (const auto& r : plan.records) by_image[r.image_id] = &r;
        auto lookup = [&](const FeatureTable& t, const std::string& id) -> const features::FeatureVector* {
            auto it = t.find(id);
            if (it == t.end()) throw Error("no features for " + id);
            return &it->second;
        };

        std::vector<const features::FeatureVector*> rows;
        std::vector<int> y;
        std::vector<std::string> groups;
        for (const auto& id : sample.lesions) {
            const auto& r = *by_image.at(id);
            rows.push_back(lookup(base, id));
            y.push_back(r.label == Label::cancer);
            groups.push_back(r.patient_id);
        }
        for (const auto& a : sample.augmented) {
            const auto& r = *by_image.at(a.parent);
            rows.push_back(lookup(augmented, a.image_id));
            y.push_back(r.label == Label::cancer);
            groups.push_back(r.patient_id);
        }
        const auto train = matrix_of(rows);

        selection::SelectionResult sel;
        if (config_.freeze_paper_features) {
            sel.selected = features::reference_selection();
        } else {
            sel = selection::select_features(train, y, config_.selection, features::canonical_names());
        }
        std::vector<std::string> dropped;
        const auto standardizer = selection::fit_standardizer(train.subset(sel.selected), &dropped);
        if (standardizer.names.empty()) throw Error("no usable features after selection");
        const auto X = to_eigen(standardizer.apply(train.subset(standardizer.names)));

        const logreg::FitOptions options{config_.tolerance, config_.max_iterations};
        const auto grid =
            logreg::grid_search(X, y, groups, config_.C_grid, config_.folds, mix_seed(sample.seed, "cv"), options);
        auto [model, report] = logreg::fit(X, y, grid.best_C, options, standardizer.names);
        report.grid_scores = grid.grid_scores;

        const auto& ts = plan.test_set(sample.testset_id);
        std::vector<const features::FeatureVector*> test_rows;
        for (const auto& id : ts.lesions) test_rows.push_back(lookup(base, id));
        const auto test = matrix_of(test_rows).subset(standardizer.names);
        const auto probs = logreg::predict_proba(model, to_eigen(standardizer.apply(test)), standardizer.names);

        metrics::PredictionSet predictions;
        predictions.key = key;
        for (std::size_t i = 0; i < ts.lesions.size(); ++i) {
            const auto& r = *by_image.at(ts.lesions[i]);
            predictions.rows.push_back({r.image_id, r.patient_id, r.sex, r.label == Label::cancer ? 1 : 0, probs[i]});
        }

        auto sel_json = nlohmann::ordered_json::parse(selection::to_json(sel));
        sel_json["standardized"] = standardizer.names;
        sel_json["dropped_constant_after_selection"] = dropped;
        sel_json["mean"] = standardizer.mean;
        sel_json["std"] = standardizer.std;
        sel_json["train_rows"] = rows.size();
        sel_json["augmented_rows"] = sample.augmented.size();
        fs::create_directories(run_dir);
        write_file_atomic(run_dir / "selection.json", sel_json.dump(2) + "\n");
        write_file_atomic(run_dir / "model.json", logreg::to_json(model, report));
        fs::create_directories(prediction_path.parent_path());
        write_file_atomic(prediction_path, metrics::write_predictions(predictions));
        ledger_.add({"train-lr", stem, "ok", sample.seed, seconds_since(start), artifacts,
                     report.converged ? "" : "optimizer did not converge"});
    } catch (const std::exception& e) {
        log_warning("job " + stem + " failed: " + e.what());
        ledger_.add({"train-lr", stem, "failed", sample.seed, seconds_since(start), {}, e.what()});
    }
}

void Pipeline::train_lr() {
    const auto plan = split();
    const auto base = extract();
    const auto augmented = augmented_features(plan);
    log_info("training " + std::to_string(plan.samples.size()) + " LR jobs");
    parallel_for(plan.samples.size(), resolve_workers(config_.workers),
                 [&](std::size_t i) { run_job(plan, plan.samples[i], base, augmented); });
}

std::vector<fs::path> prediction_files(const std::vector<fs::path>& dirs) {
    std::set<fs::path> files;
    for (const auto& d : dirs) {
        if (fs::is_regular_file(d)) {
            files.insert(fs::weakly_canonical(d));
            continue;
        }
        if (!fs::is_directory(d)) continue;
        for (const auto& e : fs::recursive_directory_iterator(d)) {
            if (e.is_regular_file() && e.path().extension() == ".csv") files.insert(fs::weakly_canonical(e.path()));
        }
    }
    return {files.begin(), files.end()};
}

std::vector<metrics::MetricResult> Pipeline::evaluate(const std::vector<fs::path>& extra_dirs) {
    std::vector<fs::path> dirs = {paths_.predictions()};
    dirs.insert(dirs.end(), extra_dirs.begin(), extra_dirs.end());
    const auto files = prediction_files(dirs);
    for (const auto& d : extra_dirs) {
        if (!fs::exists(d)) throw ConfigError("prediction path not found: " + d.string());
    }
    std::vector<std::optional<metrics::PredictionSet>> sets(files.size());
    std::vector<std::string> errors(files.size());
    parallel_for(files.size(), resolve_workers(config_.workers), [&](std::size_t i) {
        try {
            sets[i] = metrics::read_predictions(files[i]);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    std::map<metrics::RunKey, fs::path> seen;
    std::vector<metrics::MetricResult> results;
    for (std::size_t i = 0; i < files.size(); ++i) {
        if (!sets[i]) {
            ledger_.add({"evaluate", files[i].string(), "failed", 0, 0.0, {}, errors[i]});
            log_warning(errors[i]);
            continue;
        }
        auto [it, inserted] = seen.emplace(sets[i]->key, files[i]);
        if (!inserted) {
            const auto msg = files[i].string() + ": run key duplicates " + it->second.string();
            ledger_.add({"evaluate", files[i].string(), "failed", 0, 0.0, {}, msg});
            log_warning(msg);
            continue;
        }
        auto r = metrics::evaluate(*sets[i]);
        results.insert(results.end(), r.begin(), r.end());
    }
    fs::create_directories(paths_.root);
    write_file_atomic(paths_.metrics(), metrics::write_metric_table(results));
    ledger_.add({"evaluate", "metrics", "ok", 0, 0.0, {rel(paths_.metrics(), paths_.root)},
                 std::to_string(seen.size()) + " prediction file(s)"});
    return metrics::parse_metric_table(metrics::write_metric_table(results));
}

stats::StatReport Pipeline::stats() {
    if (!fs::exists(paths_.metrics())) throw Error("metrics table not found: " + paths_.metrics().string());
    const auto results = metrics::parse_metric_table(read_file(paths_.metrics()));
    stats::ReportOptions options;
    options.alpha = config_.alpha;
    options.slope_family = config_.slope_family;
    options.mwu_family = config_.mwu_family;
    options.pooled = config_.pooled_slope_test;
    auto report = stats::build_report(results, options);
    write_file_atomic(paths_.stats_text(), stats::format_report(report));
    write_file_atomic(paths_.stats_json(), stats::report_to_json(report));
    ledger_.add({"stats", "stats", "ok", 0, 0.0,
                 {rel(paths_.stats_text(), paths_.root), rel(paths_.stats_json(), paths_.root)}, ""});
    return report;
}

void Pipeline::report() {
    if (!fs::exists(paths_.metrics())) throw Error("metrics table not found: " + paths_.metrics().string());
    const auto results = metrics::parse_metric_table(read_file(paths_.metrics()));
    if (results.empty()) throw Error("metrics table is empty");
    const auto summary = metrics::format_summary_table(metrics::aggregate(results)) + "\n" + coverage_summary(results);
    write_file_atomic(paths_.summary(), summary);
    std::vector<std::string> artifacts = {rel(paths_.summary(), paths_.root)};
    for (const auto& p : emit_plots(results, paths_.plots())) artifacts.push_back(rel(p, paths_.root));
    ledger_.add({"report", "report", "ok", 0, 0.0, artifacts, ""});
}

void Pipeline::run_all() {
    auto stage = [&](const char* name, const std::function<void()>& fn) {
        try {
            fn();
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception& e) {
            ledger_.add({name, name, "failed", 0, 0.0, {}, e.what()});
            throw;
        }
    };
    stage("audit", [&] {
        const auto found = audit().findings.size();
        if (found) log_warning(std::to_string(found) + " audit finding(s); see " + paths_.audit().string());
    });
    stage("ingest", [&] { ingest(); });
    stage("extract", [&] { extract(); });
    stage("split", [&] { split(); });
    stage("train-lr", [&] { train_lr(); });
    stage("evaluate", [&] { evaluate(); });
    stage("stats", [&] { stats(); });
    stage("report", [&] { report(); });
}

void Pipeline::write_ledger() const {
    fs::create_directories(paths_.root);
    write_file_atomic(paths_.ledger(), ledger_.to_json(config_));
}

std::vector<ValidationIssue> validate_predictions(const std::vector<fs::path>& dirs, const splits::SplitPlan* plan) {
    std::vector<ValidationIssue> issues;
    std::unordered_map<std::string, const dataset::LesionRecord*> by_image;
    if (plan) {
        for (const auto& r : plan->records) by_image[r.image_id] = &r;
    }
    const auto files = prediction_files(dirs);
    if (files.empty()) issues.push_back({{}, "no prediction files found"});
    std::map<metrics::RunKey, fs::path> seen;
    for (const auto& f : files) {
        metrics::PredictionSet set;
        try {
            set = metrics::read_predictions(f);
        } catch (const std::exception& e) {
            issues.push_back({f, e.what()});
            continue;
        }
        if (auto [it, inserted] = seen.emplace(set.key, f); !inserted) {
            issues.push_back({f, "run key duplicates " + it->second.string()});
        }
        if (!plan) continue;
        const splits::TestSet* ts = nullptr;
        for (const auto& t : plan->test_sets) {
            if (t.id == set.key.testset_id) ts = &t;
        }
        if (!ts) {
            issues.push_back({f, "test set " + std::to_string(set.key.testset_id) + " is not in the split manifest"});
            continue;
        }
        std::set<std::string> expected(ts->lesions.begin(), ts->lesions.end());
        std::set<std::string> got;
        for (const auto& row : set.rows) {
            got.insert(row.image_id);
            if (!expected.contains(row.image_id)) {
                issues.push_back({f, "image " + row.image_id + " is not in test set " + std::to_string(ts->id)});
                continue;
            }
            const auto& r = *by_image.at(row.image_id);
            if (r.patient_id != row.patient_id || r.sex != row.sex || (r.label == Label::cancer) != (row.true_label == 1)) {
                issues.push_back({f, "image " + row.image_id + " disagrees with the manifest record"});
            }
        }
        for (const auto& id : expected) {
            if (!got.contains(id)) issues.push_back({f, "test lesion " + id + " missing"});
        }
    }
    return issues;
}

namespace {

struct Frame {
    double width = 420, height = 320, left = 60, right = 20, top = 40, bottom = 50;
    double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
    double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

}  // namespace

std::string render_panel(const std::vector<metrics::MetricResult>& results, const std::string& model_id, Sex sex) {
    std::vector<double> xs, ys;
    for (const auto& r : results) {
        if (r.key.model_id == model_id && r.sex == sex && r.auroc) {
            xs.push_back(r.key.ratio);
            ys.push_back(*r.auroc);
        }
    }
    if (xs.empty()) return {};
    Frame f;
    const auto [lo, hi] = std::minmax_element(ys.begin(), ys.end());
    f.y0 = std::max(0.0, std::floor(*lo * 10.0 - 1e-9) / 10.0);
    f.y1 = std::min(1.0, std::ceil(*hi * 10.0 + 1e-9) / 10.0);
    if (f.y1 - f.y0 < 0.1) f.y1 = f.y0 + 0.1;
    f.x0 = -0.05;
    f.x1 = 1.05;

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.width << "\" height=\"" << f.height
       << "\" viewBox=\"0 0 " << f.width << ' ' << f.height << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    os << "<text x=\"" << f.width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"13\">" << model_id
       << ", AUROC on " << to_string(sex) << " patients</text>\n";
    os << "<g stroke=\"#999\" stroke-width=\"0.5\">\n";
    for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        os << "<line x1=\"" << num(f.px(x)) << "\" y1=\"" << num(f.py(f.y0)) << "\" x2=\"" << num(f.px(x))
           << "\" y2=\"" << num(f.py(f.y1)) << "\"/>\n";
    }
    const int ticks = static_cast<int>(std::lround((f.y1 - f.y0) * 10.0));
    for (int i = 0; i <= ticks; ++i) {
        const double y = f.y0 + 0.1 * i;
        os << "<line x1=\"" << num(f.px(f.x0)) << "\" y1=\"" << num(f.py(y)) << "\" x2=\"" << num(f.px(f.x1))
           << "\" y2=\"" << num(f.py(y)) << "\"/>\n";
    }
    os << "</g>\n<g fill=\"#333\">\n";
    for (double x : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        os << "<text x=\"" << num(f.px(x)) << "\" y=\"" << num(f.height - f.bottom + 15)
           << "\" text-anchor=\"middle\">" << x << "</text>\n";
    }
    for (int i = 0; i <= ticks; ++i) {
        const double y = f.y0 + 0.1 * i;
        os << "<text x=\"" << num(f.left - 6) << "\" y=\"" << num(f.py(y) + 4) << "\" text-anchor=\"end\">"
           << num(y).substr(0, 3) << "</text>\n";
    }
    os << "<text x=\"" << num((f.left + f.width - f.right) / 2) << "\" y=\"" << num(f.height - 12)
       << "\" text-anchor=\"middle\">female ratio in training</text>\n";
    os << "<text transform=\"translate(16 " << num((f.top + f.height - f.bottom) / 2)
       << ") rotate(-90)\" text-anchor=\"middle\">AUROC</text>\n</g>\n";

    os << "<g fill=\"#1f77b4\" fill-opacity=\"0.6\">\n";
    for (std::size_t i = 0; i < xs.size(); ++i) {
        os << "<circle cx=\"" << num(f.px(xs[i])) << "\" cy=\"" << num(f.py(ys[i])) << "\" r=\"3\"/>\n";
    }
    os << "</g>\n";

    const bool x_varies = std::any_of(xs.begin(), xs.end(), [&](double x) { return x != xs.front(); });
    if (xs.size() >= 3 && x_varies) {
        const auto fit = stats::slope_t_test(xs, ys);
        auto line_y = [&](double x) { return std::clamp(fit.intercept + fit.slope * x, f.y0, f.y1); };
        os << "<line x1=\"" << num(f.px(0)) << "\" y1=\"" << num(f.py(line_y(0))) << "\" x2=\"" << num(f.px(1))
           << "\" y2=\"" << num(f.py(line_y(1))) << "\" stroke=\"#d62728\" stroke-width=\"1.5\"/>\n";
        char buf[96];
        std::snprintf(buf, sizeof buf, "slope %.4f, p %.3g", fit.slope, fit.p_value);
        os << "<text x=\"" << num(f.width - f.right) << "\" y=\"" << num(f.top - 4)
           << "\" text-anchor=\"end\" fill=\"#d62728\">" << buf << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::vector<fs::path> emit_plots(const std::vector<metrics::MetricResult>& results, const fs::path& dir) {
    std::set<std::string> models;
    for (const auto& r : results) models.insert(r.key.model_id);
    std::vector<fs::path> written;
    for (const auto& m : models) {
        for (auto sex : {Sex::female, Sex::male}) {
            const auto svg = render_panel(results, m, sex);
            if (svg.empty()) {
                log_warning("no AUROC values for " + m + " " + std::string(to_string(sex)) + ": panel omitted");
                continue;
            }
            fs::create_directories(dir);
            const auto path = dir / ("auroc_" + m + "_" + std::string(to_string(sex)) + ".svg");
            write_file_atomic(path, svg);
            written.push_back(path);
        }
    }
    return written;
}

std::string coverage_summary(const std::vector<metrics::MetricResult>& results) {
    std::map<std::string, std::set<metrics::RunKey>> runs;
    for (const auto& r : results) runs[r.key.model_id].insert(r.key);
    std::string out = "coverage\n";
    for (const auto& [model, keys] : runs) {
        std::set<int> testsets;
        std::set<std::string> ratios;
        std::set<int> reps;
        for (const auto& k : keys) {
            testsets.insert(k.testset_id);
            ratios.insert(format_ratio(k.ratio));
            reps.insert(k.rep);
        }
        auto join = [](const auto& s) {
            std::string x;
            for (const auto& v : s) {
                if (!x.empty()) x += ",";
                if constexpr (std::is_same_v<std::decay_t<decltype(v)>, std::string>) {
                    x += v;
                } else {
                    x += std::to_string(v);
                }
            }
            return x;
        };
        out += model + ": " + std::to_string(keys.size()) + " runs; test sets {" + join(testsets) + "}; ratios {" +
               join(ratios) + "}; reps {" + join(reps) + "}\n";
    }
    return out;
}

}  // namespace skinbias::harness
