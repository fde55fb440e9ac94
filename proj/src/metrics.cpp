#include "skinbias/metrics.hpp"

#include "skinbias/csv.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace skinbias::metrics {

std::string RunKey::file_stem() const {
    return std::to_string(testset_id) + "_" + format_ratio(ratio) + "_" + std::to_string(rep);
}

std::string write_predictions(const PredictionSet& set) {
    std::string out(prediction_header);
    out.push_back('\n');
    const auto ratio = format_ratio(set.key.ratio);
    for (const auto& r : set.rows) {
        out += csv::join_row({r.image_id, r.patient_id, std::string(to_string(r.sex)), std::to_string(r.true_label),
                              format_double(r.prob_cancer, 10), set.key.model_id, std::to_string(set.key.testset_id),
                              ratio, std::to_string(set.key.rep)});
    }
    return out;
}

namespace {

double parse_number(const std::string& s, std::string_view what, std::string_view where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(std::string(where) + ": invalid " + std::string(what) + " '" + s + "'");
    }
}

int parse_int(const std::string& s, std::string_view what, std::string_view where) {
    const double v = parse_number(s, what, where);
    if (v != std::floor(v)) throw Error(std::string(where) + ": " + std::string(what) + " must be an integer");
    return static_cast<int>(v);
}

}  // namespace

PredictionSet parse_predictions(std::string_view text, std::string_view source) {
    const auto table = csv::parse(text);
    const auto expected = split(prediction_header, ',');
    if (table.header != expected) {
        throw Error(std::string(source) + ": header must be '" + std::string(prediction_header) + "'");
    }
    if (table.rows.empty()) throw Error(std::string(source) + ": no prediction rows");
    PredictionSet set;
    std::set<std::string> seen;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& f = table.rows[i];
        const auto where = std::string(source) + " line " + std::to_string(i + 2);
        PredictionRow row;
        row.image_id = f[0];
        row.patient_id = f[1];
        try {
            row.sex = parse_sex(f[2]);
        } catch (const Error& e) {
            throw Error(where + ": " + e.what());
        }
        row.true_label = parse_int(f[3], "true_label", where);
        if (row.true_label != 0 && row.true_label != 1) throw Error(where + ": true_label must be 0 or 1");
        row.prob_cancer = parse_number(f[4], "prob_cancer", where);
        if (!(row.prob_cancer >= 0.0 && row.prob_cancer <= 1.0)) throw Error(where + ": prob_cancer outside [0,1]");
        RunKey key{f[5], parse_int(f[6], "testset_id", where), parse_number(f[7], "ratio", where),
                   parse_int(f[8], "rep", where)};
        if (key.model_id.empty()) throw Error(where + ": empty model_id");
        if (i == 0) {
            set.key = key;
        } else if (!(key == set.key)) {
            throw Error(where + ": run key differs from the first row");
        }
        if (!seen.insert(row.image_id).second) throw Error(where + ": duplicate image_id " + row.image_id);
        set.rows.push_back(std::move(row));
    }
    return set;
}

PredictionSet read_predictions(const std::filesystem::path& path) {
    return parse_predictions(read_file(path), path.string());
}

double accuracy(std::span<const double> probs, std::span<const int> labels, double threshold) {
    if (probs.size() != labels.size()) throw Error("accuracy: length mismatch");
    if (probs.empty()) throw Error("accuracy: no predictions");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) correct += (probs[i] >= threshold ? 1 : 0) == labels[i];
    return static_cast<double>(correct) / static_cast<double>(probs.size());
}

std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error("auroc: length mismatch");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]]) pos_rank_sum += midrank, ++n_pos;
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::nullopt;
    const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<MetricResult> evaluate(const PredictionSet& set, double threshold) {
    std::vector<MetricResult> out;
    for (auto sex : {Sex::female, Sex::male}) {
        std::vector<double> p;
        std::vector<int> y;
        for (const auto& r : set.rows) {
            if (r.sex != sex) continue;
            p.push_back(r.prob_cancer);
            y.push_back(r.true_label);
        }
        if (p.empty()) continue;
        MetricResult m;
        m.key = set.key;
        m.sex = sex;
        m.n = p.size();
        m.acc = accuracy(p, y, threshold);
        m.auroc = auroc(p, y);
        if (!m.auroc) {
            log_warning("single-class " + std::string(to_string(sex)) + " subgroup in " + set.key.model_id + " " +
                        set.key.file_stem() + ": AUROC undefined");
        }
        out.push_back(std::move(m));
    }
    return out;
}

std::string write_metric_table(const std::vector<MetricResult>& results) {
    auto sorted = results;
    std::sort(sorted.begin(), sorted.end(), [](const MetricResult& a, const MetricResult& b) {
        if (!(a.key == b.key)) return a.key < b.key;
        return a.sex < b.sex;
    });
    std::string out = "model_id,testset_id,ratio,rep,sex,n,acc,auroc\n";
    for (const auto& r : sorted) {
        out += csv::join_row({r.key.model_id, std::to_string(r.key.testset_id), format_ratio(r.key.ratio),
                              std::to_string(r.key.rep), std::string(to_string(r.sex)), std::to_string(r.n),
                              format_double(r.acc, 10), r.auroc ? format_double(*r.auroc, 10) : std::string()});
    }
    return out;
}

std::vector<MetricResult> parse_metric_table(std::string_view text) {
    const auto table = csv::parse(text);
    std::vector<MetricResult> out;
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const auto& f = table.rows[i];
        const auto where = "metrics line " + std::to_string(i + 2);
        MetricResult m;
        m.key = {f.at(table.require_column("model_id", "metrics")),
                 parse_int(f.at(table.require_column("testset_id", "metrics")), "testset_id", where),
                 parse_number(f.at(table.require_column("ratio", "metrics")), "ratio", where),
                 parse_int(f.at(table.require_column("rep", "metrics")), "rep", where)};
        m.sex = parse_sex(f.at(table.require_column("sex", "metrics")));
        m.n = static_cast<std::size_t>(parse_int(f.at(table.require_column("n", "metrics")), "n", where));
        m.acc = parse_number(f.at(table.require_column("acc", "metrics")), "acc", where);
        const auto& a = f.at(table.require_column("auroc", "metrics"));
        if (!a.empty()) m.auroc = parse_number(a, "auroc", where);
        out.push_back(std::move(m));
    }
    return out;
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd out;
    out.count = values.size();
    if (values.empty()) return out;
    // Shifted by the first value so identical runs give a zero spread.
    const double ref = values[0];
    double shift = 0.0;
    for (double v : values) shift += v - ref;
    shift /= static_cast<double>(values.size());
    out.mean = ref + shift;
    if (values.size() < 2) return out;
    double ss = 0.0;
    for (double v : values) ss += (v - ref - shift) * (v - ref - shift);
    out.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    return out;
}

std::map<CellKey, MeanStd> aggregate(const std::vector<MetricResult>& results) {
    std::map<CellKey, std::vector<double>> values;
    std::size_t skipped = 0;
    auto sorted = results;
    std::sort(sorted.begin(), sorted.end(), [](const MetricResult& a, const MetricResult& b) {
        if (!(a.key == b.key)) return a.key < b.key;
        return a.sex < b.sex;
    });
    for (const auto& r : sorted) {
        values[{r.key.model_id, "acc", r.sex}].push_back(r.acc);
        if (r.auroc) {
            values[{r.key.model_id, "auroc", r.sex}].push_back(*r.auroc);
        } else {
            ++skipped;
        }
    }
    if (skipped) log_warning(std::to_string(skipped) + " run(s) without a defined AUROC excluded from aggregation");
    std::map<CellKey, MeanStd> out;
    for (const auto& [k, v] : values) {
        out[k] = mean_std(v);
        if (v.size() < 2) log_warning("cell " + k.model_id + " " + k.metric + " has fewer than two runs");
    }
    return out;
}

std::string format_summary_table(const std::map<CellKey, MeanStd>& cells) {
    std::set<std::string> models;
    for (const auto& [k, v] : cells) models.insert(k.model_id);
    std::ostringstream os;
    os << "metric";
    for (const auto& m : models) os << '\t' << m;
    os << '\n';
    char buf[64];
    for (const auto* metric : {"acc", "auroc"}) {
        for (auto sex : {Sex::female, Sex::male}) {
            os << (std::string(metric) == "acc" ? "ACC" : "AUROC") << ", " << (sex == Sex::female ? "f" : "m");
            for (const auto& m : models) {
                auto it = cells.find({m, metric, sex});
                if (it == cells.end()) {
                    os << "\t-";
                } else {
                    std::snprintf(buf, sizeof buf, "%.3f ± %.3f", it->second.mean, it->second.std);
                    os << '\t' << buf << " (n=" << it->second.count << ")";
                }
            }
            os << '\n';
        }
    }
    return os.str();
}

}  // namespace skinbias::metrics
