#include "srcattr/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace srcattr {

namespace {

std::string format_double(double value) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_optional(const std::optional<double>& value) {
    return value ? format_double(*value) : "na";
}

std::optional<double> parse_optional(const std::string& text) {
    if (text == "na") return std::nullopt;
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
        throw ParseError("unparseable metric value '" + text + "'");
    }
    return value;
}

bool truth_is_real(const EvalRecord& r) { return r.truth.kind == SourceKind::Real; }
bool predicted_real(const EvalRecord& r) { return r.predicted.kind == SourceKind::Real; }

}  // namespace

double detection_accuracy(std::span<const EvalRecord> records) {
    if (records.empty()) throw MetricError("detection accuracy over empty record set");
    std::size_t correct = 0;
    for (const auto& r : records) {
        if (truth_is_real(r) == predicted_real(r)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

double roc_auc(std::span<const std::pair<double, bool>> scored) {
    std::size_t positives = 0;
    for (const auto& [score, synthetic] : scored) {
        if (synthetic) ++positives;
    }
    const std::size_t negatives = scored.size() - positives;
    if (positives == 0 || negatives == 0) {
        throw MetricError("ROC AUC needs both classes present");
    }

    std::vector<std::pair<double, bool>> sorted(scored.begin(), scored.end());
    std::sort(sorted.begin(), sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // Mid-rank sum of the positive class; ranks are 1-based.
    double positive_rank_sum = 0.0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].first == sorted[i].first) ++j;
        const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
        for (std::size_t t = i; t < j; ++t) {
            if (sorted[t].second) positive_rank_sum += mid_rank;
        }
        i = j;
    }
    const double np = static_cast<double>(positives);
    const double nn = static_cast<double>(negatives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double attribution_accuracy(std::span<const EvalRecord> records, AttributionScope scope,
                            const std::set<int>& new_ids) {
    std::size_t in_scope = 0;
    std::size_t correct = 0;
    for (const auto& r : records) {
        const bool is_new = new_ids.contains(r.truth.id);
        if (scope == AttributionScope::KnownOnly && is_new) continue;
        if (scope == AttributionScope::NewOnly && !is_new) continue;
        ++in_scope;
        if (r.predicted.id == r.truth.id) ++correct;
    }
    if (in_scope == 0) throw MetricError("attribution accuracy over empty scope");
    return static_cast<double>(correct) / static_cast<double>(in_scope);
}

double au_crr(std::span<const double> known_scores, std::span<const double> unknown_scores) {
    if (known_scores.empty() || unknown_scores.empty()) {
        throw MetricError("AU-CRR needs both populations");
    }
    std::vector<double> known(known_scores.begin(), known_scores.end());
    std::vector<double> unknown(unknown_scores.begin(), unknown_scores.end());
    std::sort(known.begin(), known.end());
    std::sort(unknown.begin(), unknown.end());

    std::vector<double> thresholds;
    thresholds.reserve(known.size() + unknown.size());
    thresholds.insert(thresholds.end(), known.begin(), known.end());
    thresholds.insert(thresholds.end(), unknown.begin(), unknown.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    auto count_below = [](const std::vector<double>& scores, double t) {
        return static_cast<double>(std::lower_bound(scores.begin(), scores.end(), t) -
                                   scores.begin());
    };

    // Curve points (acceptance rate of knowns, rejection rate of unknowns),
    // swept from reject-nothing to reject-everything.
    std::vector<std::pair<double, double>> curve;
    curve.emplace_back(1.0, 0.0);
    for (const double t : thresholds) {
        const double tar = 1.0 - count_below(known, t) / static_cast<double>(known.size());
        const double crr = count_below(unknown, t) / static_cast<double>(unknown.size());
        curve.emplace_back(tar, crr);
    }
    curve.emplace_back(0.0, 1.0);

    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double dx = curve[i - 1].first - curve[i].first;
        area += dx * (curve[i - 1].second + curve[i].second) / 2.0;
    }
    return area;
}

double au_oscr(std::span<const OscrSample> samples) {
    std::vector<double> unknown_scores;
    std::vector<std::pair<double, bool>> knowns;  // (score, correct)
    for (const auto& s : samples) {
        if (s.unknown) {
            unknown_scores.push_back(s.score);
        } else {
            knowns.emplace_back(s.score, s.correct);
        }
    }
    if (knowns.empty() || unknown_scores.empty()) {
        throw MetricError("AU-OSCR needs both populations");
    }
    std::sort(unknown_scores.begin(), unknown_scores.end());
    std::sort(knowns.begin(), knowns.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<double> thresholds;
    for (const auto& [score, correct] : knowns) thresholds.push_back(score);
    thresholds.insert(thresholds.end(), unknown_scores.begin(), unknown_scores.end());
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

    const double nk = static_cast<double>(knowns.size());
    const double nu = static_cast<double>(unknown_scores.size());

    auto point_at = [&](double t) {
        // Accepted means score >= t.
        double ccr = 0.0;
        for (const auto& [score, correct] : knowns) {
            if (score >= t && correct) ccr += 1.0;
        }
        const double fpr = nu - static_cast<double>(std::lower_bound(unknown_scores.begin(),
                                                                     unknown_scores.end(), t) -
                                                    unknown_scores.begin());
        return std::pair<double, double>{fpr / nu, ccr / nk};
    };

    // Sweep from accept-everything (fpr 1) down to accept-nothing (fpr 0).
    std::vector<std::pair<double, double>> curve;
    double all_correct = 0.0;
    for (const auto& [score, correct] : knowns) {
        if (correct) all_correct += 1.0;
    }
    curve.emplace_back(1.0, all_correct / nk);
    for (const double t : thresholds) curve.push_back(point_at(t));
    curve.emplace_back(0.0, 0.0);

    double area = 0.0;
    for (std::size_t i = 1; i < curve.size(); ++i) {
        const double dx = curve[i - 1].first - curve[i].first;
        area += dx * (curve[i - 1].second + curve[i].second) / 2.0;
    }
    return area;
}

SummaryTable aggregate(std::span<const StepMetrics> rows) {
    if (rows.empty()) throw MetricError("aggregate needs at least one step row");

    SummaryTable table;
    table.initial = MetricTriple{rows.front().det_acc, rows.front().det_auc,
                                 rows.front().att_acc};
    table.final =
        MetricTriple{rows.back().det_acc, rows.back().det_auc, rows.back().att_acc};

    double det = 0.0, auc = 0.0, att = 0.0;
    int count = 0;
    for (const auto& row : rows) {
        if (!row.new_det_acc) continue;
        det += *row.new_det_acc;
        auc += row.new_det_auc.value_or(0.0);
        att += row.new_att_acc.value_or(0.0);
        ++count;
    }
    if (count > 0) {
        table.average_new = MetricTriple{det / count, auc / count, att / count};
    }
    return table;
}

void write_step_metrics(const std::filesystem::path& path, const StepMetrics& row) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write metrics file " + path.string());
    out << "step,det_acc,det_auc,att_acc,att_acc_known,new_det_acc,new_det_auc,new_att_acc\n";
    out << row.step << ',' << format_double(row.det_acc) << ',' << format_double(row.det_auc)
        << ',' << format_double(row.att_acc) << ',' << format_double(row.att_acc_known) << ','
        << format_optional(row.new_det_acc) << ',' << format_optional(row.new_det_auc) << ','
        << format_optional(row.new_att_acc) << '\n';
}

StepMetrics read_step_metrics(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open metrics file " + path.string());
    std::string header, line;
    if (!std::getline(in, header) || !std::getline(in, line)) {
        throw ParseError("metrics file " + path.string() + " is truncated");
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 8) {
        throw ParseError("metrics file " + path.string() + " has a malformed row");
    }
    StepMetrics row;
    row.step = std::stoi(fields[0]);
    row.det_acc = *parse_optional(fields[1]);
    row.det_auc = *parse_optional(fields[2]);
    row.att_acc = *parse_optional(fields[3]);
    row.att_acc_known = *parse_optional(fields[4]);
    row.new_det_acc = parse_optional(fields[5]);
    row.new_det_auc = parse_optional(fields[6]);
    row.new_att_acc = parse_optional(fields[7]);
    return row;
}

void write_summary(const std::filesystem::path& path, const SummaryTable& table) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write summary file " + path.string());
    out << "group,det_acc,det_auc,att_acc\n";
    auto emit = [&](const std::string& group, const MetricTriple& t) {
        out << group << ',' << format_double(t.det_acc) << ',' << format_double(t.det_auc)
            << ',' << format_double(t.att_acc) << '\n';
    };
    emit("initial", table.initial);
    if (table.average_new) {
        emit("average_new_sources", *table.average_new);
    } else {
        out << "average_new_sources,na,na,na\n";
    }
    emit("final", table.final);
}

}  // namespace srcattr
