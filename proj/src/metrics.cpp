#include "rdg/metrics.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "rdg/common.hpp"

namespace rdg::metrics {

using nlohmann::json;

ConfusionMatrix::ConfusionMatrix(int num_classes) : c_(num_classes) {
    if (num_classes <= 0) throw ValidationError("num_classes must be positive");
    counts_.assign(static_cast<std::size_t>(c_) * c_, 0);
}

void ConfusionMatrix::add(const std::int32_t* labels, const std::int32_t* preds, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::int32_t t = labels[i], p = preds[i];
        if (t < 0 || t >= c_ || p < 0 || p >= c_)
            throw ValidationError("class index out of range: truth=" + std::to_string(t) +
                                  " pred=" + std::to_string(p) + " C=" + std::to_string(c_));
        ++counts_[static_cast<std::size_t>(t) * c_ + p];
    }
}

void ConfusionMatrix::add(const std::vector<std::int32_t>& labels, const std::vector<std::int32_t>& preds) {
    if (labels.size() != preds.size()) throw ValidationError("labels/preds size mismatch");
    add(labels.data(), preds.data(), labels.size());
}

ConfusionMatrix& ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.c_ != c_) throw ValidationError("confusion matrix class-count mismatch");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

std::int64_t ConfusionMatrix::total() const {
    return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0});
}

std::int64_t ConfusionMatrix::tp(int cls) const { return at(cls, cls); }

std::int64_t ConfusionMatrix::fp(int cls) const {
    std::int64_t s = 0;
    for (int t = 0; t < c_; ++t)
        if (t != cls) s += at(t, cls);
    return s;
}

std::int64_t ConfusionMatrix::fn(int cls) const {
    std::int64_t s = 0;
    for (int p = 0; p < c_; ++p)
        if (p != cls) s += at(cls, p);
    return s;
}

ConfusionMatrix confusion(const std::vector<std::int32_t>& labels,
                          const std::vector<std::int32_t>& preds, int num_classes) {
    ConfusionMatrix cm(num_classes);
    cm.add(labels, preds);
    return cm;
}

std::vector<double> iou_per_class(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.num_classes());
    for (int c = 0; c < cm.num_classes(); ++c) {
        std::int64_t tp = cm.tp(c), fp = cm.fp(c), fn = cm.fn(c);
        std::int64_t denom = tp + fp + fn;
        out[c] = denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
    }
    return out;
}

std::vector<double> f1_per_class(const ConfusionMatrix& cm) {
    std::vector<double> out(cm.num_classes());
    for (int c = 0; c < cm.num_classes(); ++c) {
        std::int64_t tp = cm.tp(c), fp = cm.fp(c), fn = cm.fn(c);
        // F1 = 2 precision recall / (precision + recall) = 2 TP / (2 TP + FP + FN)
        std::int64_t denom = 2 * tp + fp + fn;
        out[c] = denom == 0 ? 1.0  // absent everywhere, mirrors the IoU convention
                            : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
    }
    return out;
}

MetricsReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                          bool strict_absent) {
    if (static_cast<int>(class_names.size()) != cm.num_classes())
        throw ValidationError("class_names size must equal num_classes");
    MetricsReport r;
    r.class_names = class_names;
    r.iou = iou_per_class(cm);
    r.f1 = f1_per_class(cm);
    r.present.resize(cm.num_classes());

    double iou_sum = 0.0, f1_sum = 0.0;
    int counted = 0;
    for (int c = 0; c < cm.num_classes(); ++c) {
        bool present = (cm.tp(c) + cm.fp(c) + cm.fn(c)) != 0;
        r.present[c] = present;
        if (present) {
            iou_sum += r.iou[c];
            f1_sum += r.f1[c];
            ++counted;
        } else if (strict_absent) {
            r.iou[c] = 0.0;
            r.f1[c] = 0.0;
            ++counted;
        }
    }
    r.miou = counted == 0 ? 0.0 : iou_sum / counted;
    r.overall_f1 = counted == 0 ? 0.0 : f1_sum / counted;
    return r;
}

namespace {

std::string pct(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v * 100.0);
    return buf;
}

}  // namespace

std::string format_report(const MetricsReport& report, ReportStyle style) {
    switch (style) {
        case ReportStyle::paper_table: {
            std::ostringstream out;
            out << "Class & IoU & F1-score\n";
            for (std::size_t c = 0; c < report.class_names.size(); ++c)
                out << report.class_names[c] << " & " << pct(report.iou[c]) << " & " << pct(report.f1[c]) << "\n";
            out << "Overall & " << pct(report.miou) << " & " << pct(report.overall_f1) << "\n";
            return out.str();
        }
        case ReportStyle::json: {
            json j;
            j["class_names"] = report.class_names;
            j["iou"] = report.iou;
            j["f1"] = report.f1;
            j["present"] = report.present;
            j["miou"] = report.miou;
            j["overall_f1"] = report.overall_f1;
            return j.dump(2) + "\n";
        }
        case ReportStyle::csv: {
            std::ostringstream out;
            out.precision(17);
            out << "class,iou,f1,present\n";
            for (std::size_t c = 0; c < report.class_names.size(); ++c)
                out << report.class_names[c] << "," << report.iou[c] << "," << report.f1[c] << ","
                    << (report.present[c] ? 1 : 0) << "\n";
            out << "Overall," << report.miou << "," << report.overall_f1 << ",\n";
            return out.str();
        }
    }
    throw ValidationError("unknown report style");
}

MetricsReport parse_report_json(const std::string& text) {
    try {
        json j = json::parse(text);
        MetricsReport r;
        r.class_names = j.at("class_names").get<std::vector<std::string>>();
        r.iou = j.at("iou").get<std::vector<double>>();
        r.f1 = j.at("f1").get<std::vector<double>>();
        r.present = j.at("present").get<std::vector<bool>>();
        r.miou = j.at("miou").get<double>();
        r.overall_f1 = j.at("overall_f1").get<double>();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("bad metrics json: ") + e.what());
    }
}

MetricsReport parse_report_csv(const std::string& text) {
    MetricsReport r;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "class,iou,f1,present")
        throw FormatError("bad metrics csv header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name, iou, f1, present;
        std::getline(ls, name, ',');
        std::getline(ls, iou, ',');
        std::getline(ls, f1, ',');
        std::getline(ls, present, ',');
        try {
            if (name == "Overall") {
                r.miou = std::stod(iou);
                r.overall_f1 = std::stod(f1);
            } else {
                r.class_names.push_back(name);
                r.iou.push_back(std::stod(iou));
                r.f1.push_back(std::stod(f1));
                r.present.push_back(present == "1");
            }
        } catch (const std::logic_error&) {
            throw FormatError("bad metrics csv row: " + line);
        }
    }
    return r;
}

}  // namespace rdg::metrics
