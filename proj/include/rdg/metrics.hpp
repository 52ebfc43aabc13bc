#ifndef RDG_METRICS_HPP
#define RDG_METRICS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace rdg::metrics {

// Row index = ground truth class, column = predicted class.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int num_classes);

    // Accumulates counts from two equally sized index maps.
    void add(const std::int32_t* labels, const std::int32_t* preds, std::size_t n);
    void add(const std::vector<std::int32_t>& labels, const std::vector<std::int32_t>& preds);

    ConfusionMatrix& merge(const ConfusionMatrix& other);

    int num_classes() const { return c_; }
    std::int64_t at(int truth, int pred) const { return counts_[static_cast<std::size_t>(truth) * c_ + pred]; }
    std::int64_t total() const;

    std::int64_t tp(int cls) const;
    std::int64_t fp(int cls) const;
    std::int64_t fn(int cls) const;

private:
    int c_;
    std::vector<std::int64_t> counts_;
};

ConfusionMatrix confusion(const std::vector<std::int32_t>& labels,
                          const std::vector<std::int32_t>& preds, int num_classes);

// IoU_c = TP / (TP + FP + FN). A class absent from both truth and prediction
// gets 1.0 and is excluded from mIoU; strict mode scores it 0 and keeps it in
// the mean (paper-table comparability).
std::vector<double> iou_per_class(const ConfusionMatrix& cm);
std::vector<double> f1_per_class(const ConfusionMatrix& cm);

struct MetricsReport {
    std::vector<std::string> class_names;
    std::vector<double> iou;      // per class, in [0,1]
    std::vector<double> f1;       // per class, in [0,1]
    std::vector<bool> present;    // class occurs in truth or prediction
    double miou = 0.0;
    double overall_f1 = 0.0;      // unweighted mean of per-class F1
};

// strict_absent: count truth-and-prediction-absent classes as 0 instead of
// excluding them from the aggregates.
MetricsReport make_report(const ConfusionMatrix& cm, const std::vector<std::string>& class_names,
                          bool strict_absent = false);

enum class ReportStyle { paper_table, json, csv };

std::string format_report(const MetricsReport& report, ReportStyle style);

MetricsReport parse_report_json(const std::string& text);
MetricsReport parse_report_csv(const std::string& text);

}  // namespace rdg::metrics

#endif
