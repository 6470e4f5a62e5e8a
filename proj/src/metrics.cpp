#include "editground/metrics.hpp"

#include "editground/error.hpp"

namespace editground {

IoURecord iou(const PixelMask& pred, const GroundTruthMask& gt, std::string sample_id) {
    if (pred.shape != gt.shape)
        fail(ErrorKind::validation, "prediction is " + std::to_string(pred.shape.rows) + "x" +
                                        std::to_string(pred.shape.cols) + " but ground truth is " +
                                        std::to_string(gt.shape.rows) + "x" + std::to_string(gt.shape.cols));
    IoURecord r;
    r.sample_id = std::move(sample_id);
    for (std::size_t i = 0; i < pred.values.size(); ++i) {
        const bool p = pred.values[i] != 0, g = gt.values[i] != 0;
        r.intersection += p && g;
        r.union_count += p || g;
    }
    r.empty_union = r.union_count == 0;
    r.iou = r.empty_union ? 1.0 : static_cast<double>(r.intersection) / static_cast<double>(r.union_count);
    return r;
}

IoUAggregate aggregate(std::span<const IoURecord> records) {
    if (records.empty()) fail(ErrorKind::validation, "cannot aggregate zero IoU records");
    std::uint64_t inter = 0, uni = 0;
    double sum = 0.0;
    for (const auto& r : records) {
        inter += r.intersection;
        uni += r.union_count;
        sum += r.iou;
    }
    IoUAggregate a;
    a.count = records.size();
    a.oiou = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    a.miou = sum / static_cast<double>(records.size());
    return a;
}

}  // namespace editground
