#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "editground/grid.hpp"

namespace editground {

struct IoURecord {
    std::string sample_id;
    std::uint64_t intersection = 0;
    std::uint64_t union_count = 0;
    double iou = 0.0;
    bool empty_union = false;  // both masks empty; iou reported as 1
};

IoURecord iou(const PixelMask& pred, const GroundTruthMask& gt, std::string sample_id = {});

struct IoUAggregate {
    double oiou = 0.0;  // sum(I) / sum(U)
    double miou = 0.0;  // mean of per-sample IoU
    std::size_t count = 0;
};

IoUAggregate aggregate(std::span<const IoURecord> records);

}  // namespace editground
