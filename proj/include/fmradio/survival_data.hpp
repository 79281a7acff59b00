#pragma once

#include <cstddef>
#include <vector>

namespace fmradio {

/// Right-censored outcome: observed time min(T, C) and event indicator per subject.
struct SurvivalData {
    std::vector<double> time;
    std::vector<int> status;  // 1 = event, 0 = censored

    std::size_t size() const noexcept { return time.size(); }
    std::size_t events() const noexcept;

    /// Subset in the given row order.
    SurvivalData subset(const std::vector<std::size_t>& rows) const;

    /// Throws InputError unless times > 0, status in {0,1} and sizes agree.
    void validate() const;
};

}  // namespace fmradio
