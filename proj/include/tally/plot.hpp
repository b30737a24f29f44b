#pragma once

#include <string>
#include <utility>
#include <vector>

namespace tally {

struct BoxGroup {
    std::string label;
    std::vector<double> values;
};

/// Boxplot SVG: box at the quartiles, whiskers at the 2.5/97.5% quantiles.
/// Non-finite values are skipped; empty groups get a label only.
std::string svg_boxplot(const std::vector<BoxGroup>& groups, const std::string& title, const std::string& ylabel);

/// Scatter SVG of (x, y) points. Optional horizontal reference lines.
std::string svg_scatter(const std::vector<double>& x, const std::vector<double>& y, const std::string& title,
                        const std::string& xlabel, const std::string& ylabel,
                        const std::vector<double>& hlines = {});

}  // namespace tally
