#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "voxatn/padeval.hpp"

namespace voxatn::detplot {

struct Curve {
    std::string name;
    std::vector<padeval::DetPoint> points;
};

// Log-log DET plot (APCER on x, BPCER on y), one polyline per curve.
// Rates are clamped to [kRateFloor, 100] before the log transform.
void write_svg(std::ostream& out, const std::vector<Curve>& curves);

inline constexpr double kRateFloor = 0.01;  // percent
inline constexpr int kPlotLeft = 70, kPlotTop = 30, kPlotWidth = 480, kPlotHeight = 420;

// Pixel coordinates of a (apcer, bpcer) pair; exposed so tests can invert
// plotted polylines back to rates.
double rate_to_x(double apcer_percent);
double rate_to_y(double bpcer_percent);

}  // namespace voxatn::detplot
