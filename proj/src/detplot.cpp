#include "voxatn/detplot.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace voxatn::detplot {

namespace {

const double kLogLo = std::log10(kRateFloor);
const double kLogHi = std::log10(100.0);

double to_unit(double rate) {
    const double r = std::clamp(rate, kRateFloor, 100.0);
    return (std::log10(r) - kLogLo) / (kLogHi - kLogLo);
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

double rate_to_x(double apcer) { return kPlotLeft + to_unit(apcer) * kPlotWidth; }
double rate_to_y(double bpcer) { return kPlotTop + (1.0 - to_unit(bpcer)) * kPlotHeight; }

void write_svg(std::ostream& out, const std::vector<Curve>& curves) {
    if (curves.empty()) throw UserError("DET plot: no curves");

    const int width = kPlotLeft + kPlotWidth + 180;
    const int height = kPlotTop + kPlotHeight + 60;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    out << "<rect x=\"" << kPlotLeft << "\" y=\"" << kPlotTop << "\" width=\"" << kPlotWidth << "\" height=\""
        << kPlotHeight << "\" fill=\"white\" stroke=\"black\"/>\n";

    // decade grid and tick labels
    for (double decade = kRateFloor; decade <= 100.0 + 1e-12; decade *= 10.0) {
        const double x = rate_to_x(decade);
        const double y = rate_to_y(decade);
        out << "<line x1=\"" << x << "\" y1=\"" << kPlotTop << "\" x2=\"" << x << "\" y2=\""
            << kPlotTop + kPlotHeight << "\" stroke=\"#cccccc\"/>\n";
        out << "<line x1=\"" << kPlotLeft << "\" y1=\"" << y << "\" x2=\"" << kPlotLeft + kPlotWidth << "\" y2=\""
            << y << "\" stroke=\"#cccccc\"/>\n";
        out << "<text x=\"" << x << "\" y=\"" << kPlotTop + kPlotHeight + 18
            << "\" font-size=\"11\" text-anchor=\"middle\">" << decade << "</text>\n";
        out << "<text x=\"" << kPlotLeft - 8 << "\" y=\"" << y + 4
            << "\" font-size=\"11\" text-anchor=\"end\">" << decade << "</text>\n";
    }
    out << "<text x=\"" << kPlotLeft + kPlotWidth / 2 << "\" y=\"" << kPlotTop + kPlotHeight + 42
        << "\" font-size=\"13\" text-anchor=\"middle\">APCER (%)</text>\n";
    out << "<text x=\"16\" y=\"" << kPlotTop + kPlotHeight / 2
        << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << kPlotTop + kPlotHeight / 2
        << ")\">BPCER (%)</text>\n";

    for (std::size_t c = 0; c < curves.size(); ++c) {
        const Curve& curve = curves[c];
        if (curve.points.empty()) throw UserError("DET plot: curve '" + curve.name + "' has no points");
        const char* color = kPalette[c % (sizeof(kPalette) / sizeof(kPalette[0]))];

        out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        char buf[64];
        for (const padeval::DetPoint& p : curve.points) {
            std::snprintf(buf, sizeof(buf), "%.3f,%.3f ", rate_to_x(p.apcer), rate_to_y(p.bpcer));
            out << buf;
        }
        out << "\"/>\n";

        // legend
        const double ly = kPlotTop + 14 + 18.0 * static_cast<double>(c);
        out << "<line x1=\"" << kPlotLeft + kPlotWidth + 12 << "\" y1=\"" << ly << "\" x2=\""
            << kPlotLeft + kPlotWidth + 36 << "\" y2=\"" << ly << "\" stroke=\"" << color
            << "\" stroke-width=\"1.5\"/>\n";
        out << "<text x=\"" << kPlotLeft + kPlotWidth + 42 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">"
            << curve.name << "</text>\n";
    }
    out << "</svg>\n";
}

}  // namespace voxatn::detplot
