#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace stepfair {

// Self-contained SVG charts; the CSV stays the source of truth and these are
// regenerated from it on demand.
namespace svg {

struct Series {
  std::string label;
  std::vector<double> x, y;
  std::vector<double> lo, hi;  // optional confidence band
  bool marker_on_last = false;
};

inline const char* palette(int i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                 "#9467bd", "#8c564b", "#17becf", "#7f7f7f",
                                 "#bcbd22", "#e377c2"};
  return colors[i % 10];
}

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Frame {
  double x0, x1, y0, y1;
  bool logx = false;
  static constexpr double W = 720, Hh = 440, ml = 70, mr = 160, mt = 40, mb = 55;

  double tx(double x) const {
    const double a = logx ? std::log2(x) : x;
    const double lo = logx ? std::log2(x0) : x0;
    const double hi = logx ? std::log2(x1) : x1;
    return ml + (a - lo) / std::max(hi - lo, 1e-300) * (W - ml - mr);
  }
  double ty(double y) const {
    return Hh - mb - (y - y0) / std::max(y1 - y0, 1e-300) * (Hh - mt - mb);
  }
};

inline std::vector<double> nice_ticks(double lo, double hi, int target = 6) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (raw <= m * mag) {
      step = m * mag;
      break;
    }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-12 * step; t += step)
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  return ticks;
}

inline void write_chart(std::ostream& out, const std::string& title,
                        const std::string& xlabel, const std::string& ylabel,
                        const std::vector<Series>& series, bool logx,
                        bool scatter = false) {
  double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      const double lo = s.lo.empty() ? s.y[i] : s.lo[i];
      const double hi = s.hi.empty() ? s.y[i] : s.hi[i];
      y0 = std::min(y0, lo);
      y1 = std::max(y1, hi);
    }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  const double pad = 0.06 * (y1 - y0);
  Frame f{x0, x1, y0 - pad, y1 + pad, logx};

  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << Frame::W
      << "\" height=\"" << Frame::Hh << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << Frame::W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";

  // axes and ticks
  const double bx = Frame::ml, by = Frame::Hh - Frame::mb;
  out << "<line x1=\"" << bx << "\" y1=\"" << by << "\" x2=\"" << Frame::W - Frame::mr
      << "\" y2=\"" << by << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << bx << "\" y1=\"" << Frame::mt << "\" x2=\"" << bx << "\" y2=\""
      << by << "\" stroke=\"black\"/>\n";
  if (logx) {
    for (double e = std::ceil(std::log2(f.x0)); e <= std::floor(std::log2(f.x1)) + 1e-9;
         e += 1.0) {
      const double v = std::pow(2.0, e);
      const double px = f.tx(v);
      out << "<line x1=\"" << px << "\" y1=\"" << by << "\" x2=\"" << px << "\" y2=\""
          << by + 4 << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << px << "\" y=\"" << by + 18
          << "\" text-anchor=\"middle\">2^" << fmt(e) << "</text>\n";
    }
  } else {
    for (double t : nice_ticks(f.x0, f.x1)) {
      const double px = f.tx(t);
      out << "<line x1=\"" << px << "\" y1=\"" << by << "\" x2=\"" << px << "\" y2=\""
          << by + 4 << "\" stroke=\"black\"/>\n";
      out << "<text x=\"" << px << "\" y=\"" << by + 18
          << "\" text-anchor=\"middle\">" << fmt(t) << "</text>\n";
    }
  }
  for (double t : nice_ticks(f.y0, f.y1)) {
    const double py = f.ty(t);
    out << "<line x1=\"" << bx - 4 << "\" y1=\"" << py << "\" x2=\"" << bx << "\" y2=\""
        << py << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << bx - 8 << "\" y=\"" << py + 4
        << "\" text-anchor=\"end\">" << fmt(t) << "</text>\n";
  }
  out << "<text x=\"" << (bx + Frame::W - Frame::mr) / 2 << "\" y=\"" << Frame::Hh - 12
      << "\" text-anchor=\"middle\">" << xlabel << "</text>\n";
  out << "<text x=\"16\" y=\"" << (Frame::mt + by) / 2
      << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << (Frame::mt + by) / 2
      << ")\">" << ylabel << "</text>\n";

  int ci = 0;
  for (const auto& s : series) {
    const char* color = palette(ci);
    if (!s.lo.empty() && s.lo.size() == s.x.size()) {
      out << "<polygon fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << fmt(f.tx(s.x[i])) << ',' << fmt(f.ty(s.hi[i])) << ' ';
      for (std::size_t i = s.x.size(); i-- > 0;)
        out << fmt(f.tx(s.x[i])) << ',' << fmt(f.ty(s.lo[i])) << ' ';
      out << "\"/>\n";
    }
    if (!scatter && s.x.size() > 1) {
      out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.8\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i)
        out << fmt(f.tx(s.x[i])) << ',' << fmt(f.ty(s.y[i])) << ' ';
      out << "\"/>\n";
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const bool last = i + 1 == s.x.size();
      if (scatter || last) {
        if (s.marker_on_last && last)
          out << "<path d=\"M" << fmt(f.tx(s.x[i]) - 4) << ' ' << fmt(f.ty(s.y[i]) - 4)
              << " l8 8 m0 -8 l-8 8\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
        else
          out << "<circle cx=\"" << fmt(f.tx(s.x[i])) << "\" cy=\"" << fmt(f.ty(s.y[i]))
              << "\" r=\"3\" fill=\"" << color << "\"/>\n";
      }
    }
    const double ly = Frame::mt + 16.0 * ci;
    out << "<rect x=\"" << Frame::W - Frame::mr + 10 << "\" y=\"" << ly - 8
        << "\" width=\"12\" height=\"4\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << Frame::W - Frame::mr + 28 << "\" y=\"" << ly << "\">" << s.label
        << "</text>\n";
    ++ci;
  }
  out << "</svg>\n";
}

}  // namespace svg
}  // namespace stepfair
