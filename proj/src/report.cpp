#include "modar/dataio.hpp"
#include "modar/errors.hpp"
#include "modar/evalkit.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace modar::eval {

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string result_to_csv(const EvalResult& result) {
  std::ostringstream os;
  os << "class,difficulty,breakdown,ap,aph,tp,fp,fn\n";
  for (const auto& [key, cell] : result.cells) {
    os << modar::to_string(key.object_class) << ',' << to_string(key.difficulty) << ','
       << key.breakdown << ',';
    if (cell.present()) {
      os << fixed(*cell.ap) << ',' << fixed(*cell.aph);
    } else {
      os << "absent,absent";
    }
    os << ',' << cell.tp << ',' << cell.fp << ',' << cell.fn << '\n';
  }
  return os.str();
}

std::string sweep_svg(std::span<const SweepPoint> sweep) {
  constexpr double kWidth = 640.0;
  constexpr double kHeight = 400.0;
  constexpr double kLeft = 60.0;
  constexpr double kRight = 20.0;
  constexpr double kTop = 30.0;
  constexpr double kBottom = 50.0;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;

  int max_n = 1;
  for (const auto& p : sweep) max_n = std::max(max_n, p.num_predictions);
  auto sx = [&](double n) { return kLeft + plot_w * n / max_n; };
  auto sy = [&](double aph) { return kTop + plot_h * (1.0 - std::clamp(aph, 0.0, 1.0)); };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" fill=\"white\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop + plot_h << "\" x2=\"" << kLeft + plot_w
     << "\" y2=\"" << kTop + plot_h << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << kLeft << "\" y1=\"" << kTop << "\" x2=\"" << kLeft << "\" y2=\""
     << kTop + plot_h << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = i / 4.0;
    os << "<text x=\"" << kLeft - 8 << "\" y=\"" << fixed(sy(v) + 4, 1)
       << "\" font-size=\"11\" text-anchor=\"end\">" << fixed(v, 2) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 12
     << "\" font-size=\"13\" text-anchor=\"middle\">Number of MoDAR predictions</text>\n";
  os << "<text x=\"16\" y=\"" << kTop + plot_h / 2 << "\" font-size=\"13\" text-anchor=\"middle\""
     << " transform=\"rotate(-90 16 " << kTop + plot_h / 2 << ")\">L2 APH</text>\n";

  if (!sweep.empty()) {
    os << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < sweep.size(); ++i) {
      if (i > 0) os << ' ';
      os << fixed(sx(sweep[i].num_predictions), 2) << ',' << fixed(sy(sweep[i].aph), 2);
    }
    os << "\"/>\n";
    for (const auto& p : sweep) {
      const std::string cx = fixed(sx(p.num_predictions), 2);
      const std::string cy = fixed(sy(p.aph), 2);
      os << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"4\" fill=\"#1f77b4\"/>\n";
      os << "<text x=\"" << cx << "\" y=\"" << fixed(sy(p.aph) - 8, 2)
         << "\" font-size=\"11\" text-anchor=\"middle\">" << xml_escape(p.label) << ' '
         << fixed(p.aph, 3) << "</text>\n";
      os << "<text x=\"" << cx << "\" y=\"" << fixed(kTop + plot_h + 16, 2)
         << "\" font-size=\"11\" text-anchor=\"middle\">" << p.num_predictions << "</text>\n";
    }
  }
  os << "</svg>\n";
  return os.str();
}

void write_report(const EvalResult& result, std::span<const SweepPoint> sweep,
                  const std::filesystem::path& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec) throw IoFailure("cannot create " + directory.string() + ": " + ec.message());
  write_text_file(directory / "metrics.csv", result_to_csv(result));
  write_text_file(directory / "aph_vs_predictions.svg", sweep_svg(sweep));
}

}  // namespace modar::eval
