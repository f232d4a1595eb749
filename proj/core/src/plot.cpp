#include "dw/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dw/error.hpp"

namespace dw::plot {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    return pos == s.size() ? v : NAN;
  } catch (const std::exception&) {
    return NAN;
  }
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream o;
  o.precision(3);
  o << v;
  return o.str();
}

}  // namespace

int Table::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  DW_REQUIRE(in.good(), ErrorCode::kIoFailure, "cannot read " + path.string());
  Table t;
  std::string line;
  DW_REQUIRE(static_cast<bool>(std::getline(in, line)), ErrorCode::kInvalidInput, path.string() + " is empty");
  t.header = split(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto row = split(line);
    DW_REQUIRE(row.size() == t.header.size(), ErrorCode::kInvalidInput,
               path.string() + ": row width " + std::to_string(row.size()) + " != header width " +
                   std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::vector<Panel> panels_for(const Table& table, const std::string& stem) {
  std::vector<Panel> panels;
  if (table.column("step") == 0) {
    Panel p{stem, "step", "loss", {}, {}};
    for (std::size_t c = 2; c < table.header.size(); ++c) {
      Series s{table.header[c], {}, {}};
      for (const auto& r : table.rows) {
        s.x.push_back(to_double(r[0]));
        s.y.push_back(to_double(r[c]));
      }
      p.series.push_back(std::move(s));
    }
    panels.push_back(std::move(p));
  } else if (table.column("sweep") == 0 && table.column("value") == 1) {
    const std::string sweep = table.rows.empty() ? stem : table.rows.front()[0];
    for (const auto& [metric, label] : {std::pair{"psnr", "PSNR (dB)"}, std::pair{"ssim", "SSIM"}}) {
      Panel p{stem + "_" + metric, sweep, label, {}, {}};
      for (const auto* who : {"constructor", "dew"}) {
        const int col = table.column(std::string(who) + "_" + metric);
        if (col < 0) continue;
        Series s{who, {}, {}};
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
          s.x.push_back(static_cast<double>(i));
          s.y.push_back(to_double(table.rows[i][col]));
        }
        p.series.push_back(std::move(s));
      }
      for (const auto& r : table.rows) p.x_ticks.push_back(r[1]);
      panels.push_back(std::move(p));
    }
  } else if (table.column("scene_id") == 0 && table.column("psnr_db") >= 0) {
    const int col = table.column("psnr_db");
    Panel p{stem, "scene", "PSNR (dB)", {}, {}};
    Series s{"psnr_db", {}, {}};
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      s.x.push_back(static_cast<double>(i));
      s.y.push_back(to_double(table.rows[i][col]));
      p.x_ticks.push_back(table.rows[i][0]);
    }
    p.series.push_back(std::move(s));
    panels.push_back(std::move(p));
  } else {
    throw Error(ErrorCode::kInvalidInput, stem + ": unrecognised CSV layout (header starts with '" +
                                              (table.header.empty() ? std::string() : table.header[0]) + "')");
  }
  return panels;
}

std::string render_svg(const Panel& panel, int width, int height) {
  const double left = 70, right = 140, top = 40, bottom = 50;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : panel.series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = width - left - right, ph = height - top - bottom;
  const auto sx = [&](double x) { return left + (x - x0) / (x1 - x0) * pw; };
  const auto sy = [&](double y) { return top + (1.0 - (y - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(panel.title)
    << "</text>\n"
    << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double v = y0 + (y1 - y0) * i / 4.0;
    o << "<text x=\"" << left - 6 << "\" y=\"" << sy(v) + 4 << "\" text-anchor=\"end\">" << fmt(v) << "</text>\n";
  }
  if (panel.x_ticks.empty()) {
    for (int i = 0; i <= 4; ++i) {
      const double v = x0 + (x1 - x0) * i / 4.0;
      o << "<text x=\"" << sx(v) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">" << fmt(v) << "</text>\n";
    }
  } else {
    for (std::size_t i = 0; i < panel.x_ticks.size(); ++i)
      o << "<text x=\"" << sx(static_cast<double>(i)) << "\" y=\"" << top + ph + 16 << "\" text-anchor=\"middle\">"
        << escape(panel.x_ticks[i]) << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 10 << "\" text-anchor=\"middle\">"
    << escape(panel.x_label) << "</text>\n"
    << "<text x=\"16\" y=\"" << top + ph / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 " << top + ph / 2
    << ")\">" << escape(panel.y_label) << "</text>\n";
  for (std::size_t k = 0; k < panel.series.size(); ++k) {
    const auto& s = panel.series[k];
    const char* color = kPalette[k % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) o << sx(s.x[i]) << ',' << sy(s.y[i]) << ' ';
    o << "\"/>\n";
    if (!panel.x_ticks.empty())
      for (std::size_t i = 0; i < s.x.size(); ++i)
        if (std::isfinite(s.y[i]))
          o << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    const double ly = top + 14 + 16 * static_cast<double>(k);
    o << "<line x1=\"" << left + pw + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << left + pw + 30 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
      << "<text x=\"" << left + pw + 34 << "\" y=\"" << ly << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::vector<std::filesystem::path> plot(const std::vector<std::filesystem::path>& csv_paths,
                                        const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  for (const auto& csv : csv_paths) {
    for (const auto& panel : panels_for(read_csv(csv), csv.stem().string())) {
      const auto path = out_dir / (panel.title + ".svg");
      std::ofstream out(path, std::ios::trunc);
      DW_REQUIRE(out.good(), ErrorCode::kIoFailure, "cannot write " + path.string());
      out << render_svg(panel);
      written.push_back(path);
    }
  }
  return written;
}

}  // namespace dw::plot
