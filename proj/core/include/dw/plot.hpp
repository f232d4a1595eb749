#pragma once

#include <filesystem>
#include <string>
#include <vector>

/// SVG line charts from the CSV files written by training and evaluation.
namespace dw::plot {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

struct Panel {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  std::vector<std::string> x_ticks;  // categorical axis labels at x = 0, 1, ...
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 if absent
};

Table read_csv(const std::filesystem::path& path);

/// Panels derived from a table: loss curves (one panel, every term against
/// `step`), ablation tables (constructor and De-W PSNR against the swept value)
/// or evaluation records (PSNR per scene).
std::vector<Panel> panels_for(const Table& table, const std::string& stem);

std::string render_svg(const Panel& panel, int width = 640, int height = 400);

/// Writes one SVG per panel of every CSV into `out_dir`; returns the files written.
std::vector<std::filesystem::path> plot(const std::vector<std::filesystem::path>& csv_paths,
                                        const std::filesystem::path& out_dir);

}  // namespace dw::plot
