#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hwssl/runner.hpp"

namespace fs = std::filesystem;

namespace hwssl::runner {

namespace {

std::string fixed(const std::optional<double>& v, const char* missing) {
  if (!v) return missing;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", *v);
  return buf;
}

struct Run {
  fs::path dir;
  MetricsRow row;
};

std::string pad(const std::string& s, std::size_t width, bool left) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

std::string text_table(const std::vector<Run>& runs) {
  const std::vector<std::string> header{"model",    "intra_nd",      "inter_nd",      "intra_2d",
                                        "inter_2d", "separation_nd", "separation_2d", "accuracy"};
  std::vector<std::vector<std::string>> cells{header};
  for (const auto& r : runs) {
    const auto& m = r.row;
    cells.push_back({m.model, fixed(m.intra_nd, "-"), fixed(m.inter_nd, "-"), fixed(m.intra_2d, "-"),
                     fixed(m.inter_2d, "-"), fixed(m.separation_nd(), "-"), fixed(m.separation_2d(), "-"),
                     fixed(m.verification.accuracy, "-")});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : cells)
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  std::ostringstream out;
  for (std::size_t r = 0; r < cells.size(); ++r) {
    for (std::size_t c = 0; c < cells[r].size(); ++c) {
      if (c) out << "  ";
      out << pad(cells[r][c], width[c], c == 0);
    }
    out << "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (auto w : width) total += w;
      out << std::string(total + 2 * (width.size() - 1), '-') << "\n";
    }
  }
  if (runs.empty()) out << "(no completed runs)\n";
  return out.str();
}

/// Scatter of the 2-D reduction, one colour per writer.
std::string scatter_svg(const fs::path& csv, const std::string& title) {
  std::ifstream in(csv);
  std::string line;
  std::getline(in, line);
  struct P {
    unsigned writer;
    double x, y;
  };
  std::vector<P> pts;
  while (std::getline(in, line)) {
    unsigned w = 0, s = 0;
    double x = 0, y = 0;
    if (std::sscanf(line.c_str(), "%u,%u,%lf,%lf", &w, &s, &x, &y) == 4) pts.push_back({w, x, y});
  }
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (!pts.empty()) {
    x0 = x1 = pts[0].x;
    y0 = y1 = pts[0].y;
    for (const auto& p : pts) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
  }
  const double size = 480, margin = 20;
  auto sx = [&](double x) { return margin + (x - x0) / std::max(x1 - x0, 1e-12) * (size - 2 * margin); };
  auto sy = [&](double y) { return size - margin - (y - y0) / std::max(y1 - y0, 1e-12) * (size - 2 * margin); };
  std::ostringstream out;
  char buf[160];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"500\">\n";
  out << "<rect width=\"480\" height=\"500\" fill=\"white\"/>\n";
  out << "<text x=\"240\" y=\"495\" font-size=\"12\" text-anchor=\"middle\">" << title << "</text>\n";
  for (const auto& p : pts) {
    const int hue = static_cast<int>((p.writer * 137u) % 360u);
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"hsl(%d,70%%,45%%)\"/>\n", sx(p.x),
                  sy(p.y), hue);
    out << buf;
  }
  out << "</svg>\n";
  return out.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

}  // namespace

std::vector<fs::path> emit_report(const std::vector<fs::path>& manifests, const fs::path& out_dir,
                                  const ReportOptions& options) {
  if (manifests.empty()) throw Error("report: no manifests given");
  std::vector<Run> runs;
  std::vector<std::string> incomplete;
  for (const auto& p : manifests) {
    auto dir = fs::is_directory(p) ? p : p.parent_path();
    auto m = load_manifest(p);
    if (m.metrics)
      runs.push_back({dir, *m.metrics});
    else
      incomplete.push_back(dir.string());
  }
  std::stable_sort(runs.begin(), runs.end(), [](const Run& a, const Run& b) {
    if (a.row.verification.accuracy != b.row.verification.accuracy)
      return a.row.verification.accuracy > b.row.verification.accuracy;
    return a.row.model < b.row.model;
  });

  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  std::ostringstream csv;
  csv << "model,intra_nd,inter_nd,intra_2d,inter_2d,accuracy\n";
  for (const auto& r : runs) {
    const auto& m = r.row;
    csv << m.model << "," << fixed(m.intra_nd, "") << "," << fixed(m.inter_nd, "") << "," << fixed(m.intra_2d, "") << ","
        << fixed(m.inter_2d, "") << "," << fixed(m.verification.accuracy, "") << "\n";
  }
  write_file(out_dir / "results.csv", csv.str());
  written.push_back(out_dir / "results.csv");

  auto text = text_table(runs);
  for (const auto& d : incomplete) text += "incomplete run (no metrics): " + d + "\n";
  write_file(out_dir / "results.txt", text);
  written.push_back(out_dir / "results.txt");

  if (options.scatter)
    for (const auto& r : runs) {
      const auto csv2d = r.dir / "extract" / "embedding_2d.csv";
      if (!fs::exists(csv2d)) continue;
      auto path = out_dir / ("scatter_" + r.row.model + ".svg");
      write_file(path, scatter_svg(csv2d, r.row.model));
      written.push_back(path);
    }
  return written;
}

}  // namespace hwssl::runner
