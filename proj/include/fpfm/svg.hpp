#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include "fpfm/matrix.hpp"

namespace fpfm {

// Scatter plot with the figure convention used throughout: red target
// samples under blue generated samples, fixed viewport around the unit
// circle.
inline void write_scatter_svg(const std::string& path, const DenseMatrix& target,
                              const DenseMatrix& generated, const std::string& title = "") {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const double view = 1.5;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
         "width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n";
  out << "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n";
  auto px = [view](double x) { return 240.0 + 240.0 * x / view; };
  auto py = [view](double y) { return 240.0 - 240.0 * y / view; };
  out << "<circle cx=\"240\" cy=\"240\" r=\"" << 240.0 / view
      << "\" fill=\"none\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
  auto dots = [&](const DenseMatrix& pts, const char* color) {
    for (std::size_t i = 0; i < pts.rows(); ++i)
      out << "<circle cx=\"" << px(pts(i, 0)) << "\" cy=\"" << py(pts(i, 1))
          << "\" r=\"2\" fill=\"" << color << "\" fill-opacity=\"0.6\"/>\n";
  };
  dots(target, "#d62728");
  dots(generated, "#1f77b4");
  if (!title.empty())
    out << "<text x=\"8\" y=\"16\" font-family=\"sans-serif\" font-size=\"12\">" << title
        << "</text>\n";
  out << "</svg>\n";
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace fpfm
