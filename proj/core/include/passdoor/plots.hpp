#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace passdoor {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Minimal PNG chart emitters for the report stage.
void line_chart(const std::filesystem::path& path, const std::string& title,
                const std::string& x_label, const std::string& y_label,
                const std::vector<Series>& series);

void bar_chart(const std::filesystem::path& path, const std::string& title,
               const std::vector<std::string>& labels, const std::vector<double>& values);

}  // namespace passdoor
