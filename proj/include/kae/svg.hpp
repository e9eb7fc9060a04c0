#pragma once

#include <string>
#include <utility>
#include <vector>

namespace kae {

// Minimal deterministic SVG assembly: fixed "%.6g" numeric formatting, no
// external assets, elements appear in call order. Figures are built by the
// callers; this class only knows shapes and text.
class SvgDoc {
public:
    SvgDoc(double width, double height);

    void line(double x1, double y1, double x2, double y2, const std::string& stroke,
              double stroke_width = 1.0, const std::string& dash = "");
    void circle(double cx, double cy, double radius, const std::string& fill,
                const std::string& stroke = "", double stroke_width = 0.0);
    void rect(double x, double y, double w, double h, const std::string& fill,
              const std::string& stroke = "", double stroke_width = 0.0);
    void polyline(const std::vector<std::pair<double, double>>& pts,
                  const std::string& stroke, double stroke_width = 1.0,
                  const std::string& dash = "");
    // anchor: "start", "middle", or "end".
    void text(double x, double y, const std::string& content, double size,
              const std::string& anchor = "start", const std::string& fill = "#333");

    std::string str() const;
    void write(const std::string& path) const;  // io error if unwritable

private:
    double width_, height_;
    std::string body_;
};

}  // namespace kae
