#include "kae/svg.hpp"

#include <cstdio>
#include <fstream>

#include "kae/error.hpp"

namespace kae {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

std::string escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
        case '&': out += "&amp;"; break;
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        default: out += c;
        }
    }
    return out;
}

}  // namespace

SvgDoc::SvgDoc(double width, double height) : width_(width), height_(height) {}

void SvgDoc::line(double x1, double y1, double x2, double y2, const std::string& stroke,
                  double stroke_width, const std::string& dash) {
    body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" + num(x2) +
             "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke + "\" stroke-width=\"" +
             num(stroke_width) + "\"";
    if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
    body_ += "/>\n";
}

void SvgDoc::circle(double cx, double cy, double radius, const std::string& fill,
                    const std::string& stroke, double stroke_width) {
    body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" + num(radius) +
             "\" fill=\"" + (fill.empty() ? "none" : fill) + "\"";
    if (!stroke.empty()) {
        body_ += " stroke=\"" + stroke + "\" stroke-width=\"" + num(stroke_width) + "\"";
    }
    body_ += "/>\n";
}

void SvgDoc::rect(double x, double y, double w, double h, const std::string& fill,
                  const std::string& stroke, double stroke_width) {
    body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" + num(w) +
             "\" height=\"" + num(h) + "\" fill=\"" + (fill.empty() ? "none" : fill) + "\"";
    if (!stroke.empty()) {
        body_ += " stroke=\"" + stroke + "\" stroke-width=\"" + num(stroke_width) + "\"";
    }
    body_ += "/>\n";
}

void SvgDoc::polyline(const std::vector<std::pair<double, double>>& pts,
                      const std::string& stroke, double stroke_width,
                      const std::string& dash) {
    body_ += "<polyline points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
        if (i) body_ += ' ';
        body_ += num(pts[i].first) + "," + num(pts[i].second);
    }
    body_ += "\" fill=\"none\" stroke=\"" + stroke + "\" stroke-width=\"" +
             num(stroke_width) + "\"";
    if (!dash.empty()) body_ += " stroke-dasharray=\"" + dash + "\"";
    body_ += "/>\n";
}

void SvgDoc::text(double x, double y, const std::string& content, double size,
                  const std::string& anchor, const std::string& fill) {
    body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" + num(size) +
             "\" font-family=\"sans-serif\" text-anchor=\"" + anchor + "\" fill=\"" + fill +
             "\">" + escape(content) + "</text>\n";
}

std::string SvgDoc::str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width_) +
           "\" height=\"" + num(height_) + "\" viewBox=\"0 0 " + num(width_) + " " +
           num(height_) + "\">\n<rect width=\"" + num(width_) + "\" height=\"" +
           num(height_) + "\" fill=\"#fff\"/>\n" + body_ + "</svg>\n";
}

void SvgDoc::write(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error::io("cannot open '" + path + "' for writing");
    out << str();
    if (!out) throw Error::io("failed writing '" + path + "'");
}

}  // namespace kae
