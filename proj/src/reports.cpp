#include "kae/reports.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "kae/error.hpp"
#include "kae/svg.hpp"

namespace kae {
namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt3e(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3e", v);
    return buf;
}

std::string fmtg(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

std::ofstream open_text(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error::io("cannot open '" + path + "' for writing");
    return out;
}

void finish_text(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw Error::io("failed writing '" + path + "'");
}

// World -> pixel affine map over one axis. Callers pad ranges so w0 != w1.
struct AxisMap {
    double w0 = 0.0, w1 = 1.0, p0 = 0.0, p1 = 1.0;
    double operator()(double w) const { return p0 + (w - w0) / (w1 - w0) * (p1 - p0); }
};

// Tick spacing of roughly `target` steps rounded to a 1/2/5 decade multiple.
double nice_stride(double range, int target) {
    const double raw = std::max(range, 1e-300) / static_cast<double>(target);
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    const double step = norm <= 1.0 ? 1.0 : norm <= 2.0 ? 2.0 : norm <= 5.0 ? 5.0 : 10.0;
    return step * mag;
}

void pad_range(double& lo, double& hi, double frac) {
    if (!(hi > lo)) {
        const double mid = lo;
        lo = mid - 1.0;
        hi = mid + 1.0;
        return;
    }
    const double pad = (hi - lo) * frac;
    lo -= pad;
    hi += pad;
}

void require_rollout_pair(const Tensor& reference, const Tensor& prediction) {
    if (reference.shape().size() != 2 || prediction.shape().size() != 2)
        throw Error::dimension("rollout tables need rank-2 [T x n] inputs");
    if (reference.shape() != prediction.shape())
        throw Error::dimension("reference and prediction shapes differ: [" +
                               std::to_string(reference.shape()[0]) + " x " +
                               std::to_string(reference.shape()[1]) + "] vs [" +
                               std::to_string(prediction.shape()[0]) + " x " +
                               std::to_string(prediction.shape()[1]) + "]");
    if (reference.shape()[0] == 0 || reference.shape()[1] == 0)
        throw Error::dimension("rollout tables need at least one row and one column");
}

}  // namespace

void write_rollout_csv(const Tensor& reference, const Tensor& prediction, double dt,
                       const std::string& path) {
    require_rollout_pair(reference, prediction);
    const std::size_t T = reference.shape()[0];
    const std::size_t n = reference.shape()[1];
    std::ofstream out = open_text(path);
    out << "time";
    for (std::size_t j = 0; j < n; ++j) out << ",ref_" << j;
    for (std::size_t j = 0; j < n; ++j) out << ",pred_" << j;
    out << '\n';
    const auto& ref = reference.values();
    const auto& pred = prediction.values();
    for (std::size_t k = 0; k < T; ++k) {
        out << fmt17(static_cast<double>(k) * dt);
        for (std::size_t j = 0; j < n; ++j) out << ',' << fmt17(ref[k * n + j]);
        for (std::size_t j = 0; j < n; ++j) out << ',' << fmt17(pred[k * n + j]);
        out << '\n';
    }
    finish_text(out, path);
}

void write_rollout_svg(const Grid& grid, const Tensor& reference, const Tensor& prediction,
                       double t_final, const std::string& path) {
    require_rollout_pair(reference, prediction);
    const std::size_t T = reference.shape()[0];
    const std::size_t n = reference.shape()[1];
    if (n != grid.n)
        throw Error::dimension("grid has " + std::to_string(grid.n) + " points but states have " +
                               std::to_string(n));

    const double W = 640, H = 420;
    const double l = 60, r = 16, t = 40, b = 46;
    SvgDoc doc(W, H);

    const double* ref0 = reference.values().data();
    const double* refT = ref0 + (T - 1) * n;
    const double* predT = prediction.values().data() + (T - 1) * n;
    double ylo = std::numeric_limits<double>::infinity(), yhi = -ylo;
    for (std::size_t j = 0; j < n; ++j) {
        for (double v : {ref0[j], refT[j], predT[j]}) {
            ylo = std::min(ylo, v);
            yhi = std::max(yhi, v);
        }
    }
    pad_range(ylo, yhi, 0.08);

    const AxisMap xm{grid.x_min, grid.x(n - 1), l, W - r};
    const AxisMap ym{ylo, yhi, H - b, t};

    // Frame and ticks.
    doc.line(l, t, l, H - b, "#333");
    doc.line(l, H - b, W - r, H - b, "#333");
    const double xstride = nice_stride(xm.w1 - xm.w0, 5);
    for (double x = std::ceil(xm.w0 / xstride) * xstride; x <= xm.w1 + 1e-9 * xstride;
         x += xstride) {
        doc.line(xm(x), H - b, xm(x), H - b + 4, "#333");
        doc.text(xm(x), H - b + 16, fmtg(x), 11, "middle", "#333");
    }
    const double ystride = nice_stride(yhi - ylo, 5);
    for (double y = std::ceil(ylo / ystride) * ystride; y <= yhi + 1e-9 * ystride;
         y += ystride) {
        doc.line(l - 4, ym(y), l, ym(y), "#333");
        doc.text(l - 7, ym(y) + 4, fmtg(y), 11, "end", "#333");
    }
    doc.text((l + W - r) / 2, H - 8, "x", 12, "middle", "#333");
    doc.text(l, t - 8, "u", 12, "middle", "#333");
    doc.text((l + W - r) / 2, t - 12, "state at t = " + fmtg(t_final) + " s", 14, "middle");

    auto curve = [&](const double* row, const std::string& stroke, const std::string& dash) {
        std::vector<std::pair<double, double>> pts(n);
        for (std::size_t j = 0; j < n; ++j) pts[j] = {xm(grid.x(j)), ym(row[j])};
        doc.polyline(pts, stroke, 1.6, dash);
    };
    curve(ref0, "#c0392b", "");
    curve(refT, "#2563c9", "");
    curve(predT, "#2563c9", "6,4");

    // Legend.
    const double lx = l + 12, ly = t + 14;
    const char* labels[3] = {"initial condition", "reference final state", "predicted final state"};
    const char* colors[3] = {"#c0392b", "#2563c9", "#2563c9"};
    const char* dashes[3] = {"", "", "6,4"};
    for (int i = 0; i < 3; ++i) {
        doc.line(lx, ly + 16.0 * i, lx + 26, ly + 16.0 * i, colors[i], 1.6, dashes[i]);
        doc.text(lx + 32, ly + 16.0 * i + 4, labels[i], 11, "start", "#333");
    }
    doc.write(path);
}

void write_loss_curves_svg(const std::vector<LossCurve>& curves, std::size_t inset_epochs,
                           const std::string& path) {
    // Keep only plottable points: a log axis cannot place zeros or NaNs.
    std::vector<LossCurve> clean;
    for (const auto& c : curves) {
        LossCurve cc{c.label, c.color, c.dashed, {}};
        for (const auto& p : c.points)
            if (std::isfinite(p.first) && std::isfinite(p.second) && p.second > 0.0)
                cc.points.push_back(p);
        if (!cc.points.empty()) clean.push_back(std::move(cc));
    }
    if (clean.empty()) throw Error::config("loss-curve figure needs at least one positive point");

    double e0 = std::numeric_limits<double>::infinity(), e1 = -e0;
    double g0 = e0, g1 = -e0;  // log10 range
    for (const auto& c : clean) {
        for (const auto& p : c.points) {
            e0 = std::min(e0, p.first);
            e1 = std::max(e1, p.first);
            const double g = std::log10(p.second);
            g0 = std::min(g0, g);
            g1 = std::max(g1, g);
        }
    }
    if (!(e1 > e0)) {
        e0 -= 0.5;
        e1 += 0.5;
    }
    pad_range(g0, g1, 0.06);

    const double W = 680, H = 440;
    const double l = 64, r = 18, t = 36, b = 48;
    SvgDoc doc(W, H);
    const AxisMap xm{e0, e1, l, W - r};
    const AxisMap ym{g0, g1, H - b, t};

    doc.line(l, t, l, H - b, "#333");
    doc.line(l, H - b, W - r, H - b, "#333");
    const double xstride = nice_stride(e1 - e0, 6);
    for (double x = std::ceil(e0 / xstride) * xstride; x <= e1 + 1e-9 * xstride; x += xstride) {
        doc.line(xm(x), H - b, xm(x), H - b + 4, "#333");
        doc.text(xm(x), H - b + 16, fmtg(x), 11, "middle", "#333");
    }
    // Decade ticks on the log axis, thinned to at most eight labels.
    const int k0 = static_cast<int>(std::ceil(g0));
    const int k1 = static_cast<int>(std::floor(g1));
    const int span = std::max(0, k1 - k0);
    const int kstep = span / 8 + 1;
    for (int k = k0; k <= k1; k += kstep) {
        char lbl[16];
        std::snprintf(lbl, sizeof(lbl), "1e%d", k);
        doc.line(l - 4, ym(k), l, ym(k), "#333");
        doc.line(l, ym(k), W - r, ym(k), "#eee");
        doc.text(l - 7, ym(k) + 4, lbl, 11, "end", "#333");
    }
    doc.text((l + W - r) / 2, H - 8, "epoch", 12, "middle", "#333");
    doc.text((l + W - r) / 2, t - 10, "total loss per epoch (log scale)", 14, "middle");

    auto draw_curves = [&](const AxisMap& ax, const AxisMap& ay, double lo_e, double width) {
        for (const auto& c : clean) {
            std::vector<std::pair<double, double>> pts;
            for (const auto& p : c.points) {
                if (p.first < lo_e) continue;
                pts.emplace_back(ax(p.first), ay(std::log10(p.second)));
            }
            if (pts.size() == 1)
                doc.circle(pts[0].first, pts[0].second, 2.0, c.color);
            else if (!pts.empty())
                doc.polyline(pts, c.color, width, c.dashed ? "5,4" : "");
        }
    };
    draw_curves(xm, ym, -std::numeric_limits<double>::infinity(), 1.5);

    // Legend, upper right of the plot area.
    double ly = t + 14;
    for (const auto& c : clean) {
        const double lx = W - r - 190;
        doc.line(lx, ly, lx + 26, ly, c.color, 1.6, c.dashed ? "5,4" : "");
        doc.text(lx + 32, ly + 4, c.label, 11, "start", "#333");
        ly += 16;
    }

    // Inset: the trailing epochs on their own scales.
    if (inset_epochs > 0 && e1 > e0) {
        const double ie0 = std::max(e0, e1 - static_cast<double>(inset_epochs) + 1.0);
        double ig0 = std::numeric_limits<double>::infinity(), ig1 = -ig0;
        bool any = false;
        for (const auto& c : clean) {
            for (const auto& p : c.points) {
                if (p.first < ie0) continue;
                const double g = std::log10(p.second);
                ig0 = std::min(ig0, g);
                ig1 = std::max(ig1, g);
                any = true;
            }
        }
        if (any && ie0 < e1) {
            pad_range(ig0, ig1, 0.10);
            const double px0 = l + 0.50 * (W - r - l), px1 = W - r - 14;
            const double py0 = H - b - 14, py1 = H - b - 0.48 * (H - b - t);
            doc.rect(px0 - 6, py1 - 16, px1 - px0 + 12, py0 - py1 + 26, "white", "#999", 1.0);
            const AxisMap ixm{ie0, e1, px0, px1};
            const AxisMap iym{ig0, ig1, py0, py1};
            draw_curves(ixm, iym, ie0, 1.0);
            char head[48];
            std::snprintf(head, sizeof(head), "epochs %.0f-%.0f", ie0, e1);
            doc.text((px0 + px1) / 2, py1 - 4, head, 10, "middle", "#666");
            doc.text(px0 - 4, py0 + 4, fmt3e(std::pow(10.0, ig0)), 8, "end", "#666");
            doc.text(px0 - 4, py1 + 4, fmt3e(std::pow(10.0, ig1)), 8, "end", "#666");
        }
    }
    doc.write(path);
}

void write_bench_csv(const std::vector<BenchRow>& rows, const std::string& path) {
    std::ofstream out = open_text(path);
    out << "heads,median_ms,attention_flops,total_loss\n";
    for (const auto& row : rows) {
        out << row.heads << ',' << fmt17(row.median_ms) << ',' << row.attention_flops << ','
            << fmt17(row.total_loss) << '\n';
    }
    finish_text(out, path);
}

void write_bench_svg(const std::vector<BenchRow>& rows, const std::string& path) {
    if (rows.empty()) throw Error::config("benchmark figure needs at least one row");
    const double W = 560, H = 400;
    const double l = 64, r = 70, t = 36, b = 48;
    SvgDoc doc(W, H);

    double t0 = std::numeric_limits<double>::infinity(), t1 = -t0;
    double s0 = t0, s1 = -t0;
    for (const auto& row : rows) {
        t0 = std::min(t0, row.median_ms);
        t1 = std::max(t1, row.median_ms);
        s0 = std::min(s0, row.total_loss);
        s1 = std::max(s1, row.total_loss);
    }
    pad_range(t0, t1, 0.08);
    pad_range(s0, s1, 0.08);

    // Head counts sit at equal spacing; the sweep doubles each step, so a
    // linear head axis would crush the small counts together.
    const double xlo = -0.5, xhi = static_cast<double>(rows.size()) - 0.5;
    const AxisMap xm{xlo, xhi, l, W - r};
    const AxisMap tm{t0, t1, H - b, t};
    const AxisMap sm{s0, s1, H - b, t};

    doc.line(l, t, l, H - b, "#2563c9");
    doc.line(W - r, t, W - r, H - b, "#c0392b");
    doc.line(l, H - b, W - r, H - b, "#333");
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double x = xm(static_cast<double>(i));
        doc.line(x, H - b, x, H - b + 4, "#333");
        doc.text(x, H - b + 16, std::to_string(rows[i].heads), 11, "middle", "#333");
    }
    const double tstride = nice_stride(t1 - t0, 5);
    for (double y = std::ceil(t0 / tstride) * tstride; y <= t1 + 1e-9 * tstride; y += tstride) {
        doc.line(l - 4, tm(y), l, tm(y), "#2563c9");
        doc.text(l - 7, tm(y) + 4, fmtg(y), 10, "end", "#2563c9");
    }
    const double sstride = nice_stride(s1 - s0, 5);
    for (double y = std::ceil(s0 / sstride) * sstride; y <= s1 + 1e-9 * sstride; y += sstride) {
        doc.line(W - r, sm(y), W - r + 4, sm(y), "#c0392b");
        doc.text(W - r + 7, sm(y) + 4, fmtg(y), 10, "start", "#c0392b");
    }
    doc.text((l + W - r) / 2, H - 8, "attention heads", 12, "middle", "#333");
    doc.text((l + W - r) / 2, t - 10, "head count sweep", 14, "middle");

    std::vector<std::pair<double, double>> tp, sp;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        tp.emplace_back(xm(static_cast<double>(i)), tm(rows[i].median_ms));
        sp.emplace_back(xm(static_cast<double>(i)), sm(rows[i].total_loss));
    }
    if (tp.size() > 1) doc.polyline(tp, "#2563c9", 1.6);
    if (sp.size() > 1) doc.polyline(sp, "#c0392b", 1.6, "6,4");
    for (const auto& p : tp) doc.circle(p.first, p.second, 3.5, "#2563c9");
    for (const auto& p : sp) doc.circle(p.first, p.second, 3.5, "#c0392b");

    const double lx = l + 12, ly = t + 14;
    doc.line(lx, ly, lx + 26, ly, "#2563c9", 1.6);
    doc.text(lx + 32, ly + 4, "median inference time (ms)", 11, "start", "#333");
    doc.line(lx, ly + 16, lx + 26, ly + 16, "#c0392b", 1.6, "6,4");
    doc.text(lx + 32, ly + 20, "total loss", 11, "start", "#333");
    doc.write(path);
}

void write_compare_table(const std::vector<CompareEntry>& entries, PDEKind pde,
                         const std::string& path) {
    if (entries.empty()) throw Error::config("comparison table needs at least one entry");

    const char* equation = nullptr;
    struct RefRow {
        const char* block;
        const char* train;
        const char* val;
    };
    std::vector<RefRow> refs;
    switch (pde) {
        case PDEKind::burgers:
            equation = "u_t + 10 u u_x = u_xx on x in (-pi, pi)";
            refs = {{"TransRes", "1.944e-2", "1.939e-2"}, {"DenseRes", "2.003e-2", "2.036e-2"}};
            break;
        case PDEKind::ks:
            equation = "u_t + u_xx + u_xxxx + u u_x = 0 on x in (-4pi, 4pi)";
            refs = {{"TransRes", "8.433e-3", "8.516e-3"}, {"ConvRes", "1.012e-2", "1.004e-2"}};
            break;
        default:
            throw Error::config("no reference comparison exists for pde '" +
                                std::string(pde_name(pde)) + "' (expected burgers or ks)");
    }

    std::size_t w1 = std::string("Outer Encoder/Decoder (phi)").size();
    for (const auto& e : entries) w1 = std::max(w1, e.block.size());
    const std::size_t w2 = std::string("Training Loss").size();
    const std::size_t w3 = std::string("Validation Loss").size();
    auto pad = [](const std::string& s, std::size_t w) {
        return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
    };
    auto lead = [](const std::string& s, std::size_t w) {
        return std::string(w > s.size() ? w - s.size() : 0, ' ') + s;
    };

    std::ofstream out = open_text(path);
    out << "Outer block comparison: " << equation << "\n";
    out << "Values are the total loss at the final trained epoch.\n\n";
    out << pad("Outer Encoder/Decoder (phi)", w1) << " | " << lead("Training Loss", w2) << " | "
        << lead("Validation Loss", w3) << "\n";
    out << std::string(w1, '-') << "-+-" << std::string(w2, '-') << "-+-" << std::string(w3, '-')
        << "\n";
    for (const auto& e : entries) {
        out << pad(e.block, w1) << " | " << lead(fmt3e(e.train_loss), w2) << " | "
            << lead(fmt3e(e.val_loss), w3) << "\n";
    }
    out << "\nReference totals at full training scale (60000 trajectories, 700 epochs):\n";
    for (const auto& ref : refs) {
        out << "  " << pad(ref.block, 8) << "  training " << ref.train << "  validation "
            << ref.val << "\n";
    }
    out << "Desk-scale runs use far less data and time; their totals and ordering are\n"
           "not expected to match the reference values.\n";
    finish_text(out, path);
}

}  // namespace kae
