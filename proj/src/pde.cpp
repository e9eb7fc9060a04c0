#include "kae/pde.hpp"

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "kae/error.hpp"
#include "kae/fft.hpp"
#include "kae/rng.hpp"

namespace kae {
namespace {

constexpr double kBlowUpLimit = 1e6;
// Classical RK4 covers the real axis out to |lambda*h| = 2.785; substep
// counts keep the sharpest eigenvalue estimate inside half that interval.
constexpr double kStabilityBudget = 0.5 * 2.785;

void require_state(const Tensor& u, const Grid& grid, const char* where) {
    if (u.numel() != grid.n)
        throw Error::dimension(std::string(where) + ": state has " +
                               std::to_string(u.numel()) + " entries, grid has " +
                               std::to_string(grid.n));
    const double* p = u.data();
    for (std::size_t i = 0; i < u.numel(); ++i)
        if (!std::isfinite(p[i]))
            throw Error::numeric(std::string(where) +
                                 ": non-finite value at index " + std::to_string(i));
}

// Signed Fourier mode index m for bin j, and the physical wavenumber
// k = 2*pi*m / L. `zero_nyquist` drops the unpaired n/2 mode, which odd
// derivatives of a real signal require.
double wavenumber(std::size_t j, std::size_t n, double box_length, bool zero_nyquist) {
    const auto half = static_cast<std::ptrdiff_t>(n / 2);
    auto m = static_cast<std::ptrdiff_t>(j);
    if (m > half) m -= static_cast<std::ptrdiff_t>(n);
    if (zero_nyquist && m == half && n % 2 == 0) m = 0;
    return 2.0 * std::numbers::pi * static_cast<double>(m) / box_length;
}

Tensor rhs_fisher(const PDESpec& spec, const Tensor& u, const Grid& grid) {
    const std::size_t n = grid.n;
    const double inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    Tensor out(std::vector<std::size_t>{n});
    const double* p = u.data();
    double* o = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double left = p[(i + n - 1) % n];
        const double right = p[(i + 1) % n];
        const double lap = (right - 2.0 * p[i] + left) * inv_dx2;
        o[i] = spec.alpha * lap + spec.beta * p[i] * (1.0 - p[i]);
    }
    return out;
}

Tensor rhs_burgers(const PDESpec& spec, const Tensor& u, const Grid& grid) {
    const std::size_t n = grid.n;
    const double inv_dx2 = 1.0 / (grid.dx() * grid.dx());
    const double inv_2dx = 1.0 / (2.0 * grid.dx());
    Tensor out(std::vector<std::size_t>{n});
    const double* p = u.data();
    double* o = out.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double left = p[(i + n - 1) % n];
        const double right = p[(i + 1) % n];
        const double lap = (right - 2.0 * p[i] + left) * inv_dx2;
        const double du = (right - left) * inv_2dx;
        o[i] = spec.alpha * lap - spec.beta * p[i] * du;
    }
    return out;
}

Tensor rhs_ks(const PDESpec& spec, const Tensor& u, const Grid& grid) {
    const std::size_t n = grid.n;
    auto v = fft_real(u.values());
    std::vector<std::complex<double>> linear(n), deriv(n);
    for (std::size_t j = 0; j < n; ++j) {
        const double k = wavenumber(j, n, grid.length(), false);
        const double kd = wavenumber(j, n, grid.length(), true);
        linear[j] = (k * k - k * k * k * k) * v[j];
        deriv[j] = std::complex<double>(0.0, kd) * v[j];
    }
    const auto lin = ifft_real(std::move(linear));
    const auto ux = ifft_real(std::move(deriv));
    Tensor out(std::vector<std::size_t>{n});
    for (std::size_t i = 0; i < n; ++i)
        out[i] = lin[i] - spec.beta * u[i] * ux[i];
    return out;
}

// Sharpest local growth rate of the linearized right-hand side; drives the
// automatic substep count.
double stiffness_estimate(const PDESpec& spec, const Tensor& u, const Grid& grid) {
    const double diffusion = 4.0 * spec.alpha / (grid.dx() * grid.dx());
    double local = 0.0;
    if (spec.kind == PDEKind::fisher) {
        for (std::size_t i = 0; i < u.numel(); ++i)
            local = std::max(local, spec.beta * std::abs(1.0 - 2.0 * u[i]));
    } else {
        local = spec.beta * u.max_abs() / grid.dx();
    }
    return diffusion + local;
}

struct Etdrk4 {
    std::vector<double> e_full, e_half;   // exp(L*h), exp(L*h/2)
    std::vector<double> q, f1, f2, f3;    // phi-function weights
    std::vector<double> deriv_k;          // wavenumber for the u*u_x term

    Etdrk4(const Grid& grid, double h) {
        const std::size_t n = grid.n;
        e_full.resize(n);
        e_half.resize(n);
        q.assign(n, 0.0);
        f1.assign(n, 0.0);
        f2.assign(n, 0.0);
        f3.assign(n, 0.0);
        deriv_k.resize(n);
        // Kassam-Trefethen contour quadrature: the phi functions have
        // removable singularities at L*h = 0, so evaluate them as a mean over
        // a unit circle around each L*h instead of by the unstable direct
        // formulas.
        constexpr int kContourPoints = 32;
        for (std::size_t j = 0; j < n; ++j) {
            const double k = wavenumber(j, n, grid.length(), false);
            const double lh = (k * k - k * k * k * k) * h;
            e_full[j] = std::exp(lh);
            e_half[j] = std::exp(0.5 * lh);
            deriv_k[j] = wavenumber(j, n, grid.length(), true);
            std::complex<double> sq{0.0}, s1{0.0}, s2{0.0}, s3{0.0};
            for (int m = 0; m < kContourPoints; ++m) {
                const double theta = std::numbers::pi *
                                     (static_cast<double>(m) + 0.5) /
                                     static_cast<double>(kContourPoints);
                const std::complex<double> z =
                    lh + std::polar(1.0, theta);
                const std::complex<double> ez = std::exp(z);
                const std::complex<double> z2 = z * z;
                const std::complex<double> z3 = z2 * z;
                sq += (std::exp(0.5 * z) - 1.0) / z;
                s1 += (-4.0 - z + ez * (4.0 - 3.0 * z + z2)) / z3;
                s2 += (2.0 + z + ez * (-2.0 + z)) / z3;
                s3 += (-4.0 - 3.0 * z - z2 + ez * (4.0 - z)) / z3;
            }
            const double scale = h / static_cast<double>(kContourPoints);
            q[j] = scale * sq.real();
            f1[j] = scale * s1.real();
            f2[j] = scale * s2.real();
            f3[j] = scale * s3.real();
        }
    }

    // N(u) in Fourier space: -beta/2 * ik * fft(u^2).
    std::vector<std::complex<double>> nonlinear(
        const std::vector<std::complex<double>>& v, double beta) const {
        const std::size_t n = v.size();
        auto u = ifft_real(v);
        for (auto& x : u) x *= x;
        auto w = fft_real(u);
        for (std::size_t j = 0; j < n; ++j)
            w[j] *= std::complex<double>(0.0, -0.5 * beta * deriv_k[j]);
        return w;
    }

    std::vector<std::complex<double>> step(
        const std::vector<std::complex<double>>& v, double beta) const {
        const std::size_t n = v.size();
        const auto nv = nonlinear(v, beta);
        std::vector<std::complex<double>> a(n), b(n), c(n), next(n);
        for (std::size_t j = 0; j < n; ++j) a[j] = e_half[j] * v[j] + q[j] * nv[j];
        const auto na = nonlinear(a, beta);
        for (std::size_t j = 0; j < n; ++j) b[j] = e_half[j] * v[j] + q[j] * na[j];
        const auto nb = nonlinear(b, beta);
        for (std::size_t j = 0; j < n; ++j)
            c[j] = e_half[j] * a[j] + q[j] * (2.0 * nb[j] - nv[j]);
        const auto nc = nonlinear(c, beta);
        for (std::size_t j = 0; j < n; ++j)
            next[j] = e_full[j] * v[j] + f1[j] * nv[j] +
                      2.0 * f2[j] * (na[j] + nb[j]) + f3[j] * nc[j];
        return next;
    }
};

}  // namespace

const char* pde_name(PDEKind kind) {
    switch (kind) {
        case PDEKind::fisher: return "fisher";
        case PDEKind::burgers: return "burgers";
        case PDEKind::ks: return "ks";
    }
    throw Error::parameter("unknown pde kind tag " +
                           std::to_string(static_cast<int>(kind)));
}

PDEKind pde_from_name(const std::string& name) {
    if (name == "fisher") return PDEKind::fisher;
    if (name == "burgers") return PDEKind::burgers;
    if (name == "ks") return PDEKind::ks;
    throw Error::parameter("unknown pde kind '" + name +
                           "' (expected fisher, burgers, or ks)");
}

PDESpec default_spec(PDEKind kind) {
    switch (kind) {
        case PDEKind::fisher: return PDESpec::fisher();
        case PDEKind::burgers: return PDESpec::burgers();
        case PDEKind::ks: return PDESpec::ks();
    }
    throw Error::parameter("unknown pde kind tag " +
                           std::to_string(static_cast<int>(kind)));
}

Grid default_grid(PDEKind kind) {
    Grid grid;
    if (kind == PDEKind::ks) {
        grid.x_min = -4.0 * std::numbers::pi;
        grid.x_max = 4.0 * std::numbers::pi;
    }
    return grid;
}

const char* family_name(ICFamily family) {
    switch (family) {
        case ICFamily::white_noise: return "white_noise";
        case ICFamily::sine: return "sine";
        case ICFamily::square: return "square";
        case ICFamily::gaussian: return "gaussian";
        case ICFamily::triangle: return "triangle";
        case ICFamily::sawtooth: return "sawtooth";
        case ICFamily::pulse: return "pulse";
    }
    throw Error::parameter("unknown family tag " +
                           std::to_string(static_cast<int>(family)));
}

ICFamily family_from_name(const std::string& name) {
    for (std::size_t i = 0; i < kFamilyCount; ++i) {
        const auto family = static_cast<ICFamily>(i);
        if (name == family_name(family)) return family;
    }
    throw Error::parameter("unknown initial-condition family '" + name + "'");
}

Tensor rhs(const PDESpec& spec, const Tensor& u, const Grid& grid) {
    require_state(u, grid, "rhs");
    switch (spec.kind) {
        case PDEKind::fisher: return rhs_fisher(spec, u, grid);
        case PDEKind::burgers: return rhs_burgers(spec, u, grid);
        case PDEKind::ks: return rhs_ks(spec, u, grid);
    }
    throw Error::parameter("unknown pde kind");
}

Tensor advance_rk4(const PDESpec& spec, const Tensor& state, const Grid& grid,
                   double t_span, std::size_t steps) {
    if (steps == 0) throw Error::parameter("advance_rk4 needs at least one step");
    if (spec.kind == PDEKind::ks)
        throw Error::parameter("advance_rk4 covers the finite-difference paths; "
                               "the ks solver is exponential-integrator based");
    const double h = t_span / static_cast<double>(steps);
    const std::size_t n = grid.n;
    Tensor u = state;
    Tensor stage(std::vector<std::size_t>{n});
    for (std::size_t s = 0; s < steps; ++s) {
        const Tensor k1 = rhs(spec, u, grid);
        for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + 0.5 * h * k1[i];
        const Tensor k2 = rhs(spec, stage, grid);
        for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + 0.5 * h * k2[i];
        const Tensor k3 = rhs(spec, stage, grid);
        for (std::size_t i = 0; i < n; ++i) stage[i] = u[i] + h * k3[i];
        const Tensor k4 = rhs(spec, stage, grid);
        for (std::size_t i = 0; i < n; ++i)
            u[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    return u;
}

Trajectory simulate(const PDESpec& spec, const Tensor& ic, const Grid& grid,
                    std::size_t T, double dt_save) {
    if (T < 2) throw Error::parameter("simulate needs T >= 2 save points, got " +
                                      std::to_string(T));
    if (!(dt_save > 0.0))
        throw Error::parameter("simulate needs dt_save > 0");
    require_state(ic, grid, "simulate");

    Trajectory traj;
    traj.dt = dt_save;
    traj.states = Tensor(std::vector<std::size_t>{T, grid.n});
    for (std::size_t i = 0; i < grid.n; ++i) traj.states.at(0, i) = ic[i];

    if (spec.kind == PDEKind::ks) {
        const Etdrk4 scheme(grid, dt_save);
        auto v = fft_real(ic.values());
        for (std::size_t t = 1; t < T; ++t) {
            v = scheme.step(v, spec.beta);
            const auto u = ifft_real(v);
            for (std::size_t i = 0; i < grid.n; ++i) {
                if (!std::isfinite(u[i]) || std::abs(u[i]) > kBlowUpLimit)
                    throw Error::numeric(
                        "solution blew up at t = " +
                        std::to_string(static_cast<double>(t) * dt_save));
                traj.states.at(t, i) = u[i];
            }
        }
        return traj;
    }

    Tensor u = ic;
    for (std::size_t t = 1; t < T; ++t) {
        const double lambda = stiffness_estimate(spec, u, grid);
        const auto steps = static_cast<std::size_t>(
            std::max(1.0, std::ceil(dt_save * lambda / kStabilityBudget)));
        try {
            u = advance_rk4(spec, u, grid, dt_save, steps);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::numeric) throw;
            throw Error::numeric(
                "solution blew up by t = " +
                std::to_string(static_cast<double>(t) * dt_save) + " (" +
                e.what() + ")");
        }
        for (std::size_t i = 0; i < grid.n; ++i) {
            if (!std::isfinite(u[i]) || std::abs(u[i]) > kBlowUpLimit)
                throw Error::numeric(
                    "solution blew up at t = " +
                    std::to_string(static_cast<double>(t) * dt_save));
            traj.states.at(t, i) = u[i];
        }
    }
    return traj;
}

Tensor generate_ic(const ICParams& params, const Grid& grid) {
    if (params.amplitude < 0.0)
        throw Error::parameter("initial-condition amplitude must be >= 0, got " +
                               std::to_string(params.amplitude));
    const std::size_t n = grid.n;
    Tensor u(std::vector<std::size_t>{n});
    const double A = params.amplitude;

    const bool wave_family = params.family == ICFamily::sine ||
                             params.family == ICFamily::square ||
                             params.family == ICFamily::triangle ||
                             params.family == ICFamily::sawtooth;
    if (wave_family) {
        if (params.wavenumber < 1 ||
            static_cast<std::size_t>(params.wavenumber) > n / 8)
            throw Error::parameter(
                "wavenumber must be a positive integer <= n/8, got " +
                std::to_string(params.wavenumber));
    }
    if ((params.family == ICFamily::gaussian || params.family == ICFamily::pulse) &&
        !(params.width > 0.0))
        throw Error::parameter("width must be > 0, got " +
                               std::to_string(params.width));

    switch (params.family) {
        case ICFamily::sine:
            for (std::size_t i = 0; i < n; ++i)
                u[i] = A * std::sin(params.wavenumber * grid.x(i) + params.phase);
            break;
        case ICFamily::square:
            for (std::size_t i = 0; i < n; ++i) {
                const double s =
                    std::sin(params.wavenumber * grid.x(i) + params.phase);
                u[i] = A * ((s > 0.0) - (s < 0.0));
            }
            break;
        case ICFamily::triangle:
            for (std::size_t i = 0; i < n; ++i) {
                const double s =
                    std::sin(params.wavenumber * grid.x(i) + params.phase);
                u[i] = A * (2.0 / std::numbers::pi) * std::asin(s);
            }
            break;
        case ICFamily::sawtooth:
            for (std::size_t i = 0; i < n; ++i) {
                const double s = (params.wavenumber * grid.x(i) + params.phase) /
                                 (2.0 * std::numbers::pi);
                u[i] = A * 2.0 * (s - std::floor(s + 0.5));
            }
            break;
        case ICFamily::gaussian:
            for (std::size_t i = 0; i < n; ++i) {
                double sum = 0.0;
                for (int img = -3; img <= 3; ++img) {
                    const double d = grid.x(i) - params.center +
                                     static_cast<double>(img) * grid.length();
                    sum += std::exp(-d * d / (2.0 * params.width * params.width));
                }
                u[i] = A * sum;
            }
            break;
        case ICFamily::pulse:
            for (std::size_t i = 0; i < n; ++i) {
                const double d =
                    std::remainder(grid.x(i) - params.center, grid.length());
                u[i] = std::abs(d) <= 0.5 * params.width ? A : 0.0;
            }
            break;
        case ICFamily::white_noise: {
            Rng rng(params.seed);
            std::vector<double> noise(n);
            for (auto& x : noise) x = A * rng.normal();
            auto spec = fft_real(noise);
            for (std::size_t j = 0; j < n; ++j)
                if (std::min(j, n - j) > 16) spec[j] = {0.0, 0.0};
            const auto filtered = ifft_real(std::move(spec));
            for (std::size_t i = 0; i < n; ++i) u[i] = filtered[i];
            break;
        }
    }
    return u;
}

}  // namespace kae
