#pragma once

#include <cstdint>
#include <string>

#include "kae/tensor.hpp"

namespace kae {

// Uniform periodic grid: points x_i = x_min + i*dx for i in [0, n); the right
// endpoint is excluded (it aliases x_0).
struct Grid {
    std::size_t n = 128;
    double x_min = -3.14159265358979323846;
    double x_max = 3.14159265358979323846;

    double dx() const { return (x_max - x_min) / static_cast<double>(n); }
    double x(std::size_t i) const { return x_min + static_cast<double>(i) * dx(); }
    double length() const { return x_max - x_min; }
};

enum class PDEKind : std::uint8_t { fisher = 0, burgers = 1, ks = 2 };

// Coefficients:
//   fisher:  u_t = alpha*u_xx + beta*u*(1-u)
//   burgers: u_t = alpha*u_xx - beta*u*u_x          (beta = 10)
//   ks:      u_t = -u_xx - u_xxxx - beta*u*u_x      (beta = 1)
// beta multiplies the nonlinear term in every case, so beta = 0 reduces each
// equation to its linear part (heat equation for fisher/burgers, pure
// hyperdiffusion for ks) -- handy for closed-form checks.
struct PDESpec {
    PDEKind kind = PDEKind::fisher;
    double alpha = 1.0;
    double beta = 1.0;

    static PDESpec fisher(double alpha = 1.0, double beta = 1.0) {
        return {PDEKind::fisher, alpha, beta};
    }
    static PDESpec burgers() { return {PDEKind::burgers, 1.0, 10.0}; }
    static PDESpec ks() { return {PDEKind::ks, 1.0, 1.0}; }
};

enum class ICFamily : std::uint8_t {
    white_noise = 0,
    sine = 1,
    square = 2,
    gaussian = 3,
    triangle = 4,
    sawtooth = 5,
    pulse = 6,
};
inline constexpr std::size_t kFamilyCount = 7;

struct ICParams {
    ICFamily family = ICFamily::sine;
    double amplitude = 1.0;
    int wavenumber = 1;   // sine/square/triangle/sawtooth; integer, <= n/8
    double phase = 0.0;   // sine/square/triangle/sawtooth
    double center = 0.0;  // gaussian/pulse
    double width = 1.0;   // gaussian std-dev / pulse window width
    std::uint64_t seed = 0;  // white_noise draw
};

struct Trajectory {
    Tensor states;  // [T x n], states row 0 is the initial condition
    double dt = 0.002;
    ICFamily ic_kind = ICFamily::sine;
    std::uint64_t seed = 0;
};

const char* pde_name(PDEKind kind);
PDEKind pde_from_name(const std::string& name);

// Reference coefficients and domain for each equation: fisher and burgers on
// (-pi, pi), ks on (-4*pi, 4*pi), all at n = 128.
PDESpec default_spec(PDEKind kind);
Grid default_grid(PDEKind kind);
const char* family_name(ICFamily family);
ICFamily family_from_name(const std::string& name);

// Time derivative of the state: central differences for fisher/burgers,
// spectral differentiation for ks. Non-finite entries raise a numeric error
// naming the offending index.
Tensor rhs(const PDESpec& spec, const Tensor& u, const Grid& grid);

// Advance `state` over `t_span` with `steps` equal classical RK4 steps
// (fisher/burgers only). Exposed so step-refinement studies can control the
// step count directly; `simulate` chooses it automatically.
Tensor advance_rk4(const PDESpec& spec, const Tensor& state, const Grid& grid,
                   double t_span, std::size_t steps);

// Integrate and sample at t = 0, dt_save, ..., (T-1)*dt_save. Fisher/Burgers
// use RK4 with substeps chosen per save interval from the explicit stability
// bound (0.5x safety factor); KS advances one ETDRK4 step in Fourier space
// per save interval, with the stiff linear part handled exactly. States that
// leave [-1e6, 1e6] or go non-finite raise a numeric error with the failure
// time. The returned trajectory carries ic_kind/seed defaults; callers that
// track provenance overwrite them.
Trajectory simulate(const PDESpec& spec, const Tensor& ic, const Grid& grid,
                    std::size_t T, double dt_save);

// Deterministic function of (params, grid); white_noise additionally draws
// from params.seed. Amplitude 0 gives the zero vector for every family.
Tensor generate_ic(const ICParams& params, const Grid& grid);

}  // namespace kae
