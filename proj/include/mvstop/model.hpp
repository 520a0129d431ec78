#pragma once

// State dynamics for one-dimensional conditional McKean-Vlasov jump diffusions
//
//   dX = alpha(t,X,m) dt + beta1(t,X,m) dB1 + beta2(t,X,m) dB2
//        + int gamma(t,X,m,zeta) Ntilde(dt,dzeta),      X(0) = Z,
//
// where m = <mu_t, q> with q(x) = x is the conditional mean of X(t) given the
// common noise B1. Two families are supported: the multiplicative "sell"
// model, whose coefficients are all proportional to m, and the additive
// constant-coefficient "quit" model.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mvstop/random.hpp"

namespace mvstop {

/// Distribution of jump marks zeta.
class MarkDistribution {
public:
    enum class Kind { constant, uniform };

    static MarkDistribution constant(double value) { return {Kind::constant, value, value}; }
    /// Uniform on (lo, hi).
    static MarkDistribution uniform(double lo, double hi);

    Kind kind() const { return kind_; }
    double lo() const { return lo_; }
    double hi() const { return hi_; }

    /// Maps a uniform draw in (0,1) to a mark.
    double sample(double u) const { return kind_ == Kind::constant ? lo_ : lo_ + (hi_ - lo_) * u; }
    double mean() const { return 0.5 * (lo_ + hi_); }
    double second_moment() const;

    /// Nodes and weights (summing to 1) for expectations over the marks: the
    /// single atom for constant marks, 16-point Gauss-Legendre otherwise.
    std::vector<std::pair<double, double>> quadrature() const;

    /// E[fn(zeta)] under quadrature().
    template <class Fn>
    double expect(Fn&& fn) const;

private:
    MarkDistribution(Kind kind, double lo, double hi) : kind_(kind), lo_(lo), hi_(hi) {}

    Kind kind_;
    double lo_;
    double hi_;
};

/// Finite-activity compound Poisson Levy measure nu = intensity * law(zeta).
struct LevyMeasureSpec {
    double intensity = 0.0;
    MarkDistribution marks = MarkDistribution::constant(0.0);

    double mark_mean() const { return marks.mean(); }
    double mark_second_moment() const { return marks.second_moment(); }

    static LevyMeasureSpec none() { return {}; }
};

/// Law of X(0).
class InitialLaw {
public:
    enum class Kind { dirac, normal };

    static InitialLaw dirac(double x) { return {Kind::dirac, x, 0.0}; }
    static InitialLaw normal(double mean, double sd);

    Kind kind() const { return kind_; }
    double mean() const { return mean_; }
    double sd() const { return sd_; }
    double sample(double standard_normal) const { return mean_ + sd_ * standard_normal; }

private:
    InitialLaw(Kind kind, double mean, double sd) : kind_(kind), mean_(mean), sd_(sd) {}

    Kind kind_;
    double mean_;
    double sd_;
};

enum class ModelFamily { sell, quit };

const char* to_string(ModelFamily family);

/// Immutable coefficient set. The time argument is kept in every coefficient
/// signature although both shipped families are autonomous.
class ModelSpec {
public:
    ModelFamily family() const { return family_; }
    const std::string& label() const { return label_; }
    const LevyMeasureSpec& levy() const { return levy_; }
    const InitialLaw& initial_law() const { return initial_; }

    double alpha0() const { return alpha0_; }
    double sigma1() const { return sigma1_; }
    double sigma2() const { return sigma2_; }

    double drift(double /*t*/, double /*x*/, double m) const {
        return family_ == ModelFamily::sell ? alpha0_ * m : 0.0;
    }
    double diffusion_common(double /*t*/, double /*x*/, double m) const {
        return family_ == ModelFamily::sell ? sigma1_ * m : sigma1_;
    }
    double diffusion_idio(double /*t*/, double /*x*/, double m) const {
        return family_ == ModelFamily::sell ? sigma2_ * m : sigma2_;
    }
    /// gamma(t,x,m,zeta) = jump_scale(t,x,m) * zeta for both families.
    double jump_scale(double /*t*/, double /*x*/, double m) const {
        return family_ == ModelFamily::sell ? m : 1.0;
    }
    double jump_amp(double t, double x, double m, double zeta) const { return jump_scale(t, x, m) * zeta; }

private:
    friend ModelSpec make_sell_model(double, double, double, LevyMeasureSpec, InitialLaw);
    friend ModelSpec make_quit_model(double, double, double, double, InitialLaw);

    ModelSpec(ModelFamily family, double alpha0, double sigma1, double sigma2, LevyMeasureSpec levy,
              InitialLaw initial, std::string label)
        : family_(family), alpha0_(alpha0), sigma1_(sigma1), sigma2_(sigma2), levy_(levy),
          initial_(initial), label_(std::move(label)) {}

    ModelFamily family_;
    double alpha0_;
    double sigma1_;
    double sigma2_;
    LevyMeasureSpec levy_;
    InitialLaw initial_;
    std::string label_;
};

/// dX = m (alpha0 dt + sigma1 dB1 + sigma2 dB2 + int gamma0(zeta) Ntilde(dt,dzeta)).
/// Marks are the values gamma0(zeta) themselves and must lie in (-1, 0].
/// Throws std::invalid_argument for sigma1 <= 0, sigma2 < 0 or bad marks.
ModelSpec make_sell_model(double alpha0, double sigma1, double sigma2, LevyMeasureSpec levy,
                          InitialLaw initial_law);

/// dX = sigma1 dB1 + sigma2 dB2 + int gamma0 Ntilde(dt,dzeta), jumps of fixed
/// size gamma0 arriving at rate `intensity`.
ModelSpec make_quit_model(double sigma1, double sigma2, double gamma0, double intensity,
                          InitialLaw initial_law);

struct JumpIncrement {
    double jump_sum = 0.0;     // sum of sampled marks over the step
    double compensator = 0.0;  // dt * intensity * mark_mean
    std::uint32_t count = 0;

    double compensated() const { return jump_sum - compensator; }
};

/// Samples compound Poisson increments for a fixed step size. The Poisson
/// count and marks come from sub-draws >= 1 of the given stream at `step`;
/// sub-draw 0 is left to the caller for its Gaussian increment.
class JumpSampler {
public:
    JumpSampler(const LevyMeasureSpec& levy, double dt);

    bool active() const { return mean_count_ > 0.0; }
    JumpIncrement sample(const CounterStream& stream, std::uint32_t step) const;

private:
    MarkDistribution marks_;
    double mean_count_;
    double p_zero_;
    double compensator_;
};

/// One compound Poisson increment over [t, t+dt]. Throws for dt <= 0.
JumpIncrement sample_jump_increment(const LevyMeasureSpec& levy, double dt, const CounterStream& stream,
                                    std::uint32_t step);

// ---------------------------------------------------------------------------

template <class Fn>
double MarkDistribution::expect(Fn&& fn) const {
    double acc = 0.0;
    for (const auto& [zeta, weight] : quadrature()) acc += weight * fn(zeta);
    return acc;
}

}  // namespace mvstop
