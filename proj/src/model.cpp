#include "mvstop/model.hpp"

#include <cmath>
#include <stdexcept>

namespace mvstop {

MarkDistribution MarkDistribution::uniform(double lo, double hi) {
    if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw std::invalid_argument("uniform marks need finite lo < hi");
    }
    return {Kind::uniform, lo, hi};
}

double MarkDistribution::second_moment() const {
    if (kind_ == Kind::constant) return lo_ * lo_;
    return (lo_ * lo_ + lo_ * hi_ + hi_ * hi_) / 3.0;
}

std::vector<std::pair<double, double>> MarkDistribution::quadrature() const {
    if (kind_ == Kind::constant) return {{lo_, 1.0}};
    static constexpr double kNodes[8] = {0.0950125098376374, 0.2816035507792589, 0.4580167776572274,
                                         0.6178762444026438, 0.7554044083550030, 0.8656312023878318,
                                         0.9445750230732326, 0.9894009349916499};
    static constexpr double kWeights[8] = {0.1894506104550685, 0.1826034150449236, 0.1691565193950025,
                                           0.1495959888165767, 0.1246289712555339, 0.0951585116824928,
                                           0.0622535239386479, 0.0271524594117541};
    const double mid = mean();
    const double half = 0.5 * (hi_ - lo_);
    std::vector<std::pair<double, double>> rule;
    rule.reserve(16);
    for (int i = 0; i < 8; ++i) {
        rule.emplace_back(mid - half * kNodes[i], 0.5 * kWeights[i]);
        rule.emplace_back(mid + half * kNodes[i], 0.5 * kWeights[i]);
    }
    return rule;
}

InitialLaw InitialLaw::normal(double mean, double sd) {
    if (!(sd > 0.0) || !std::isfinite(sd) || !std::isfinite(mean)) {
        throw std::invalid_argument("normal initial law needs finite mean and sd > 0");
    }
    return {Kind::normal, mean, sd};
}

const char* to_string(ModelFamily family) {
    switch (family) {
        case ModelFamily::sell: return "sell";
        case ModelFamily::quit: return "quit";
    }
    return "?";
}

namespace {

void check_levy(const LevyMeasureSpec& levy) {
    if (!(levy.intensity >= 0.0) || !std::isfinite(levy.intensity)) {
        throw std::invalid_argument("jump intensity must be finite and >= 0");
    }
}

}  // namespace

ModelSpec make_sell_model(double alpha0, double sigma1, double sigma2, LevyMeasureSpec levy,
                          InitialLaw initial_law) {
    if (!std::isfinite(alpha0)) throw std::invalid_argument("alpha0 must be finite");
    if (!(sigma1 > 0.0) || !std::isfinite(sigma1)) throw std::invalid_argument("sell model requires sigma1 > 0");
    if (!(sigma2 >= 0.0) || !std::isfinite(sigma2)) throw std::invalid_argument("sell model requires sigma2 >= 0");
    check_levy(levy);
    if (levy.intensity > 0.0) {
        const auto& marks = levy.marks;
        const bool ok = marks.kind() == MarkDistribution::Kind::constant
                            ? (marks.lo() > -1.0 && marks.lo() <= 0.0)
                            : (marks.lo() >= -1.0 && marks.hi() <= 0.0);
        if (!ok) throw std::invalid_argument("sell model marks gamma0 must lie in (-1, 0]");
    }
    return ModelSpec(ModelFamily::sell, alpha0, sigma1, sigma2, levy, initial_law, "sell");
}

ModelSpec make_quit_model(double sigma1, double sigma2, double gamma0, double intensity,
                          InitialLaw initial_law) {
    if (sigma1 == 0.0 || !std::isfinite(sigma1)) throw std::invalid_argument("quit model requires sigma1 != 0");
    if (!std::isfinite(sigma2) || !std::isfinite(gamma0)) throw std::invalid_argument("quit coefficients must be finite");
    LevyMeasureSpec levy{intensity, MarkDistribution::constant(gamma0)};
    check_levy(levy);
    return ModelSpec(ModelFamily::quit, 0.0, sigma1, sigma2, levy, initial_law, "quit");
}

JumpSampler::JumpSampler(const LevyMeasureSpec& levy, double dt)
    : marks_(levy.marks), mean_count_(levy.intensity * dt), p_zero_(std::exp(-levy.intensity * dt)),
      compensator_(dt * levy.intensity * levy.mark_mean()) {
    if (!(dt > 0.0)) throw std::invalid_argument("jump increment needs dt > 0");
}

JumpIncrement JumpSampler::sample(const CounterStream& stream, std::uint32_t step) const {
    JumpIncrement inc;
    inc.compensator = compensator_;
    if (mean_count_ <= 0.0) return inc;

    auto words = stream.block(step, 1);
    // Inverse-CDF Poisson count from word 0.
    const double u = uniform_from_u32(words[0]);
    std::uint32_t k = 0;
    double p = p_zero_;
    double cdf = p;
    while (u > cdf && k < 100000) {
        ++k;
        p *= mean_count_ / k;
        cdf += p;
        if (p == 0.0) break;
    }
    inc.count = k;

    // Marks: words 1..3 of sub-draw 1, then 4 per sub-draw from 2 onward.
    std::uint32_t sub = 1;
    std::uint32_t word = 1;
    for (std::uint32_t j = 0; j < k; ++j) {
        if (word == 4) {
            words = stream.block(step, ++sub);
            word = 0;
        }
        inc.jump_sum += marks_.sample(uniform_from_u32(words[word++]));
    }
    return inc;
}

JumpIncrement sample_jump_increment(const LevyMeasureSpec& levy, double dt, const CounterStream& stream,
                                    std::uint32_t step) {
    return JumpSampler(levy, dt).sample(stream, step);
}

}  // namespace mvstop
