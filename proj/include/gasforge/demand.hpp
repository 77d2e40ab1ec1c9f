#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gasforge/chain.hpp"
#include "gasforge/errors.hpp"
#include "gasforge/util.hpp"

namespace gasforge {

// Synthetic gas-demand generators for closed-loop fee simulations. A model
// precomputes a deterministic base fullness path in [0, 1]; the posted fee
// only enters through the elasticity response, so elasticity 0 gives a
// fee-independent demand path.

enum class DemandKind { sinusoidal, autoregressive, spike };

inline std::string_view to_string(DemandKind kind) {
    switch (kind) {
        case DemandKind::sinusoidal: return "sinusoidal";
        case DemandKind::autoregressive: return "autoregressive";
        case DemandKind::spike: return "spike";
    }
    throw ValidationError("unknown demand kind");
}

inline DemandKind demand_kind_from_string(std::string_view name) {
    if (name == "sinusoidal") return DemandKind::sinusoidal;
    if (name == "autoregressive") return DemandKind::autoregressive;
    if (name == "spike") return DemandKind::spike;
    throw ValidationError("unknown demand kind '" + std::string(name) +
                          "' (expected sinusoidal, autoregressive, or spike)");
}

struct DemandConfig {
    DemandKind kind = DemandKind::sinusoidal;
    std::uint64_t seed = 0;
    std::uint64_t horizon = 0;            // number of simulated blocks, >= 1
    double elasticity = 0.0;              // >= 0; higher fee -> less demand
    GasAmount gas_limit = 30'000'000;
    Wei reference_fee = 1'000'000'000;    // fee at which elasticity is neutral

    void validate() const {
        if (horizon == 0) throw ValidationError("demand horizon must be >= 1");
        if (gas_limit == 0) throw ValidationError("demand gas_limit must be positive");
        if (reference_fee == 0)
            throw ValidationError("demand reference_fee must be positive");
        if (!(elasticity >= 0.0))
            throw ValidationError("demand elasticity must be >= 0");
    }
};

class DemandModel {
  public:
    explicit DemandModel(const DemandConfig& config)
        : config_(config), base_(generate_path(config)) {}

    // Test seam: inject an explicit fullness path (values in [0, 1]). The
    // path must contain horizon + 1 entries so lookahead one step past the
    // end of the simulation stays defined.
    DemandModel(const DemandConfig& config, std::vector<double> path)
        : config_(config), base_(std::move(path)) {
        config_.validate();
        if (base_.size() != config_.horizon + 1)
            throw ValidationError("fullness path must have horizon + 1 entries");
        for (double v : base_)
            if (!(v >= 0.0 && v <= 1.0))
                throw ValidationError("fullness path values must lie in [0, 1]");
    }

    const DemandConfig& config() const { return config_; }
    GasAmount gas_limit() const { return config_.gas_limit; }

    // Gas consumed at `step` when the posted base fee is `posted_fee`.
    // Defined for step in [0, horizon]; the extra step supports predictors
    // that look one block past the simulation horizon.
    GasAmount gas_used(std::uint64_t step, Wei posted_fee) const {
        if (step >= base_.size())
            throw DomainError("demand step " + std::to_string(step) +
                              " beyond horizon " + std::to_string(config_.horizon));
        if (posted_fee == 0) throw DomainError("posted fee must be positive");
        double fullness = base_[step];
        if (config_.elasticity > 0.0) {
            const double ratio = static_cast<double>(config_.reference_fee) /
                                 static_cast<double>(posted_fee);
            fullness *= std::pow(ratio, config_.elasticity);
            fullness = std::clamp(fullness, 0.0, 1.0);
        }
        const double used = fullness * static_cast<double>(config_.gas_limit);
        const auto rounded = static_cast<GasAmount>(std::llround(used));
        return std::min(rounded, config_.gas_limit);
    }

  private:
    static std::vector<double> generate_path(const DemandConfig& config) {
        config.validate();
        std::mt19937_64 rng(config.seed);
        const std::size_t n = static_cast<std::size_t>(config.horizon) + 1;
        std::vector<double> path(n);
        switch (config.kind) {
            case DemandKind::sinusoidal: {
                const double period = 30.0 + uniform01(rng) * 90.0;
                const double phase = uniform01(rng) * 6.283185307179586;
                const double amplitude = 0.25 + uniform01(rng) * 0.20;
                for (std::size_t i = 0; i < n; ++i) {
                    const double v = 0.5 + amplitude * std::sin(6.283185307179586 *
                                                                    static_cast<double>(i) /
                                                                    period +
                                                                phase);
                    path[i] = std::clamp(v, 0.0, 1.0);
                }
                break;
            }
            case DemandKind::autoregressive: {
                const double rho = 0.95;
                const double sigma = 0.08;
                double x = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    x = rho * x + sigma * gaussian(rng);
                    path[i] = std::clamp(0.5 + x, 0.0, 1.0);
                }
                break;
            }
            case DemandKind::spike: {
                const std::uint64_t h = config.horizon;
                const std::uint64_t lo = std::max<std::uint64_t>(1, h / 4);
                const std::uint64_t start = lo + bounded_rand(rng, std::max<std::uint64_t>(1, h / 4));
                const std::uint64_t length =
                    std::max<std::uint64_t>(3, h / 40) +
                    bounded_rand(rng, std::max<std::uint64_t>(1, h / 20));
                for (std::size_t i = 0; i < n; ++i) {
                    const bool in_spike = i >= start && i < start + length;
                    const double base = in_spike ? 0.99 : 0.45;
                    const double jitter = uniform_pm(rng, in_spike ? 0.01 : 0.05);
                    path[i] = std::clamp(base + jitter, 0.0, 1.0);
                }
                break;
            }
        }
        return path;
    }

    DemandConfig config_;
    std::vector<double> base_;
};

inline DemandModel gen_synthetic_demand(DemandKind kind, std::uint64_t seed,
                                        std::uint64_t horizon,
                                        double elasticity = 0.0) {
    DemandConfig config;
    config.kind = kind;
    config.seed = seed;
    config.horizon = horizon;
    config.elasticity = elasticity;
    return DemandModel(config);
}

}  // namespace gasforge
