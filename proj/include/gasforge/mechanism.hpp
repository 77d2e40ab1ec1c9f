#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "gasforge/chain.hpp"
#include "gasforge/errors.hpp"

namespace gasforge {

// Base-fee update rule. Each block's fee moves toward equilibrium by at most
// a 1/max_change_denominator fraction of itself, driven by how far realized
// gas usage landed from the target.

struct Ratio {
    std::uint64_t num = 1;
    std::uint64_t den = 2;
};

struct MechanismParams {
    Ratio target_fraction{1, 2};            // target = floor(limit * num / den)
    std::uint32_t max_change_denominator = 8;
    Wei min_base_fee = 7;

    void validate() const {
        if (target_fraction.den == 0 || target_fraction.num == 0 ||
            target_fraction.num >= target_fraction.den)
            throw ValidationError("target_fraction must satisfy 0 < num < den");
        if (max_change_denominator == 0)
            throw ValidationError("max_change_denominator must be positive");
        if (min_base_fee == 0)
            throw ValidationError("min_base_fee must be positive");
    }
};

// floor(gas_limit * num / den), computed without intermediate overflow.
inline GasAmount gas_target(GasAmount gas_limit, const MechanismParams& params) {
    params.validate();
    if (gas_limit == 0) throw DomainError("gas_limit must be positive");
    const unsigned __int128 scaled =
        static_cast<unsigned __int128>(gas_limit) * params.target_fraction.num;
    const unsigned __int128 target = scaled / params.target_fraction.den;
    if (target == 0)
        throw DomainError("gas target rounds to zero for gas_limit " +
                          std::to_string(gas_limit));
    if (target > std::numeric_limits<GasAmount>::max())
        throw DomainError("gas target overflows");
    return static_cast<GasAmount>(target);
}

// Signed distance from target as a fraction of the target, in [-1, 1].
inline double normalized_load(GasAmount gas_used, GasAmount target) {
    if (target == 0) throw DomainError("gas target must be positive");
    if (static_cast<unsigned __int128>(gas_used) >
        2 * static_cast<unsigned __int128>(target))
        throw DomainError("gas_used " + std::to_string(gas_used) +
                          " exceeds twice the target " + std::to_string(target));
    return (static_cast<double>(gas_used) - static_cast<double>(target)) /
           static_cast<double>(target);
}

// Next block's base fee. The step magnitude floor(current * |y| / denom) is
// computed in 80-bit extended precision, which is exact for any uint64 fee
// when |y| is 0 or 1 and within one ulp otherwise; the result never moves
// by more than floor(current / denom) and never drops below min_base_fee.
inline Wei next_base_fee(Wei current, double normalized_load,
                         const MechanismParams& params) {
    params.validate();
    if (current < params.min_base_fee)
        throw DomainError("current base fee " + std::to_string(current) +
                          " below floor " + std::to_string(params.min_base_fee));
    double y = normalized_load;
    if (std::isnan(y) || y < -1.0 - 1e-9 || y > 1.0 + 1e-9)
        throw DomainError("normalized load " + std::to_string(y) +
                          " outside [-1, 1]");
    if (y > 1.0) y = 1.0;
    if (y < -1.0) y = -1.0;

    const long double magnitude_exact = static_cast<long double>(current) *
                                        std::fabs(static_cast<long double>(y)) /
                                        params.max_change_denominator;
    const Wei magnitude = static_cast<Wei>(std::floor(magnitude_exact));
    if (y >= 0.0) {
        if (current > std::numeric_limits<Wei>::max() - magnitude)
            throw DomainError("base fee overflows 64 bits");
        const Wei next = current + magnitude;
        return next < params.min_base_fee ? params.min_base_fee : next;
    }
    const Wei next = current - magnitude;  // magnitude <= current / denom
    return next < params.min_base_fee ? params.min_base_fee : next;
}

}  // namespace gasforge
