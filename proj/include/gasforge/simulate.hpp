#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "gasforge/chain.hpp"
#include "gasforge/demand.hpp"
#include "gasforge/errors.hpp"
#include "gasforge/mechanism.hpp"

namespace gasforge {

// Fee trajectory produced by a simulation. steps[i].base_fee is the fee
// posted for block i; final_fee is the update computed after the last
// block, i.e. what the next block would post.

struct FeeStep {
    std::uint64_t block_number = 0;
    Wei base_fee = 0;
    double normalized_load = 0.0;   // realized
    GasAmount realized_gas_used = 0;
};

struct FeeTrajectory {
    std::vector<FeeStep> steps;
    Wei final_fee = 0;
};

inline void export_trajectory(const FeeTrajectory& traj,
                              const std::filesystem::path& path) {
    std::ofstream os(path);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os << "block_number,base_fee,normalized_load,realized_gas_used\n";
    for (const FeeStep& s : traj.steps) {
        os << s.block_number << ',' << s.base_fee << ','
           << format_double(s.normalized_load) << ',' << s.realized_gas_used << '\n';
    }
    if (!os) throw IoError("write to '" + path.string() + "' failed");
}

// ------------------------------ reactive mode ------------------------------

// Replays a recorded chain: each block's realized load drives the next
// fee. The recorded base_fee fields are ignored; the trajectory reports
// what the mechanism would have posted starting from initial_fee.
inline FeeTrajectory simulate_reactive(const BlockSequence& seq,
                                       const MechanismParams& params,
                                       Wei initial_fee) {
    params.validate();
    if (seq.empty()) throw ValidationError("cannot simulate an empty sequence");
    if (initial_fee < params.min_base_fee)
        throw ValidationError("initial fee below the mechanism floor");
    FeeTrajectory traj;
    traj.steps.reserve(seq.size());
    Wei fee = initial_fee;
    for (const BlockRecord& b : seq) {
        double y;
        try {
            y = normalized_load(b.gas_used, gas_target(b.gas_limit, params));
        } catch (const DomainError& e) {
            throw DomainError("block " + std::to_string(b.block_number) + ": " +
                              e.what());
        }
        traj.steps.push_back({b.block_number, fee, y, b.gas_used});
        fee = next_base_fee(fee, y, params);
    }
    traj.final_fee = fee;
    return traj;
}

// Options for closed-loop simulations that also materialize a synthetic
// block sequence (12-second cadence by default).
struct SimOptions {
    std::uint64_t start_number = 0;
    std::int64_t start_timestamp = 1'700'000'000;
    std::int64_t block_seconds = 12;
};

struct ClosedLoopResult {
    FeeTrajectory trajectory;
    BlockSequence blocks;
};

// Closed loop: demand sees the posted fee, the realized load drives the
// next fee. With elasticity 0 this reduces to a replay of the demand path.
inline ClosedLoopResult simulate_reactive(const DemandModel& demand,
                                          const MechanismParams& params,
                                          Wei initial_fee,
                                          const SimOptions& opts = {}) {
    params.validate();
    if (initial_fee < params.min_base_fee)
        throw ValidationError("initial fee below the mechanism floor");
    const std::uint64_t horizon = demand.config().horizon;
    const GasAmount target = gas_target(demand.gas_limit(), params);
    ClosedLoopResult result;
    result.trajectory.steps.reserve(horizon);
    result.blocks.records.reserve(horizon);
    Wei fee = initial_fee;
    for (std::uint64_t n = 0; n < horizon; ++n) {
        const GasAmount used = demand.gas_used(n, fee);
        const double y = normalized_load(used, target);
        const std::uint64_t number = opts.start_number + n;
        result.trajectory.steps.push_back({number, fee, y, used});
        result.blocks.records.push_back(
            {opts.start_timestamp + static_cast<std::int64_t>(n) * opts.block_seconds,
             number, demand.gas_limit(), used, fee});
        fee = next_base_fee(fee, y, params);
    }
    result.trajectory.final_fee = fee;
    return result;
}

// ------------------------------ proactive mode ------------------------------

// Everything a predictor may inspect when asked for the load of the
// upcoming block. history holds all sealed blocks so far, oldest first.
struct PredictionContext {
    std::uint64_t next_step = 0;
    Wei current_fee = 0;
    std::span<const BlockRecord> history;
    const DemandModel* demand = nullptr;
    const MechanismParams* params = nullptr;
};

class Predictor {
  public:
    virtual ~Predictor() = default;
    virtual double predict_next_load(const PredictionContext& ctx) = 0;
};

// Always predicts an on-target block; proactive mode degenerates to a
// constant fee.
class ZeroPredictor final : public Predictor {
  public:
    double predict_next_load(const PredictionContext&) override { return 0.0; }
};

// Oracle that reads the demand model at the upcoming step, evaluated at the
// fee of the block just sealed.
class PerfectForesightPredictor final : public Predictor {
  public:
    double predict_next_load(const PredictionContext& ctx) override {
        if (ctx.demand == nullptr || ctx.params == nullptr)
            throw ValidationError("perfect foresight requires a demand model");
        const GasAmount used = ctx.demand->gas_used(ctx.next_step, ctx.current_fee);
        return normalized_load(used, gas_target(ctx.demand->gas_limit(), *ctx.params));
    }
};

struct ProactiveResult {
    FeeTrajectory trajectory;
    BlockSequence blocks;
    // predicted_loads[i] is the prediction that set steps[i].base_fee; the
    // first entry is NaN because the initial fee is given, not predicted.
    std::vector<double> predicted_loads;
};

// Proactive mode: the fee for block n+1 is set from the predicted load of
// block n+1 instead of the realized load of block n. Predictions are
// clamped into [-1, 1] before entering the update rule.
inline ProactiveResult simulate_proactive(const DemandModel& demand,
                                          Predictor& predictor,
                                          const MechanismParams& params,
                                          Wei initial_fee,
                                          const SimOptions& opts = {}) {
    params.validate();
    if (initial_fee < params.min_base_fee)
        throw ValidationError("initial fee below the mechanism floor");
    const std::uint64_t horizon = demand.config().horizon;
    const GasAmount target = gas_target(demand.gas_limit(), params);
    ProactiveResult result;
    result.trajectory.steps.reserve(horizon);
    result.blocks.records.reserve(horizon);
    result.predicted_loads.reserve(horizon);
    Wei fee = initial_fee;
    double pending_prediction = std::numeric_limits<double>::quiet_NaN();
    for (std::uint64_t n = 0; n < horizon; ++n) {
        const GasAmount used = demand.gas_used(n, fee);
        const double y = normalized_load(used, target);
        const std::uint64_t number = opts.start_number + n;
        result.trajectory.steps.push_back({number, fee, y, used});
        result.predicted_loads.push_back(pending_prediction);
        result.blocks.records.push_back(
            {opts.start_timestamp + static_cast<std::int64_t>(n) * opts.block_seconds,
             number, demand.gas_limit(), used, fee});

        PredictionContext ctx;
        ctx.next_step = n + 1;
        ctx.current_fee = fee;
        ctx.history = std::span<const BlockRecord>(result.blocks.records);
        ctx.demand = &demand;
        ctx.params = &params;
        double predicted = predictor.predict_next_load(ctx);
        if (std::isnan(predicted))
            throw DomainError("predictor produced NaN at step " + std::to_string(n));
        predicted = std::clamp(predicted, -1.0, 1.0);
        pending_prediction = predicted;
        fee = next_base_fee(fee, predicted, params);
    }
    result.trajectory.final_fee = fee;
    return result;
}

}  // namespace gasforge
