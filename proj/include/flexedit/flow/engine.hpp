// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "flexedit/core/config.hpp"
#include "flexedit/core/latent.hpp"
#include "flexedit/flow/schedule.hpp"

namespace flexedit {
class HookSet;
}

namespace flexedit::flow {

/// A velocity field V(z, t). Conditioning (prompt embeddings, guidance) is
/// carried by the implementation, so the engine never sees it.
class VelocityField {
public:
    virtual ~VelocityField() = default;

    /// Returns V(z, t) with z's layout. `hooks` may be null.
    virtual std::vector<float> evaluate(const LatentGrid& z, double t, HookSet* hooks) const = 0;
};

/// Per-step customization of a sampling run.
class StepObserver {
public:
    virtual ~StepObserver() = default;

    /// Hooks for the evaluation made at `from_step`; `run_step` counts from 0
    /// at the first step of the run. Null for none.
    virtual HookSet* hooks_for(int run_step, int from_step) {
        (void)run_step;
        (void)from_step;
        return nullptr;
    }

    /// Called after the hooks of `run_step` fired and the update produced
    /// `next`; may rewrite `next` before the following step consumes it.
    virtual void after_step(int run_step, HookSet* hooks, LatentGrid& next) {
        (void)run_step;
        (void)hooks;
        (void)next;
    }
};

enum class Direction { inversion, generation };

/// Latents indexed by step. Entries are contiguous in step index.
class Trajectory {
public:
    Trajectory(Direction direction, std::vector<LatentGrid> ascending_latents);

    Direction direction() const noexcept { return direction_; }
    int first_step() const noexcept { return latents_.front().step_index; }
    int last_step() const noexcept { return latents_.back().step_index; }
    bool contains(int step) const noexcept { return step >= first_step() && step <= last_step(); }

    /// Throws LookupError when the step is not stored.
    const LatentGrid& at(int step) const;
    const std::vector<LatentGrid>& latents() const noexcept { return latents_; }

private:
    Direction direction_;
    std::vector<LatentGrid> latents_;  // ascending step index
};

/// Z_{i-1} = Z_i + (t_{i-1} - t_i) V(Z_i, t_i) from start.step_index down to 0.
Trajectory euler_sample(const LatentGrid& start, const TimestepSchedule& schedule, const VelocityField& velocity,
                        StepObserver* observer = nullptr);

/// z_i = z_{i-1} + (t_i - t_{i-1}) V(z_{i-1}, t_{i-1}) from start.step_index up to T.
Trajectory euler_invert(const LatentGrid& start, const TimestepSchedule& schedule, const VelocityField& velocity);

/// Forward interpolation z_i = t_i eps + (1 - t_i) z_0 for i = 1..n, then
/// Euler inversion from z_n up to T. Records all T+1 latents.
Trajectory noised_invert(const LatentGrid& z0, int n_noising, const std::vector<float>& noise,
                         const TimestepSchedule& schedule, const VelocityField& velocity);

/// Same, drawing eps from the seeded standard normal stream of `seed`.
Trajectory noised_invert(const LatentGrid& z0, const EditConfig& config, const TimestepSchedule& schedule,
                         const VelocityField& velocity);

std::vector<float> inversion_noise(std::uint64_t seed, std::size_t count);

/// Samples from traj[step] down to step 0 and returns the z_0 estimate.
LatentGrid reconstruct_from_step(const Trajectory& traj, int step, const TimestepSchedule& schedule,
                                 const VelocityField& velocity);

struct SweepPoint {
    int step = 0;
    double mse = 0.0;
};

/// For each step s: noised inversion to s, reconstruction, MSE against z0.
std::vector<SweepPoint> reconstruction_sweep(const LatentGrid& z0, const EditConfig& config,
                                             const TimestepSchedule& schedule, const VelocityField& velocity,
                                             const std::vector<int>& steps);

/// One container per step plus `index.txt` listing step, file, and t.
void write_trajectory(const Trajectory& traj, const std::filesystem::path& dir);
Trajectory read_trajectory(const std::filesystem::path& dir);

} // namespace flexedit::flow
