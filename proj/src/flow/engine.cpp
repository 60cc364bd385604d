// Copyright 2026 The flexedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexedit/flow/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "flexedit/core/errors.hpp"
#include "flexedit/core/rng.hpp"
#include "flexedit/core/tensor_io.hpp"

namespace flexedit::flow {

namespace {

constexpr std::uint64_t kNoiseStream = 0x6e6f697365;  // "noise"

std::vector<float> checked_velocity(const VelocityField& velocity, const LatentGrid& z, double t, HookSet* hooks) {
    auto v = velocity.evaluate(z, t, hooks);
    if (v.size() != z.data.size()) {
        throw DimensionError("velocity has " + std::to_string(v.size()) + " entries, latent has " +
                             std::to_string(z.data.size()));
    }
    for (float x : v) {
        if (!std::isfinite(x)) throw NumericError(z.step_index, -1, "velocity output");
    }
    return v;
}

LatentGrid euler_update(const LatentGrid& z, const std::vector<float>& v, double dt, int step, double t) {
    std::vector<float> next(z.data.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
        next[i] = static_cast<float>(static_cast<double>(z.data[i]) + dt * static_cast<double>(v[i]));
    }
    return LatentGrid(z.shape, std::move(next), step, t);
}

void check_tag(const LatentGrid& z, const TimestepSchedule& schedule) {
    if (z.step_index < 0 || z.step_index > schedule.steps()) {
        throw LookupError("latent step " + std::to_string(z.step_index) + " outside the schedule");
    }
}

} // namespace

Trajectory::Trajectory(Direction direction, std::vector<LatentGrid> ascending_latents)
    : direction_(direction), latents_(std::move(ascending_latents)) {
    if (latents_.empty()) throw LookupError("trajectory must hold at least one latent");
    for (std::size_t i = 1; i < latents_.size(); ++i) {
        if (latents_[i].step_index != latents_[i - 1].step_index + 1) {
            throw LookupError("trajectory steps must be contiguous");
        }
    }
}

const LatentGrid& Trajectory::at(int step) const {
    if (!contains(step)) {
        throw LookupError("trajectory has no latent at step " + std::to_string(step) + " (holds " +
                          std::to_string(first_step()) + ".." + std::to_string(last_step()) + ")");
    }
    return latents_[static_cast<std::size_t>(step - first_step())];
}

Trajectory euler_sample(const LatentGrid& start, const TimestepSchedule& schedule, const VelocityField& velocity,
                        StepObserver* observer) {
    check_tag(start, schedule);
    std::vector<LatentGrid> out(static_cast<std::size_t>(start.step_index) + 1);
    out[start.step_index] = start;
    out[start.step_index].t_value = schedule.t(start.step_index);

    int run_step = 0;
    for (int i = start.step_index; i >= 1; --i, ++run_step) {
        const LatentGrid& z = out[i];
        HookSet* hooks = observer ? observer->hooks_for(run_step, i) : nullptr;
        const auto v = checked_velocity(velocity, z, schedule.t(i), hooks);
        const double dt = schedule.t(i - 1) - schedule.t(i);
        out[i - 1] = euler_update(z, v, dt, i - 1, schedule.t(i - 1));
        if (observer) observer->after_step(run_step, hooks, out[i - 1]);
    }
    return Trajectory(Direction::generation, std::move(out));
}

Trajectory euler_invert(const LatentGrid& start, const TimestepSchedule& schedule, const VelocityField& velocity) {
    check_tag(start, schedule);
    if (start.step_index >= schedule.steps()) {
        throw LookupError("inversion must start below step " + std::to_string(schedule.steps()));
    }
    std::vector<LatentGrid> out;
    out.reserve(static_cast<std::size_t>(schedule.steps() - start.step_index) + 1);
    out.push_back(start);
    out.back().t_value = schedule.t(start.step_index);
    for (int i = start.step_index + 1; i <= schedule.steps(); ++i) {
        const LatentGrid& z = out.back();
        const auto v = checked_velocity(velocity, z, schedule.t(i - 1), nullptr);
        const double dt = schedule.t(i) - schedule.t(i - 1);
        out.push_back(euler_update(z, v, dt, i, schedule.t(i)));
    }
    return Trajectory(Direction::inversion, std::move(out));
}

Trajectory noised_invert(const LatentGrid& z0, int n_noising, const std::vector<float>& noise,
                         const TimestepSchedule& schedule, const VelocityField& velocity) {
    if (n_noising < 0 || n_noising >= schedule.steps()) {
        throw ValidationError("n_noising", "must satisfy 0 <= n_noising < T");
    }
    if (noise.size() != z0.data.size()) throw DimensionError("noise and latent sizes differ");

    std::vector<LatentGrid> out;
    out.reserve(static_cast<std::size_t>(schedule.steps()) + 1);
    out.push_back(LatentGrid(z0.shape, z0.data, 0, schedule.t(0)));
    for (int i = 1; i <= n_noising; ++i) {
        const double t = schedule.t(i);
        std::vector<float> zi(z0.data.size());
        for (std::size_t j = 0; j < zi.size(); ++j) {
            zi[j] = static_cast<float>(t * static_cast<double>(noise[j]) + (1.0 - t) * static_cast<double>(z0.data[j]));
        }
        out.push_back(LatentGrid(z0.shape, std::move(zi), i, t));
    }

    auto tail = euler_invert(out.back(), schedule, velocity);
    for (int i = n_noising + 1; i <= schedule.steps(); ++i) out.push_back(tail.at(i));
    return Trajectory(Direction::inversion, std::move(out));
}

std::vector<float> inversion_noise(std::uint64_t seed, std::size_t count) {
    Rng rng(derive_seed(seed, kNoiseStream));
    return rng.normal_vector(count);
}

Trajectory noised_invert(const LatentGrid& z0, const EditConfig& config, const TimestepSchedule& schedule,
                         const VelocityField& velocity) {
    return noised_invert(z0, config.n_noising, inversion_noise(config.seed, z0.data.size()), schedule, velocity);
}

LatentGrid reconstruct_from_step(const Trajectory& traj, int step, const TimestepSchedule& schedule,
                                 const VelocityField& velocity) {
    const LatentGrid& start = traj.at(step);
    if (step == 0) return start;
    return euler_sample(start, schedule, velocity).at(0);
}

std::vector<SweepPoint> reconstruction_sweep(const LatentGrid& z0, const EditConfig& config,
                                             const TimestepSchedule& schedule, const VelocityField& velocity,
                                             const std::vector<int>& steps) {
    for (int s : steps) {
        if (s < 1 || s > schedule.steps()) {
            throw LookupError("sweep step " + std::to_string(s) + " outside [1, " + std::to_string(schedule.steps()) +
                              "]");
        }
    }
    // Inversion is sequential, so one trajectory to T holds the latent each
    // shorter inversion would have produced.
    const auto traj = noised_invert(z0, config, schedule, velocity);
    std::vector<SweepPoint> out;
    out.reserve(steps.size());
    for (int s : steps) out.push_back({s, mean_squared_error(reconstruct_from_step(traj, s, schedule, velocity), z0)});
    return out;
}

void write_trajectory(const Trajectory& traj, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "index.txt", std::ios::trunc);
    if (!index) throw Error("cannot write " + (dir / "index.txt").string());
    index << "# direction " << (traj.direction() == Direction::inversion ? "inversion" : "generation") << '\n';
    index << "# step file t\n";
    for (const auto& z : traj.latents()) {
        std::ostringstream name;
        name << "step_" << std::setw(3) << std::setfill('0') << z.step_index << ".rtn";
        write_tensor(z.to_tensor(), dir / name.str());
        index << z.step_index << ' ' << name.str() << ' ' << std::setprecision(17) << z.t_value << '\n';
    }
}

Trajectory read_trajectory(const std::filesystem::path& dir) {
    std::ifstream index(dir / "index.txt");
    if (!index) throw Error("cannot open " + (dir / "index.txt").string());
    Direction direction = Direction::inversion;
    std::vector<LatentGrid> latents;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(index, line)) {
        ++line_no;
        if (line.rfind("# direction ", 0) == 0) {
            direction = line.substr(12) == "generation" ? Direction::generation : Direction::inversion;
            continue;
        }
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        int step = 0;
        std::string file;
        double t = 0.0;
        if (!(is >> step >> file >> t)) throw ParseError(line_no, "expected 'step file t'");
        latents.push_back(LatentGrid::from_tensor(read_tensor(dir / file), step, t));
    }
    std::sort(latents.begin(), latents.end(),
              [](const LatentGrid& a, const LatentGrid& b) { return a.step_index < b.step_index; });
    return Trajectory(direction, std::move(latents));
}

} // namespace flexedit::flow
