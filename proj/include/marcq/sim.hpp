#pragma once

// Event-driven simulation of open queues fed by Poisson arrivals:
//   - MSJ: the multiserver-job FCFS queue with head-of-line blocking,
//   - Ak:  MSJ plus an auxiliary arrival whenever a completion would leave
//          fewer than k jobs, so the front is always full,
//   - MMSR: a FCFS queue whose departures are the a=1 transitions of a
//          labeled service chain,
//   - a coupled MSJ/Ak pair sharing arrivals and, while merged, service events.
//
// All timers are exponential, so the next service event is redrawn after
// every state change (race of exponentials). Jobs waiting in the back are
// indistinguishable, so a job's class and initial phase are sampled when it
// enters the front.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "marcq/chain_builder.hpp"
#include "marcq/errors.hpp"
#include "marcq/labeled_ctmc.hpp"
#include "marcq/parallel.hpp"
#include "marcq/rng.hpp"
#include "marcq/stats.hpp"
#include "marcq/workload.hpp"

namespace marcq {

struct SimConfig {
    double lambda = 0.0;
    std::uint64_t n_arrivals = 1'000'000;
    double warmup_fraction = 0.1;
    std::uint64_t seed = 1;
    std::size_t replications = 10;
    std::size_t runaway_bound = 10'000'000;
    /// Verify the front invariants after every event (slow).
    bool check_invariants = false;

    void validate() const {
        if (!(lambda > 0.0) || !std::isfinite(lambda)) {
            throw ValidationError("simulation: lambda must be > 0");
        }
        if (!(warmup_fraction >= 0.0 && warmup_fraction <= 0.9)) {
            throw ValidationError("simulation: warmup_fraction must lie in [0, 0.9]");
        }
        if (n_arrivals < 1000) {
            throw ValidationError("simulation: n_arrivals must be >= 1000");
        }
        if (replications < 1) {
            throw ValidationError("simulation: at least one replication is required");
        }
    }
};

/// Per-replication point estimates.
struct ReplicationStats {
    double mean_T = 0.0;
    double mean_N = 0.0;
    double mean_Q = 0.0;
    double p_queue_empty = 0.0;
    double mean_busy_period = std::numeric_limits<double>::quiet_NaN();
    double mismatch_fraction = std::numeric_limits<double>::quiet_NaN();
    double arrival_rate = 0.0;
    double throughput = 0.0;
    std::uint64_t jobs = 0;
    std::uint64_t busy_periods = 0;
};

/// Across-replication estimates with 95% normal intervals.
/// mean_Q is the back length (the MMSR queue length for simulate_mmsr); mean_N
/// counts every job present. For the Ak system, mean_T and arrival_rate include
/// the auxiliary jobs. P(Q=0) is the time-average fraction with an empty back.
struct SimResult {
    Estimate mean_T;
    Estimate mean_N;
    Estimate mean_Q;
    Estimate p_queue_empty;
    Estimate mean_busy_period;
    std::optional<Estimate> mismatch_fraction;
    Estimate arrival_rate;
    Estimate throughput;
    std::vector<ReplicationStats> replications;
};

namespace detail {

/// Samples the class and initial phase of a job entering service consideration.
class FreshSampler {
public:
    explicit FreshSampler(const WorkloadSpec& spec) {
        double acc = 0.0;
        for (const auto& c : spec.classes()) {
            acc += c.prob();
            class_cdf_.push_back(acc);
            std::vector<double> phase_cdf;
            double pacc = 0.0;
            for (std::size_t ph = 0; ph < c.duration().phases(); ++ph) {
                pacc += c.duration().init(ph);
                phase_cdf.push_back(pacc);
            }
            phase_cdf_.push_back(std::move(phase_cdf));
        }
    }

    JobState operator()(Rng& rng) const {
        JobState j;
        j.class_id = pick(class_cdf_, sample_uniform(rng) * class_cdf_.back());
        const auto& pc = phase_cdf_[j.class_id];
        j.phase = pc.size() == 1 ? 0 : pick(pc, sample_uniform(rng) * pc.back());
        return j;
    }

private:
    static std::size_t pick(const std::vector<double>& cdf, double u) {
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
        return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    }

    std::vector<double> class_cdf_;
    std::vector<std::vector<double>> phase_cdf_;
};

} // namespace detail

struct FrontJob {
    JobState state;
    double arrival = 0.0;
    bool measured = false;
};

/// The (at most k) oldest jobs. The greedy FCFS prefix is in service.
class Front {
public:
    explicit Front(const WorkloadSpec& spec) : spec_(&spec) {}

    /// In-service event: the job at `pos` moves to `to_phase`, or completes when empty.
    struct Event {
        std::size_t pos = 0;
        std::optional<std::size_t> to_phase;
    };

    std::size_t size() const noexcept { return jobs_.size(); }
    bool full() const noexcept { return jobs_.size() == static_cast<std::size_t>(spec_->k()); }
    std::size_t serving() const noexcept { return serving_; }
    double service_rate() const noexcept { return service_rate_; }
    const std::vector<FrontJob>& jobs() const noexcept { return jobs_; }

    bool same_states(const Front& o) const {
        return std::equal(jobs_.begin(), jobs_.end(), o.jobs_.begin(), o.jobs_.end(),
                          [](const FrontJob& a, const FrontJob& b) { return a.state == b.state; });
    }

    void push(FrontJob job) {
        if (full()) {
            throw std::logic_error("front already holds k jobs");
        }
        jobs_.push_back(job);
        refresh();
    }

    void assign(std::span<const JobState> states, double arrival = 0.0) {
        jobs_.clear();
        for (const auto& s : states) {
            jobs_.push_back({s, arrival, false});
        }
        refresh();
    }

    Event pick(Rng& rng) const {
        double u = sample_uniform(rng) * service_rate_;
        std::size_t pos = 0;
        for (; pos + 1 < serving_; ++pos) {
            const double r = leave_rate(jobs_[pos].state);
            if (u < r) {
                break;
            }
            u -= r;
        }
        const JobState& j = jobs_[pos].state;
        const auto& d = spec_->classes()[j.class_id].duration();
        u = std::min(u, d.leave_rate(j.phase));
        for (std::size_t ph = 0; ph < d.phases(); ++ph) {
            if (ph == j.phase) {
                continue;
            }
            const double r = d.rate(j.phase, ph);
            if (u < r) {
                return {pos, ph};
            }
            u -= r;
        }
        return {pos, std::nullopt};
    }

    /// Applies `ev`; returns the departing job on a completion.
    std::optional<FrontJob> apply(const Event& ev) {
        if (ev.to_phase) {
            jobs_[ev.pos].state.phase = *ev.to_phase;
            refresh();
            return std::nullopt;
        }
        FrontJob done = jobs_[ev.pos];
        jobs_.erase(jobs_.begin() + static_cast<std::ptrdiff_t>(ev.pos));
        refresh();
        return done;
    }

    /// Throws std::logic_error if the cached service set is not the greedy prefix.
    void check() const {
        if (jobs_.size() > static_cast<std::size_t>(spec_->k())) {
            throw std::logic_error("front holds more than k jobs");
        }
        std::vector<JobState> states;
        for (const auto& j : jobs_) {
            states.push_back(j.state);
        }
        if (in_service_prefix(states, *spec_) != serving_) {
            throw std::logic_error("service set is not the greedy FCFS prefix");
        }
    }

private:
    double leave_rate(const JobState& j) const { return spec_->classes()[j.class_id].duration().leave_rate(j.phase); }

    void refresh() {
        int used = 0;
        serving_ = 0;
        service_rate_ = 0.0;
        for (const auto& j : jobs_) {
            const int need = spec_->need(j.state);
            if (used + need > spec_->k()) {
                break;
            }
            used += need;
            ++serving_;
            service_rate_ += leave_rate(j.state);
        }
    }

    const WorkloadSpec* spec_;
    std::vector<FrontJob> jobs_;
    std::size_t serving_ = 0;
    double service_rate_ = 0.0;
};

struct BackJob {
    double arrival = 0.0;
    bool measured = false;
};

namespace detail {

/// Time-average and per-job accumulators over the measurement window, which
/// opens at the first post-warmup arrival and closes at the last arrival.
class Recorder {
public:
    void open(double t) {
        open_ = true;
        start_ = t;
        last_ = t;
    }
    void close(double t) {
        advance(t);
        closed_ = true;
        end_ = t;
    }
    bool in_window() const noexcept { return open_ && !closed_; }

    /// Integrates the current state over [last event, now].
    void advance(double now) {
        if (in_window()) {
            const double dt = now - last_;
            area_n_ += dt * n_;
            area_q_ += dt * q_;
            if (q_ == 0) {
                empty_time_ += dt;
            }
            if (mismatch_) {
                mismatch_time_ += dt;
            }
        }
        last_ = now;
    }

    /// State after the event at `now` (call advance(now) first).
    void set_state(double now, std::size_t n, std::size_t q, bool mismatch = false) {
        if (q_ == 0 && q > 0) {
            busy_start_ = now;
        } else if (q_ > 0 && q == 0 && in_window() && busy_start_ >= start_) {
            busy_total_ += now - busy_start_;
            ++busy_periods_;
        }
        n_ = static_cast<double>(n);
        q_ = q;
        mismatch_ = mismatch;
    }

    void arrival() {
        if (in_window()) {
            ++arrivals_;
        }
    }

    void departure(const FrontJob& j, double now) { departure(j.arrival, j.measured, now); }
    void departure(double arrival, bool measured, double now) {
        if (in_window()) {
            ++departures_;
        }
        if (measured) {
            sum_t_ += now - arrival;
            ++jobs_;
        }
    }

    ReplicationStats stats(bool coupled) const {
        const double span = end_ - start_;
        ReplicationStats s;
        s.jobs = jobs_;
        s.mean_T = jobs_ ? sum_t_ / static_cast<double>(jobs_) : std::numeric_limits<double>::quiet_NaN();
        s.mean_N = area_n_ / span;
        s.mean_Q = area_q_ / span;
        s.p_queue_empty = empty_time_ / span;
        s.busy_periods = busy_periods_;
        if (busy_periods_ > 0) {
            s.mean_busy_period = busy_total_ / static_cast<double>(busy_periods_);
        }
        if (coupled) {
            s.mismatch_fraction = mismatch_time_ / span;
        }
        s.arrival_rate = static_cast<double>(arrivals_) / span;
        s.throughput = static_cast<double>(departures_) / span;
        return s;
    }

private:
    bool open_ = false;
    bool closed_ = false;
    double start_ = 0.0;
    double end_ = 0.0;
    double last_ = 0.0;
    double n_ = 0.0;
    std::size_t q_ = 0;
    bool mismatch_ = false;
    double area_n_ = 0.0;
    double area_q_ = 0.0;
    double empty_time_ = 0.0;
    double mismatch_time_ = 0.0;
    double busy_start_ = 0.0;
    double busy_total_ = 0.0;
    std::uint64_t busy_periods_ = 0;
    double sum_t_ = 0.0;
    std::uint64_t jobs_ = 0;
    std::uint64_t arrivals_ = 0;
    std::uint64_t departures_ = 0;
};

/// Primary Poisson arrival stream with warmup / window bookkeeping.
class ArrivalClock {
public:
    ArrivalClock(const SimConfig& cfg, std::uint64_t replication)
        : rng_(make_stream(cfg.seed, replication, Stream::arrivals)), lambda_(cfg.lambda), total_(cfg.n_arrivals),
          warmup_(static_cast<std::uint64_t>(std::floor(cfg.warmup_fraction * static_cast<double>(cfg.n_arrivals)))) {
        next_ = sample_exponential(rng_, lambda_);
    }

    double next() const noexcept { return next_; }
    bool done() const noexcept { return count_ == total_; }

    struct Tick {
        bool measured;
        bool first_measured;
        bool last;
    };

    Tick fire() {
        const std::uint64_t index = count_++;
        const Tick t{index >= warmup_, index == warmup_, count_ == total_};
        next_ = t.last ? std::numeric_limits<double>::infinity() : next_ + sample_exponential(rng_, lambda_);
        return t;
    }

private:
    Rng rng_;
    double lambda_;
    std::uint64_t total_;
    std::uint64_t warmup_;
    std::uint64_t count_ = 0;
    double next_ = 0.0;
};

inline double next_service_time(double now, double rate, Rng& rng) {
    return rate > 0.0 ? now + sample_exponential(rng, rate) : std::numeric_limits<double>::infinity();
}

} // namespace detail

/// MSJ (or Ak, when `auxiliary` is set) front plus back. Measured-job accounting
/// is left to the caller.
class MsjSystem {
public:
    MsjSystem(const WorkloadSpec& spec, bool auxiliary, std::size_t runaway_bound)
        : spec_(&spec), front_(spec), auxiliary_(auxiliary), runaway_bound_(runaway_bound) {}

    const Front& front() const noexcept { return front_; }
    Front& front() noexcept { return front_; }
    const std::deque<BackJob>& back() const noexcept { return back_; }
    std::size_t jobs() const noexcept { return front_.size() + back_.size(); }
    bool auxiliary() const noexcept { return auxiliary_; }

    /// Primary arrival at `now`; `fresh` supplies the job's state if it enters the front.
    template <typename FreshFn>
    void arrive(double now, bool measured, FreshFn&& fresh) {
        if (!front_.full()) {
            front_.push({fresh(), now, measured});
            return;
        }
        back_.push_back({now, measured});
        if (back_.size() > runaway_bound_) {
            throw InstabilityError("simulation aborted: back length exceeded " + std::to_string(runaway_bound_) +
                                   " (arrival rate is likely >= lambda*)");
        }
    }

    /// Refills the front after a completion: the oldest back job enters, or in
    /// the Ak system an auxiliary job arrives when the back is empty. Returns
    /// true if an auxiliary job was created.
    template <typename FreshFn>
    bool refill(double now, bool aux_measured, FreshFn&& fresh) {
        if (!back_.empty()) {
            const BackJob b = back_.front();
            back_.pop_front();
            front_.push({fresh(), b.arrival, b.measured});
            return false;
        }
        if (auxiliary_) {
            front_.push({fresh(), now, aux_measured});
            return true;
        }
        return false;
    }

    /// Starts the Ak system full of auxiliary jobs.
    template <typename FreshFn>
    void saturate(double now, FreshFn&& fresh) {
        while (!front_.full()) {
            front_.push({fresh(), now, false});
        }
    }

    /// Forces a state (used by tests): the front's job states and a back of `back_len` unmeasured jobs.
    void set_state(std::span<const JobState> front_states, std::size_t back_len, double now = 0.0) {
        front_.assign(front_states, now);
        back_.assign(back_len, BackJob{now, false});
    }

    void check() const {
        front_.check();
        if (!back_.empty() && !front_.full()) {
            throw std::logic_error("back is non-empty but the front is not full");
        }
        if (auxiliary_ && !front_.full()) {
            throw std::logic_error("Ak front is not full");
        }
    }

private:
    const WorkloadSpec* spec_;
    Front front_;
    std::deque<BackJob> back_;
    bool auxiliary_;
    std::size_t runaway_bound_;
};

namespace detail {

inline ReplicationStats run_msj_replication(const WorkloadSpec& spec, const SimConfig& cfg, std::uint64_t rep,
                                            bool auxiliary) {
    Rng service = make_stream(cfg.seed, rep, auxiliary ? Stream::ak_service : Stream::msj_service);
    const FreshSampler sampler(spec);
    auto fresh = [&] { return sampler(service); };
    ArrivalClock clock(cfg, rep);
    MsjSystem sys(spec, auxiliary, cfg.runaway_bound);
    Recorder rec;
    double now = 0.0;
    std::uint64_t outstanding = 0;
    if (auxiliary) {
        sys.saturate(now, fresh);
    }
    rec.set_state(now, sys.jobs(), sys.back().size());
    while (!(clock.done() && outstanding == 0)) {
        const double t_service = next_service_time(now, sys.front().service_rate(), service);
        if (clock.next() <= t_service) {
            now = clock.next();
            rec.advance(now);
            const auto tick = clock.fire();
            if (tick.first_measured) {
                rec.open(now);
            }
            rec.arrival();
            sys.arrive(now, tick.measured, fresh);
            outstanding += tick.measured ? 1 : 0;
            rec.set_state(now, sys.jobs(), sys.back().size());
            if (tick.last) {
                rec.close(now);
            }
        } else {
            if (!std::isfinite(t_service)) {
                break;
            }
            now = t_service;
            rec.advance(now);
            const auto done = sys.front().apply(sys.front().pick(service));
            if (done) {
                rec.departure(*done, now);
                outstanding -= done->measured ? 1 : 0;
                const bool aux_measured = rec.in_window();
                if (sys.refill(now, aux_measured, fresh)) {
                    rec.arrival();
                    outstanding += aux_measured ? 1 : 0;
                }
            }
            rec.set_state(now, sys.jobs(), sys.back().size());
        }
        if (cfg.check_invariants) {
            sys.check();
        }
    }
    return rec.stats(false);
}

inline ReplicationStats run_mmsr_replication(const LabeledCTMC& chain, const SimConfig& cfg, std::uint64_t rep) {
    Rng service = make_stream(cfg.seed, rep, Stream::chain_service);
    ArrivalClock clock(cfg, rep);
    Recorder rec;
    std::deque<BackJob> queue;
    std::size_t y = 0;
    double now = 0.0;
    std::uint64_t outstanding = 0;
    rec.set_state(now, 0, 0);
    while (!(clock.done() && outstanding == 0)) {
        const double t_service = now + sample_exponential(service, chain.out_rate(y));
        if (clock.next() <= t_service) {
            now = clock.next();
            rec.advance(now);
            const auto tick = clock.fire();
            if (tick.first_measured) {
                rec.open(now);
            }
            rec.arrival();
            queue.push_back({now, tick.measured});
            if (queue.size() > cfg.runaway_bound) {
                throw InstabilityError("simulation aborted: queue length exceeded " +
                                       std::to_string(cfg.runaway_bound));
            }
            outstanding += tick.measured ? 1 : 0;
            rec.set_state(now, queue.size(), queue.size());
            if (tick.last) {
                rec.close(now);
            }
        } else {
            now = t_service;
            rec.advance(now);
            double u = sample_uniform(service) * chain.out_rate(y);
            const auto out = chain.outgoing(y);
            std::size_t pick = out.size() - 1;
            for (std::size_t i = 0; i < out.size(); ++i) {
                u -= out[i].rate;
                if (u < 0.0) {
                    pick = i;
                    break;
                }
            }
            y = out[pick].to;
            if (out[pick].completions == 1 && !queue.empty()) {
                const BackJob head = queue.front();
                queue.pop_front();
                rec.departure(head.arrival, head.measured, now);
                outstanding -= head.measured ? 1 : 0;
            }
            rec.set_state(now, queue.size(), queue.size());
        }
    }
    return rec.stats(false);
}

inline SimResult aggregate(std::vector<ReplicationStats> reps, bool coupled) {
    auto column = [&](auto field) {
        std::vector<double> xs;
        for (const auto& r : reps) {
            const double v = r.*field;
            if (!std::isnan(v)) {
                xs.push_back(v);
            }
        }
        return mean_interval(xs, 0.95);
    };
    SimResult out;
    out.mean_T = column(&ReplicationStats::mean_T);
    out.mean_N = column(&ReplicationStats::mean_N);
    out.mean_Q = column(&ReplicationStats::mean_Q);
    out.p_queue_empty = column(&ReplicationStats::p_queue_empty);
    out.mean_busy_period = column(&ReplicationStats::mean_busy_period);
    if (coupled) {
        out.mismatch_fraction = column(&ReplicationStats::mismatch_fraction);
    }
    out.arrival_rate = column(&ReplicationStats::arrival_rate);
    out.throughput = column(&ReplicationStats::throughput);
    out.replications = std::move(reps);
    return out;
}

template <typename RunOne>
SimResult run_replications(const SimConfig& cfg, bool coupled, RunOne run_one) {
    cfg.validate();
    std::vector<ReplicationStats> reps(cfg.replications);
    parallel_for(cfg.replications, [&](std::size_t r) { reps[r] = run_one(static_cast<std::uint64_t>(r)); });
    return aggregate(std::move(reps), coupled);
}

} // namespace detail

/// MSJ FCFS queue with Poisson(lambda) arrivals.
inline SimResult simulate_msj(const WorkloadSpec& spec, const SimConfig& cfg) {
    return detail::run_replications(
        cfg, false, [&](std::uint64_t r) { return detail::run_msj_replication(spec, cfg, r, false); });
}

/// At-least-k system: MSJ plus auxiliary arrivals keeping the front full.
inline SimResult simulate_atleastk(const WorkloadSpec& spec, const SimConfig& cfg) {
    return detail::run_replications(
        cfg, false, [&](std::uint64_t r) { return detail::run_msj_replication(spec, cfg, r, true); });
}

/// Queue whose departures are the completion transitions of `chain`; the chain
/// evolves regardless of the queue length, and a completion with an empty queue is lost.
inline SimResult simulate_mmsr(const LabeledCTMC& chain, const SimConfig& cfg) {
    return detail::run_replications(cfg, false,
                                    [&](std::uint64_t r) { return detail::run_mmsr_replication(chain, cfg, r); });
}

/// MSJ and Ak systems driven by one arrival stream. While their fronts agree
/// and both backs are non-empty ("merged"), one shared service event moves both
/// fronts and both admit the same job; otherwise each uses its own stream.
class CoupledSimulator {
public:
    CoupledSimulator(const WorkloadSpec& spec, const SimConfig& cfg, std::uint64_t replication)
        : cfg_(cfg), sampler_(spec), clock_(cfg, replication),
          msj_rng_(make_stream(cfg.seed, replication, Stream::msj_service)),
          ak_rng_(make_stream(cfg.seed, replication, Stream::ak_service)),
          shared_rng_(make_stream(cfg.seed, replication, Stream::shared_service)),
          msj_(spec, false, cfg.runaway_bound), ak_(spec, true, cfg.runaway_bound) {
        ak_.saturate(now_, [&] { return sampler_(ak_rng_); });
        rec_.set_state(now_, msj_.jobs(), msj_.back().size(), mismatched());
    }

    const MsjSystem& msj() const noexcept { return msj_; }
    const MsjSystem& ak() const noexcept { return ak_; }
    double now() const noexcept { return now_; }

    bool mismatched() const { return !msj_.front().same_states(ak_.front()); }
    bool merged() const { return !mismatched() && !msj_.back().empty() && !ak_.back().empty(); }
    bool finished() const { return clock_.done() && outstanding_ == 0; }

    /// Overwrites both systems' state; for exercising the coupling rule directly.
    void set_state(std::span<const JobState> msj_front, std::size_t msj_back, std::span<const JobState> ak_front,
                   std::size_t ak_back) {
        msj_.set_state(msj_front, msj_back, now_);
        ak_.set_state(ak_front, ak_back, now_);
        rec_.set_state(now_, msj_.jobs(), msj_.back().size(), mismatched());
    }

    /// Processes one event; returns false if nothing can happen any more.
    bool step() {
        auto fresh_msj = [&] { return sampler_(msj_rng_); };
        auto fresh_ak = [&] { return sampler_(ak_rng_); };
        const bool merged_now = merged();
        double t_msj = std::numeric_limits<double>::infinity();
        double t_ak = std::numeric_limits<double>::infinity();
        if (merged_now) {
            t_msj = detail::next_service_time(now_, msj_.front().service_rate(), shared_rng_);
        } else {
            t_msj = detail::next_service_time(now_, msj_.front().service_rate(), msj_rng_);
            t_ak = detail::next_service_time(now_, ak_.front().service_rate(), ak_rng_);
        }
        const double t = std::min({clock_.next(), t_msj, t_ak});
        if (!std::isfinite(t)) {
            return false;
        }
        now_ = t;
        rec_.advance(now_);
        if (clock_.next() == t) {
            const auto tick = clock_.fire();
            if (tick.first_measured) {
                rec_.open(now_);
            }
            rec_.arrival();
            msj_.arrive(now_, tick.measured, fresh_msj);
            ak_.arrive(now_, false, fresh_ak);
            outstanding_ += tick.measured ? 1 : 0;
            finish_event();
            if (tick.last) {
                rec_.close(now_);
            }
            return true;
        }
        if (merged_now) {
            const auto ev = msj_.front().pick(shared_rng_);
            const auto done = msj_.front().apply(ev);
            ak_.front().apply(ev);
            if (done) {
                depart(*done);
                const JobState entering = sampler_(shared_rng_);
                msj_.refill(now_, false, [&] { return entering; });
                ak_.refill(now_, false, [&] { return entering; });
            }
        } else if (t_msj <= t_ak) {
            const auto done = msj_.front().apply(msj_.front().pick(msj_rng_));
            if (done) {
                depart(*done);
                msj_.refill(now_, false, fresh_msj);
            }
        } else {
            const auto done = ak_.front().apply(ak_.front().pick(ak_rng_));
            if (done) {
                ak_.refill(now_, false, fresh_ak);
            }
        }
        finish_event();
        return true;
    }

    ReplicationStats run() {
        while (!finished() && step()) {
        }
        return rec_.stats(true);
    }

private:
    void depart(const FrontJob& j) {
        rec_.departure(j, now_);
        outstanding_ -= j.measured ? 1 : 0;
    }

    void finish_event() {
        rec_.set_state(now_, msj_.jobs(), msj_.back().size(), mismatched());
        if (cfg_.check_invariants) {
            msj_.check();
            ak_.check();
        }
    }

    SimConfig cfg_;
    detail::FreshSampler sampler_;
    detail::ArrivalClock clock_;
    Rng msj_rng_;
    Rng ak_rng_;
    Rng shared_rng_;
    MsjSystem msj_;
    MsjSystem ak_;
    detail::Recorder rec_;
    double now_ = 0.0;
    std::uint64_t outstanding_ = 0;
};

/// Coupled MSJ/Ak run. Response time, N, P(Q=0) and busy periods describe the
/// MSJ side; mismatch_fraction is the time-average of Y^MSJ != Y^Ak.
inline SimResult simulate_coupled(const WorkloadSpec& spec, const SimConfig& cfg) {
    return detail::run_replications(cfg, true, [&](std::uint64_t r) { return CoupledSimulator(spec, cfg, r).run(); });
}

} // namespace marcq
