#pragma once

// Completion-labeled service chains of the saturated system (Sat) and the
// simplified saturated system (SSS), built by reachability enumeration.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "marcq/errors.hpp"
#include "marcq/labeled_ctmc.hpp"
#include "marcq/workload.hpp"

namespace marcq {

inline constexpr std::size_t kDefaultStateCap = 200'000;

/// Closed system of exactly k jobs, oldest first.
struct SatState {
    std::vector<JobState> jobs;

    bool operator==(const SatState&) const = default;
};

/// Jobs in service (a multiset, kept sorted) plus the class of the single job
/// that is waiting for capacity, if any. The waiting job's phase is sampled
/// only when it enters service.
struct SssState {
    std::vector<JobState> in_service;
    std::optional<std::size_t> blocked;

    bool operator==(const SssState&) const = default;
};

/// Length of the greedy FCFS prefix: jobs enter service in order until the
/// first one whose need does not fit, which blocks everything behind it.
template <typename Jobs>
std::size_t in_service_prefix(const Jobs& jobs, const WorkloadSpec& spec) {
    int used = 0;
    std::size_t n = 0;
    for (const JobState& j : jobs) {
        const int need = spec.need(j);
        if (used + need > spec.k()) {
            break;
        }
        used += need;
        ++n;
    }
    return n;
}

inline std::size_t in_service_prefix(const SatState& s, const WorkloadSpec& spec) {
    return in_service_prefix(s.jobs, spec);
}

namespace detail {

inline void put_u32(std::string& out, std::size_t v) {
    const auto x = static_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<char>((x >> (8 * b)) & 0xFFu));
    }
}

inline void put_job(std::string& out, const JobState& j) {
    put_u32(out, j.class_id);
    put_u32(out, j.phase);
}

/// Short label for one job: its need when that identifies the class, the class
/// index otherwise; the phase is appended for multi-phase durations.
inline std::string job_token(const WorkloadSpec& spec, std::size_t class_id, std::optional<std::size_t> phase) {
    const auto& classes = spec.classes();
    const int need = classes[class_id].need();
    const bool need_unique =
        std::count_if(classes.begin(), classes.end(), [&](const JobClass& c) { return c.need() == need; }) == 1;
    std::string tok = need_unique ? std::to_string(need) : "c" + std::to_string(class_id);
    if (phase && classes[class_id].duration().phases() > 1) {
        tok += "." + std::to_string(*phase);
    }
    return tok;
}

} // namespace detail

/// Injective byte encoding. Order matters for Sat states.
inline std::string canonical_encoding(const SatState& s) {
    std::string out = "S";
    detail::put_u32(out, s.jobs.size());
    for (const auto& j : s.jobs) {
        detail::put_job(out, j);
    }
    return out;
}

/// Injective byte encoding. The in-service multiset is sorted first, so
/// insertion order does not matter.
inline std::string canonical_encoding(const SssState& s) {
    auto jobs = s.in_service;
    std::sort(jobs.begin(), jobs.end());
    std::string out = "M";
    detail::put_u32(out, jobs.size());
    for (const auto& j : jobs) {
        detail::put_job(out, j);
    }
    out.push_back(s.blocked ? '\1' : '\0');
    if (s.blocked) {
        detail::put_u32(out, *s.blocked);
    }
    return out;
}

inline std::string state_label(const SatState& s, const WorkloadSpec& spec) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.jobs.size(); ++i) {
        out += (i ? "," : "") + detail::job_token(spec, s.jobs[i].class_id, s.jobs[i].phase);
    }
    return out + "]";
}

/// In-service jobs by ascending need, then "|" and the waiting job's class.
inline std::string state_label(const SssState& s, const WorkloadSpec& spec) {
    auto jobs = s.in_service;
    std::sort(jobs.begin(), jobs.end(), [&](const JobState& a, const JobState& b) {
        return std::make_pair(spec.need(a), a) < std::make_pair(spec.need(b), b);
    });
    std::string out = "[";
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        out += (i ? "," : "") + detail::job_token(spec, jobs[i].class_id, jobs[i].phase);
    }
    if (s.blocked) {
        out += "|" + detail::job_token(spec, *s.blocked, std::nullopt);
    }
    return out + "]";
}

namespace detail {

template <typename State>
struct Successor {
    State to;
    int completions;
    double rate;
};

/// Breadth-first closure from `initial`, then restriction to the recurrent class.
/// State indices follow discovery order.
template <typename State, typename Expand>
LabeledCTMC enumerate_chain(const std::vector<State>& initial, Expand expand, const WorkloadSpec& spec,
                            std::size_t cap) {
    std::unordered_map<std::string, std::size_t> index;
    std::vector<State> states;
    std::vector<std::string> keys;
    auto intern = [&](const State& s) {
        auto key = canonical_encoding(s);
        auto [it, inserted] = index.try_emplace(key, states.size());
        if (inserted) {
            if (states.size() >= cap) {
                throw CapExceeded(states.size() + 1, cap);
            }
            states.push_back(s);
            keys.push_back(std::move(key));
        }
        return it->second;
    };
    for (const auto& s : initial) {
        intern(s);
    }
    std::vector<Transition> transitions;
    for (std::size_t y = 0; y < states.size(); ++y) {
        const State current = states[y];
        for (auto& succ : expand(current)) {
            transitions.push_back({y, intern(succ.to), succ.completions, succ.rate});
        }
    }
    std::vector<std::string> labels;
    labels.reserve(states.size());
    for (const auto& s : states) {
        labels.push_back(state_label(s, spec));
    }
    return recurrent_class(LabeledCTMC(std::move(labels), std::move(keys), std::move(transitions)));
}

/// Fresh jobs (class, initial phase) with their sampling probabilities.
inline std::vector<std::pair<JobState, double>> fresh_jobs(const WorkloadSpec& spec) {
    std::vector<std::pair<JobState, double>> out;
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        const auto& cls = spec.classes()[c];
        for (std::size_t ph = 0; ph < cls.duration().phases(); ++ph) {
            const double p = cls.prob() * cls.duration().init(ph);
            if (p > 0.0) {
                out.push_back({{c, ph}, p});
            }
        }
    }
    return out;
}

/// Phase moves (a=0) of the in-service job `j`, reported as (new phase, rate).
inline std::vector<std::pair<std::size_t, double>> phase_moves(const WorkloadSpec& spec, const JobState& j) {
    std::vector<std::pair<std::size_t, double>> out;
    const auto& d = spec.classes()[j.class_id].duration();
    for (std::size_t ph = 0; ph < d.phases(); ++ph) {
        if (ph != j.phase && d.rate(j.phase, ph) > 0.0) {
            out.push_back({ph, d.rate(j.phase, ph)});
        }
    }
    return out;
}

/// Admission after a completion in the SSS: the waiting job enters first if it
/// fits, then fresh classes are sampled until capacity is exactly used or a
/// sampled class does not fit (it becomes the waiting job).
inline void sss_admit(const WorkloadSpec& spec, SssState s, int used, double prob,
                      const std::function<void(const SssState&, double)>& emit) {
    const int free = spec.k() - used;
    if (free <= 0) {
        std::sort(s.in_service.begin(), s.in_service.end());
        emit(s, prob);
        return;
    }
    auto enter = [&](std::size_t c, double p) {
        const auto& d = spec.classes()[c].duration();
        for (std::size_t ph = 0; ph < d.phases(); ++ph) {
            if (d.init(ph) > 0.0) {
                SssState next = s;
                next.blocked.reset();
                next.in_service.push_back({c, ph});
                sss_admit(spec, std::move(next), used + spec.classes()[c].need(), p * d.init(ph), emit);
            }
        }
    };
    if (s.blocked) {
        if (spec.classes()[*s.blocked].need() <= free) {
            enter(*s.blocked, prob);
        } else {
            std::sort(s.in_service.begin(), s.in_service.end());
            emit(s, prob);
        }
        return;
    }
    for (std::size_t c = 0; c < spec.num_classes(); ++c) {
        const double p = prob * spec.classes()[c].prob();
        if (spec.classes()[c].need() <= free) {
            enter(c, p);
        } else {
            SssState next = s;
            next.blocked = c;
            std::sort(next.in_service.begin(), next.in_service.end());
            emit(next, p);
        }
    }
}

} // namespace detail

/// Saturated system: every ordered list of k jobs reachable from an empty
/// system saturated with i.i.d. arrivals. On completion the job leaves, the
/// list shifts left, and a freshly sampled job is appended.
inline LabeledCTMC build_saturated_chain(const WorkloadSpec& spec, std::size_t cap = kDefaultStateCap) {
    const auto fresh = detail::fresh_jobs(spec);
    const auto k = static_cast<std::size_t>(spec.k());

    // All k-lists of fresh jobs, in lexicographic order.
    std::vector<SatState> initial;
    std::vector<std::size_t> digits(k, 0);
    while (true) {
        if (initial.size() >= cap) {
            throw CapExceeded(initial.size() + 1, cap);
        }
        SatState s;
        s.jobs.reserve(k);
        for (auto d : digits) {
            s.jobs.push_back(fresh[d].first);
        }
        initial.push_back(std::move(s));
        std::size_t pos = k;
        while (pos > 0 && ++digits[pos - 1] == fresh.size()) {
            digits[--pos] = 0;
        }
        if (pos == 0) {
            break;
        }
    }

    auto expand = [&](const SatState& s) {
        std::vector<detail::Successor<SatState>> out;
        const std::size_t serving = in_service_prefix(s, spec);
        for (std::size_t pos = 0; pos < serving; ++pos) {
            const JobState& j = s.jobs[pos];
            for (auto [ph, rate] : detail::phase_moves(spec, j)) {
                SatState next = s;
                next.jobs[pos].phase = ph;
                out.push_back({std::move(next), 0, rate});
            }
            const double exit = spec.classes()[j.class_id].duration().exit(j.phase);
            if (exit <= 0.0) {
                continue;
            }
            for (const auto& [job, p] : fresh) {
                SatState next;
                next.jobs.reserve(k);
                for (std::size_t i = 0; i < s.jobs.size(); ++i) {
                    if (i != pos) {
                        next.jobs.push_back(s.jobs[i]);
                    }
                }
                next.jobs.push_back(job);
                out.push_back({std::move(next), 1, exit * p});
            }
        }
        return out;
    };
    return detail::enumerate_chain(initial, expand, spec, cap);
}

/// Simplified saturated system: in-service multiset plus at most one waiting
/// job, holding the minimal number of jobs whose total need reaches k.
inline LabeledCTMC build_sss_chain(const WorkloadSpec& spec, std::size_t cap = kDefaultStateCap) {
    std::vector<SssState> initial;
    std::unordered_map<std::string, bool> seen;
    detail::sss_admit(spec, SssState{}, 0, 1.0, [&](const SssState& s, double) {
        if (seen.try_emplace(canonical_encoding(s), true).second) {
            initial.push_back(s);
        }
    });

    auto expand = [&](const SssState& s) {
        std::vector<detail::Successor<SssState>> out;
        int used = 0;
        for (const auto& j : s.in_service) {
            used += spec.need(j);
        }
        for (std::size_t pos = 0; pos < s.in_service.size(); ++pos) {
            const JobState& j = s.in_service[pos];
            for (auto [ph, rate] : detail::phase_moves(spec, j)) {
                SssState next = s;
                next.in_service[pos].phase = ph;
                std::sort(next.in_service.begin(), next.in_service.end());
                out.push_back({std::move(next), 0, rate});
            }
            const double exit = spec.classes()[j.class_id].duration().exit(j.phase);
            if (exit <= 0.0) {
                continue;
            }
            SssState rest = s;
            rest.in_service.erase(rest.in_service.begin() + static_cast<std::ptrdiff_t>(pos));
            detail::sss_admit(spec, std::move(rest), used - spec.need(j), 1.0,
                              [&](const SssState& next, double p) { out.push_back({next, 1, exit * p}); });
        }
        return out;
    };
    return detail::enumerate_chain(initial, expand, spec, cap);
}

} // namespace marcq
