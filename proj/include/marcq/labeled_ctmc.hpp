#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "marcq/errors.hpp"

namespace marcq {

/// One transition of a completion-labeled chain: from -> to, accompanied by
/// `completions` (0 or 1) departures, at the given rate.
struct Transition {
    std::size_t from = 0;
    std::size_t to = 0;
    int completions = 0;
    double rate = 0.0;
};

/// Finite CTMC whose transitions carry a completion count. Immutable once built.
///
/// Transitions are stored merged on (from, to, completions) and sorted by source,
/// so `outgoing(y)` is a contiguous span. Self-loops are kept: a completion that
/// returns the service process to the same state is still a completion.
class LabeledCTMC {
public:
    LabeledCTMC(std::vector<std::string> labels, std::vector<std::string> keys,
                std::vector<Transition> transitions)
        : labels_(std::move(labels)), keys_(std::move(keys)) {
        const std::size_t n = labels_.size();
        if (n == 0) {
            throw ValidationError("chain: at least one state is required");
        }
        if (keys_.empty()) {
            keys_ = labels_;
        }
        if (keys_.size() != n) {
            throw ValidationError("chain: one key per state is required");
        }
        for (const auto& t : transitions) {
            if (t.from >= n || t.to >= n) {
                throw ValidationError("chain: transition references a state out of range");
            }
            if (t.completions != 0 && t.completions != 1) {
                throw ValidationError("chain: completion label must be 0 or 1");
            }
            if (!std::isfinite(t.rate) || t.rate < 0.0) {
                throw ValidationError("chain: transition rates must be finite and >= 0");
            }
        }
        std::sort(transitions.begin(), transitions.end(), [](const Transition& a, const Transition& b) {
            return std::tie(a.from, a.to, a.completions) < std::tie(b.from, b.to, b.completions);
        });
        for (const auto& t : transitions) {
            if (t.rate == 0.0) {
                continue;
            }
            if (!transitions_.empty()) {
                auto& last = transitions_.back();
                if (last.from == t.from && last.to == t.to && last.completions == t.completions) {
                    last.rate += t.rate;
                    continue;
                }
            }
            transitions_.push_back(t);
        }
        row_start_.assign(n + 1, 0);
        out_rate_.assign(n, 0.0);
        completion_rate_.assign(n, 0.0);
        for (const auto& t : transitions_) {
            ++row_start_[t.from + 1];
            out_rate_[t.from] += t.rate;
            if (t.completions == 1) {
                completion_rate_[t.from] += t.rate;
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            row_start_[i + 1] += row_start_[i];
            if (!(out_rate_[i] > 0.0)) {
                throw ValidationError("chain: state " + labels_[i] + " has no outgoing transitions");
            }
        }
    }

    /// Chain without meaningful state descriptors: states are labelled by index.
    static LabeledCTMC from_transitions(std::size_t n, std::vector<Transition> transitions) {
        std::vector<std::string> labels(n);
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = std::to_string(i);
        }
        return LabeledCTMC(std::move(labels), {}, std::move(transitions));
    }

    std::size_t size() const noexcept { return labels_.size(); }
    const std::string& label(std::size_t y) const { return labels_.at(y); }
    const std::string& key(std::size_t y) const { return keys_.at(y); }
    const std::vector<std::string>& labels() const noexcept { return labels_; }

    std::span<const Transition> transitions() const noexcept { return transitions_; }
    std::span<const Transition> outgoing(std::size_t y) const {
        return std::span<const Transition>(transitions_).subspan(row_start_[y], row_start_[y + 1] - row_start_[y]);
    }

    /// mu_{y,.,.}: total rate out of y, self-loops included.
    double out_rate(std::size_t y) const { return out_rate_[y]; }
    /// mu_{y,.,1}: completion rate in y.
    double completion_rate(std::size_t y) const { return completion_rate_[y]; }

    double max_out_rate() const { return *std::max_element(out_rate_.begin(), out_rate_.end()); }

    /// Same chain with every rate multiplied by `c` (a change of time unit).
    LabeledCTMC scaled(double c) const {
        if (!(c > 0.0)) {
            throw ValidationError("chain: scale factor must be positive");
        }
        auto ts = transitions_;
        for (auto& t : ts) {
            t.rate *= c;
        }
        return LabeledCTMC(labels_, keys_, std::move(ts));
    }

    /// Sub-chain on `keep` (indices in the new order); transitions leaving the set are dropped.
    LabeledCTMC restricted(std::span<const std::size_t> keep) const {
        std::vector<std::size_t> remap(size(), size());
        std::vector<std::string> labels;
        std::vector<std::string> keys;
        for (std::size_t i = 0; i < keep.size(); ++i) {
            remap[keep[i]] = i;
            labels.push_back(labels_[keep[i]]);
            keys.push_back(keys_[keep[i]]);
        }
        std::vector<Transition> ts;
        for (const auto& t : transitions_) {
            if (remap[t.from] < size() && remap[t.to] < size()) {
                ts.push_back({remap[t.from], remap[t.to], t.completions, t.rate});
            }
        }
        return LabeledCTMC(std::move(labels), std::move(keys), std::move(ts));
    }

private:
    std::vector<std::string> labels_;
    std::vector<std::string> keys_;
    std::vector<Transition> transitions_;
    std::vector<std::size_t> row_start_;
    std::vector<double> out_rate_;
    std::vector<double> completion_rate_;
};

/// Strongly connected components (iterative Tarjan). Returns the component id
/// of every state; ids are assigned in reverse topological order, so id 0 is a
/// bottom (closed) component.
inline std::vector<std::size_t> strongly_connected_components(const LabeledCTMC& chain,
                                                               std::size_t* count = nullptr) {
    const std::size_t n = chain.size();
    constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
    std::vector<std::size_t> index(n, unvisited), low(n, 0), comp(n, unvisited);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    std::vector<std::pair<std::size_t, std::size_t>> call; // (state, next edge offset)
    std::size_t next_index = 0;
    std::size_t next_comp = 0;

    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] != unvisited) {
            continue;
        }
        call.emplace_back(root, 0);
        index[root] = low[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            auto& [v, edge] = call.back();
            const auto out = chain.outgoing(v);
            if (edge < out.size()) {
                const std::size_t w = out[edge++].to;
                if (index[w] == unvisited) {
                    index[w] = low[w] = next_index++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], index[w]);
                }
                continue;
            }
            if (low[v] == index[v]) {
                std::size_t w;
                do {
                    w = stack.back();
                    stack.pop_back();
                    on_stack[w] = false;
                    comp[w] = next_comp;
                } while (w != v);
                ++next_comp;
            }
            const std::size_t finished = v;
            call.pop_back();
            if (!call.empty()) {
                auto& parent = call.back().first;
                low[parent] = std::min(low[parent], low[finished]);
            }
        }
    }
    if (count != nullptr) {
        *count = next_comp;
    }
    return comp;
}

inline bool is_irreducible(const LabeledCTMC& chain) {
    std::size_t count = 0;
    strongly_connected_components(chain, &count);
    return count == 1;
}

/// Restricts a chain to its unique closed communicating class, preserving the
/// relative order of the surviving states. Fails if there are several closed classes.
inline LabeledCTMC recurrent_class(const LabeledCTMC& chain) {
    std::size_t count = 0;
    const auto comp = strongly_connected_components(chain, &count);
    if (count == 1) {
        return chain;
    }
    std::vector<bool> closed(count, true);
    for (const auto& t : chain.transitions()) {
        if (comp[t.from] != comp[t.to]) {
            closed[comp[t.from]] = false;
        }
    }
    if (std::count(closed.begin(), closed.end(), true) != 1) {
        throw NumericError("chain is reducible: more than one closed communicating class");
    }
    const auto bottom = static_cast<std::size_t>(std::find(closed.begin(), closed.end(), true) - closed.begin());
    std::vector<std::size_t> keep;
    for (std::size_t y = 0; y < chain.size(); ++y) {
        if (comp[y] == bottom) {
            keep.push_back(y);
        }
    }
    return chain.restricted(keep);
}

} // namespace marcq
