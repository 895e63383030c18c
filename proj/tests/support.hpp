#pragma once

#include <algorithm>
#include <random>
#include <string>

#include "marcq/workload.hpp"
#include "marcq/workload_io.hpp"

namespace marcq::testing {

inline WorkloadSpec running_example() {
    return WorkloadSpec(2, {exponential_class(1, 2.0 / 3.0, 1.0), exponential_class(2, 1.0 / 3.0, 0.5)});
}

inline WorkloadSpec mm1_spec(int k, double mu) { return WorkloadSpec(k, {exponential_class(k, 1.0, mu)}); }

inline std::string data_path(const std::string& name) { return std::string(MARCQ_DATA_DIR) + "/" + name; }

/// Random exponential workload: k in [1, max_k], 1..max_classes classes with distinct needs.
inline WorkloadSpec random_spec(std::mt19937_64& gen, int max_k, int max_classes) {
    std::uniform_int_distribution<int> pick_k(1, max_k);
    std::uniform_real_distribution<double> rate(0.2, 3.0);
    std::uniform_real_distribution<double> weight(0.1, 1.0);
    const int k = pick_k(gen);
    std::vector<int> needs;
    for (int n = 1; n <= k; ++n) {
        needs.push_back(n);
    }
    std::shuffle(needs.begin(), needs.end(), gen);
    std::uniform_int_distribution<int> pick_n(1, std::min<int>(max_classes, k));
    needs.resize(static_cast<std::size_t>(pick_n(gen)));
    std::vector<double> w;
    double total = 0.0;
    for (std::size_t i = 0; i < needs.size(); ++i) {
        w.push_back(weight(gen));
        total += w.back();
    }
    std::vector<JobClass> classes;
    double acc = 0.0;
    for (std::size_t i = 0; i < needs.size(); ++i) {
        const double p = i + 1 == needs.size() ? 1.0 - acc : w[i] / total;
        acc += p;
        classes.push_back(exponential_class(needs[i], p, rate(gen)));
    }
    return WorkloadSpec(k, std::move(classes));
}

} // namespace marcq::testing
