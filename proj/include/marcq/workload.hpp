#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "marcq/errors.hpp"

namespace marcq {

inline constexpr double kProbabilityTolerance = 1e-12;

/// Phase-type duration given by an initial distribution over transient phases
/// and the sub-generator among them. Exit (absorption) rates are always derived
/// from the row sums of the sub-generator.
class PhaseType {
public:
    PhaseType(Eigen::VectorXd init, Eigen::MatrixXd subgen)
        : init_(std::move(init)), subgen_(std::move(subgen)) {
        const auto n = init_.size();
        if (n == 0) {
            throw ValidationError("phase-type: at least one phase is required");
        }
        if (subgen_.rows() != n || subgen_.cols() != n) {
            throw ValidationError("phase-type: subgen must be " + std::to_string(n) + "x" +
                                  std::to_string(n) + " to match init");
        }
        double total = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!std::isfinite(init_[i]) || init_[i] < 0.0) {
                throw ValidationError("phase-type: init entries must be >= 0");
            }
            total += init_[i];
        }
        if (std::abs(total - 1.0) > kProbabilityTolerance) {
            throw ValidationError("phase-type: init probabilities sum != 1");
        }
        exit_.resize(n);
        bool proper = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                const double r = subgen_(i, j);
                if (!std::isfinite(r)) {
                    throw ValidationError("phase-type: subgen entries must be finite");
                }
                if (i != j && r < 0.0) {
                    throw ValidationError("phase-type: subgen off-diagonal entries must be >= 0");
                }
                if (i == j && r > 0.0) {
                    throw ValidationError("phase-type: subgen diagonal entries must be <= 0");
                }
            }
            double e = -subgen_.row(i).sum();
            if (e < -kProbabilityTolerance) {
                throw ValidationError("phase-type: row " + std::to_string(i) +
                                      " of subgen has positive sum (negative exit rate)");
            }
            if (e < 0.0) {
                e = 0.0;
            }
            exit_[i] = e;
            proper = proper || e > 0.0;
        }
        if (!proper) {
            throw ValidationError("phase-type: no phase has a positive exit rate");
        }
        // Absorption must be certain from every phase for the mean to exist.
        Eigen::FullPivLU<Eigen::MatrixXd> lu(-subgen_);
        if (!lu.isInvertible()) {
            throw ValidationError("phase-type: some phases never reach absorption");
        }
        mean_ = init_.dot(lu.solve(Eigen::VectorXd::Ones(n)));
        if (!std::isfinite(mean_) || mean_ <= 0.0) {
            throw ValidationError("phase-type: mean duration is not finite and positive");
        }
    }

    static PhaseType exponential(double rate) {
        if (!(rate > 0.0) || !std::isfinite(rate)) {
            throw ValidationError("exponential duration: rate must be positive");
        }
        return PhaseType(Eigen::VectorXd::Ones(1), Eigen::MatrixXd::Constant(1, 1, -rate));
    }

    std::size_t phases() const noexcept { return static_cast<std::size_t>(init_.size()); }
    const Eigen::VectorXd& init() const noexcept { return init_; }
    const Eigen::MatrixXd& subgen() const noexcept { return subgen_; }
    const Eigen::VectorXd& exit() const noexcept { return exit_; }

    double init(std::size_t phase) const { return init_[static_cast<Eigen::Index>(phase)]; }
    double exit(std::size_t phase) const { return exit_[static_cast<Eigen::Index>(phase)]; }
    double rate(std::size_t from, std::size_t to) const {
        return subgen_(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(to));
    }
    /// Total rate of leaving `phase` (to another phase or to absorption).
    double leave_rate(std::size_t phase) const { return -rate(phase, phase); }

    /// init . (-subgen)^-1 . 1
    double mean() const noexcept { return mean_; }

    bool operator==(const PhaseType& o) const {
        return init_.size() == o.init_.size() && init_ == o.init_ && subgen_ == o.subgen_;
    }

private:
    Eigen::VectorXd init_;
    Eigen::MatrixXd subgen_;
    Eigen::VectorXd exit_;
    double mean_ = 0.0;
};

class JobClass {
public:
    JobClass(int need, double prob, PhaseType duration)
        : need_(need), prob_(prob), duration_(std::move(duration)) {
        if (need_ < 1) {
            throw ValidationError("job class: server need must be >= 1");
        }
        if (!(prob_ > 0.0) || !std::isfinite(prob_)) {
            throw ValidationError("job class: arrival probability must be > 0");
        }
    }

    int need() const noexcept { return need_; }
    double prob() const noexcept { return prob_; }
    const PhaseType& duration() const noexcept { return duration_; }

    bool operator==(const JobClass&) const = default;

private:
    int need_;
    double prob_;
    PhaseType duration_;
};

/// Single-phase (exponential) class.
inline JobClass exponential_class(int need, double prob, double rate) {
    return JobClass(need, prob, PhaseType::exponential(rate));
}

/// A job as seen by the service process: which class and which duration phase.
struct JobState {
    std::size_t class_id = 0;
    std::size_t phase = 0;

    auto operator<=>(const JobState&) const = default;
};

class WorkloadSpec {
public:
    WorkloadSpec(int k, std::vector<JobClass> classes) : k_(k), classes_(std::move(classes)) {
        if (k_ < 1) {
            throw ValidationError("workload: server count k must be >= 1");
        }
        if (classes_.empty()) {
            throw ValidationError("workload: at least one job class is required");
        }
        double total = 0.0;
        for (std::size_t i = 0; i < classes_.size(); ++i) {
            if (classes_[i].need() > k_) {
                throw ValidationError("workload: class " + std::to_string(i) + " has server need " +
                                      std::to_string(classes_[i].need()) + " > k = " +
                                      std::to_string(k_));
            }
            total += classes_[i].prob();
        }
        if (std::abs(total - 1.0) > kProbabilityTolerance) {
            throw ValidationError("workload: class probabilities sum != 1");
        }
    }

    int k() const noexcept { return k_; }
    const std::vector<JobClass>& classes() const noexcept { return classes_; }
    const JobClass& job_class(std::size_t i) const { return classes_.at(i); }
    std::size_t num_classes() const noexcept { return classes_.size(); }

    int need(const JobState& j) const { return classes_[j.class_id].need(); }

    /// True when `j` names an existing class and one of its phases.
    bool contains(const JobState& j) const {
        return j.class_id < classes_.size() && j.phase < classes_[j.class_id].duration().phases();
    }

    bool operator==(const WorkloadSpec&) const = default;

private:
    int k_;
    std::vector<JobClass> classes_;
};

} // namespace marcq
