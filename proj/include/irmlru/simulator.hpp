#pragma once

// Monte Carlo cross-checks for the exact engine: i.i.d. stationary stacks
// drawn from the ordering law, and the discrete-time move-to-front chain.

#include <irmlru/core_model.hpp>
#include <irmlru/random.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

namespace irmlru {

struct SimConfig {
    std::uint64_t seed = 1;
    std::int64_t samples = 100000; // stationary sampler, per replica
    std::int64_t steps = 1000000;  // chain, per replica (after burn-in)
    std::int64_t burn_in = -1;     // chain; negative selects the default heuristic
    int replicas = 1;

    void validate() const
    {
        if (samples < 1)
            throw Error(ErrorCode::BadArgument, "samples must be >= 1");
        if (steps < 1)
            throw Error(ErrorCode::BadArgument, "steps must be >= 1");
        if (replicas < 1)
            throw Error(ErrorCode::BadArgument, "replicas must be >= 1");
    }
};

struct SimResult {
    double hit_rate_estimate = 0.0;
    double std_error = 0.0;
    std::vector<std::int64_t> search_cost_histogram; // index d - 1 counts depth d
    std::vector<double> search_cost_std_error;       // of histogram[d] / samples_used
    std::int64_t samples_used = 0;
    std::int64_t burn_in_used = 0;
    bool burn_in_heuristic = false;
};

/// 50 N (max p / min p) requests; a coupling-style guess, not a proven bound.
inline std::int64_t default_burn_in(const PopularityVector& p)
{
    const double ratio = p.max() / p.min();
    const double b = 50.0 * static_cast<double>(p.size()) * ratio;
    return static_cast<std::int64_t>(std::min(b, 1e9));
}

/// Recency order at stationarity: position 0 is the most recent item. Built
/// by repeatedly picking among the remaining items proportionally to p.
inline std::vector<int> sample_stationary_stack(const PopularityVector& p, Rng& rng)
{
    const std::size_t n = p.size();
    std::vector<int> remaining(n);
    std::iota(remaining.begin(), remaining.end(), 0);
    std::vector<int> stack;
    stack.reserve(n);
    while (remaining.size() > 1) {
        double mass = 0.0;
        for (int i : remaining)
            mass += p[static_cast<std::size_t>(i)];
        double target = rng.uniform() * mass;
        std::size_t pick = remaining.size() - 1;
        for (std::size_t j = 0; j < remaining.size(); ++j) {
            target -= p[static_cast<std::size_t>(remaining[j])];
            if (target < 0.0) {
                pick = j;
                break;
            }
        }
        stack.push_back(remaining[pick]);
        remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
    }
    stack.push_back(remaining.front());
    return stack;
}

namespace detail {

// Inverse-CDF request sampler.
class RequestSampler {
public:
    explicit RequestSampler(const PopularityVector& p) : cumulative_(p.size())
    {
        double acc = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            acc += p[i];
            cumulative_[i] = acc;
        }
    }

    int draw(Rng& rng) const
    {
        const double u = rng.uniform() * cumulative_.back();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                                         static_cast<std::ptrdiff_t>(cumulative_.size()) - 1));
    }

private:
    std::vector<double> cumulative_;
};

struct RunningMoments {
    std::int64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x)
    {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
    }

    // Chan et al. pairwise merge.
    void merge(const RunningMoments& other)
    {
        if (other.count == 0)
            return;
        const std::int64_t total = count + other.count;
        const double delta = other.mean - mean;
        mean += delta * static_cast<double>(other.count) / static_cast<double>(total);
        m2 += other.m2 + delta * delta * static_cast<double>(count) *
                             static_cast<double>(other.count) / static_cast<double>(total);
        count = total;
    }

    double std_error() const
    {
        if (count < 2)
            return 0.0;
        const double var = m2 / static_cast<double>(count - 1);
        return std::sqrt(var / static_cast<double>(count));
    }
};

inline void check_sim_params(const PopularityVector& p, const ModelParams& params)
{
    params.require_matches(p);
    params.require_partial();
}

} // namespace detail

/// Averages sum_{i in top C} p_i over independent stationary stacks (the
/// conditional hit probability, not a Bernoulli outcome). The histogram
/// records the depth of one fresh request per stack.
inline SimResult estimate_hit_rate_stationary(const PopularityVector& p, const ModelParams& params,
                                              const SimConfig& cfg)
{
    detail::check_sim_params(p, params);
    cfg.validate();
    const std::size_t n = p.size();
    const auto c = static_cast<std::size_t>(params.capacity());
    const detail::RequestSampler requests(p);
    detail::RunningMoments total;
    SimResult out;
    out.search_cost_histogram.assign(n, 0);
    std::vector<int> depth_of(n);
    for (int replica = 0; replica < cfg.replicas; ++replica) {
        Rng rng(cfg.seed, static_cast<std::uint64_t>(replica));
        detail::RunningMoments local;
        for (std::int64_t s = 0; s < cfg.samples; ++s) {
            const auto stack = sample_stationary_stack(p, rng);
            double cached = 0.0;
            for (std::size_t r = 0; r < c; ++r)
                cached += p[static_cast<std::size_t>(stack[r])];
            local.add(cached);
            for (std::size_t r = 0; r < n; ++r)
                depth_of[static_cast<std::size_t>(stack[r])] = static_cast<int>(r);
            ++out.search_cost_histogram[static_cast<std::size_t>(depth_of[static_cast<std::size_t>(requests.draw(rng))])];
        }
        total.merge(local);
    }
    out.hit_rate_estimate = total.mean;
    out.std_error = total.std_error();
    out.samples_used = total.count;
    for (std::int64_t count : out.search_cost_histogram) {
        const double f = static_cast<double>(count) / static_cast<double>(out.samples_used);
        out.search_cost_std_error.push_back(std::sqrt(f * (1.0 - f) / static_cast<double>(out.samples_used)));
    }
    return out;
}

inline constexpr std::int64_t kChainBatches = 100;

/// Discrete-time move-to-front list started from the identity order.
/// Requests after burn-in are scored: hit iff depth <= C. Successive hits are
/// correlated, so std_error comes from the spread of batch means (up to
/// kChainBatches contiguous batches per replica), not from single requests.
inline SimResult simulate_mtf_chain(const PopularityVector& p, const ModelParams& params,
                                    const SimConfig& cfg)
{
    detail::check_sim_params(p, params);
    cfg.validate();
    const std::size_t n = p.size();
    const auto c = static_cast<std::size_t>(params.capacity());
    const detail::RequestSampler requests(p);
    SimResult out;
    out.burn_in_heuristic = cfg.burn_in < 0;
    out.burn_in_used = out.burn_in_heuristic ? default_burn_in(p) : cfg.burn_in;
    out.search_cost_histogram.assign(n, 0);
    detail::RunningMoments batch_means;
    std::vector<detail::RunningMoments> bin_means(n);
    std::vector<std::int64_t> batch_hist(n);
    for (int replica = 0; replica < cfg.replicas; ++replica) {
        Rng rng(cfg.seed, static_cast<std::uint64_t>(replica));
        std::vector<int> list(n);
        std::iota(list.begin(), list.end(), 0);
        const std::int64_t batches = std::min(cfg.steps, kChainBatches);
        std::int64_t hits = 0, in_batch = 0, batch_index = 0;
        std::fill(batch_hist.begin(), batch_hist.end(), 0);
        for (std::int64_t step = 0; step < out.burn_in_used + cfg.steps; ++step) {
            const int item = requests.draw(rng);
            const auto pos = static_cast<std::size_t>(std::find(list.begin(), list.end(), item) - list.begin());
            if (step >= out.burn_in_used) {
                hits += pos < c;
                ++in_batch;
                ++out.search_cost_histogram[pos];
                ++batch_hist[pos];
                // batch b ends after floor((b + 1) steps / batches) scored requests
                const std::int64_t scored = step - out.burn_in_used + 1;
                if (scored == (batch_index + 1) * cfg.steps / batches) {
                    batch_means.add(static_cast<double>(hits) / static_cast<double>(in_batch));
                    for (std::size_t d = 0; d < n; ++d) {
                        bin_means[d].add(static_cast<double>(batch_hist[d]) / static_cast<double>(in_batch));
                        batch_hist[d] = 0;
                    }
                    hits = in_batch = 0;
                    ++batch_index;
                }
            }
            std::rotate(list.begin(), list.begin() + static_cast<std::ptrdiff_t>(pos),
                        list.begin() + static_cast<std::ptrdiff_t>(pos) + 1);
        }
    }
    std::int64_t scored = 0;
    std::int64_t hit_total = 0;
    for (std::size_t d = 0; d < n; ++d) {
        scored += out.search_cost_histogram[d];
        if (d < c)
            hit_total += out.search_cost_histogram[d];
    }
    out.hit_rate_estimate = static_cast<double>(hit_total) / static_cast<double>(scored);
    out.std_error = batch_means.std_error();
    out.samples_used = scored;
    for (const auto& m : bin_means)
        out.search_cost_std_error.push_back(m.std_error());
    return out;
}

} // namespace irmlru
