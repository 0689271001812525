#pragma once

#include <cmath>

namespace irmlru {

// Neumaier's variant of Kahan summation. Safe when the addend is larger in
// magnitude than the running sum, which happens constantly in the
// alternating subset sums.
template <typename Real = long double>
class CompensatedSum {
public:
    void add(Real x) noexcept
    {
        const Real t = sum_ + x;
        if (std::fabs(sum_) >= std::fabs(x))
            carry_ += (sum_ - t) + x;
        else
            carry_ += (x - t) + sum_;
        sum_ = t;
    }

    CompensatedSum& operator+=(Real x) noexcept
    {
        add(x);
        return *this;
    }

    Real value() const noexcept { return sum_ + carry_; }

private:
    Real sum_ = 0;
    Real carry_ = 0;
};

} // namespace irmlru
