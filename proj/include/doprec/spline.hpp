#pragma once

#include <span>
#include <vector>

namespace doprec {

// Natural cubic spline (zero second derivative at both ends) through
// strictly increasing knots.
class NaturalCubicSpline {
public:
    NaturalCubicSpline() = default;
    NaturalCubicSpline(std::vector<double> knots, std::vector<double> values);

    double operator()(double x) const;
    double derivative(double x) const;

    const std::vector<double>& knots() const { return x_; }
    const std::vector<double>& values() const { return y_; }
    const std::vector<double>& second_derivatives() const { return m_; }

private:
    std::size_t interval(double x) const;

    std::vector<double> x_;
    std::vector<double> y_;
    std::vector<double> m_;
};

}  // namespace doprec
