#include "fable/normal.hpp"

#include "fable/error.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <numbers>

namespace fable {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_quantile(double prob) {
    if (!(prob > 0.0 && prob < 1.0))
        throw Error(ErrorCode::InvalidAlpha, "normal quantile requires a probability in (0, 1)");
    return boost::math::quantile(boost::math::normal_distribution<double>(), prob);
}

}  // namespace fable
