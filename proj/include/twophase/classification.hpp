#pragma once

// Exact efficiency bounds for the prevalence / sensitivity / specificity
// triple of a binary diagnostic test, where the test result X is cheap and the
// disease status Y is measured in the second phase.

#include "twophase/maximin.hpp"

#include <string>
#include <vector>

namespace twophase {

/// Joint law of (X, Y) given prevalence, sensitivity and specificity, as
/// conditional moments of the influence functions given X in {0, 1}.
/// Support point k is X = k.
DiscreteLaw classification_law(const Vector& theta);

struct ClassificationRow {
    std::string rule;
    Vector rho;          // rule at X = 0 and X = 1
    Vector bound;        // efficiency bound per component
    Vector improvement;  // relative improvement over the uniform rule
};

struct ClassificationDemo {
    double varpi = 0.0;
    Vector theta;
    Vector full_data_bound;
    std::vector<ClassificationRow> rows;  // uniform, sopt:1..3, sum, copt, gopt

    const ClassificationRow& row(const std::string& rule) const;
};

ClassificationDemo classification_demo(double varpi, const Vector& theta);

} // namespace twophase
