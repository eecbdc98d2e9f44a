#pragma once

#include <algorithm>
#include <cmath>
#include <optional>

namespace metatopic {

struct ModelHyperparams {
    double tau0 = 2.0;    // dynamics concentration
    double tau1 = 1.0;    // observation concentration
    double gamma0 = 1.0;  // Beta-process mass

    // above this many global topics, at most new_topic_cap_c new rows are
    // offered per matching
    std::optional<int> saturation = 250;
    int new_topic_cap_c = 1;

    // popularity counts are truncated here when entering the prior odds
    std::optional<int> popularity_cap = 10;

    int capped_count(int m) const {
        return popularity_cap ? std::min(m, *popularity_cap) : m;
    }

    // log(numerator / (horizon - m~)) with the denominator floored at 0.5 so
    // the odds stay finite when a topic appeared at every opportunity
    double prior_log_odds(double numerator, int m_capped, int horizon) const {
        return std::log(numerator) - std::log(std::max(static_cast<double>(horizon - m_capped), 0.5));
    }

    // number of new-topic rows to offer given current topic count and the
    // number of estimates
    int new_rows(int current_topics, int estimates) const {
        if (saturation && current_topics > *saturation) return std::min(estimates, new_topic_cap_c);
        return estimates;
    }
};

}  // namespace metatopic
