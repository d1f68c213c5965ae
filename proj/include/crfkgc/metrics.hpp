#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "crfkgc/error.hpp"

namespace crfkgc {

// Filtered rank of the gold candidate. `filtered[i] != 0` drops candidate i
// from the pool (a known-true tail that is not the query's own answer). Ties
// break by candidate id ascending, so a tied candidate with the smaller id
// outranks the gold when its id is smaller.
inline std::size_t filtered_rank(const std::vector<double>& scores, std::size_t gold,
                                 const std::vector<char>& filtered) {
    if (gold >= scores.size()) throw Error("filtered_rank: gold index out of range");
    if (!filtered.empty() && filtered.size() != scores.size())
        throw Error("filtered_rank: mask size mismatch");
    if (!filtered.empty() && filtered[gold])
        throw Error("filtered_rank: gold candidate is filtered out");
    const double g = scores[gold];
    std::size_t rank = 1;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (i == gold || (!filtered.empty() && filtered[i])) continue;
        if (scores[i] > g || (scores[i] == g && i < gold)) ++rank;
    }
    return rank;
}

struct RelationMetrics {
    std::size_t queries = 0;
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits5 = 0.0;
    double hits10 = 0.0;
};

struct EvalReport {
    double mrr = 0.0;
    double hits1 = 0.0;
    double hits5 = 0.0;
    double hits10 = 0.0;
    std::size_t queries = 0;
    double wall_time_s = 0.0;
    std::map<std::string, RelationMetrics> per_relation;

    std::string text() const {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(4);
        os << "MRR " << mrr << "  Hits@1 " << hits1 << "  Hits@5 " << hits5 << "  Hits@10 "
           << hits10 << "  (" << queries << " queries, " << wall_time_s << "s)\n";
        for (const auto& [name, m] : per_relation)
            os << "  " << name << ": MRR " << m.mrr << "  Hits@1 " << m.hits1 << "  Hits@5 "
               << m.hits5 << "  Hits@10 " << m.hits10 << "  (" << m.queries << " queries)\n";
        return os.str();
    }
};

// Micro-averaged accumulator: every query counts once in the overall numbers.
class MetricsAccumulator {
public:
    void add(const std::string& relation, std::size_t rank) {
        if (rank == 0) throw Error("metrics: rank must be >= 1");
        const double rr = 1.0 / static_cast<double>(rank);
        total_rr_ += rr;
        total_h1_ += rank <= 1;
        total_h5_ += rank <= 5;
        total_h10_ += rank <= 10;
        ++total_n_;
        auto& r = rel_[relation];
        r.mrr += rr;
        r.hits1 += rank <= 1;
        r.hits5 += rank <= 5;
        r.hits10 += rank <= 10;
        ++r.queries;
    }

    std::size_t count() const { return total_n_; }

    EvalReport finalize(double wall_time_s = 0.0) const {
        if (total_n_ == 0) throw Error("metrics: no queries accumulated");
        EvalReport rep;
        const double n = static_cast<double>(total_n_);
        rep.mrr = total_rr_ / n;
        rep.hits1 = total_h1_ / n;
        rep.hits5 = total_h5_ / n;
        rep.hits10 = total_h10_ / n;
        rep.queries = total_n_;
        rep.wall_time_s = wall_time_s;
        for (const auto& [name, acc] : rel_) {
            RelationMetrics m;
            const double k = static_cast<double>(acc.queries);
            m.queries = acc.queries;
            m.mrr = acc.mrr / k;
            m.hits1 = acc.hits1 / k;
            m.hits5 = acc.hits5 / k;
            m.hits10 = acc.hits10 / k;
            rep.per_relation[name] = m;
        }
        return rep;
    }

private:
    double total_rr_ = 0.0;
    double total_h1_ = 0.0;
    double total_h5_ = 0.0;
    double total_h10_ = 0.0;
    std::size_t total_n_ = 0;
    std::map<std::string, RelationMetrics> rel_;
};

} // namespace crfkgc
