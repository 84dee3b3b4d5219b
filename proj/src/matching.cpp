#include "featmerge/matching.hpp"

#include <limits>

#include "featmerge/error.hpp"
#include "featmerge/parallel.hpp"
#include "surgery.hpp"

namespace featmerge {

FeatureVectors feature_vectors(const Network& net, const MergeablePosition& pos, std::size_t m, bool bias_in_distance) {
    if (m >= pos.dim) {
        fail(ErrorKind::InvalidArgument, "feature " + std::to_string(m) + " out of range for dim " + std::to_string(pos.dim));
    }
    FeatureVectors fv;
    const auto pv = detail::producer_view(net, pos);
    const Tensor& w = net.weight(pos.producer);
    fv.row.assign(w.values().begin() + m * pv.row, w.values().begin() + (m + 1) * pv.row);
    if (bias_in_distance) {
        if (const Tensor* b = net.bias(pos.producer)) fv.row.push_back((*b)[m]);
    }
    for (const ConsumerBlock& c : pos.consumers) {
        const auto cv = detail::consumer_view(net, pos, c);
        const Tensor& cw = net.weight(c.layer);
        for (std::size_t o = 0; o < cv.out; ++o) {
            for (std::size_t s = 0; s < cv.slice; ++s) fv.col.push_back(cw[cv.index(o, m, s)]);
        }
    }
    return fv;
}

double feature_distance(const FeatureVectors& a, const FeatureVectors& b) noexcept {
    double acc = 0.0;
    for (std::size_t k = 0; k < a.row.size(); ++k) {
        const double d = a.row[k] - b.row[k];
        acc += d * d;
    }
    for (std::size_t k = 0; k < a.col.size(); ++k) {
        const double d = a.col[k] - b.col[k];
        acc += d * d;
    }
    return acc;
}

DistanceMatrix::DistanceMatrix(MergeablePosition position, std::size_t dim)
    : position_(std::move(position)), dim_(dim), values_(dim * dim, 0.0) {}

void DistanceMatrix::erase(std::size_t index) {
    std::vector<double> next;
    next.reserve((dim_ - 1) * (dim_ - 1));
    for (std::size_t m = 0; m < dim_; ++m) {
        if (m == index) continue;
        for (std::size_t n = 0; n < dim_; ++n) {
            if (n != index) next.push_back(values_[m * dim_ + n]);
        }
    }
    values_ = std::move(next);
    --dim_;
    position_.dim = dim_;
}

DistanceMatrix::OffDiagonal DistanceMatrix::off_diagonal() const {
    if (dim_ < 2) fail(ErrorKind::InvalidArgument, "off-diagonal statistics need at least two features");
    OffDiagonal s;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (std::size_t m = 0; m < dim_; ++m) {
        for (std::size_t n = m + 1; n < dim_; ++n) {
            const double v = values_[m * dim_ + n];
            if (v < s.min) {
                s.min = v;
                s.argmin_m = m;
                s.argmin_n = n;
            }
            if (v > s.max) s.max = v;
            sum += v;
        }
    }
    s.mean = sum / static_cast<double>(dim_ * (dim_ - 1) / 2);
    return s;
}

DistanceMatrix distance_matrix(const Network& net, const MergeablePosition& pos, bool bias_in_distance) {
    const std::size_t d = pos.dim;
    std::vector<FeatureVectors> fv(d);
    for (std::size_t m = 0; m < d; ++m) fv[m] = feature_vectors(net, pos, m, bias_in_distance);

    DistanceMatrix dm(pos, d);
    parallel_for(d, [&](std::size_t begin, std::size_t end) {
        for (std::size_t m = begin; m < end; ++m) {
            for (std::size_t n = m + 1; n < d; ++n) dm.set(m, n, feature_distance(fv[m], fv[n]));
        }
    });
    return dm;
}

}  // namespace featmerge
