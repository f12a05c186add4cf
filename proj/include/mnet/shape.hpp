#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <string>

#include "mnet/common.hpp"

namespace mnet {

// Dense extents, outermost first. Rank-5 tensors are ordered [N, C, z, y, x]
// with x fastest in memory. Rank 0 is a scalar.
class Shape {
public:
    static constexpr int kMaxRank = 5;

    Shape() = default;

    Shape(std::initializer_list<int64_t> dims)
    {
        check(static_cast<int>(dims.size()) <= kMaxRank, ErrorKind::Shape,
              "shape rank ", dims.size(), " exceeds max rank ", kMaxRank);
        for (int64_t e : dims) {
            check(e >= 1, ErrorKind::Shape, "shape extent must be >= 1, got ", e);
            d_[rank_++] = e;
        }
    }

    int rank() const { return rank_; }

    int64_t operator[](int axis) const
    {
        check(axis >= 0 && axis < rank_, ErrorKind::Shape,
              "axis ", axis, " out of range for rank ", rank_);
        return d_[axis];
    }

    int64_t numel() const
    {
        int64_t n = 1;
        for (int i = 0; i < rank_; ++i)
            n *= d_[i];
        return n;
    }

    bool operator==(const Shape& o) const
    {
        if (rank_ != o.rank_)
            return false;
        for (int i = 0; i < rank_; ++i)
            if (d_[i] != o.d_[i])
                return false;
        return true;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const
    {
        std::string s = "(";
        for (int i = 0; i < rank_; ++i) {
            if (i)
                s += ",";
            s += std::to_string(d_[i]);
        }
        s += ")";
        return s;
    }

private:
    std::array<int64_t, kMaxRank> d_{1, 1, 1, 1, 1};
    int rank_ = 0;
};

} // namespace mnet
