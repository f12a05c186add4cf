#include "mnet/common.hpp"

#include <cstdio>

namespace mnet {

std::string fmt_g6(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

} // namespace mnet
