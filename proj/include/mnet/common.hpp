#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace mnet {

enum class ErrorKind {
    Shape,    // tensor/volume geometry violations
    Config,   // bad user input, file formats, CLI usage
    Io,       // filesystem failures
    Numeric,  // divergence, non-finite values
    Logic,    // internal contract broken
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

namespace detail {
inline void str_cat_into(std::ostringstream&) {}
template <typename A, typename... Rest>
void str_cat_into(std::ostringstream& os, A&& a, Rest&&... rest)
{
    os << a;
    str_cat_into(os, std::forward<Rest>(rest)...);
}
} // namespace detail

template <typename... Args>
std::string str_cat(Args&&... args)
{
    std::ostringstream os;
    detail::str_cat_into(os, std::forward<Args>(args)...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void fail(ErrorKind kind, Args&&... args)
{
    throw Error(kind, str_cat(std::forward<Args>(args)...));
}

template <typename... Args>
void check(bool cond, ErrorKind kind, Args&&... args)
{
    if (!cond)
        fail(kind, std::forward<Args>(args)...);
}

// 6 significant digits, the fixed float format of every CSV/report column.
std::string fmt_g6(double v);

} // namespace mnet
