#ifndef IWVI_VERSION_HPP
#define IWVI_VERSION_HPP

namespace iwvi {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace iwvi

#endif  // IWVI_VERSION_HPP
