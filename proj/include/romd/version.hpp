#ifndef ROMD_VERSION_HPP
#define ROMD_VERSION_HPP

namespace romd {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace romd

#endif  // ROMD_VERSION_HPP
