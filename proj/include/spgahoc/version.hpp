#pragma once

namespace spgahoc {

#ifdef SPGAHOC_VERSION_STRING
inline constexpr const char* kVersion = SPGAHOC_VERSION_STRING;
#else
inline constexpr const char* kVersion = "0.1.0";
#endif

}  // namespace spgahoc
