#pragma once

namespace gwps {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr const char* kReportSchema = "v1";

}  // namespace gwps
