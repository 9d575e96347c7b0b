#pragma once

#include <array>
#include <cstddef>

namespace engage {

inline constexpr std::size_t kNodeCount = 78;
inline constexpr std::size_t kContourCount = 68;

// Node layout shared with the landmark extractor.
inline constexpr std::size_t kLeftEyeBegin = 36;   // 36..41
inline constexpr std::size_t kRightEyeBegin = 42;  // 42..47
inline constexpr std::size_t kLeftIrisBegin = 68;  // center, top, right, bottom, left
inline constexpr std::size_t kRightIrisBegin = 73;

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// Canonical mean face in template units (roughly [0,1] x [0,1.06], y down).
/// The 2D positions are what the intra-frame graph is triangulated from.
const std::array<Point2, kNodeCount>& face_template_2d();

/// The same template placed in normalized image coordinates with a synthetic
/// relative depth; used as the rest pose by the synthetic generator.
const std::array<Point3, kNodeCount>& face_template_image();

/// True for the 12 eye-contour nodes and the 10 iris nodes.
bool is_eye_node(std::size_t node) noexcept;

}  // namespace engage
