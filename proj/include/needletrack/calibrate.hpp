#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace needletrack {

/// Hub-sensor pose in the tracker (coil) frame: p_coil = rotation * p_sensor
/// + translation. Translation in cm.
struct Pose {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  /// Throws DataError unless rotation is orthonormal with det +1 (1e-9).
  void validate() const;
};

struct PivotCalibration {
  Eigen::Vector3d tip_offset;   // sensor frame, cm
  Eigen::Vector3d pivot_point;  // coil frame, cm
  double rms_residual = 0.0;    // cm
  double condition_number = 0.0;
};

inline constexpr double kMaxPivotCondition = 1e8;

/// Least-squares pivot calibration. Solves R_i t + p_i = b for the fixed tip
/// offset t and pivot b over all poses, i.e. [R_i | -I] [t; b] = -p_i, via
/// SVD. Rejects fewer than `min_poses` poses and systems whose condition
/// number exceeds kMaxPivotCondition.
PivotCalibration pivot_calibrate(std::span<const Pose> poses, std::size_t min_poses = 3);

/// JSON array of {"rotation": [9 numbers, row-major], "translation": [3],
/// "unit": "cm"}.
std::vector<Pose> read_pose_file(const std::filesystem::path& path);
void write_pose_file(const std::filesystem::path& path, std::span<const Pose> poses);

}  // namespace needletrack
