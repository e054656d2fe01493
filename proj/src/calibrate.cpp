#include "needletrack/calibrate.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "needletrack/errors.hpp"

namespace needletrack {

void Pose::validate() const {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw DataError("pose contains non-finite values");
  }
  const double ortho = (rotation.transpose() * rotation - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) {
    throw DataError("pose rotation is not orthonormal (max |R^T R - I| = " + std::to_string(ortho) + ")");
  }
  const double det = rotation.determinant();
  if (std::abs(det - 1.0) > 1e-9) {
    throw DataError("pose rotation has determinant " + std::to_string(det) + ", expected +1");
  }
}

PivotCalibration pivot_calibrate(std::span<const Pose> poses, std::size_t min_poses) {
  if (poses.size() < std::max<std::size_t>(min_poses, 1)) {
    throw DataError("pivot calibration needs at least " + std::to_string(min_poses) +
                    " poses, got " + std::to_string(poses.size()));
  }
  for (const auto& pose : poses) pose.validate();

  const auto n = static_cast<Eigen::Index>(poses.size());
  Eigen::MatrixXd a(3 * n, 6);
  Eigen::VectorXd rhs(3 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Pose& pose = poses[static_cast<std::size_t>(i)];
    a.block<3, 3>(3 * i, 0) = pose.rotation;
    a.block<3, 3>(3 * i, 3) = -Eigen::Matrix3d::Identity();
    rhs.segment<3>(3 * i) = -pose.translation;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  const double condition =
      smallest > 0.0 ? sv(0) / smallest : std::numeric_limits<double>::infinity();
  if (!(condition <= kMaxPivotCondition)) {
    std::ostringstream msg;
    msg << "pivot calibration system is rank deficient: condition number " << condition
        << " exceeds " << kMaxPivotCondition
        << " (poses need rotations about at least two distinct axes)";
    throw DataError(msg.str());
  }

  const Eigen::VectorXd x = svd.solve(rhs);
  PivotCalibration out;
  out.tip_offset = x.head<3>();
  out.pivot_point = x.tail<3>();
  out.condition_number = condition;
  double sum_sq = 0.0;
  for (const auto& pose : poses) {
    sum_sq += (pose.rotation * out.tip_offset + pose.translation - out.pivot_point).squaredNorm();
  }
  out.rms_residual = std::sqrt(sum_sq / static_cast<double>(poses.size()));
  return out;
}

std::vector<Pose> read_pose_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pose file '" + path.string() + "'");
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("malformed pose file '" + path.string() + "': " + e.what());
  }
  if (!doc.is_array()) throw DataError("pose file '" + path.string() + "' must hold a JSON array");

  std::vector<Pose> poses;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    const std::string where = path.string() + " pose " + std::to_string(i);
    if (!entry.is_object()) throw DataError(where + ": expected an object");
    for (const auto& item : entry.items()) {
      if (item.key() != "rotation" && item.key() != "translation" && item.key() != "unit") {
        throw DataError(where + ": unknown key '" + item.key() + "'");
      }
    }
    const auto rot = entry.find("rotation");
    const auto trans = entry.find("translation");
    if (rot == entry.end() || !rot->is_array() || rot->size() != 9) {
      throw DataError(where + ": 'rotation' must be 9 numbers (row-major)");
    }
    if (trans == entry.end() || !trans->is_array() || trans->size() != 3) {
      throw DataError(where + ": 'translation' must be 3 numbers");
    }
    if (entry.value("unit", std::string("cm")) != "cm") {
      throw DataError(where + ": unit must be \"cm\"");
    }
    Pose pose;
    for (int k = 0; k < 9; ++k) {
      if (!(*rot)[k].is_number()) throw DataError(where + ": rotation entries must be numbers");
      pose.rotation(k / 3, k % 3) = (*rot)[k].get<double>();
    }
    for (int k = 0; k < 3; ++k) {
      if (!(*trans)[k].is_number()) throw DataError(where + ": translation entries must be numbers");
      pose.translation(k) = (*trans)[k].get<double>();
    }
    try {
      pose.validate();
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    poses.push_back(pose);
  }
  return poses;
}

void write_pose_file(const std::filesystem::path& path, std::span<const Pose> poses) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& pose : poses) {
    nlohmann::json rot = nlohmann::json::array();
    for (int k = 0; k < 9; ++k) rot.push_back(pose.rotation(k / 3, k % 3));
    doc.push_back({{"rotation", rot},
                   {"translation", {pose.translation(0), pose.translation(1), pose.translation(2)}},
                   {"unit", "cm"}});
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write pose file '" + path.string() + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace needletrack
