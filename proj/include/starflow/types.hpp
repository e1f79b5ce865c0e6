#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace starflow {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  numerical,
  io,
  format,
  unsupported,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require_dim(Eigen::Index got, Eigen::Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::dimension_mismatch, std::string(what) + ": expected dimension " +
                                                   std::to_string(want) + ", got " +
                                                   std::to_string(got));
  }
}

}  // namespace starflow
