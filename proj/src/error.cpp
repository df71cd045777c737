#include "snl/error.hpp"

namespace snl {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::Shape: return "shape error";
    case ErrorCode::Symmetry: return "symmetry error";
    case ErrorCode::Convergence: return "convergence error";
    case ErrorCode::Overflow: return "overflow error";
    case ErrorCode::KernelDomain: return "kernel-domain error";
    case ErrorCode::DegenerateVertex: return "degenerate-vertex error";
    case ErrorCode::Precondition: return "precondition error";
    case ErrorCode::Spec: return "spec error";
    case ErrorCode::Numeric: return "numeric error";
    case ErrorCode::Config: return "config error";
    case ErrorCode::Divergence: return "divergence error";
    case ErrorCode::Io: return "io error";
  }
  return "unknown error";
}

}  // namespace snl
