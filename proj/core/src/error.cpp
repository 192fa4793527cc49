#include "meetsync/error.hpp"

namespace meetsync {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::invalid_time: return "invalid-time";
    case ErrorKind::degenerate_model: return "degenerate-model";
    case ErrorKind::degenerate_geometry: return "degenerate-geometry";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::unaligned_stream: return "unaligned-stream";
    case ErrorKind::structural: return "structural";
    case ErrorKind::parse: return "parse";
    case ErrorKind::not_a_session: return "not-a-session";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace meetsync
