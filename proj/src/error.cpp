#include "prqa/error.hpp"

namespace prqa {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension error";
    case ErrorKind::parameter: return "parameter error";
    case ErrorKind::numeric: return "numeric error";
    case ErrorKind::usage: return "usage error";
    case ErrorKind::parse: return "parse error";
    case ErrorKind::io: return "I/O error";
    case ErrorKind::data: return "data error";
    case ErrorKind::config: return "config error";
    case ErrorKind::internal: return "internal error";
  }
  return "error";
}

}  // namespace prqa
