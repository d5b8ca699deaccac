#include "rtkd/errors.hpp"

namespace rtkd {

std::string_view category_name(ErrorCategory category) {
  switch (category) {
    case ErrorCategory::kUsage:
      return "usage";
    case ErrorCategory::kFormat:
      return "format";
    case ErrorCategory::kValidation:
      return "validation";
    case ErrorCategory::kNumeric:
      return "numeric";
  }
  return "unknown";
}

}  // namespace rtkd
