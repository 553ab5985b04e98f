#pragma once

#include <string>

namespace marlrr {

/// Decimal with 9 significant digits, the precision of every CSV and JSONL
/// value the tools emit.
std::string decimal(double value);

/// JSON string literal with escapes.
std::string json_string(const std::string& s);

}  // namespace marlrr
