#pragma once

#include <memory>

#include <spdlog/spdlog.h>

namespace evade::detail {

/// Process-wide stderr logger; level from EVADE_LOG (trace..off), default warn.
spdlog::logger& log();

}  // namespace evade::detail
