// Copyright 2026 The SVT-Net Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <spdlog/spdlog.h>

namespace svtnet {

/// Applies SVT_LOG (error|info|debug) to the default logger; unset means error.
void configure_logging_from_env();

}  // namespace svtnet
