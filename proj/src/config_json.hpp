// Copyright 2026 The cassforge Authors
// SPDX-License-Identifier: Apache-2.0

// JSON forms of the network configurations, shared by checkpoints and run configs.

#pragma once

#include "cassforge/fusion.hpp"
#include "cassforge/vfnet.hpp"
#include "json.hpp"

namespace cassforge::detail {

nlohmann::json fusion_to_json(const cond::FusionConfig& c);
cond::FusionConfig fusion_from_json(const nlohmann::json& j);
nlohmann::json vfn_to_json(const vfn::VfnConfig& c);
vfn::VfnConfig vfn_from_json(const nlohmann::json& j);

}  // namespace cassforge::detail
