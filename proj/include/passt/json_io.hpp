#pragma once

// nlohmann ADL conversions for the config structs; include only where JSON
// is actually handled (heavy header).

#include <json.hpp>

#include "passt/encoder.hpp"

namespace passt {

void to_json(nlohmann::json& j, const MelConfig& c);
void from_json(const nlohmann::json& j, MelConfig& c);

void to_json(nlohmann::json& j, const PatchGeometry& g);
void from_json(const nlohmann::json& j, PatchGeometry& g);

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

void to_json(nlohmann::json& j, const PatchoutSpec& s);
void from_json(const nlohmann::json& j, PatchoutSpec& s);

void to_json(nlohmann::json& j, const AugmentConfig& a);
void from_json(const nlohmann::json& j, AugmentConfig& a);

}  // namespace passt
