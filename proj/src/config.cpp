// SPDX-License-Identifier: Apache-2.0
#include "sae/config.hpp"

namespace sae {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::TopK: return "topk";
    case Variant::JumpRelu: return "jumprelu";
  }
  return "?";
}

std::string to_string(PositionKind p) {
  return p == PositionKind::Autoencoder ? "sae" : "transcoder";
}

Variant variant_from_string(const std::string& s) {
  if (s == "vanilla") return Variant::Vanilla;
  if (s == "topk") return Variant::TopK;
  if (s == "jumprelu") return Variant::JumpRelu;
  throw ConfigError("unknown variant '" + s + "' (expected vanilla|topk|jumprelu)");
}

PositionKind position_kind_from_string(const std::string& s) {
  if (s == "sae") return PositionKind::Autoencoder;
  if (s == "transcoder") return PositionKind::Transcoder;
  throw ConfigError("unknown position kind '" + s + "' (expected sae|transcoder)");
}

}  // namespace sae
