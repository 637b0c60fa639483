#pragma once

#include <string>
#include <string_view>

#include "ltm/error.hpp"

namespace ltm {

enum class VariableKind { observed, latent };

inline std::string_view to_string(VariableKind kind) {
  return kind == VariableKind::observed ? "observed" : "latent";
}

inline VariableKind parse_kind(std::string_view text) {
  if (text == "observed") return VariableKind::observed;
  if (text == "latent") return VariableKind::latent;
  throw ModelError("unknown variable kind '" + std::string(text) + "'");
}

// A named discrete variable with states 0 .. cardinality-1.
struct Variable {
  std::string name;
  int cardinality = 2;
  VariableKind kind = VariableKind::observed;

  bool observed() const { return kind == VariableKind::observed; }
  bool latent() const { return kind == VariableKind::latent; }

  friend bool operator==(const Variable&, const Variable&) = default;
};

inline Variable observed_variable(std::string name, int cardinality) {
  return {std::move(name), cardinality, VariableKind::observed};
}

inline Variable latent_variable(std::string name, int cardinality) {
  return {std::move(name), cardinality, VariableKind::latent};
}

}  // namespace ltm
