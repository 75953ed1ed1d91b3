#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pkcurv {

/// Argument outside the mathematical domain of an operation (bad index,
/// bad cone level, dimension mismatch).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Invalid problem or solver configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A vector (or a grid node) left the Garding cone Gamma_k.
///
/// `level` is the smallest j with sigma_j <= 0. When raised from a field
/// evaluation, `node` is the worst node (smallest cone margin) and
/// `violations` the number of offending nodes; otherwise node is npos.
class ConeViolation : public std::runtime_error {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  ConeViolation(const std::string& what, int level, std::size_t node = npos,
                std::size_t violations = 0)
      : std::runtime_error(what), level_(level), node_(node), violations_(violations) {}

  int level() const noexcept { return level_; }
  std::size_t node() const noexcept { return node_; }
  std::size_t violations() const noexcept { return violations_; }

 private:
  int level_;
  std::size_t node_;
  std::size_t violations_;
};

}  // namespace pkcurv
