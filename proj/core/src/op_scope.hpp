#pragma once

#include <cstddef>
#include <span>
#include <string_view>

#include "objspace/runtime.hpp"

namespace objspace::detail {

/// Outermost-or-nested scope around one public store operation. Opens no
/// scope in baseline mode.
class OpScope {
 public:
  explicit OpScope(Runtime& rt) : ctx_{rt.local()}, active_{rt.guides_enabled()} {
    if (active_) ctx_.enter_scope();
  }
  ~OpScope() {
    if (active_) ctx_.exit_scope();
  }
  OpScope(const OpScope&) = delete;
  OpScope& operator=(const OpScope&) = delete;

  [[nodiscard]] ThreadContext& ctx() noexcept { return ctx_; }

 private:
  ThreadContext& ctx_;
  bool active_;
};

inline std::span<const std::byte> as_bytes(std::string_view s) noexcept {
  return {reinterpret_cast<const std::byte*>(s.data()), s.size()};
}

inline std::string_view as_chars(std::span<const std::byte> b) noexcept {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

}  // namespace objspace::detail
