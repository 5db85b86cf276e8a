#pragma once

#include <stdexcept>
#include <string>

namespace noiser {

enum class ErrorKind {
  config,
  input,
  io,
  parse,
  transport,
  replay_miss,
  generation_rejected,
  pool_exhausted,
  exhausted_candidates,
  gate_failure,
  degenerate_sample,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::config: return "config";
    case ErrorKind::input: return "input";
    case ErrorKind::io: return "io";
    case ErrorKind::parse: return "parse";
    case ErrorKind::transport: return "transport";
    case ErrorKind::replay_miss: return "replay-miss";
    case ErrorKind::generation_rejected: return "generation-rejected";
    case ErrorKind::pool_exhausted: return "pool-exhausted";
    case ErrorKind::exhausted_candidates: return "exhausted-candidates";
    case ErrorKind::gate_failure: return "gate-failure";
    case ErrorKind::degenerate_sample: return "degenerate-sample";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        raw_(message) {}

  ErrorKind kind() const { return kind_; }
  const std::string& raw_message() const { return raw_; }

 private:
  ErrorKind kind_;
  std::string raw_;
};

// Re-throws stage failures with a stage label so pipeline diagnostics name
// where they came from.
template <class Fn>
auto with_stage(const char* stage, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("[") + stage + "] " + e.raw_message());
  }
}

}  // namespace noiser
