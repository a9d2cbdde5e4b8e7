#pragma once

#include <stdexcept>
#include <string>

namespace posbias {

// Bad configuration, malformed input data, or a violated precondition.
// The CLI maps these to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A dataset item could not be loaded (unreadable image, missing file).
class IngestionError : public ValidationError {
 public:
  IngestionError(std::string item_id, const std::string& what)
      : ValidationError("item '" + item_id + "': " + what), item_id_(std::move(item_id)) {}

  const std::string& item_id() const noexcept { return item_id_; }

 private:
  std::string item_id_;
};

// Embedding provider unreachable or misbehaving. Exit code 2.
class ProviderError : public std::runtime_error {
 public:
  ProviderError(const std::string& what, int attempts = 1, int http_status = 0)
      : std::runtime_error(what), attempts_(attempts), http_status_(http_status) {}

  int attempts() const noexcept { return attempts_; }
  int http_status() const noexcept { return http_status_; }

 private:
  int attempts_;
  int http_status_;
};

// Raised when a run is stopped before completion; the run manifest on disk
// is left in a resumable state.
class RunInterrupted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace posbias
