// Copyright 2026 The dcrsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace dcrsr {

// Base for every error raised by the library. Callers that only care about
// "something went wrong" catch this; the CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error { using Error::Error; };
class InvalidSize : public Error { using Error::Error; };
class PatchTooLarge : public Error { using Error::Error; };
class EmptyDataset : public Error { using Error::Error; };
class TooSmall : public Error { using Error::Error; };
class FusionError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class CheckpointError : public Error { using Error::Error; };
class ImageIoError : public Error { using Error::Error; };

// Raised when a training step produces a non-finite loss or parameter.
class TrainingAborted : public Error {
 public:
  TrainingAborted(const std::string& what, std::string last_checkpoint)
      : Error(what), last_checkpoint_(std::move(last_checkpoint)) {}
  const std::string& last_checkpoint() const { return last_checkpoint_; }

 private:
  std::string last_checkpoint_;
};

}  // namespace dcrsr
