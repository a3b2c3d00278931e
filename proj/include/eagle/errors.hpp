// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace eagle {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; message carries "<path>:<line>".
class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Text produced no features, or the projected vector had zero norm.
class EmptyEmbeddingError : public Error {
 public:
  using Error::Error;
};

/// Metric has no defined value on the given inputs (e.g. single-class AUC).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

/// An annotation batch could not be completed; carries the affected ids.
class AnnotationFailedError : public Error {
 public:
  AnnotationFailedError(const std::string& what, std::vector<std::string> ids)
      : Error(what), batch_ids(std::move(ids)) {}

  std::vector<std::string> batch_ids;
};

}  // namespace eagle
