#pragma once

#include <stdexcept>
#include <string>

namespace ttaloop {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Grids that should share shape/spacing do not.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

// Input violates a documented invariant (label kinds, value ranges, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Two records claim the same case id.
class ConflictError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A segmenter failed while evaluating one ensemble member.
class SegmenterError : public Error {
 public:
  SegmenterError(int transform_id, const std::string& what)
      : Error("transform " + std::to_string(transform_id) + ": " + what),
        transform_id_(transform_id) {}

  int transform_id() const { return transform_id_; }

 private:
  int transform_id_;
};

// Human-in-the-loop round is waiting for label files.
class PendingAnnotation : public Error {
 public:
  using Error::Error;
};

}  // namespace ttaloop
