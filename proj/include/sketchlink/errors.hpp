#pragma once

#include <stdexcept>
#include <string>

namespace sketchlink {

// Every domain failure carries a stable name so the session layer can forward
// it verbatim to clients ("RejectedStroke", "AmbiguousJoint", ...).
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& message)
      : std::runtime_error(message), name_(std::move(name)) {}

  const std::string& name() const noexcept { return name_; }

 private:
  std::string name_;
};

#define SKETCHLINK_DEFINE_ERROR(Type)                                   \
  class Type : public Error {                                           \
   public:                                                              \
    explicit Type(const std::string& message) : Error(#Type, message) {} \
  };

// sketch-core
SKETCHLINK_DEFINE_ERROR(RejectedStroke)
SKETCHLINK_DEFINE_ERROR(VersionError)
SKETCHLINK_DEFINE_ERROR(InvalidArgument)

// recognition / mechanism
SKETCHLINK_DEFINE_ERROR(NotAGesture)
SKETCHLINK_DEFINE_ERROR(UnknownEntity)
SKETCHLINK_DEFINE_ERROR(InvalidInput)
SKETCHLINK_DEFINE_ERROR(DegenerateLink)
SKETCHLINK_DEFINE_ERROR(AssemblyFailed)

// kinematics
SKETCHLINK_DEFINE_ERROR(NoGround)
SKETCHLINK_DEFINE_ERROR(Underdriven)
SKETCHLINK_DEFINE_ERROR(Overdriven)

// session protocol
SKETCHLINK_DEFINE_ERROR(BadEnvelope)
SKETCHLINK_DEFINE_ERROR(UnknownSession)
SKETCHLINK_DEFINE_ERROR(StaleRevision)
SKETCHLINK_DEFINE_ERROR(IoError)

#undef SKETCHLINK_DEFINE_ERROR

/// Malformed document or message. `position` is a byte offset for syntax
/// errors and a JSON pointer for schema errors.
class FormatError : public Error {
 public:
  FormatError(const std::string& message, std::string position)
      : Error("FormatError", message + " at " + position),
        position_(std::move(position)) {}

  const std::string& position() const noexcept { return position_; }

 private:
  std::string position_;
};

/// A gesture touched the wrong number of links; the UI asks for a re-draw.
class AmbiguousJoint : public Error {
 public:
  explicit AmbiguousJoint(std::size_t touched)
      : Error("AmbiguousJoint",
              "gesture touches " + std::to_string(touched) +
                  " links, expected exactly 2"),
        touched_(touched) {}

  std::size_t touched() const noexcept { return touched_; }

 private:
  std::size_t touched_;
};

}  // namespace sketchlink
