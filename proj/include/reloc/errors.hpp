#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reloc {

// Base for every error raised by the library. Each subclass corresponds to
// one failure kind of the public operations.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class BehindCamera : public Error {
public:
    explicit BehindCamera(std::size_t index = 0)
        : Error("point " + std::to_string(index) + " is behind the camera"), index(index) {}
    std::size_t index;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& reason)
        : Error("line " + std::to_string(line) + ": " + reason), line(line), reason(reason) {}
    std::size_t line;
    std::string reason;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class UnknownImage : public Error {
public:
    explicit UnknownImage(long long image_id)
        : Error("unknown image id " + std::to_string(image_id)), image_id(image_id) {}
    long long image_id;
};

class OutOfBounds : public Error {
public:
    using Error::Error;
};

class InsufficientKeypoints : public Error {
public:
    InsufficientKeypoints(std::string which_set, std::size_t found)
        : Error("insufficient keypoints in set '" + which_set + "': found " + std::to_string(found)),
          which_set(std::move(which_set)), found(found) {}
    std::string which_set;
    std::size_t found;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class StaleForward : public Error {
public:
    StaleForward() : Error("backward called without a matching forward pass") {}
};

class EmptyDataset : public Error {
public:
    EmptyDataset() : Error("training dataset is empty") {}
};

class DegenerateConfiguration : public Error {
public:
    using Error::Error;
};

class RankDeficient : public Error {
public:
    using Error::Error;
};

class TooFewCorrespondences : public Error {
public:
    explicit TooFewCorrespondences(std::size_t n)
        : Error("too few correspondences: " + std::to_string(n)), count(n) {}
    std::size_t count;
};

class NoValidHypothesis : public Error {
public:
    NoValidHypothesis() : Error("no valid pose hypothesis found") {}
};

class TooFewInliers : public Error {
public:
    explicit TooFewInliers(std::size_t n)
        : Error("too few inliers: " + std::to_string(n)), count(n) {}
    std::size_t count;
};

class InvalidSpec : public Error {
public:
    using Error::Error;
};

class MissingLabels : public Error {
public:
    using Error::Error;
};

}  // namespace reloc
