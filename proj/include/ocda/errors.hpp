#pragma once

#include <stdexcept>
#include <string>

namespace ocda {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// color / style errors
class EmptySubdomainError : public Error {
public:
    using Error::Error;
};
class DegenerateTargetError : public Error {
public:
    using Error::Error;
};

// clustering errors
class TooFewImagesError : public Error {
public:
    using Error::Error;
};
class BadKError : public Error {
public:
    using Error::Error;
};
class EmptyClusterError : public Error {
public:
    using Error::Error;
};
class SingletonClusterError : public Error {
public:
    using Error::Error;
};
class SingleClusterError : public Error {
public:
    using Error::Error;
};

// mixing errors
class EmptyLabelError : public Error {
public:
    using Error::Error;
};
class EmptyMaskError : public Error {
public:
    using Error::Error;
};
class DimensionMismatchError : public Error {
public:
    using Error::Error;
};

// network / optimizer errors
class BadArchitectureError : public Error {
public:
    using Error::Error;
};
class AllIgnoredError : public Error {
public:
    using Error::Error;
};
class IterOutOfRangeError : public Error {
public:
    using Error::Error;
};
class ShapeMismatchError : public Error {
public:
    using Error::Error;
};
class NonFiniteError : public Error {
public:
    using Error::Error;
};
class BadLambdaError : public Error {
public:
    using Error::Error;
};

// pipeline / data errors
class EmptyDatasetError : public Error {
public:
    using Error::Error;
};
class BadSpecError : public Error {
public:
    using Error::Error;
};

// cli errors
class ParseError : public Error {
public:
    using Error::Error;
};
class ValidationError : public Error {
public:
    using Error::Error;
};
class MissingArtifactError : public Error {
public:
    using Error::Error;
};
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ocda
