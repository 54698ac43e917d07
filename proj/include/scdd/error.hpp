#pragma once

#include <stdexcept>
#include <string>

namespace scdd {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of an operation (e.g. t outside [0,1]).
class DomainError : public Error {
public:
    using Error::Error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

class InvalidSchedule : public Error {
public:
    using Error::Error;
};

// s >= t passed where a strictly earlier time is required.
class OrderingError : public Error {
public:
    using Error::Error;
};

// A model constraint was violated, e.g. a predictor placing mass on the mask token.
class ConstraintViolation : public Error {
public:
    using Error::Error;
};

class ContractError : public Error {
public:
    using Error::Error;
};

// Conditioning on an event of probability zero.
class NullEvent : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    using Error::Error;
};

} // namespace scdd
