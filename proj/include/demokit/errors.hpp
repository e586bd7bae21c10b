#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace demokit {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Caller-side contract violations (bad k, empty input list, ...).
class InvalidInput : public Error {
  public:
    using Error::Error;
};

class MalformedAction : public Error {
  public:
    MalformedAction(std::string text, std::string reason)
        : Error("malformed action '" + text + "': " + reason), text_(std::move(text)),
          reason_(std::move(reason)) {}

    const std::string& text() const noexcept { return text_; }
    const std::string& reason() const noexcept { return reason_; }

  private:
    std::string text_;
    std::string reason_;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class SchemaError : public Error {
  public:
    SchemaError(std::size_t line, std::string field, std::string detail = {})
        : Error("schema error at line " + std::to_string(line) + ", field '" + field + "'" +
                (detail.empty() ? std::string() : ": " + detail)),
          line_(line), field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

  private:
    std::size_t line_;
    std::string field_;
};

// Backend failures. Everything derived from BackendFailure maps to CLI exit code 2.
class BackendFailure : public Error {
  public:
    using Error::Error;
};

class TransportError : public BackendFailure {
  public:
    using BackendFailure::BackendFailure;
};

class Timeout : public BackendFailure {
  public:
    using BackendFailure::BackendFailure;
};

class BackendError : public BackendFailure {
  public:
    BackendError(int status, std::string body_excerpt)
        : BackendFailure("backend returned HTTP " + std::to_string(status) + ": " + body_excerpt),
          status_(status), body_(std::move(body_excerpt)) {}

    int status() const noexcept { return status_; }
    const std::string& body_excerpt() const noexcept { return body_; }

  private:
    int status_;
    std::string body_;
};

class DimensionMismatch : public Error {
  public:
    using Error::Error;
};

class ZeroVector : public Error {
  public:
    using Error::Error;
};

class EmptyKnowledgeBase : public Error {
  public:
    EmptyKnowledgeBase() : Error("knowledge base is empty") {}
};

class ImageError : public Error {
  public:
    using Error::Error;
};

class OutOfBounds : public Error {
  public:
    OutOfBounds(int x, int y)
        : Error("click (" + std::to_string(x) + "," + std::to_string(y) + ") outside screenshot"),
          x_(x), y_(y) {}

    int x() const noexcept { return x_; }
    int y() const noexcept { return y_; }

  private:
    int x_;
    int y_;
};

class DescriptionFormatError : public Error {
  public:
    DescriptionFormatError(std::string text, std::string rule)
        : Error("description '" + text + "' violates rule: " + rule), text_(std::move(text)),
          rule_(std::move(rule)) {}

    const std::string& text() const noexcept { return text_; }
    const std::string& rule() const noexcept { return rule_; }

  private:
    std::string text_;
    std::string rule_;
};

class StepFailed : public Error {
  public:
    StepFailed(std::size_t index, std::string cause)
        : Error("step " + std::to_string(index) + " failed: " + cause), index_(index),
          cause_(std::move(cause)) {}

    std::size_t index() const noexcept { return index_; }
    const std::string& cause() const noexcept { return cause_; }

  private:
    std::size_t index_;
    std::string cause_;
};

class UnparseableDecision : public Error {
  public:
    explicit UnparseableDecision(std::string raw)
        : Error("model output is not a valid action: '" + raw + "'"), raw_(std::move(raw)) {}

    const std::string& raw_text() const noexcept { return raw_; }

  private:
    std::string raw_;
};

class UnknownApp : public Error {
  public:
    using Error::Error;
};

class MissingUiTrees : public Error {
  public:
    using Error::Error;
};

class UnknownTask : public Error {
  public:
    using Error::Error;
};

class DuplicatePrediction : public Error {
  public:
    using Error::Error;
};

} // namespace demokit
