#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ssba {

/// Base class for every error raised by the library.
class error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A caller supplied an argument outside the operation's domain.
class argument_error : public error {
public:
    using error::error;
};

/// Malformed input data. Carries the 1-based data row (0 = header) and column name when known.
class parse_error : public error {
public:
    parse_error(const std::string& what, std::size_t row, std::string column)
        : error(what), row_(row), column_(std::move(column)) {}

    [[nodiscard]] std::size_t row() const noexcept { return row_; }
    [[nodiscard]] const std::string& column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

/// Training diverged (non-finite loss).
class training_error : public error {
public:
    using error::error;
};

/// One side of the correctly classified pool is empty, so no opposite-class pair exists.
class no_correct_representatives : public error {
public:
    using error::error;
};

/// Grid evaluation would exceed the memory budget; raised before any allocation.
class budget_error : public error {
public:
    budget_error(const std::string& what, long double required_bytes, std::uint64_t budget_bytes)
        : error(what), required_(required_bytes), budget_(budget_bytes) {}

    [[nodiscard]] long double required_bytes() const noexcept { return required_; }
    [[nodiscard]] std::uint64_t budget_bytes() const noexcept { return budget_; }

private:
    long double required_;
    std::uint64_t budget_;
};

/// No prediction flip was found while stepping past a boundary point.
class crossing_error : public error {
public:
    using error::error;
};

/// Every feature is pinned, so there is nothing left to move.
class no_mutable_features : public error {
public:
    using error::error;
};

/// File format problems in persisted models and boundary sets.
class format_error : public error {
public:
    using error::error;
};

}  // namespace ssba
