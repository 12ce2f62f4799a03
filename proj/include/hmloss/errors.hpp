#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hmloss {

/// Input is structurally valid but numerically degenerate (e.g. a zero-norm
/// vector where a direction is required).
class degenerate_input_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// The hard-mining wrapper has no positive fixed point for these parameters.
class no_crossing_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed content in a text file; carries the 1-based line number.
class parse_error : public std::runtime_error {
public:
    parse_error(const std::string& path, std::size_t line, const std::string& what)
        : std::runtime_error(path + ":" + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Structurally valid file whose declared shape is inconsistent with its
/// content or with the consumer (header/row width mismatch, wrong dims).
class format_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss; carries where it happened.
class diverged_error : public std::runtime_error {
public:
    diverged_error(int epoch, int batch)
        : std::runtime_error("training diverged: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " + std::to_string(batch)),
          epoch_(epoch), batch_(batch) {}
    int epoch() const { return epoch_; }
    int batch() const { return batch_; }

private:
    int epoch_;
    int batch_;
};

/// An operation was invoked against stale cached state.
class invalid_state_error : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace hmloss
