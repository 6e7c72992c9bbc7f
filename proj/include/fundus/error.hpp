#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fundus {

/// Machine-readable failure kinds raised by the toolkit modules.
enum class ErrorCode {
    MissingColumn,
    NonBinaryCell,
    DuplicateId,
    InvalidId,
    MalformedRow,
    OutOfRangeProbability,
    InvalidCatalog,
    IoError,
    ImageTooSmall,
    NoEdges,
    ZeroDenominator,
    EmptyFov,
    RectOutOfBounds,
    DimMismatch,
    UnmappedLabel,
    MissingScore,
    ZeroCountLabel,
    LengthMismatch,
    NoPositives,
    SingleClass,
    NonFiniteLoss,
    InvalidArgument,
};

std::string_view to_string(ErrorCode code);

/**
 * Exception carrying an ErrorCode plus the name of the module that raised it.
 *
 * what() yields "<module>: <Code>: <detail>", which is also the line the CLI
 * prints on failure.
 */
class Error : public std::runtime_error {
public:
    Error(std::string_view module, ErrorCode code, const std::string& detail);

    ErrorCode code() const noexcept { return code_; }
    const std::string& module() const noexcept { return module_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string module_;
    ErrorCode code_;
    std::string detail_;
};

}  // namespace fundus
