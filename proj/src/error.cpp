#include "fundus/error.hpp"

namespace fundus {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingColumn: return "MissingColumn";
        case ErrorCode::NonBinaryCell: return "NonBinaryCell";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::InvalidId: return "InvalidId";
        case ErrorCode::MalformedRow: return "MalformedRow";
        case ErrorCode::OutOfRangeProbability: return "OutOfRangeProbability";
        case ErrorCode::InvalidCatalog: return "InvalidCatalog";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::ImageTooSmall: return "ImageTooSmall";
        case ErrorCode::NoEdges: return "NoEdges";
        case ErrorCode::ZeroDenominator: return "ZeroDenominator";
        case ErrorCode::EmptyFov: return "EmptyFov";
        case ErrorCode::RectOutOfBounds: return "RectOutOfBounds";
        case ErrorCode::DimMismatch: return "DimMismatch";
        case ErrorCode::UnmappedLabel: return "UnmappedLabel";
        case ErrorCode::MissingScore: return "MissingScore";
        case ErrorCode::ZeroCountLabel: return "ZeroCountLabel";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::NoPositives: return "NoPositives";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

Error::Error(std::string_view module, ErrorCode code, const std::string& detail)
    : std::runtime_error(std::string(module) + ": " + std::string(to_string(code)) + ": " + detail),
      module_(module),
      code_(code),
      detail_(detail) {}

}  // namespace fundus
