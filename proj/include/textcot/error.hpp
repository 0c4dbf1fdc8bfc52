#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace textcot {

enum class ErrorKind {
    // geometry
    NoBoxFound,
    DegenerateBox,
    OutOfRange,
    BoxOutsideImage,
    RegionOutsideImage,
    // prompting
    InvalidPromptSet,
    EmptyQuestion,
    EmptyCaption,
    // backend
    TransportError,
    BackendRefusal,
    ImageDecodeError,
    InvalidParams,
    // store
    CorruptEntry,
    StorageFull,
    // pipeline / dataset / metrics
    ImageLoadError,
    SchemaError,
    MissingImage,
    FormatMismatch,
    EmptyAnswerList,
    UnknownImage,
    // cli
    ConfigError,
    UsageError,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NoBoxFound: return "NoBoxFound";
        case ErrorKind::DegenerateBox: return "DegenerateBox";
        case ErrorKind::OutOfRange: return "OutOfRange";
        case ErrorKind::BoxOutsideImage: return "BoxOutsideImage";
        case ErrorKind::RegionOutsideImage: return "RegionOutsideImage";
        case ErrorKind::InvalidPromptSet: return "InvalidPromptSet";
        case ErrorKind::EmptyQuestion: return "EmptyQuestion";
        case ErrorKind::EmptyCaption: return "EmptyCaption";
        case ErrorKind::TransportError: return "TransportError";
        case ErrorKind::BackendRefusal: return "BackendRefusal";
        case ErrorKind::ImageDecodeError: return "ImageDecodeError";
        case ErrorKind::InvalidParams: return "InvalidParams";
        case ErrorKind::CorruptEntry: return "CorruptEntry";
        case ErrorKind::StorageFull: return "StorageFull";
        case ErrorKind::ImageLoadError: return "ImageLoadError";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::MissingImage: return "MissingImage";
        case ErrorKind::FormatMismatch: return "FormatMismatch";
        case ErrorKind::EmptyAnswerList: return "EmptyAnswerList";
        case ErrorKind::UnknownImage: return "UnknownImage";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::UsageError: return "UsageError";
    }
    return "Unknown";
}

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace textcot
