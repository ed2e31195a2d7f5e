#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace textgraph {

#if defined(TEXTGRAPH_USE_F32)
using real = float;
inline constexpr const char* kRealName = "f32";
#else
using real = double;
inline constexpr const char* kRealName = "f64";
#endif

using index_t = std::int64_t;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ArgumentError : public Error { public: using Error::Error; };
class FormatError : public Error { public: using Error::Error; };
class ShapeError : public Error { public: using Error::Error; };
class IndexError : public Error { public: using Error::Error; };
class ConfigError : public Error { public: using Error::Error; };
class SpanError : public Error { public: using Error::Error; };
class AssemblyError : public Error { public: using Error::Error; };

/// Raised when training produces a non-finite loss.
class TrainingError : public Error { public: using Error::Error; };

// Warnings go to stderr unless silenced; tests silence them.
void set_warnings_enabled(bool enabled);
void warn(const std::string& message);

}  // namespace textgraph
