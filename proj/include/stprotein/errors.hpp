#pragma once

#include <stdexcept>
#include <string>

namespace stprotein {

/// Base class for every error thrown by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Data / input errors.
class ParseError : public Error { public: using Error::Error; };
class DimensionMismatch : public Error { public: using Error::Error; };
class DuplicateId : public Error { public: using Error::Error; };
class IoError : public Error { public: using Error::Error; };
class ChecksumError : public Error { public: using Error::Error; };
class ManifestError : public Error { public: using Error::Error; };
class EmptyRow : public Error { public: using Error::Error; };
class ProteinMissing : public Error { public: using Error::Error; };
class GeneMissing : public Error { public: using Error::Error; };
class ShapeMismatch : public Error { public: using Error::Error; };
class KTooLarge : public Error { public: using Error::Error; };
class AlphaMismatch : public Error { public: using Error::Error; };
class LengthMismatch : public Error { public: using Error::Error; };
class NothingToEvaluate : public Error { public: using Error::Error; };

// Configuration errors (bad flags, invalid hyperparameters).
class ConfigError : public Error { public: using Error::Error; };

// Numeric failures.
class NonFiniteActivation : public Error { public: using Error::Error; };
class NonFiniteGradient : public Error { public: using Error::Error; };
class RankDeficient : public Error { public: using Error::Error; };
class DegenerateCluster : public Error { public: using Error::Error; };

/// Process exit code a given error maps to (CLI contract: 2 config, 3 data, 4 numeric).
inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const NonFiniteActivation*>(&e) ||
        dynamic_cast<const NonFiniteGradient*>(&e) ||
        dynamic_cast<const RankDeficient*>(&e) ||
        dynamic_cast<const DegenerateCluster*>(&e)) {
        return 4;
    }
    return 3;
}

} // namespace stprotein
