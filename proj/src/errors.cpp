#include "saelab/errors.hpp"

namespace saelab {

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument:
        case ErrorKind::Config:
            return 2;
        case ErrorKind::Numerical:
            return 3;
        case ErrorKind::Io:
        case ErrorKind::Format:
            return 4;
    }
    return 4;
}

}  // namespace saelab
