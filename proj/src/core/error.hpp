#pragma once

#include <stdexcept>
#include <string>

namespace cmtrf {

enum class ErrorCode {
  kInvalidArgument = 1,
  kIo,
  kParse,
  kDomain,
  kIndex,
  kEmptyData,
  kVocabularyMismatch,
  kNumerical,
};

// Every failure raised by the core carries one of the codes above; the C API
// maps them onto its status enum one-to-one.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace cmtrf
