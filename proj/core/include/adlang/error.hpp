// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace adlang {

// Error taxonomy shared by the whole pipeline. The CLI maps each class to a
// stable exit code: usage=2, language=3, analysis=4, internal=5.
enum class ErrClass {
  Lex,
  Parse,
  Validate,
  Eval,
  Analysis,
  Internal,
};

const char* err_class_name(ErrClass c);

class Error : public std::runtime_error {
 public:
  Error(ErrClass cls, std::string msg, int label = -1)
      : std::runtime_error(std::move(msg)), cls_(cls), label_(label) {}

  ErrClass cls() const { return cls_; }
  // Expression label the error is attached to, or -1.
  int label() const { return label_; }

 private:
  ErrClass cls_;
  int label_;
};

[[noreturn]] inline void fail(ErrClass cls, const std::string& msg, int label = -1) {
  throw Error(cls, msg, label);
}

// Internal invariant violations (bug traps). Never expected on valid input.
[[noreturn]] inline void bug(const std::string& msg) {
  throw Error(ErrClass::Internal, "internal: " + msg);
}

}  // namespace adlang
