#pragma once

#include <doctest.h>

#include <string>

// Asserts that `expr` throws `ExcType` whose message contains `substr`.
#define CHECK_THROWS_MSG(expr, ExcType, substr)                                   \
  do {                                                                            \
    bool thrown_ = false;                                                         \
    try {                                                                         \
      (void)(expr);                                                               \
    } catch (const ExcType& e_) {                                                 \
      thrown_ = true;                                                             \
      CHECK_MESSAGE(std::string(e_.what()).find(substr) != std::string::npos,     \
                    "message was: ", e_.what());                                  \
    }                                                                             \
    CHECK_MESSAGE(thrown_, "expected " #ExcType " from " #expr);                  \
  } while (0)
