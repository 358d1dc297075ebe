#pragma once

namespace synthgap {

// Entry point behind tools/synthgap_main.cpp; exposed so tests can exercise
// exact commands in-process. Exit codes: 0 success, 2 validation error,
// 3 I/O error, 4 partial sweep failure.
int cli_main(int argc, const char* const* argv);

}  // namespace synthgap
