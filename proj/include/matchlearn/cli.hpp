#pragma once

namespace matchlearn {

/// Entry point of the `matchlearn` tool. Returns 0 on success, 2 for
/// configuration errors, 3 for numerical failures and 4 for malformed data.
/// Failures print a one-line JSON diagnostic to stderr.
int cli_main(int argc, const char* const* argv);

}  // namespace matchlearn
