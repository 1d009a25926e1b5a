#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace relcrp::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

// Parses "15d", "12h", "30m", "90s" or a bare number of seconds.
long long parse_duration(const std::string& text);

// Git blob id of a file: sha1("blob <size>\0" + contents), hex encoded.
std::string git_blob_hash(const std::string& path);

}  // namespace relcrp::cli
