// The qacoop command line: prepare, cluster, train, eval, chat-serve, toy.
#ifndef QACOOP_CLI_H_
#define QACOOP_CLI_H_

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace qacoop {

// args[0] is the program name. Returns 0 on success, 2 on a usage error
// and 1 when a run fails.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// SHA-1 of "blob <size>\0" followed by the file bytes, in hex.
std::string git_blob_hash(const std::filesystem::path& file);

}  // namespace qacoop

#endif  // QACOOP_CLI_H_
