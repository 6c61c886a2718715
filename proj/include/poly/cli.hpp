#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace poly {

/// Subcommands: ingest, translate, train, eval, crossval, perplexity, report.
/// Exit status 0 on success, 1 on a domain error, 2 on a usage error.
int cli_main(int argc, char** argv);

/// Same, with arguments after the program name and explicit streams.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace poly
