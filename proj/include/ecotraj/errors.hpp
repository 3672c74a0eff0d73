#ifndef ECOTRAJ_ERRORS_HPP
#define ECOTRAJ_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ecotraj {

// Machine-readable failure categories; the CLI maps these to exit codes.
enum class errc {
  config,   // bad configuration / arguments
  data,     // schema or referential-integrity violations in inputs
  domain,   // argument outside an operation's mathematical domain
  numeric,  // numerical failure (non-PD matrix, NaN state, ...)
  structure // invalid structural object (disconnected lattice, ...)
};

inline const char* errc_name(errc c) {
  switch (c) {
    case errc::config: return "config";
    case errc::data: return "data";
    case errc::domain: return "domain";
    case errc::numeric: return "numeric";
    case errc::structure: return "structure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(errc category, std::string tag, const std::string& what)
      : std::runtime_error(what), category_(category), tag_(std::move(tag)) {}

  errc category() const noexcept { return category_; }
  // Short stable identifier for the specific failure, e.g. "simplex_boundary".
  const std::string& tag() const noexcept { return tag_; }

 private:
  errc category_;
  std::string tag_;
};

[[noreturn]] inline void throw_config(const std::string& tag, const std::string& msg) {
  throw Error(errc::config, tag, msg);
}
[[noreturn]] inline void throw_data(const std::string& tag, const std::string& msg) {
  throw Error(errc::data, tag, msg);
}
[[noreturn]] inline void throw_domain(const std::string& tag, const std::string& msg) {
  throw Error(errc::domain, tag, msg);
}
[[noreturn]] inline void throw_numeric(const std::string& tag, const std::string& msg) {
  throw Error(errc::numeric, tag, msg);
}
[[noreturn]] inline void throw_structure(const std::string& tag, const std::string& msg) {
  throw Error(errc::structure, tag, msg);
}

}  // namespace ecotraj

#endif  // ECOTRAJ_ERRORS_HPP
